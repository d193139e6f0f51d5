"""Fill the idle padding space of next-item recommender inputs with copies of the sequence."""

__version__ = "0.1.0"
