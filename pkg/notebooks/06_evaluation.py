"""
Full-ranking evaluation
=======================

Every item is scored for each user; the held-out item's rank gives HR@K and
NDCG@K. Ties resolve in the target's favour.
"""
import numpy as np

from reppad.evaluation import EarlyStopMonitor, metric_table, paired_t_test, ranks_from_scores

rng = np.random.default_rng(0)
scores = rng.normal(size=(200, 51))
targets = rng.integers(1, 51, size=200)
scores[np.arange(100), targets[:100]] += 2.0  # make half the users easy

ranks = ranks_from_scores(scores, targets)
print(metric_table(ranks))

# early stopping waits `patience` epochs without strict improvement
monitor = EarlyStopMonitor(patience=3)
for epoch, ndcg in enumerate([0.1, 0.2, 0.25, 0.25, 0.24, 0.2, 0.3]):
    if monitor.update(ndcg):
        print("stop at epoch", epoch, "best epoch", monitor.best_epoch)
        break

# paired t-test over per-user metrics of two systems
a = rng.normal(0.30, 0.05, size=30)
b = a - rng.normal(0.02, 0.02, size=30)
print("p =", paired_t_test(a, b))
