"""Item-embedding gradient statistics (per-step means and log-bucket histograms)."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

DEFAULT_EDGES = np.logspace(-12, 0, 25)


def grad_histogram(values, edges=DEFAULT_EDGES) -> np.ndarray:
    """Count magnitudes of ``values`` into log-spaced buckets.

    Returns ``len(edges) + 2`` counts: bucket 0 holds exact zeros, bucket 1
    holds ``0 < |x| < edges[0]``, bucket ``i + 2`` holds
    ``edges[i] <= |x| < edges[i + 1]`` and the last bucket holds ``|x| >= edges[-1]``.
    """
    a = np.abs(np.asarray(values, dtype=np.float64)).ravel()
    edges = np.asarray(edges, dtype=np.float64)
    counts = np.zeros(len(edges) + 2, dtype=np.int64)
    zero = a == 0
    counts[0] = int(zero.sum())
    nz = a[~zero]
    counts[1:] = np.bincount(np.searchsorted(edges, nz, side="right"), minlength=len(edges) + 1)
    return counts


def bucket_labels(edges=DEFAULT_EDGES) -> list[str]:
    labels = ["0", f"(0,{edges[0]:.0e})"]
    labels += [f"[{lo:.0e},{hi:.0e})" for lo, hi in zip(edges[:-1], edges[1:])]
    labels.append(f"[{edges[-1]:.0e},inf)")
    return labels


class GradientTracker:
    """Streams the mean absolute item-embedding gradient of every step."""

    def __init__(self, edges=DEFAULT_EDGES):
        self.edges = np.asarray(edges, dtype=np.float64)
        self.steps: list[int] = []
        self.means: list[float] = []

    def record(self, step: int, grad: np.ndarray | None) -> float:
        value = 0.0 if grad is None else float(np.abs(grad).mean())
        self.steps.append(step)
        self.means.append(value)
        return value

    def histogram(self) -> np.ndarray:
        return grad_histogram(self.means, self.edges)

    def write_csv(self, path: str | Path) -> None:
        """Per-step rows ``(step, value)`` followed by the histogram rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "key", "value"])
            for s, v in zip(self.steps, self.means):
                w.writerow(["step", s, repr(v)])
            for label, c in zip(bucket_labels(self.edges), self.histogram()):
                w.writerow(["bucket", label, int(c)])
