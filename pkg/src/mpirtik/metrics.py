"""Reconstruction error and summary statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SummaryStats", "rre", "srre", "filter_diff_stats"]


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    min: float
    max: float
    std: float

    def as_row(self):
        return (self.mean, self.min, self.max, self.std)


def rre(x_k, x_true) -> float:
    """Relative reconstruction error ``||x_k - x_true|| / ||x_true||``."""
    x_true = np.asarray(x_true, dtype=np.float64)
    nt = np.linalg.norm(x_true)
    if nt == 0:
        raise ValueError("relative error is undefined for a zero reference")
    return float(np.linalg.norm(np.asarray(x_k, dtype=np.float64) - x_true) / nt)


def srre(rre_history, first: int = 3, last: int = 10):
    """Mean and sample standard deviation of RRE over iterations first..last.

    ``rre_history[i - 1]`` is the RRE of iteration ``i``.
    """
    h = np.asarray(rre_history, dtype=np.float64)
    if first < 1 or last < first:
        raise ValueError(f"bad window {first}..{last}")
    if h.size < last:
        raise ValueError(f"history has {h.size} iterations, window needs {last}")
    w = h[first - 1:last]
    std = float(np.std(w, ddof=1)) if w.size > 1 else 0.0
    return float(np.mean(w)), std


def filter_diff_stats(phi, omega) -> SummaryStats:
    """Summary statistics of ``|phi - omega|`` over all entries."""
    phi = np.asarray(phi, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if phi.shape != omega.shape:
        raise ValueError(f"length mismatch: {phi.shape} vs {omega.shape}")
    d = np.abs(phi - omega)
    std = float(np.std(d, ddof=1)) if d.size > 1 else 0.0
    return SummaryStats(mean=float(d.mean()), min=float(d.min()), max=float(d.max()), std=std)
