"""Evaluation statistics: R^2, Kendall tau-b, sparse Kendall tau, MAE and
Gaussian KL divergence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


class DegenerateTarget(MetricError):
    pass


class AllTied(MetricError):
    pass


class ZeroVariance(MetricError):
    pass


class EmptyInput(MetricError):
    pass


@dataclass(frozen=True)
class GaussianSummary:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if self.std < 0:
            raise MetricError(f"std must be nonnegative, got {self.std}")


def _paired(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_true, dtype=np.float64).ravel()
    b = np.asarray(y_pred, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def r2(y_true, y_pred) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    a, b = _paired(y_true, y_pred)
    if a.size < 2:
        raise DegenerateTarget("need at least 2 observations")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateTarget("target values are all equal")
    ss_res = float(np.sum((a - b) ** 2))
    return 1.0 - ss_res / ss_tot


def mae(y_true, y_pred) -> float:
    a, b = _paired(y_true, y_pred)
    if a.size < 1:
        raise EmptyInput("need at least 1 observation")
    return float(np.mean(np.abs(a - b)))


def _merge_count_inversions(values: list[float]) -> int:
    """Count strict inversions (pairs i < j with values[i] > values[j])."""
    n = len(values)
    if n < 2:
        return 0
    buf = list(values)
    tmp = [0.0] * n
    total = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if buf[i] <= buf[j]:
                    tmp[k] = buf[i]
                    i += 1
                else:
                    tmp[k] = buf[j]
                    total += mid - i
                    j += 1
                k += 1
            while i < mid:
                tmp[k] = buf[i]
                i += 1
                k += 1
            while j < hi:
                tmp[k] = buf[j]
                j += 1
                k += 1
        buf, tmp = tmp, buf
        width *= 2
    return total


def _tie_pairs(sorted_vals: np.ndarray) -> int:
    _, counts = np.unique(sorted_vals, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(y_true, y_pred) -> float:
    """Tie-corrected Kendall rank correlation (tau-b).

    Computed in O(n log n): sort by (x, y), count discordant pairs as strict
    inversions of the y sequence, and correct the denominator with the x-,
    y- and joint-tie pair counts.
    """
    x, y = _paired(y_true, y_pred)
    n = x.size
    if n < 2:
        raise MetricError("need at least 2 observations")
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]

    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    n2 = _tie_pairs(ys)
    # joint ties: run lengths of equal (x, y) in the lexsorted order
    new_run = np.concatenate(([True], (np.diff(xs) != 0) | (np.diff(ys) != 0)))
    joint_counts = np.diff(np.append(np.flatnonzero(new_run), n))
    n3 = int(np.sum(joint_counts * (joint_counts - 1) // 2))

    disc = _merge_count_inversions(ys.tolist())
    conc = n0 - n1 - n2 + n3 - disc
    denom = math.sqrt(float(n0 - n1)) * math.sqrt(float(n0 - n2))
    if denom == 0.0:
        raise AllTied("all pairs tied in one of the inputs")
    return min(1.0, max(-1.0, (conc - disc) / denom))


def _round_acc(values: np.ndarray) -> np.ndarray:
    return np.round(values * 1000.0) / 1000.0


def sparse_kendall_tau(y_true, y_pred, round_truth: bool = True) -> float:
    """Kendall tau-b after rounding accuracies to the nearest 0.001.

    Rounding predictions follows the metric's definition; ``round_truth``
    (default) also rounds the first argument so rank changes below the
    0.1% precision are ignored symmetrically.
    """
    a, b = _paired(y_true, y_pred)
    if round_truth:
        a = _round_acc(a)
    return kendall_tau(a, _round_acc(b))


def kl_gaussian(p: GaussianSummary, q: GaussianSummary) -> float:
    """KL(p || q) between two univariate Gaussians; p is the groundtruth."""
    if p.std <= 0 or q.std <= 0:
        raise ZeroVariance("both distributions need positive std")
    return (
        math.log(q.std / p.std)
        + (p.std**2 + (p.mean - q.mean) ** 2) / (2.0 * q.std**2)
        - 0.5
    )


