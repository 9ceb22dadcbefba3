"""Diversity and quality measurements: MND with k-means references, DTW-Hamming, Div."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def nearest_distances(X, R, chunk: int = 4096) -> np.ndarray:
    """Euclidean distance from every row of ``X`` to its nearest row of ``R``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if len(X) == 0 or len(R) == 0:
        raise ValueError("need non-empty sample and reference sets")
    if X.shape[1] != R.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {R.shape[1]}")
    out = np.empty(len(X))
    for lo in range(0, len(X), chunk):
        diff = X[lo:lo + chunk, None, :] - R[None, :, :]
        out[lo:lo + chunk] = np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=1))
    return out


@dataclass
class ReferenceSet:
    centroids: np.ndarray
    provenance: str = ""
    objective_history: list[float] = field(default_factory=list)
    labels: np.ndarray | None = None

    @property
    def k(self) -> int:
        return len(self.centroids)


def mnd(samples, references) -> float:
    """Mean over ``samples`` of the distance to the nearest reference point."""
    R = references.centroids if isinstance(references, ReferenceSet) else references
    return float(np.mean(nearest_distances(samples, R)))


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=-1)


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(len(X))]]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(len(X), p=closest / total)
        else:
            idx = rng.integers(len(X))
        centers.append(X[idx])
        closest = np.minimum(closest, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers, dtype=float)


def kmeans(points, k: int = 10, max_iters: int = 300, seed=0, provenance: str = "") -> ReferenceSet:
    """Lloyd's algorithm from a k-means++ start.

    A cluster that loses all its points is moved onto the point currently
    farthest from its own centroid. ``objective_history`` holds the sum of
    squared distances after every assignment step.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if k < 1 or len(X) < k:
        raise ValueError(f"need at least k={k} points, got {len(X)}")
    rng = np.random.default_rng(seed)
    C = kmeans_pp_init(X, k, rng)
    labels = None
    history: list[float] = []
    for _ in range(max_iters):
        d2 = _sq_dists(X, C)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(X)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        own = d2[np.arange(len(X)), labels]
        taken: set[int] = set()
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
                continue
            order = np.argsort(-own, kind="stable")
            idx = next(int(i) for i in order if int(i) not in taken)
            taken.add(idx)
            C[j] = X[idx]
            own[idx] = 0.0
    return ReferenceSet(C, provenance, history, labels)


def segment_hamming(a, b) -> float:
    """Fraction of tiles that differ between two equally sized segments."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"segment shapes differ: {a.shape} vs {b.shape}")
    return float(np.count_nonzero(a != b)) / a.size


def hamming_matrix(a, b) -> np.ndarray:
    A = np.asarray(a).reshape(len(a), -1)
    B = np.asarray(b).reshape(len(b), -1)
    if A.shape[1] != B.shape[1]:
        raise ValueError("segment shapes differ between levels")
    return (A[:, None, :] != B[None, :, :]).mean(axis=-1)


def positional_hamming(a, b) -> float:
    """Plain segment-by-segment Hamming sum over two equally long levels."""
    if len(a) != len(b):
        raise ValueError("positional Hamming needs equally long levels")
    return float(np.trace(hamming_matrix(a, b)))


def dtw_cost(cost: np.ndarray, window: int) -> float:
    """Minimal accumulated cost over monotone paths (0,0)->(m-1,n-1) with |i - j| <= window."""
    m, n = cost.shape
    if window < abs(m - n):
        raise ValueError(f"band {window} cannot bridge length difference {abs(m - n)}")
    acc = np.full((m + 1, n + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, m + 1):
        for j in range(max(1, i - window), min(n, i + window) + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return float(acc[m, n])


def dtw_hamming(a, b, window: int) -> float:
    """DTW over segment sequences with per-pair normalized Hamming cost; total, not averaged."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("levels must be non-empty")
    return dtw_cost(hamming_matrix(a, b), window)


@dataclass
class DivReport:
    d_M: float
    mean_pairwise: float
    div: float
    pair_count: int

    def row(self) -> dict:
        return {"d_M": self.d_M, "mean_pairwise": self.mean_pairwise, "div": self.div,
                "pair_count": self.pair_count}


def sample_pairs(num: int, pair_count: int, rng: np.random.Generator) -> np.ndarray:
    """Unordered distinct index pairs, uniform without replacement (all pairs if too few)."""
    if num < 2:
        raise ValueError("need at least two levels to form a pair")
    iu, ju = np.triu_indices(num, 1)
    total = len(iu)
    if pair_count >= total:
        pick = np.arange(total)
    else:
        pick = np.sort(rng.choice(total, size=pair_count, replace=False))
    return np.stack([iu[pick], ju[pick]], axis=1)


def mean_pairwise_dtw(levels: Sequence, window: int, pair_count: int, rng) -> float:
    pairs = sample_pairs(len(levels), pair_count, rng)
    return float(np.mean([dtw_hamming(levels[i], levels[j], window) for i, j in pairs]))


def div_score(levels_X: Sequence, baseline_levels: Sequence, window: int, pair_count: int = 1000,
              seed=0) -> DivReport:
    if pair_count < 1:
        raise ValueError("pair_count must be >= 1")
    rng_base, rng_x = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    d_M = mean_pairwise_dtw(baseline_levels, window, pair_count, rng_base)
    if d_M <= 0:
        raise ValueError("baseline corpus has zero mean pairwise distance")
    mean_x = mean_pairwise_dtw(levels_X, window, pair_count, rng_x)
    used = len(sample_pairs(len(levels_X), pair_count, np.random.default_rng(0)))
    return DivReport(d_M, mean_x, mean_x / d_M, used)


def interval_reward_stats(trajectories, intervals=((1, 10), (11, 25), (26, 50))) -> dict:
    """Mean reward per 1-indexed inclusive step interval, pooled over trajectories."""
    R = np.array([np.asarray(t.rewards if hasattr(t, "rewards") else t, dtype=float)
                  for t in trajectories])
    out = {}
    for lo, hi in intervals:
        if lo < 1 or hi < lo or hi > R.shape[1]:
            raise ValueError(f"interval [{lo}, {hi}] outside 1..{R.shape[1]}")
        out[(lo, hi)] = float(R[:, lo - 1:hi].mean())
    return out


def pooled_standard_error(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
