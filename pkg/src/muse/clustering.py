"""Capped K-means over token vectors.

Initialization samples points proportional to their squared norm, a fixed
number of uncapped Lloyd iterations follow, and a final capacity-capped
assignment pass plus one recentering produce the ragged layout the
summary stages consume. Everything is deterministic given the generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CentroidInit:
    centroids: np.ndarray  # (c, d)
    indices: np.ndarray  # (c,) token indices chosen
    uniform_fallback: bool  # True when squared-norm weights were unusable


@dataclass
class Clustering:
    """Assignment of n tokens to c capped clusters.

    members[j] holds ascending token indices; every token appears in exactly
    one members list and len(members[j]) <= cap. centroids[j] is the mean of
    the member vectors after the final recentering pass.
    """

    assignments: np.ndarray  # (n,) int64
    centroids: np.ndarray  # (c, d)
    members: list = field(repr=False)
    cap: int
    c: int
    init_fallback: bool = False

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.members])


@dataclass
class ResidualDecomposition:
    centroid_part: np.ndarray  # (n, d): assigned centroid per token
    residual: np.ndarray  # (n, d): token minus assigned centroid


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, c) squared Euclidean distances, matmul-based."""
    xx = np.sum(x * x, axis=1)[:, None]
    cc = np.sum(centroids * centroids, axis=1)[None, :]
    d2 = xx - 2.0 * (x @ centroids.T) + cc
    return np.maximum(d2, 0.0)


def init_centroids(x: np.ndarray, c: int, rng: np.random.Generator) -> CentroidInit:
    """Sample c distinct token indices with probability proportional to ||x_i||^2.

    Falls back to uniform sampling (flagged) when fewer than c points carry
    positive squared norm.
    """
    x = np.asarray(x)
    n = x.shape[0]
    if not 1 <= c <= n:
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={n}")
    w = np.sum(x.astype(np.float64) ** 2, axis=1)
    total = w.sum()
    fallback = total <= 0.0 or np.count_nonzero(w) < c
    if fallback:
        idx = rng.choice(n, size=c, replace=False)
    else:
        idx = rng.choice(n, size=c, replace=False, p=w / total)
    idx = np.asarray(idx, dtype=np.int64)
    return CentroidInit(centroids=x[idx].copy(), indices=idx, uniform_fallback=fallback)


def _repair_empties(x, centroids, assign, d2):
    """Reseed each empty cluster to the worst-served point (greatest distance
    to its currently assigned centroid), stealing that point. Repeats until no
    cluster is empty; ties pick the lowest token index."""
    c = centroids.shape[0]
    for _ in range(c):
        counts = np.bincount(assign, minlength=c)
        empties = np.flatnonzero(counts == 0)
        if empties.size == 0:
            return assign
        own = d2[np.arange(len(assign)), assign].copy()
        for j in empties:
            i = int(np.argmax(own))
            assign[i] = j
            centroids[j] = x[i]
            own[i] = -1.0  # each empty steals a different point
    return assign


def cap_assign(x: np.ndarray, centroids: np.ndarray, cap: int) -> np.ndarray:
    """Greedy capacity-capped assignment.

    Tokens are processed in ascending order of (distance to nearest centroid
    minus distance to second nearest), i.e. strongest preference first; each
    takes the nearest centroid with remaining capacity, spilling outward in
    distance order. The token forced to spill is the one with the smallest
    margin between its top two choices.
    """
    x = np.asarray(x)
    n, c = x.shape[0], centroids.shape[0]
    if cap * c < n:
        raise ValueError(f"infeasible capacity: cap={cap} x c={c} < n={n}")
    d2 = _sq_dists(x, centroids)
    nearest = np.argmin(d2, axis=1)
    counts = np.bincount(nearest, minlength=c)
    if np.all(counts <= cap):
        return nearest.astype(np.int64)  # caps non-binding: identical to uncapped
    if c == 1:
        return np.zeros(n, dtype=np.int64)
    part = np.partition(d2, 1, axis=1)
    order = np.argsort(part[:, 0] - part[:, 1], kind="stable")
    pref = np.argsort(d2, axis=1, kind="stable")
    assign = np.empty(n, dtype=np.int64)
    remaining = np.full(c, cap, dtype=np.int64)
    for t in order:
        for j in pref[t]:
            if remaining[j] > 0:
                assign[t] = j
                remaining[j] -= 1
                break
    return assign


def kmeans(
    x: np.ndarray,
    c: int,
    iters: int,
    cap_ratio: float,
    rng: np.random.Generator,
    init: np.ndarray | None = None,
) -> Clustering:
    """`iters` uncapped Lloyd iterations, then one capped assignment pass and
    a final recentering. Nearest-centroid ties break toward the lowest id.

    `init` overrides the squared-norm-proportional seeding with explicit
    starting centroids (used by permutation-invariance checks).
    """
    x = np.asarray(x)
    n = x.shape[0]
    if c > n:
        raise ValueError("more clusters than points")
    if c < 1 or iters < 1:
        raise ValueError("need c >= 1 and iters >= 1")
    if cap_ratio < 1.0:
        raise ValueError("cap_ratio must be >= 1")
    if init is None:
        init = init_centroids(x, c, rng)
    fallback = init.uniform_fallback
    centroids = np.array(init.centroids, dtype=x.dtype, copy=True)
    if centroids.shape != (c, x.shape[1]):
        raise ValueError("init centroids have wrong shape")

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = _sq_dists(x, centroids)
        assign = np.argmin(d2, axis=1).astype(np.int64)  # ties -> lowest id
        assign = _repair_empties(x, centroids, assign, d2)
        _recenter(x, assign, centroids)

    cap = math.ceil(cap_ratio * n / c)
    assign = cap_assign(x, centroids, cap)
    d2 = _sq_dists(x, centroids)
    assign = _repair_empties(x, centroids, assign, d2)
    _recenter(x, assign, centroids)
    members = [np.flatnonzero(assign == j) for j in range(c)]
    return Clustering(
        assignments=assign, centroids=centroids, members=members, cap=cap, c=c, init_fallback=fallback
    )


def _recenter(x, assign, centroids):
    for j in range(centroids.shape[0]):
        mask = assign == j
        if mask.any():
            centroids[j] = x[mask].mean(axis=0)


def decompose(x: np.ndarray, clustering: Clustering) -> ResidualDecomposition:
    """Split tokens into assigned-centroid part plus residual.

    The sum reconstructs the input to within one ulp per entry; it is exact
    wherever the subtraction x - centroid incurred no rounding.
    """
    part = clustering.centroids[clustering.assignments]
    return ResidualDecomposition(centroid_part=part, residual=x - part)


def inertia(x: np.ndarray, clustering: Clustering) -> float:
    """Sum of squared distances from each token to its assigned centroid."""
    r = x - clustering.centroids[clustering.assignments]
    return float(np.sum(r.astype(np.float64) ** 2))
