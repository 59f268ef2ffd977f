"""Exact softmax attention with per-key bias and logsumexp output, plus the
logsumexp-weighted merge that recombines attention partials.

The merge identity is what makes every decomposition in this package legal:
attention over any partition of the keys, merged by logsumexp weighting,
equals attention over all keys.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .numerics import check_tensor4, stable_logsumexp, stable_softmax


@dataclass
class AttentionResult:
    """Output values plus per-query logsumexp of the (scaled, biased) scores.

    y: (batch, heads, n_q, d); mu: (batch, heads, n_q). A query with mu = -inf
    is non-participating: it carries zero weight in any merge.
    """

    y: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        if self.y.ndim != 4 or self.mu.ndim != 3 or self.y.shape[:3] != self.mu.shape:
            raise ValueError(f"inconsistent result shapes y={self.y.shape} mu={self.mu.shape}")


def _check_qkv(q, k, v, bias):
    q = check_tensor4(q, "q")
    k = check_tensor4(k, "k")
    v = check_tensor4(v, "v")
    if k.shape != v.shape:
        raise ValueError(f"k/v shape mismatch: {k.shape} vs {v.shape}")
    if q.shape[:2] != k.shape[:2] or q.shape[3] != k.shape[3]:
        raise ValueError(f"q/k shape mismatch: {q.shape} vs {k.shape}")
    if k.shape[2] < 1:
        raise ValueError("need at least one key")
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != k.shape[:3]:
            raise ValueError(f"bias shape {bias.shape} != {k.shape[:3]}")
        if np.isnan(bias).any() or (bias == np.inf).any():
            raise ValueError("bias entries must be finite or -inf")
    return q, k, v, bias


def _map_slices(fn, n_slices: int, threads: int):
    if threads <= 1 or n_slices <= 1:
        for i in range(n_slices):
            fn(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(fn, range(n_slices)))


def _scores_to_result(s: np.ndarray, v: np.ndarray):
    """(n_q, n_k) masked score matrix -> (y rows, mu rows)."""
    finite_max = np.max(s, axis=-1)
    if not np.isfinite(finite_max).all():
        raise ValueError("fully masked query row")
    mu = stable_logsumexp(s, axis=-1)
    p = stable_softmax(s, axis=-1)
    return p @ v, mu


def attend(q, k, v, bias=None, scale: float | None = None, threads: int = 1) -> AttentionResult:
    """Softmax attention: S = scale * (q @ k^T) + bias, broadcast over queries.

    bias is per key, shape (batch, heads, n_k); -inf entries mask keys out.
    scale defaults to 1/sqrt(d) and multiplies scores only, never the inputs.
    """
    q, k, v, bias = _check_qkv(q, k, v, bias)
    if scale is None:
        scale = 1.0 / math.sqrt(q.shape[3])
    if scale <= 0:
        raise ValueError("scale must be positive")
    b, h, n_q, d = q.shape
    y = np.empty((b, h, n_q, d), dtype=q.dtype)
    mu = np.empty((b, h, n_q), dtype=q.dtype)
    # chunk query rows to bound the live score-matrix size; per-row softmax
    # makes chunking bit-identical to the one-shot computation
    chunk = 1024

    def run(i):
        bi, hi = divmod(i, h)
        qs = q[bi, hi] * np.asarray(scale, dtype=q.dtype)
        kt, vs = k[bi, hi].T, v[bi, hi]
        for lo in range(0, n_q, chunk):
            hi_ = min(lo + chunk, n_q)
            s = qs[lo:hi_] @ kt
            if bias is not None:
                s = s + bias[bi, hi][None, :].astype(q.dtype)
            y[bi, hi, lo:hi_], mu[bi, hi, lo:hi_] = _scores_to_result(s, vs)

    _map_slices(run, b * h, threads)
    return AttentionResult(y=y, mu=mu)


def _masked_attend(q, k, v, scale, mask_fn, threads):
    """Shared core for position-masked variants; mask_fn(n) gives the allowed (i, j) pairs."""
    q, k, v, _ = _check_qkv(q, k, v, None)
    if q.shape[2] != k.shape[2]:
        raise ValueError("masked variants require aligned positions (n_q == n_k)")
    if scale is None:
        scale = 1.0 / math.sqrt(q.shape[3])
    b, h, n, d = q.shape
    allowed = mask_fn(n)
    neg = np.asarray(-np.inf, dtype=q.dtype)
    y = np.empty((b, h, n, d), dtype=q.dtype)
    mu = np.empty((b, h, n), dtype=q.dtype)

    def run(i):
        bi, hi = divmod(i, h)
        s = (q[bi, hi] * np.asarray(scale, dtype=q.dtype)) @ k[bi, hi].T
        s = np.where(allowed, s, neg)
        y[bi, hi], mu[bi, hi] = _scores_to_result(s, v[bi, hi])

    _map_slices(run, b * h, threads)
    return AttentionResult(y=y, mu=mu)


def attend_causal(q, k, v, scale: float | None = None, threads: int = 1) -> AttentionResult:
    """Causal attention: key j contributes to query i only if j <= i."""
    return _masked_attend(q, k, v, scale, lambda n: np.tril(np.ones((n, n), dtype=bool)), threads)


def attend_sliding(q, k, v, window: int, scale: float | None = None, threads: int = 1) -> AttentionResult:
    """Sliding-window attention: key j contributes to query i iff i - window < j <= i."""
    if window < 1:
        raise ValueError("window must be >= 1")

    def mask(n):
        i = np.arange(n)[:, None]
        j = np.arange(n)[None, :]
        return (j <= i) & (j > i - window)

    return _masked_attend(q, k, v, scale, mask, threads)


def merge_partials(parts: list[AttentionResult]) -> AttentionResult:
    """Merge attention partials by logsumexp weighting.

    mu_T = logsumexp_i(mu_i) and y_T = sum_i exp(mu_i - mu_T) * y_i, computed
    in the shifted form. Every query must be covered by at least one part
    (mu > -inf somewhere); otherwise "uncovered query" is raised.
    """
    if not parts:
        raise ValueError("empty merge")
    shape = parts[0].mu.shape
    for p in parts:
        if p.mu.shape != shape:
            raise ValueError("merge parts disagree on query shape")
        if not np.isfinite(p.y).all():
            raise ValueError("non-finite y in merge part")
    mus = np.stack([p.mu for p in parts])
    mu_t = stable_logsumexp(mus, axis=0)
    if not np.isfinite(mu_t).all():
        raise ValueError("uncovered query")
    y_t = np.zeros_like(parts[0].y)
    for p in parts:
        w = np.exp(p.mu - mu_t)
        y_t += w[..., None] * p.y
    return AttentionResult(y=y_t.astype(parts[0].y.dtype, copy=False), mu=mu_t.astype(parts[0].mu.dtype, copy=False))
