"""Hierarchical causal decomposition.

The lower-triangular attention matrix splits into exact diagonal blocks of
size b and a binary tree of strictly-lower blocks whose spans double per
level; every (query, key) pair with key <= query is covered by exactly one
block. Diagonal blocks run exact causal attention, below-diagonal blocks run
the clustered approximation, and per-query results merge by logsumexp
weighting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attention import AttentionResult, attend, attend_causal, merge_partials
from .multipole import MuseConfig, muse_acausal
from .numerics import check_tensor4, derive_seed


def _is_pow2(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


@dataclass
class CausalPlan:
    """Block schedule for sequence length n with diagonal block size b.

    levels[l] = (span, blocks) where span = b * 2**l and blocks is a list of
    ((q_start, q_stop), (k_start, k_stop)) pairs, disjoint in queries; every
    below-diagonal block is strictly lower (all keys precede all queries).
    """

    n: int
    b: int
    levels: list = field(repr=False)

    def diagonal_blocks(self) -> list:
        return [(i * self.b, (i + 1) * self.b) for i in range(self.n // self.b)]

    def below_blocks(self):
        for level, (span, blocks) in enumerate(self.levels):
            for qr, kr in blocks:
                yield level, span, qr, kr

    @property
    def muse_query_rows(self) -> int:
        """Scheduled below-diagonal query rows; (n/2) * log2(n/b) by construction."""
        return sum(qr[1] - qr[0] for _, _, qr, _ in self.below_blocks())


def build_plan(n: int, b: int) -> CausalPlan:
    """Diagonal blocks [ib, (i+1)b); for each span S in {b, 2b, ..., n/2} and
    each odd multiple m, queries [mS, (m+1)S) attend keys [(m-1)S, mS)."""
    if not _is_pow2(n) or not _is_pow2(b):
        raise ValueError(f"n and b must be powers of two, got n={n}, b={b}")
    if b > n:
        raise ValueError(f"block size {b} exceeds sequence length {n}")
    levels = []
    span = b
    while span <= n // 2:
        blocks = []
        for m in range(1, n // span, 2):
            blocks.append(((m * span, (m + 1) * span), ((m - 1) * span, m * span)))
        levels.append((span, blocks))
        span *= 2
    return CausalPlan(n=n, b=b, levels=levels)


@dataclass
class CausalRunStats:
    muse_rows: int = 0  # query rows handled by the clustered approximation
    exact_rows: int = 0  # query rows handled by exact attention (diagonal)
    fallback_rows: int = 0  # below-diagonal rows that fell back to exact attend


def muse_causal(
    q,
    k,
    v,
    config: MuseConfig,
    b: int,
    threads: int = 1,
    block_fn=None,
    return_stats: bool = False,
):
    """Causal attention via the block plan.

    Diagonal blocks use exact causal attention; each below-diagonal block
    clusters its own queries/keys from scratch and runs the acausal
    approximation, falling back to exact attend when the block is shorter
    than the cluster counts. One merge part per level plus one for the
    diagonal; non-participating queries carry mu = -inf.

    `block_fn(q, k, v) -> AttentionResult` overrides the below-diagonal
    computation (the structural oracle swaps in exact attend).
    """
    q = check_tensor4(q, "q")
    k = check_tensor4(k, "k")
    v = check_tensor4(v, "v")
    if q.shape != k.shape or k.shape != v.shape:
        raise ValueError("causal attention requires identical q/k/v shapes")
    bsz, h, n, d = q.shape
    plan = build_plan(n, b)
    scale = config.resolve_scale(d)
    stats = CausalRunStats()

    parts = []
    diag_y = np.zeros((bsz, h, n, d), dtype=q.dtype)
    diag_mu = np.empty((bsz, h, n), dtype=q.dtype)
    for s0, s1 in plan.diagonal_blocks():
        r = attend_causal(q[:, :, s0:s1], k[:, :, s0:s1], v[:, :, s0:s1], scale=scale, threads=threads)
        diag_y[:, :, s0:s1] = r.y
        diag_mu[:, :, s0:s1] = r.mu
        stats.exact_rows += s1 - s0
    parts.append(AttentionResult(y=diag_y, mu=diag_mu))

    for span, blocks in plan.levels:
        lvl_y = np.zeros((bsz, h, n, d), dtype=q.dtype)
        lvl_mu = np.full((bsz, h, n), -np.inf, dtype=q.dtype)
        for bi, ((q0, q1), (k0, k1)) in enumerate(blocks):
            qb, kb, vb = q[:, :, q0:q1], k[:, :, k0:k1], v[:, :, k0:k1]
            if block_fn is not None:
                r = block_fn(qb, kb, vb)
                stats.muse_rows += q1 - q0
            elif span < max(config.c_q, config.c_k):
                r = attend(qb, kb, vb, scale=scale, threads=threads)
                stats.fallback_rows += q1 - q0
            else:
                cfg = replace(config, seed=derive_seed(config.seed, 2, span, bi))
                r = muse_acausal(qb, kb, vb, cfg, threads=threads)
                stats.muse_rows += q1 - q0
            lvl_y[:, :, q0:q1] = r.y
            lvl_mu[:, :, q0:q1] = r.mu
        parts.append(AttentionResult(y=lvl_y, mu=lvl_mu))

    merged = merge_partials(parts)
    return (merged, stats) if return_stats else merged
