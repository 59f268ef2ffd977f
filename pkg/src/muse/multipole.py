"""Clustered monopole+dipole approximation of acausal softmax attention.

Pipeline per (batch, head) slice: cluster scaled queries and raw keys, build
tilted per-(query-cluster, key-cluster) key/value centroids and logsumexps,
aggregate the per-key-cluster value-key covariances into one dipole matrix
per query cluster, then refine each residual query against the summaries.

The summaries are exact per-cluster attention results for the query
centroids, so the whole construction inherits the merge identity: with one
cluster per token, or with zero query residuals, the output is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import AttentionResult, _map_slices
from .clustering import Clustering, kmeans
from .numerics import check_tensor4, derive_seed, make_rng, stable_logsumexp, stable_softmax

ABLATIONS = ("full", "no_dipole", "single_query_cluster", "no_monopole")


@dataclass
class MuseConfig:
    """Hyperparameters of the clustered approximation.

    scale=None resolves to 1/sqrt(d) at call time. The ablation switch keeps
    everything else fixed: no_dipole drops the covariance correction,
    single_query_cluster forces c_q=1, no_monopole replaces the weighted
    summary combination with a global value mean plus the dipole term alone.
    """

    c_q: int = 64
    c_k: int = 64
    kmeans_iters: int = 1
    cap_ratio: float = 1.5
    scale: float | None = None
    ablation: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.c_q < 1 or self.c_k < 1:
            raise ValueError("cluster counts must be >= 1")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")
        if self.cap_ratio < 1.0:
            raise ValueError("cap_ratio must be >= 1")
        if self.scale is not None and self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}, expected one of {ABLATIONS}")

    def resolve_scale(self, d: int) -> float:
        return self.scale if self.scale is not None else 1.0 / math.sqrt(d)


@dataclass
class ClusterSummaries:
    """Stage-1 output for one (batch, head) slice.

    kbar/vbar[i, j] are the key/value centroids of key cluster j tilted by
    query centroid i; mu[i, j] is the logsumexp of the centroid's scores over
    cluster j. cov_vk[j][a, b] is the untilted value-key covariance
    (1/U_j) sum (v - vbar_j)_a (k - kbar_j)_b with plain member means.
    """

    kbar: np.ndarray  # (c_q, c_k, d)
    vbar: np.ndarray  # (c_q, c_k, d)
    mu: np.ndarray  # (c_q, c_k)
    cov_vk: np.ndarray  # (c_k, d, d)


@dataclass
class AggregatedDipoles:
    """One dipole matrix per query cluster: the softmax(mu[i])-weighted
    mixture of the per-key-cluster covariances."""

    cov_q: np.ndarray  # (c_q, d, d)


def _pad_ragged(groups: list) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length (U_j, d) arrays into (C, U_max, d) plus a validity mask."""
    c = len(groups)
    u = max(g.shape[0] for g in groups)
    d = groups[0].shape[1]
    out = np.zeros((c, u, d), dtype=groups[0].dtype)
    mask = np.zeros((c, u), dtype=bool)
    for j, g in enumerate(groups):
        out[j, : g.shape[0]] = g
        mask[j, : g.shape[0]] = True
    return out, mask


def stage1(qbar: np.ndarray, key_clusters: list, value_clusters: list) -> ClusterSummaries:
    """Tilted summaries: for each (i, j) pair, attend from query centroid i to
    the full contents of key cluster j, recording the logsumexp, the tilted
    key centroid, and the tilted value centroid. Covariances are computed once
    per key cluster with uniform 1/U_j weights (no tilt).

    qbar rows are already in scaled score units; padded slots carry -inf.
    """
    if len(key_clusters) != len(value_clusters) or not key_clusters:
        raise ValueError("key/value cluster lists must be non-empty and aligned")
    for kc in key_clusters:
        if kc.shape[0] == 0:
            raise ValueError("empty key cluster")
    kpad, mask = _pad_ragged(key_clusters)
    vpad, _ = _pad_ragged(value_clusters)
    s = np.einsum("qd,kud->qku", qbar, kpad)
    s = np.where(mask[None, :, :], s, np.asarray(-np.inf, dtype=s.dtype))
    mu = stable_logsumexp(s, axis=-1)
    p = stable_softmax(s, axis=-1)
    kbar = np.einsum("qku,kud->qkd", p, kpad)
    vbar = np.einsum("qku,kud->qkd", p, vpad)
    d = qbar.shape[1]
    cov_vk = np.zeros((len(key_clusters), d, d), dtype=qbar.dtype)
    for j, (kc, vc) in enumerate(zip(key_clusters, value_clusters)):
        dk = kc - kc.mean(axis=0)
        dv = vc - vc.mean(axis=0)
        cov_vk[j] = dv.T @ dk / kc.shape[0]
    return ClusterSummaries(kbar=kbar, vbar=vbar, mu=mu, cov_vk=cov_vk)


def aggregate_dipoles(summaries: ClusterSummaries) -> AggregatedDipoles:
    """Mix the per-key-cluster covariances with weights softmax_j(mu[i, :]),
    the merge weights a zero-residual query would use."""
    w = stable_softmax(summaries.mu, axis=-1)
    return AggregatedDipoles(cov_q=np.einsum("qk,kab->qab", w, summaries.cov_vk))


def final_stage(
    residual_clusters: list,
    summaries: ClusterSummaries,
    dipoles: AggregatedDipoles,
    ablation: str = "full",
    value_mean: np.ndarray | None = None,
) -> tuple[list, list]:
    """Refine each residual query against its cluster's summaries.

    Scores are S_j = qres . kbar[i, j] + mu[i, j] (the logsumexp bias applies
    the per-cluster mass in log space); the output is the softmax combination
    of the tilted value centroids plus the dipole correction qres . cov_q[i]^T
    contracted over the key index. Residuals are already in scaled units.

    Returns ragged (y rows, mu rows) per query cluster. no_monopole needs the
    global `value_mean` of the slice.
    """
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}")
    rpad, rmask = _pad_ragged(residual_clusters)
    s = np.einsum("qud,qkd->quk", rpad, summaries.kbar) + summaries.mu[:, None, :]
    mu_rows = stable_logsumexp(s, axis=-1)
    p = stable_softmax(s, axis=-1)
    y = np.einsum("quk,qkd->qud", p, summaries.vbar)
    if ablation in ("full", "single_query_cluster"):
        y = y + np.einsum("qub,qab->qua", rpad, dipoles.cov_q)
    elif ablation == "no_monopole":
        if value_mean is None:
            raise ValueError("no_monopole requires the global value mean")
        cov_uniform = summaries.cov_vk.mean(axis=0)
        y = value_mean[None, None, :] + np.einsum("qub,ab->qua", rpad, cov_uniform)
    y_out, mu_out = [], []
    for i, res in enumerate(residual_clusters):
        u = res.shape[0]
        y_out.append(y[i, :u])
        mu_out.append(mu_rows[i, :u])
    return y_out, mu_out


@dataclass
class MuseClusters:
    """Frozen per-slice cluster assignments, reusable across perturbed inputs
    (centroids are recomputed from whatever points are supplied)."""

    q_assign: np.ndarray  # (batch, heads, n_q) int64
    k_assign: np.ndarray  # (batch, heads, n_k) int64


def _clustering_from_assignments(x: np.ndarray, assign: np.ndarray, c: int) -> Clustering:
    members = [np.flatnonzero(assign == j) for j in range(c)]
    if any(m.size == 0 for m in members):
        raise ValueError("frozen assignment leaves an empty cluster")
    centroids = np.empty((c, x.shape[1]), dtype=x.dtype)
    for j, m in enumerate(members):
        centroids[j] = x[m].mean(axis=0)
    return Clustering(
        assignments=assign.astype(np.int64), centroids=centroids, members=members,
        cap=max(len(m) for m in members), c=c,
    )


def cluster_tokens(q, k, config: MuseConfig, threads: int = 1) -> MuseClusters:
    """Run the per-slice clusterings (scaled queries, raw keys) and return the
    assignments only, for reuse with perturbed inputs."""
    q = check_tensor4(q, "q")
    k = check_tensor4(k, "k")
    b, h, n_q, d = q.shape
    scale = config.resolve_scale(d)
    c_q = 1 if config.ablation == "single_query_cluster" else config.c_q
    qa = np.empty((b, h, n_q), dtype=np.int64)
    ka = np.empty((b, h, k.shape[2]), dtype=np.int64)

    def run(i):
        bi, hi = divmod(i, h)
        qs = q[bi, hi] * np.asarray(scale, dtype=q.dtype)
        qc = kmeans(qs, c_q, config.kmeans_iters, config.cap_ratio,
                    make_rng(derive_seed(config.seed, bi, hi, 0)))
        kc = kmeans(k[bi, hi], config.c_k, config.kmeans_iters, config.cap_ratio,
                    make_rng(derive_seed(config.seed, bi, hi, 1)))
        qa[bi, hi] = qc.assignments
        ka[bi, hi] = kc.assignments

    _map_slices(run, b * h, threads)
    return MuseClusters(q_assign=qa, k_assign=ka)


def muse_acausal(q, k, v, config: MuseConfig, threads: int = 1,
                 clusters: MuseClusters | None = None) -> AttentionResult:
    """Single-call acausal approximation.

    Queries are scaled once (scores stay scale * q . k everywhere downstream),
    clustered per (batch, head) along with the keys (values ride with their
    keys), and the stage-1 / dipole-aggregation / final-stage pipeline runs
    per slice. Per-cluster outputs scatter back to token order; the returned
    mu rows are valid merge weights for `merge_partials`.

    `clusters` freezes assignments (centroids are recomputed from the inputs),
    which keeps the function smooth under small perturbations.
    """
    q = check_tensor4(q, "q")
    k = check_tensor4(k, "k")
    v = check_tensor4(v, "v")
    if k.shape != v.shape or q.shape[:2] != k.shape[:2] or q.shape[3] != k.shape[3]:
        raise ValueError("q/k/v shapes are incompatible")
    b, h, n_q, d = q.shape
    n_k = k.shape[2]
    c_q = 1 if config.ablation == "single_query_cluster" else config.c_q
    if c_q > n_q or config.c_k > n_k:
        raise ValueError("sequence shorter than cluster count")
    scale = config.resolve_scale(d)
    y = np.empty((b, h, n_q, d), dtype=q.dtype)
    mu = np.empty((b, h, n_q), dtype=q.dtype)

    def run(i):
        bi, hi = divmod(i, h)
        qs = q[bi, hi] * np.asarray(scale, dtype=q.dtype)
        if clusters is None:
            qc = kmeans(qs, c_q, config.kmeans_iters, config.cap_ratio,
                        make_rng(derive_seed(config.seed, bi, hi, 0)))
            kc = kmeans(k[bi, hi], config.c_k, config.kmeans_iters, config.cap_ratio,
                        make_rng(derive_seed(config.seed, bi, hi, 1)))
        else:
            qc = _clustering_from_assignments(qs, clusters.q_assign[bi, hi], c_q)
            kc = _clustering_from_assignments(k[bi, hi], clusters.k_assign[bi, hi], config.c_k)
        key_groups = [k[bi, hi][m] for m in kc.members]
        value_groups = [v[bi, hi][m] for m in kc.members]
        summaries = stage1(qc.centroids, key_groups, value_groups)
        dipoles = aggregate_dipoles(summaries)
        residuals = [qs[m] - qc.centroids[j] for j, m in enumerate(qc.members)]
        vmean = v[bi, hi].mean(axis=0) if config.ablation == "no_monopole" else None
        y_rows, mu_rows = final_stage(residuals, summaries, dipoles, config.ablation, vmean)
        for j, m in enumerate(qc.members):
            y[bi, hi][m] = y_rows[j]
            mu[bi, hi][m] = mu_rows[j]

    _map_slices(run, b * h, threads)
    return AttentionResult(y=y, mu=mu)


def rel_sq_error(reference: AttentionResult, approx: AttentionResult) -> float:
    """||y_ref - y_approx||^2 / ||y_ref||^2 over all entries jointly."""
    yr = reference.y.astype(np.float64)
    ya = approx.y.astype(np.float64)
    if yr.shape != ya.shape:
        raise ValueError("shape mismatch")
    denom = float(np.sum(yr * yr))
    if denom == 0.0:
        raise ValueError("zero reference norm")
    diff = yr - ya
    return float(np.sum(diff * diff)) / denom
