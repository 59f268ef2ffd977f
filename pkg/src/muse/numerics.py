"""Dense-tensor substrate: dtype handling, stable reductions, seeded RNG.

All attention carriers are plain numpy arrays of shape (batch, heads, n, d),
row-major. Scores may contain -inf as a mask sentinel; NaN is never legal.
"""

from __future__ import annotations

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64}
DTYPE_CODES = {"f32": 0, "f64": 1}


def resolve_dtype(dtype) -> np.dtype:
    """Accept 'f32'/'f64' or a numpy float dtype; reject anything else."""
    if isinstance(dtype, str):
        if dtype not in DTYPES:
            raise ValueError(f"unknown dtype {dtype!r}, expected one of {sorted(DTYPES)}")
        return np.dtype(DTYPES[dtype])
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dt}, expected float32 or float64")
    return dt


def check_tensor4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate a (batch, heads, n, d) array: 4 axes, float dtype, all finite."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must have shape (batch, heads, n, d), got ndim={x.ndim}")
    if x.dtype not in (np.float32, np.float64):
        raise ValueError(f"{name} must be float32 or float64, got {x.dtype}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite entries")
    return x


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator: identical seed gives an identical stream."""
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(seed: int, *path: int) -> int:
    """Derive a child seed from a base seed and an index path.

    Uses SeedSequence spawn keys, so derived streams are independent and the
    mapping (seed, path) -> child is stable across runs and platforms.
    """
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stable_logsumexp(scores: np.ndarray, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    """max-shifted log-sum-exp along `axis`; finite for any finite input.

    -inf entries act as mask sentinels and contribute exp(-inf) = 0; a fully
    masked slice reduces to -inf. NaN input is rejected.
    """
    scores = np.asarray(scores)
    if scores.shape == () or scores.shape[axis] == 0:
        raise ValueError("empty reduction")
    if np.isnan(scores).any():
        raise ValueError("NaN in logsumexp input")
    hi = np.max(scores, axis=axis, keepdims=True)
    # for all-masked slices exp(-inf - -inf) would be NaN; pin the shift to 0 there
    shift = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore"):  # log(0) = -inf is the wanted all-masked result
        out = np.log(np.sum(np.exp(scores - shift), axis=axis, keepdims=True)) + shift
    out = np.where(np.isfinite(hi), out, -np.inf)
    if not keepdims:
        out = np.squeeze(out, axis=axis)
    return out[()] if out.ndim == 0 else out


def stable_softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shifted softmax along `axis`. -inf entries map to exactly 0.

    Raises on an empty reduction and on any fully masked (all -inf) slice.
    """
    scores = np.asarray(scores)
    if scores.shape == () or scores.shape[axis] == 0:
        raise ValueError("empty reduction")
    if np.isnan(scores).any():
        raise ValueError("NaN in softmax input")
    hi = np.max(scores, axis=axis, keepdims=True)
    if not np.isfinite(hi).all():
        raise ValueError("fully masked row")
    ex = np.exp(scores - hi)
    return ex / np.sum(ex, axis=axis, keepdims=True)
