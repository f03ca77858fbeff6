"""Small dense linear-algebra helpers shared by the numerical modules."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

# Exponents at or below this value are treated as -inf.
NEG_INF_FLOOR = -1e9
TINY = 1e-300


def chain_product(mats: np.ndarray) -> np.ndarray:
    """Return ``mats[n-1] @ ... @ mats[0]`` for a stack of square matrices.

    Uses pairwise reduction; the newest factor stays on the left.
    """
    mats = np.asarray(mats, dtype=float)
    if mats.ndim != 3:
        raise ValueError("expected a (n, d, d) stack")
    n, d, _ = mats.shape
    if n == 0:
        return np.eye(d)
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, np.eye(d)[None]], axis=0)
        mats = np.matmul(mats[1::2], mats[0::2])
    return mats[0].copy()


def scaled_chunk_products(mats: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Products of consecutive blocks of ``stride`` matrices, kept in scaled form.

    Returns ``(C, logscale)`` with the true block product equal to
    ``C[b] * exp(logscale[b])``.  Every reduction level is renormalized by the
    largest absolute entry so long blocks cannot overflow.  A block whose
    product is exactly zero gets ``logscale = -inf`` and ``C = 0``.
    """
    mats = np.asarray(mats, dtype=float)
    n, d, _ = mats.shape
    stride = max(1, int(stride))
    nblocks = -(-n // stride)
    pad = nblocks * stride - n
    if pad:
        mats = np.concatenate([mats, np.broadcast_to(np.eye(d), (pad, d, d))], axis=0)
    work = mats.reshape(nblocks, stride, d, d)
    logscale = np.zeros(nblocks)
    while work.shape[1] > 1:
        if work.shape[1] % 2:
            work = np.concatenate(
                [work, np.broadcast_to(np.eye(d), (nblocks, 1, d, d))], axis=1)
        work = np.matmul(work[:, 1::2], work[:, 0::2])
        scale = np.abs(work).max(axis=(2, 3))
        with np.errstate(divide="ignore"):
            logscale += np.log(scale).sum(axis=1)
        safe = np.where(scale > 0, scale, 1.0)
        work = work / safe[:, :, None, None]
    return work[:, 0], logscale


def scaled_product(mats: np.ndarray, stride: int = 32) -> tuple[np.ndarray, float]:
    """Whole product as ``(M, logscale)`` with ``M`` of unit max-entry."""
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[1]
    if mats.shape[0] == 0:
        return np.eye(d), 0.0
    chunks, logs = scaled_chunk_products(mats, stride)
    M = np.eye(d)
    total = 0.0
    for C, ls in zip(chunks, logs):
        M = C @ M
        s = np.abs(M).max()
        if s == 0 or not np.isfinite(ls):
            return np.zeros((d, d)), -np.inf
        M /= s
        total += ls + np.log(s)
    return M, total


def signed_qr(Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a nonnegative diagonal in ``R`` (works on stacks)."""
    Q, R = np.linalg.qr(Z)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    signs = np.where(diag < 0, -1.0, 1.0)
    Q = Q * signs[..., None, :]
    R = R * signs[..., :, None]
    return Q, R


def orthonormal(B: np.ndarray) -> np.ndarray:
    """Orthonormal basis for the column span of ``B`` (same column count)."""
    if B.shape[1] == 0:
        return B.copy()
    Q, _ = np.linalg.qr(B)
    return Q


def complement(B: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(B)."""
    d = B.shape[0]
    if B.shape[1] == 0:
        return np.eye(d)
    return sla.null_space(B.T)


def subspace_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Sine of the largest principal angle between two equal-dimension spans."""
    if A.shape[1] == 0 and B.shape[1] == 0:
        return 0.0
    if A.shape[1] != B.shape[1]:
        return 1.0
    ang = sla.subspace_angles(A, B)
    return float(np.sin(ang.max())) if ang.size else 0.0


def min_principal_angle(A: np.ndarray, B: np.ndarray) -> float:
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.pi / 2
    return float(sla.subspace_angles(A, B).min())


def safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def floor_exponents(gammas) -> np.ndarray:
    """Map -inf (or anything below the floor) to -inf consistently."""
    g = np.asarray(gammas, dtype=float).copy()
    g[g <= NEG_INF_FLOOR] = -np.inf
    return g


def report_value(x: float) -> float:
    """Replace -inf by the report sentinel."""
    return NEG_INF_FLOOR if x == -np.inf else float(x)
