"""Dense double-precision kernels: products, norms, cosine, softmax and a Jacobi SVD.

Matrices are plain 2-D ``float64`` numpy arrays.  Every function here is pure;
inputs are never modified.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "as_matrix",
    "matmul",
    "SvdResult",
    "svd",
    "row_l2_norms",
    "cosine_similarity",
    "cosine_matrix",
    "softmax_rows",
]

# Norms below this are treated as zero by the cosine helpers.
NORM_EPS = 1e-12

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60


def as_matrix(x, *, name: str = "matrix") -> np.ndarray:
    """Validate ``x`` as a finite, non-empty 2-D float64 array and return a copy."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and one column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


class SvdResult(NamedTuple):
    """Thin SVD ``x = u @ diag(sigma) @ vt`` with ``len(sigma) == min(x.shape)``."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Tournament schedule: every unordered pair of columns meets exactly once
    # per sweep, and pairs within a round are disjoint so they rotate together.
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a >= 0 and b >= 0:
                p.append(min(a, b))
                q.append(max(a, b))
        if p:
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def _complete_orthonormal(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns of ``u`` not flagged in ``keep`` by an orthonormal completion."""
    u = u.copy()
    m = u.shape[0]
    basis = [u[:, j] for j in np.flatnonzero(keep)]
    candidates = iter(np.eye(m))
    for j in np.flatnonzero(~keep):
        while True:
            v = next(candidates).copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                break
        u[:, j] = v / nv
        basis.append(u[:, j])
    return u


def _jacobi_tall(a: np.ndarray) -> SvdResult:
    """One-sided Jacobi on the columns of a matrix with rows >= cols."""
    w = a.copy()
    n = w.shape[1]
    v = np.eye(n)
    rounds = _round_robin(n)
    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            wp, wq = w[:, p], w[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            scale = np.sqrt(alpha * beta)
            active = np.abs(gamma) > JACOBI_TOL * scale
            active &= scale > 0.0
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            sign = np.where(zeta >= 0.0, 1.0, -1.0)
            t = sign / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(active, c * t, 0.0)
            w[:, p], w[:, q] = c * wp - s * wq, s * wp + c * wq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break

    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    w = w[:, order]
    v = v[:, order]
    cutoff = max(w.shape) * np.finfo(np.float64).eps * (sigma[0] if sigma.size else 0.0)
    keep = sigma > cutoff
    u = np.zeros_like(w)
    u[:, keep] = w[:, keep] / sigma[keep]
    if not np.all(keep):
        u = _complete_orthonormal(u, keep)
    return SvdResult(u, sigma, v.T.copy())


def svd(x: np.ndarray) -> SvdResult:
    """Thin singular value decomposition by one-sided Jacobi rotations.

    Rotations act on the columns of whichever orientation (``x`` or ``x.T``) has
    fewer columns.  Singular values come back sorted nonincreasing, and the
    result is a deterministic function of the input.
    """
    a = as_matrix(x, name="svd input")
    if a.shape[0] >= a.shape[1]:
        return _jacobi_tall(a)
    u, sigma, vt = _jacobi_tall(a.T)
    return SvdResult(vt.T.copy(), sigma, u.T.copy())


def row_l2_norms(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(np.einsum("ij,ij->i", x, x))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors; 0 when either norm is below 1e-12."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"vector lengths differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs cosine similarity between the rows of ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"row dimensions differ: {a.shape} vs {b.shape}")
    na = row_l2_norms(a)
    nb = row_l2_norms(b)
    ua = np.divide(a, na[:, None], out=np.zeros_like(a), where=na[:, None] >= NORM_EPS)
    ub = np.divide(b, nb[:, None], out=np.zeros_like(b), where=nb[:, None] >= NORM_EPS)
    return np.clip(ua @ ub.T, -1.0, 1.0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)
