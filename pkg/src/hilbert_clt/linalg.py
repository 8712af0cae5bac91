"""Finite-dimensional Hilbert-space primitives.

Vectors are coordinate arrays of shape ``(d,)`` in an orthonormal basis and
operators are ``(d, d)`` arrays acting by matrix-vector product. The helpers
here validate shapes and finiteness so that errors surface early rather than
as silent broadcasting.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

SYMMETRY_TOL = 1e-10
EIG_SYMMETRY_TOL = 1e-8
CLIP_TOL = 1e-8


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate and return a finite 1-d float array."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_operator(b, dim: int | None = None) -> np.ndarray:
    """Validate and return a finite square 2-d float array."""
    m = np.asarray(b, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {m.shape[0]}")
    if not np.all(np.isfinite(m)):
        raise ValueError("operator has non-finite entries")
    return m


def inner(x, y) -> float:
    x = as_vector(x)
    y = as_vector(y, x.shape[0])
    return float(x @ y)


def norm(x) -> float:
    return float(np.linalg.norm(as_vector(x)))


def apply(b, x) -> np.ndarray:
    b = as_operator(b)
    return b @ as_vector(x, b.shape[0])


def adjoint(b) -> np.ndarray:
    return as_operator(b).T.copy()


def compose(a, b) -> np.ndarray:
    a = as_operator(a)
    return a @ as_operator(b, a.shape[0])


def trace(b) -> float:
    return float(np.trace(as_operator(b)))


def hs_norm(b) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(as_operator(b), "fro"))


def _is_symmetric(m: np.ndarray, tol: float) -> bool:
    scale = max(float(np.max(np.abs(m))), 1e-300)
    return float(np.max(np.abs(m - m.T))) <= tol * scale


def singular_values(b) -> np.ndarray:
    """Singular values in descending order.

    Computed as the top half of the eigenvalues of the symmetric matrix
    ``[[0, B], [B^T, 0]]``, whose spectrum is ``+-sigma_j``. Unlike square
    roots of the eigenvalues of ``B^T B`` this keeps small singular values
    accurate to rounding in ``||B||``. Values that come out slightly
    negative are clipped at zero.
    """
    b = as_operator(b)
    d = b.shape[0]
    j = np.zeros((2 * d, 2 * d))
    j[:d, d:] = b
    j[d:, :d] = b.T
    w = np.linalg.eigvalsh(j)[::-1][:d]
    return np.clip(w, 0.0, None)


def operator_norm(b) -> float:
    return float(singular_values(b)[0])


@dataclass(frozen=True)
class CovOperator:
    """Self-adjoint positive semi-definite operator with its spectrum.

    ``eigenvalues`` are sorted in descending order and the columns of
    ``eigenvectors`` are the matching orthonormal eigenvectors.
    ``clipped_mass`` records the total magnitude of negative eigenvalues
    that were set to zero. ``meta`` carries provenance such as MC standard
    errors for estimated covariances.
    """

    op: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clipped_mass: float = 0.0
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        op = as_operator(self.op)
        if not _is_symmetric(op, SYMMETRY_TOL):
            raise ValueError("covariance operator is not symmetric")
        if np.any(self.eigenvalues < 0):
            raise ValueError("not PSD")

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    @property
    def rank(self) -> int:
        lam = self.eigenvalues
        return int(np.sum(lam > 1e-14 * max(float(lam[0]), 1e-300)))

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def sqrt(self) -> np.ndarray:
        return (self.eigenvectors * np.sqrt(self.eigenvalues)) @ self.eigenvectors.T

    @classmethod
    def from_matrix(cls, c, meta: dict | None = None) -> "CovOperator":
        return eig_psd(c, meta=meta)

    @classmethod
    def from_spectrum(cls, eigenvalues, eigenvectors=None) -> "CovOperator":
        lam = as_vector(eigenvalues)
        if np.any(lam < 0):
            raise ValueError("not PSD")
        order = np.argsort(lam)[::-1]
        lam = lam[order]
        v = np.eye(lam.size) if eigenvectors is None else as_operator(eigenvectors, lam.size)
        v = v[:, order]
        if not np.allclose(v.T @ v, np.eye(lam.size), atol=1e-10):
            raise ValueError("eigenvectors are not orthonormal")
        op = (v * lam) @ v.T
        return cls(0.5 * (op + op.T), lam, v)


def eig_psd(c, meta: dict | None = None) -> CovOperator:
    """Eigendecomposition of a symmetric PSD matrix.

    Eigenvalues in ``[-1e-8, 0)`` are treated as rounding noise and clipped;
    anything more negative raises ``ValueError("not PSD")``.
    """
    c = as_operator(c)
    if not _is_symmetric(c, EIG_SYMMETRY_TOL):
        raise ValueError("matrix is not symmetric")
    s = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(s)
    w, v = w[::-1], v[:, ::-1]
    if w[-1] < -CLIP_TOL:
        raise ValueError(f"not PSD (smallest eigenvalue {w[-1]:.3e})")
    neg = w < 0
    clipped = float(-np.sum(w[neg]))
    w = np.where(neg, 0.0, w)
    return CovOperator(s, w, v, clipped, dict(meta or {}))


def psd_project(c, meta: dict | None = None) -> CovOperator:
    """Nearest PSD matrix in Frobenius norm, for noisy estimates.

    Unlike :func:`eig_psd` this never fails on negative eigenvalues; it
    clips all of them and reports the clipped mass.
    """
    c = as_operator(c)
    s = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(s)
    w, v = w[::-1], v[:, ::-1]
    clipped = float(-np.sum(w[w < 0]))
    w = np.clip(w, 0.0, None)
    op = (v * w) @ v.T
    return CovOperator(0.5 * (op + op.T), w, v, clipped, dict(meta or {}))


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix."""
    from scipy.stats import special_ortho_group

    return special_ortho_group.rvs(d, random_state=rng)
