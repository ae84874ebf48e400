"""Symmetric and positive semidefinite matrix utilities.

All routines operate on dense real symmetric matrices and route through one
eigendecomposition helper, so ranks, square roots, rank factors and
pseudoinverses agree on which eigenvalues count as zero.  Numerical rank is
decided by a clamp tolerance that defaults to ``1e-10 * (1 + max |eigenvalue|)``
to stay scale free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NotSymmetric",
    "NotPsd",
    "SymMatrix",
    "PsdFactor",
    "check_symmetric",
    "default_clamp_tol",
    "sym_eig",
    "psd_sqrt",
    "psd_factor",
    "pinv",
    "min_eig",
    "is_pd",
    "is_psd",
]

# Relative scale of the symmetry test on construction/validation.
SYMMETRY_RTOL = 1e-12

# Relative scale of the default eigenvalue clamp.
CLAMP_RTOL = 1e-10


class NotSymmetric(ValueError):
    """Input matrix is not symmetric (or not square) within tolerance."""


class NotPsd(ValueError):
    """Matrix has an eigenvalue below the allowed negative tolerance."""


def check_symmetric(M, name: str = "matrix") -> np.ndarray:
    """Validate that ``M`` is square and symmetric; return it symmetrized.

    Symmetry is accepted when ``max |M_ij - M_ji| <= 1e-12 * (1 + max |M_ij|)``.
    The returned array is ``(M + M.T) / 2`` in float64, which removes the
    (tolerated) asymmetry before any eigendecomposition.
    """
    if isinstance(M, SymMatrix):
        return M.entries
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"{name} must be square, got shape {A.shape}")
    if A.shape[0] == 0:
        raise NotSymmetric(f"{name} must have positive dimension")
    if not np.all(np.isfinite(A)):
        raise NotSymmetric(f"{name} contains non-finite entries")
    scale = 1.0 + np.max(np.abs(A))
    if np.max(np.abs(A - A.T)) > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"{name} is not symmetric within {SYMMETRY_RTOL:g} relative")
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class SymMatrix:
    """A validated dense symmetric matrix.

    Construction enforces the symmetry invariant of :func:`check_symmetric`
    and freezes the entries, so instances are safe to share across threads.
    """

    entries: np.ndarray

    def __post_init__(self):
        A = check_symmetric(self.entries, name="SymMatrix entries")
        A.setflags(write=False)
        object.__setattr__(self, "entries", A)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class PsdFactor:
    """Full-column-rank factor ``G`` of a PSD matrix, ``M = G @ G.T``.

    ``rank`` may be zero, in which case ``factor`` has shape ``(dim, 0)``
    (the zero matrix is represented by an empty-width factor).
    """

    factor: np.ndarray
    rank: int = field(init=False)

    def __post_init__(self):
        G = np.asarray(self.factor, dtype=float)
        if G.ndim != 2:
            raise ValueError(f"factor must be 2-D, got shape {G.shape}")
        G = G.copy()
        G.setflags(write=False)
        object.__setattr__(self, "factor", G)
        object.__setattr__(self, "rank", G.shape[1])

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Return ``factor @ factor.T`` (the represented PSD matrix)."""
        return self.factor @ self.factor.T


def default_clamp_tol(eigenvalues: np.ndarray) -> float:
    """Eigenvalue clamp used when no explicit tolerance is given."""
    if eigenvalues.size == 0:
        return CLAMP_RTOL
    return CLAMP_RTOL * (1.0 + np.max(np.abs(eigenvalues)))


def sym_eig(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, basis)`` with eigenvalues sorted descending and
    orthonormal eigenvectors in the columns of ``basis``, so that
    ``M = basis @ diag(eigenvalues) @ basis.T``.
    """
    A = check_symmetric(M)
    w, V = np.linalg.eigh(A)
    return w[::-1].copy(), V[:, ::-1].copy()


def _clamped_eig(M, tol: float | None) -> tuple[np.ndarray, np.ndarray, float]:
    """Shared decomposition: eigenvalues below ``tol`` clamped to zero.

    Raises :class:`NotPsd` when an eigenvalue falls below ``-tol``.
    """
    w, V = sym_eig(M)
    if tol is None:
        tol = default_clamp_tol(w)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if w[-1] < -tol:
        raise NotPsd(f"eigenvalue {w[-1]:.6g} below -{tol:g}")
    w = np.where(w < tol, 0.0, w)
    return w, V, tol


def psd_sqrt(M, tol: float | None = None) -> np.ndarray:
    """Unique symmetric PSD square root of a PSD matrix.

    Eigenvalues below ``tol`` are clamped to zero before rooting; an
    eigenvalue below ``-tol`` raises :class:`NotPsd`.
    """
    w, V, _ = _clamped_eig(M, tol)
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def psd_factor(M, tol: float | None = None) -> PsdFactor:
    """Full-column-rank factorization ``M = G @ G.T`` of a PSD matrix.

    The rank is the number of eigenvalues above ``tol``; a zero matrix yields
    an empty-width factor.
    """
    w, V, tol = _clamped_eig(M, tol)
    keep = w > 0.0
    return PsdFactor(V[:, keep] * np.sqrt(w[keep]))


def pinv(M, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Eigenvalues with ``|lambda| <= tol`` are treated as exactly zero.  Unlike
    the PSD helpers this accepts indefinite symmetric input.
    """
    w, V = sym_eig(M)
    if tol is None:
        tol = default_clamp_tol(w)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    inv_w = np.zeros_like(w)
    keep = np.abs(w) > tol
    inv_w[keep] = 1.0 / w[keep]
    P = (V * inv_w) @ V.T
    return 0.5 * (P + P.T)


def min_eig(M) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    A = check_symmetric(M)
    return float(np.linalg.eigvalsh(A)[0])


def is_pd(M, tol: float = 0.0) -> bool:
    """True when the smallest eigenvalue exceeds ``tol``."""
    return min_eig(M) > tol


def is_psd(M, tol: float = 0.0) -> bool:
    """True when the smallest eigenvalue is at least ``-tol``."""
    return min_eig(M) >= -tol
