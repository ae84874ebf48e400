"""Backward value recursions for the KL-regularized control cost.

For a fixed input prior, the quadratic cost-to-go weight at each stage obeys a
prior-dependent Riccati difference equation.  This module solves that
recursion, and also the two prior-free recursions that bracket it from above
(open loop, infinite temperature) and below (standard LQR, zero temperature).
Those brackets do not depend on the temperature at all; only the derived
input-noise covariance bounds scale with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problem import GaussianPrior, ProblemSpec
from .psd_linalg import check_symmetric, psd_sqrt

__all__ = [
    "IllConditioned",
    "RiccatiSolution",
    "RiccatiBounds",
    "solve_riccati",
    "riccati_bounds",
]

# Reciprocal condition number below which a stage solve is reported as
# unreliable rather than silently returned.
RCOND_FLOOR = 1e-13


class IllConditioned(ArithmeticError):
    """A stage's inner linear solve is too ill conditioned to trust."""

    def __init__(self, stage: int, cond: float):
        self.stage = stage
        self.cond = cond
        super().__init__(
            f"stage {stage}: inner solve has condition estimate {cond:.3e}")


@dataclass(frozen=True)
class RiccatiSolution:
    """Cost-to-go weights and per-stage input quantities for a fixed prior.

    ``Pi`` holds the T+1 stage weights with ``Pi[T]`` the terminal weight
    exactly; every entry is PSD, and PD whenever all state matrices are
    invertible.  ``C[k]`` is the temperature-scaled input curvature
    ``(R_k + B_k' Pi[k+1] B_k) / epsilon`` and ``Sigma_Q[k]`` its inverse, the
    covariance the optimal policy would have under a maximally flat prior.
    """

    Pi: tuple[np.ndarray, ...]
    C: tuple[np.ndarray, ...]
    Sigma_Q: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class RiccatiBounds:
    """Prior-independent brackets on the cost-to-go and input covariance.

    ``Pi_hat[k]`` is the open-loop weight (the transition-product sandwich of
    the terminal weight), an upper bound on any prior's ``Pi[k]``.
    ``Pi_check[k]`` solves the standard no-regularization Riccati recursion
    and bounds ``Pi[k]`` from below.  ``Sigma_Q_hat``/``Sigma_Q_check`` are
    the matching upper/lower brackets of ``Sigma_Q``, built from ``Pi_check``
    and ``Pi_hat`` respectively (the ordering flips through the inverse).
    """

    Pi_hat: tuple[np.ndarray, ...]
    Pi_check: tuple[np.ndarray, ...]
    Sigma_Q_hat: tuple[np.ndarray, ...]
    Sigma_Q_check: tuple[np.ndarray, ...]


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def _solve_pd(M: np.ndarray, rhs: np.ndarray, stage: int) -> np.ndarray:
    """Solve M X = rhs for symmetric PD M, reporting bad conditioning."""
    try:
        c, low = scipy.linalg.cho_factor(_sym(M), check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise IllConditioned(stage, np.inf) from exc
    d = np.abs(np.diag(c))
    rcond = (d.min() / d.max()) ** 2 if d.size else 1.0
    if not rcond > RCOND_FLOOR:
        raise IllConditioned(stage, 1.0 / max(rcond, np.finfo(float).tiny))
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)


def solve_riccati(spec: ProblemSpec, prior: GaussianPrior) -> RiccatiSolution:
    """Run the prior-dependent backward recursion from the terminal weight.

    Each step contracts the open-loop pullback by a curvature term through
    the prior covariance.  The update is evaluated in a root-split form whose
    inner matrix

        I + Pi^{1/2} B S^{1/2} (eps I + S^{1/2} R S^{1/2})^{-1} S^{1/2} B' Pi^{1/2}

    (S the prior covariance) is positive definite for every PSD S, so
    rank-deficient and even zero priors need no special casing.
    """
    T, n, eps = spec.T, spec.n, spec.epsilon
    Pi: list[np.ndarray] = [None] * (T + 1)
    C: list[np.ndarray] = [None] * T
    Sigma_Q: list[np.ndarray] = [None] * T
    Pi[T] = check_symmetric(spec.F, name="F")
    eye_n = np.eye(n)
    for k in range(T - 1, -1, -1):
        A, B, R = spec.A[k], spec.B[k], spec.R[k]
        m = B.shape[1]
        S_next = _sym(R + B.T @ Pi[k + 1] @ B)
        C[k] = S_next / eps
        Sigma_Q[k] = _sym(_solve_pd(S_next, np.eye(m) * eps, k))
        root_pi = psd_sqrt(Pi[k + 1])
        root_rho = psd_sqrt(prior.Sigma[k])
        K = root_pi @ B @ root_rho
        inner_small = eps * np.eye(m) + _sym(root_rho @ R @ root_rho)
        M = _sym(eye_n + K @ _solve_pd(inner_small, K.T, k))
        Y = root_pi @ A
        Pi[k] = _sym(Y.T @ _solve_pd(M, Y, k))
    return RiccatiSolution(Pi=tuple(Pi), C=tuple(C), Sigma_Q=tuple(Sigma_Q))


def riccati_direct_step(spec: ProblemSpec, prior: GaussianPrior, k: int,
                        Pi_next: np.ndarray) -> np.ndarray:
    """One backward step in the unsplit form, for cross-checking.

    Uses the prior covariance root directly around the curvature inverse;
    agrees with the split form to rounding whenever the prior covariance is
    positive definite.
    """
    A, B, R = spec.A[k], spec.B[k], spec.R[k]
    m = B.shape[1]
    eps = spec.epsilon
    C_k = _sym(R + B.T @ Pi_next @ B) / eps
    root_rho = psd_sqrt(prior.Sigma[k])
    mid = _sym(np.eye(m) + root_rho @ C_k @ root_rho)
    G = root_rho @ B.T @ Pi_next @ A
    return _sym(A.T @ Pi_next @ A - G.T @ _solve_pd(mid, G, k) / eps)


def riccati_bounds(spec: ProblemSpec) -> RiccatiBounds:
    """Compute both prior-free brackets in one backward sweep."""
    T, eps = spec.T, spec.epsilon
    Pi_hat: list[np.ndarray] = [None] * (T + 1)
    Pi_check: list[np.ndarray] = [None] * (T + 1)
    Sq_hat: list[np.ndarray] = [None] * T
    Sq_check: list[np.ndarray] = [None] * T
    F = check_symmetric(spec.F, name="F")
    Pi_hat[T] = F
    Pi_check[T] = F
    for k in range(T - 1, -1, -1):
        A, B, R = spec.A[k], spec.B[k], spec.R[k]
        m = B.shape[1]
        Pi_hat[k] = _sym(A.T @ Pi_hat[k + 1] @ A)
        G = B.T @ Pi_check[k + 1] @ A
        S_check = _sym(R + B.T @ Pi_check[k + 1] @ B)
        Pi_check[k] = _sym(A.T @ Pi_check[k + 1] @ A - G.T @ _solve_pd(S_check, G, k))
        Sq_hat[k] = _sym(_solve_pd(S_check, np.eye(m) * eps, k))
        S_hat = _sym(R + B.T @ Pi_hat[k + 1] @ B)
        Sq_check[k] = _sym(_solve_pd(S_hat, np.eye(m) * eps, k))
    return RiccatiBounds(Pi_hat=tuple(Pi_hat), Pi_check=tuple(Pi_check),
                         Sigma_Q_hat=tuple(Sq_hat), Sigma_Q_check=tuple(Sq_check))
