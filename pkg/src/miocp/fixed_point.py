"""The two half-steps of the alternating scheme and the reduced objective.

For a fixed prior the optimal policy is affine-Gaussian and computable in
closed form from the backward recursion; for a fixed policy the optimal prior
is the policy's state-averaged input marginal.  Eliminating the policy leaves
a reduced objective over the per-stage prior covariances alone, whose value,
matrix gradient and fixed points this module evaluates.  A degenerate-aware
Gaussian KL divergence rounds out the toolbox, since rank-deficient
covariances appear naturally at low-entropy optima.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problem import (GaussianPolicy, GaussianPrior, InvalidArgument,
                      ProblemSpec, StateMoments)
from .psd_linalg import psd_factor, psd_sqrt, sym_eig
from .riccati import RiccatiSolution, solve_riccati

__all__ = [
    "NonInvertibleA",
    "ImageMismatch",
    "ResidualSequence",
    "GradientSequence",
    "policy_from_prior",
    "propagate_moments",
    "prior_from_policy",
    "objective_reduced",
    "gradient_reduced",
    "kl_gaussian",
]

# Condition number beyond which a state matrix is treated as singular when
# its inverse is genuinely required (nonzero prior means).
COND_LIMIT = 1e14


class NonInvertibleA(InvalidArgument):
    """A nonzero prior mean requires inverting a singular state matrix."""

    def __init__(self, stage: int):
        self.stage = stage
        super().__init__(
            f"A[{stage}] is numerically singular; nonzero prior means require "
            f"invertible state matrices")


class ImageMismatch(ValueError):
    """The two Gaussians are not mutually absolutely continuous (KL infinite)."""


@dataclass(frozen=True)
class ResidualSequence:
    """Backward mean-shift terms of the fixed-prior optimal policy.

    ``r[T] = 0`` always; the whole sequence is identically zero whenever the
    prior means are zero, which is why the reduced problem never sees it.
    """

    r: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class GradientSequence:
    """Per-stage matrix gradient of the reduced objective.

    ``Jk_prime[k]`` is the symmetric gradient block for stage k's prior
    covariance, assembled from the whitening factor ``L[k]`` (the inverse of
    prior plus flat-prior covariance) and the closed-loop sensitivity
    ``E[k]``.
    """

    Jk_prime: tuple[np.ndarray, ...]
    E: tuple[np.ndarray, ...]
    L: tuple[np.ndarray, ...]


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def policy_from_prior(spec: ProblemSpec, prior: GaussianPrior
                      ) -> tuple[GaussianPolicy, ResidualSequence, RiccatiSolution]:
    """Closed-form optimal policy for a fixed prior.

    The stage-k law is Gaussian with covariance squeezed between zero and the
    flat-prior covariance, gain proportional to that covariance (so the gain's
    image can never leave the covariance's image), and an offset fed by the
    prior mean through the backward shift recursion.  Zero prior means short
    circuit the shift recursion and drop the invertibility requirement on the
    state matrices.
    """
    sol = solve_riccati(spec, prior)
    T, n, eps = spec.T, spec.n, spec.epsilon
    zero_means = prior.is_zero_mean
    r = [np.zeros(n) for _ in range(T + 1)]
    v = [None] * T
    if not zero_means:
        for k in range(T):
            if np.linalg.cond(spec.A[k]) > COND_LIMIT:
                raise NonInvertibleA(k)
        for k in range(T - 1, -1, -1):
            A, B = spec.A[k], spec.B[k]
            S_rho, mu_rho = prior.Sigma[k], prior.mu[k]
            v[k] = np.linalg.solve(np.eye(spec.m) + S_rho @ sol.C[k], mu_rho)
            r[k] = np.linalg.solve(A, r[k + 1]) - np.linalg.solve(
                sol.Pi[k], A.T @ sol.Pi[k + 1] @ B @ v[k])
    P, q, S_pi = [], [], []
    for k in range(T):
        A, B = spec.A[k], spec.B[k]
        root_rho = psd_sqrt(prior.Sigma[k])
        mid = _sym(np.eye(spec.m) + root_rho @ sol.C[k] @ root_rho)
        Sigma_pi = _sym(root_rho @ np.linalg.solve(mid, root_rho))
        gain = -(Sigma_pi @ B.T @ sol.Pi[k + 1] @ A) / eps
        offset = (Sigma_pi @ B.T @ sol.Pi[k + 1] @ r[k + 1]) / eps
        if v[k] is not None:
            offset = offset + v[k]
        P.append(gain)
        q.append(offset)
        S_pi.append(Sigma_pi)
    policy = GaussianPolicy(P=tuple(P), q=tuple(q), Sigma=tuple(S_pi))
    return policy, ResidualSequence(r=tuple(r)), sol


def propagate_moments(spec: ProblemSpec, policy: GaussianPolicy) -> StateMoments:
    """Forward first and second state moments under an affine-Gaussian policy."""
    mu = [np.zeros(spec.n)]
    Sigma = [np.asarray(spec.Sigma_x_ini)]
    for k in range(spec.T):
        A, B = spec.A[k], spec.B[k]
        Acl = A + B @ policy.P[k]
        mu.append(Acl @ mu[k] + B @ policy.q[k])
        Sigma.append(_sym(Acl @ Sigma[k] @ Acl.T
                          + B @ policy.Sigma[k] @ B.T + spec.Sigma_w[k]))
    return StateMoments(mu_x=tuple(mu), Sigma_x=tuple(Sigma))


def prior_from_policy(spec: ProblemSpec, policy: GaussianPolicy,
                      moments: StateMoments) -> GaussianPrior:
    """Optimal prior for a fixed policy: its input marginal under the state law."""
    mu = tuple(policy.P[k] @ moments.mu_x[k] + policy.q[k] for k in range(spec.T))
    Sigma = tuple(_sym(policy.Sigma[k] + policy.P[k] @ moments.Sigma_x[k] @ policy.P[k].T)
                  for k in range(spec.T))
    return GaussianPrior(mu=mu, Sigma=Sigma)


def _require_zero_means(prior: GaussianPrior):
    if not prior.is_zero_mean:
        raise InvalidArgument("the reduced objective is defined for zero-mean priors")


def _logdet_ratio(Sigma_rho: np.ndarray, C: np.ndarray) -> float:
    """log(det(S+Q)/det(Q)) as logdet(I + F' C F) with F a factor of S.

    The factored form stays exact when the prior covariance is rank
    deficient, where numerator and denominator determinants both vanish.
    """
    Fct = psd_factor(Sigma_rho).factor
    if Fct.shape[1] == 0:
        return 0.0
    small = _sym(np.eye(Fct.shape[1]) + Fct.T @ C @ Fct)
    sign, logdet = np.linalg.slogdet(small)
    if sign <= 0:
        raise ArithmeticError("determinant identity produced a non-PD matrix")
    return float(logdet)


def objective_reduced(spec: ProblemSpec, prior: GaussianPrior) -> float:
    """Value of the reduced problem at the given zero-mean prior."""
    _require_zero_means(prior)
    sol = solve_riccati(spec, prior)
    total = float(np.trace(sol.Pi[0] @ spec.Sigma_x_ini))
    for k in range(spec.T):
        total += spec.epsilon * _logdet_ratio(prior.Sigma[k], sol.C[k])
        total += float(np.trace(sol.Pi[k + 1] @ spec.Sigma_w[k]))
    return 0.5 * total


def gradient_reduced(spec: ProblemSpec, prior: GaussianPrior) -> GradientSequence:
    """Per-stage matrix gradient of the reduced objective at a zero-mean prior.

    The state covariances entering the gradient are recomputed under the
    fixed-prior optimal policy on every call; caching them across different
    priors would silently evaluate the gradient at a stale closed loop.
    """
    _require_zero_means(prior)
    policy, _, sol = policy_from_prior(spec, prior)
    moments = propagate_moments(spec, policy)
    eps = spec.epsilon
    Jp, E, L = [], [], []
    for k in range(spec.T):
        A, B = spec.A[k], spec.B[k]
        E_k = sol.Sigma_Q[k] @ B.T @ sol.Pi[k + 1] @ A / eps
        L_k = _sym(np.linalg.inv(sol.Sigma_Q[k] + prior.Sigma[k]))
        inner = prior.Sigma[k] + sol.Sigma_Q[k] - E_k @ moments.Sigma_x[k] @ E_k.T
        Jp.append(_sym((eps / 2.0) * L_k @ inner @ L_k))
        E.append(E_k)
        L.append(L_k)
    return GradientSequence(Jk_prime=tuple(Jp), E=tuple(E), L=tuple(L))


def _image_basis(Sigma: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of the covariance's image, thresholded relative to tol."""
    w, V = sym_eig(Sigma)
    cut = tol * (1.0 + (abs(w[0]) if w.size else 0.0))
    return V[:, w > cut]


def kl_gaussian(mu_p, Sigma_p, mu_q, Sigma_q, tol: float = 1e-8) -> float:
    """KL divergence between two possibly degenerate Gaussians.

    Finite exactly when the two covariance images coincide and the mean
    difference lies inside them (mutual absolute continuity); then the usual
    closed form applies on the common image subspace.  Violations raise
    :class:`ImageMismatch`, signalling an infinite divergence rather than
    returning a number.
    """
    mu_p = np.atleast_1d(np.asarray(mu_p, dtype=float))
    mu_q = np.atleast_1d(np.asarray(mu_q, dtype=float))
    Sp = _sym(np.atleast_2d(np.asarray(Sigma_p, dtype=float)))
    Sq = _sym(np.atleast_2d(np.asarray(Sigma_q, dtype=float)))
    if mu_p.shape != mu_q.shape or Sp.shape != Sq.shape:
        raise InvalidArgument("distributions must share a common dimension")
    d = mu_p - mu_q
    Up = _image_basis(Sp, tol)
    Uq = _image_basis(Sq, tol)
    if Up.shape[1] != Uq.shape[1]:
        raise ImageMismatch(
            f"covariance ranks differ ({Up.shape[1]} vs {Uq.shape[1]})")
    rank = Uq.shape[1]
    if rank == 0:
        if np.max(np.abs(d), initial=0.0) > tol * (1.0 + np.max(np.abs(mu_q), initial=0.0)):
            raise ImageMismatch("point masses at different locations")
        return 0.0
    if rank < Sp.shape[0]:
        angles = scipy.linalg.subspace_angles(Up, Uq)
        if angles.size and angles.max() > tol:
            raise ImageMismatch(
                f"covariance images differ (max principal angle {angles.max():.3e})")
        leak = d - Uq @ (Uq.T @ d)
        if np.max(np.abs(leak), initial=0.0) > tol * (1.0 + np.max(np.abs(d), initial=0.0)):
            raise ImageMismatch("mean difference leaves the covariance image")
    Hp = _sym(Uq.T @ Sp @ Uq)
    Hq = _sym(Uq.T @ Sq @ Uq)
    dq = Uq.T @ d
    sign_q, logdet_q = np.linalg.slogdet(Hq)
    sign_p, logdet_p = np.linalg.slogdet(Hp)
    if sign_q <= 0 or sign_p <= 0:
        raise ImageMismatch("restricted covariance is singular at this tolerance")
    trace_term = float(np.trace(np.linalg.solve(Hq, Hp)))
    mahal = float(dq @ np.linalg.solve(Hq, dq))
    kl = 0.5 * (logdet_q - logdet_p - rank + trace_term + mahal)
    return max(0.0, float(kl))
