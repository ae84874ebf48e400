"""The alternating optimization loop with history capture and diagnostics.

Each iteration maps the current prior to its optimal policy and that policy
back to its optimal prior.  The objective never increases along this map, the
covariance images never change rank, and fixed points are exactly the priors
with zero update increment, so the loop exposes the increment norm as its
convergence residual and treats any recorded objective increase as a bug
worth aborting on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .fixed_point import gradient_reduced, policy_from_prior
from .problem import (DimensionMismatch, GaussianPolicy, GaussianPrior,
                      InvalidArgument, ProblemSpec, validate)
from .psd_linalg import is_pd

__all__ = [
    "DescentViolation",
    "RunOptions",
    "RunHistory",
    "PolicyVariance",
    "run",
    "fixed_point_residual",
    "avg_policy_variance",
]


class DescentViolation(ArithmeticError):
    """The recorded objective increased beyond the allowed slack."""


@dataclass(frozen=True)
class RunOptions:
    """Loop controls.

    The loop stops when the update increment (max over stages, Frobenius)
    falls to residual_tol or when max_iters full updates have been applied,
    whichever comes first.  A residual_tol of exactly zero disables the
    residual stop so the iteration budget is always exhausted, which is how
    the reference experiment pins exact iteration counts.  record_every thins
    the stored history; the initial and final iterates are always recorded.
    objective_slack bounds the tolerated (rounding-level) objective increase
    between consecutive records before the run aborts.
    """

    max_iters: int = 1_000_000
    residual_tol: float = 1e-14
    record_every: int = 1_000
    objective_slack: float = 1e-10

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise InvalidArgument(f"max_iters must be at least 1, got {self.max_iters}")
        if int(self.record_every) < 1:
            raise InvalidArgument(f"record_every must be at least 1, got {self.record_every}")
        if not self.residual_tol >= 0:
            raise InvalidArgument(f"residual_tol must be nonnegative, got {self.residual_tol}")
        if not self.objective_slack >= 0:
            raise InvalidArgument(f"objective_slack must be nonnegative, got {self.objective_slack}")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        object.__setattr__(self, "record_every", int(self.record_every))
        object.__setattr__(self, "residual_tol", float(self.residual_tol))
        object.__setattr__(self, "objective_slack", float(self.objective_slack))


@dataclass(frozen=True)
class RunHistory:
    """Thinned trace of a run plus its final iterates.

    iteration_index[j] is the iterate number of record j; iterates[j] holds
    that iterate's per-stage prior covariances, shape (T, m, m).  objectives
    and residuals are evaluated at the recorded iterate itself, so the last
    residual is the fixed-point defect of final_prior.  converged is True
    when the run stopped on the residual tolerance; reason spells it out.
    """

    iteration_index: np.ndarray
    iterates: np.ndarray
    objectives: np.ndarray
    residuals: np.ndarray
    final_prior: GaussianPrior
    final_policy: GaussianPolicy
    converged: bool
    reason: str
    iterations_run: int


class PolicyVariance(NamedTuple):
    """Stage-averaged policy covariance and its per-coordinate mean."""

    matrix: np.ndarray
    trace_mean: float


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def run(spec: ProblemSpec, init_prior: GaussianPrior,
        opts: RunOptions | None = None) -> RunHistory:
    """Run the alternation from a strictly positive definite zero-mean prior.

    Strict definiteness of the initializer maximizes the reachable covariance
    images (they are invariant along the run); zero means keep the iterates
    inside the reduced problem's domain.  Numerical failures and objective
    increases raise instead of returning a corrupt history.
    """
    validate(spec)
    if opts is None:
        opts = RunOptions()
    T, n, m = spec.T, spec.n, spec.m
    if not init_prior.is_zero_mean:
        raise InvalidArgument("initial prior must have zero means")
    if init_prior.stages != T:
        raise DimensionMismatch("init_prior", None,
                                f"expected {T} stages, got {init_prior.stages}")
    for k, S in enumerate(init_prior.Sigma):
        if S.shape != (m, m):
            raise DimensionMismatch("init_prior", k, f"expected {(m, m)}, got {S.shape}")
        if not is_pd(S):
            raise InvalidArgument(
                f"initial prior covariance at stage {k} must be strictly positive definite")
    A = np.ascontiguousarray(np.stack(spec.A))
    B = np.ascontiguousarray(np.stack(spec.B))
    R = np.ascontiguousarray(np.stack(spec.R))
    Sw = np.ascontiguousarray(np.stack(spec.Sigma_w))
    n_rec_max = opts.max_iters // opts.record_every + 2
    rec_idx = np.zeros(n_rec_max, dtype=np.int64)
    rec_obj = np.zeros(n_rec_max)
    rec_res = np.zeros(n_rec_max)
    if n == 1 and m == 1:
        sigma = np.array([float(S[0, 0]) for S in init_prior.Sigma])
        rec_sig = np.zeros((n_rec_max, T))
        n_rec, iters, status = _kernels.run_scalar(
            A[:, 0, 0].copy(), B[:, 0, 0].copy(), R[:, 0, 0].copy(),
            float(spec.F[0, 0]), Sw[:, 0, 0].copy(),
            float(spec.Sigma_x_ini[0, 0]), float(spec.epsilon),
            sigma, opts.max_iters, opts.residual_tol, opts.record_every,
            opts.objective_slack, rec_idx, rec_sig, rec_obj, rec_res)
        iterates = rec_sig[:n_rec].reshape(n_rec, T, 1, 1).copy()
        final_sig = [np.array([[v]]) for v in sigma]
    else:
        sigma = np.ascontiguousarray(np.stack(init_prior.Sigma))
        rec_sig = np.zeros((n_rec_max, T, m, m))
        n_rec, iters, status = _kernels.run_general(
            A, B, R, np.ascontiguousarray(spec.F),
            Sw, np.ascontiguousarray(spec.Sigma_x_ini), float(spec.epsilon),
            sigma, opts.max_iters, opts.residual_tol, opts.record_every,
            opts.objective_slack, rec_idx, rec_sig, rec_obj, rec_res)
        iterates = rec_sig[:n_rec].copy()
        final_sig = [sigma[k].copy() for k in range(T)]
    if status == 3:
        raise ArithmeticError(
            f"alternation lost positive definiteness or produced non-finite "
            f"values at iteration {iters}")
    if status == 2:
        raise DescentViolation(
            f"objective rose from {rec_obj[n_rec - 2]!r} to {rec_obj[n_rec - 1]!r} "
            f"between records at iterations {rec_idx[n_rec - 2]} and "
            f"{rec_idx[n_rec - 1]}, beyond slack {opts.objective_slack:g}")
    final_prior = GaussianPrior.zero_mean(final_sig)
    final_policy, _, _ = policy_from_prior(spec, final_prior)
    converged = status == 1
    reason = ("update increment within residual_tol" if converged
              else "iteration budget exhausted")
    return RunHistory(
        iteration_index=_freeze(rec_idx[:n_rec].copy()),
        iterates=_freeze(iterates),
        objectives=_freeze(rec_obj[:n_rec].copy()),
        residuals=_freeze(rec_res[:n_rec].copy()),
        final_prior=final_prior,
        final_policy=final_policy,
        converged=converged,
        reason=reason,
        iterations_run=int(iters))


def fixed_point_residual(spec: ProblemSpec, prior: GaussianPrior) -> np.ndarray:
    """Per-stage fixed-point defect of a zero-mean prior.

    The defect is the norm of Sigma_rho L (E Sigma_x E' - Sigma_rho -
    Sigma_Q) L Sigma_rho, which coincides with the increment one alternation
    step would apply; it vanishes exactly at fixed points.  Written here via
    the objective gradient, which packages the same inner matrix.
    """
    grad = gradient_reduced(spec, prior)
    scale = 2.0 / spec.epsilon
    out = np.empty(spec.T)
    for k in range(spec.T):
        S = prior.Sigma[k]
        out[k] = scale * np.linalg.norm(S @ grad.Jk_prime[k] @ S, ord="fro")
    return out


def avg_policy_variance(policy: GaussianPolicy) -> PolicyVariance:
    """Stage mean of the policy covariances, the headline summary metric."""
    mean = np.mean(np.stack(policy.Sigma), axis=0)
    return PolicyVariance(matrix=_freeze(mean),
                          trace_mean=float(np.trace(mean)) / mean.shape[0])
