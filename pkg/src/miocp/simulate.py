"""Monte Carlo rollouts of the closed loop and empirical cost estimation.

Rollouts sample the linear dynamics under an affine-Gaussian policy and
accumulate the true stage costs: quadratic input effort plus the
temperature-weighted KL of the policy's conditional against the prior,
evaluated analytically at each visited state (both distributions are
Gaussian, so sampling the KL would only add variance).  Sampling is
counter-based and keyed by trajectory index, making results independent of
execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fixed_point import ImageMismatch, kl_gaussian
from .problem import (GaussianPolicy, GaussianPrior, InvalidArgument,
                      ProblemSpec, validate)
from .psd_linalg import CLAMP_RTOL, pinv, psd_factor

__all__ = [
    "RngHandle",
    "Trajectory",
    "RolloutResult",
    "sample_gaussian",
    "rollout",
]

# The only supported generator. numpy's Philox is the 4x64 counter-based
# variant; stream index i maps to the generator jumped i times.
ALGORITHM = "philox4x64"

# Tolerance for the once-per-stage check that the policy gain cannot push
# conditional means outside the prior's covariance image.
GAIN_IMAGE_TOL = 1e-8


@dataclass(frozen=True)
class RngHandle:
    """Named deterministic random source.

    The same (seed, stream) pair always yields the same draw sequence, on any
    platform, because the algorithm is pinned by name rather than left to the
    library default.  Distinct streams are statistically independent
    (counter-jumped), so per-trajectory streams keyed by trajectory index
    give scheduling-independent parallel sampling.
    """

    seed: int
    algorithm: str = ALGORITHM

    def __post_init__(self):
        if self.algorithm != ALGORITHM:
            raise InvalidArgument(
                f"unsupported rng algorithm {self.algorithm!r}; only {ALGORITHM!r}")
        object.__setattr__(self, "seed", int(self.seed))

    def generator(self, stream: int = 0) -> np.random.Generator:
        """Generator for the given stream index."""
        bits = np.random.Philox(self.seed)
        if stream:
            bits = bits.jumped(stream)
        return np.random.Generator(bits)


@dataclass(frozen=True)
class Trajectory:
    """One sampled closed-loop path with its cost breakdown."""

    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    terminal_cost: float


@dataclass(frozen=True)
class RolloutResult:
    """Batched rollout sample and its cost estimate.

    states has shape (n_traj, T+1, n), inputs (n_traj, T, m), stage_costs
    (n_traj, T).  empirical_j is the sample mean of the per-trajectory total
    costs and std_error its standard error (infinite for a single
    trajectory, where the sample variance is undefined).
    """

    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    terminal_costs: np.ndarray
    total_costs: np.ndarray
    empirical_j: float
    std_error: float
    n_traj: int
    seed: int = field(repr=False, default=0)

    def trajectory(self, i: int) -> Trajectory:
        """Copy out a single trajectory."""
        return Trajectory(states=self.states[i].copy(),
                          inputs=self.inputs[i].copy(),
                          stage_costs=self.stage_costs[i].copy(),
                          terminal_cost=float(self.terminal_costs[i]))


def sample_gaussian(mean, cov, rng: np.random.Generator) -> np.ndarray:
    """One draw from a possibly degenerate Gaussian.

    Draws exactly rank(cov) standard normals and maps them through a
    covariance factor, so the sample lies in mean + Im(cov) by construction
    and a zero covariance returns the mean without consuming randomness.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    fac = psd_factor(cov)
    z = rng.standard_normal(fac.rank)
    return mean + fac.factor @ z


def _stage_kl_pieces(policy: GaussianPolicy, prior: GaussianPrior, k: int,
                     m: int) -> tuple[float, np.ndarray]:
    """Constant and quadratic form of KL(policy_k(.|x) || prior_k) in x.

    The KL splits into a state-independent part plus half the squared
    prior-weighted norm of the conditional-mean offset.  Mutual absolute
    continuity is checked here once; afterwards every visited state stays
    absolutely continuous because the gain's image lies inside the common
    covariance image.
    """
    Sq = prior.Sigma[k]
    d0 = policy.q[k] - prior.mu[k]
    kl0 = kl_gaussian(policy.q[k], policy.Sigma[k], prior.mu[k], Sq)
    # rank cutoff relative to the prior's scale, not an absolute floor
    Mq = pinv(Sq, tol=CLAMP_RTOL * float(np.max(np.abs(Sq), initial=0.0)))
    const = kl0 - 0.5 * float(d0 @ Mq @ d0)
    P = policy.P[k]
    if P.size:
        proj_leak = P - Sq @ (Mq @ P)
        scale = 1.0 + np.max(np.abs(P))
        if np.max(np.abs(proj_leak)) > GAIN_IMAGE_TOL * scale:
            raise ImageMismatch(
                f"stage {k}: policy gain drives conditional means outside "
                f"the prior covariance image")
    return const, Mq


def rollout(spec: ProblemSpec, policy: GaussianPolicy, prior: GaussianPrior,
            rng: RngHandle, n_traj: int) -> RolloutResult:
    """Sample n_traj independent closed-loop trajectories and estimate the cost.

    Per trajectory, the draw order is fixed: initial state, then per stage
    the input noise followed by the process noise, all taken from that
    trajectory's own stream (stream index = trajectory index).  Costs use
    analytic per-state KL terms, so the estimator's only randomness is the
    sampled quadratic terms.
    """
    validate(spec)
    if n_traj < 1:
        raise InvalidArgument(f"n_traj must be at least 1, got {n_traj}")
    T, n, m = spec.T, spec.n, spec.m
    if policy.stages != T or prior.stages != T:
        raise InvalidArgument("policy and prior must cover all stages")
    fac_x0 = psd_factor(spec.Sigma_x_ini)
    fac_pi = [psd_factor(policy.Sigma[k]) for k in range(T)]
    fac_w = [psd_factor(spec.Sigma_w[k]) for k in range(T)]
    kl_pieces = [_stage_kl_pieces(policy, prior, k, m) for k in range(T)]
    draws_per_traj = fac_x0.rank + sum(fac_pi[k].rank + fac_w[k].rank
                                       for k in range(T))
    Z = np.empty((n_traj, draws_per_traj))
    for i in range(n_traj):
        Z[i] = rng.generator(stream=i).standard_normal(draws_per_traj)
    states = np.empty((n_traj, T + 1, n))
    inputs = np.empty((n_traj, T, m))
    stage_costs = np.empty((n_traj, T))
    pos = fac_x0.rank
    states[:, 0, :] = Z[:, :pos] @ fac_x0.factor.T
    for k in range(T):
        r_pi = fac_pi[k].rank
        zu = Z[:, pos:pos + r_pi]
        pos += r_pi
        zw = Z[:, pos:pos + fac_w[k].rank]
        pos += fac_w[k].rank
        x = states[:, k, :]
        mean_u = x @ policy.P[k].T + policy.q[k]
        u = mean_u + zu @ fac_pi[k].factor.T
        inputs[:, k, :] = u
        quad = 0.5 * np.einsum("ij,jk,ik->i", u, spec.R[k], u)
        const, Mq = kl_pieces[k]
        d = mean_u - prior.mu[k]
        kl = const + 0.5 * np.einsum("ij,jk,ik->i", d, Mq, d)
        stage_costs[:, k] = quad + spec.epsilon * kl
        w = zw @ fac_w[k].factor.T
        states[:, k + 1, :] = x @ spec.A[k].T + u @ spec.B[k].T + w
    xT = states[:, T, :]
    terminal = 0.5 * np.einsum("ij,jk,ik->i", xT, spec.F, xT)
    totals = stage_costs.sum(axis=1) + terminal
    empirical = float(totals.mean())
    if n_traj > 1:
        se = float(totals.std(ddof=1) / np.sqrt(n_traj))
    else:
        se = float("inf")
    for arr in (states, inputs, stage_costs, terminal, totals):
        arr.setflags(write=False)
    return RolloutResult(states=states, inputs=inputs, stage_costs=stage_costs,
                         terminal_costs=terminal, total_costs=totals,
                         empirical_j=empirical, std_error=se, n_traj=n_traj,
                         seed=rng.seed)
