"""Mutual-information optimal control for discrete-time linear systems.

The toolkit solves the KL-regularized linear-quadratic problem in which the
reference policy (the prior) is itself a decision variable.  The core pieces:

* problem: immutable problem data and validation.
* riccati: the prior-dependent backward recursion and its two-sided bounds.
* fixed_point: the optimal policy for a fixed prior, state moments, the
  matching prior update, the reduced objective and its gradient, and
  Gaussian KL divergence (degenerate covariances included).
* alternating: the coordinate-descent loop between policy and prior.
* conditions: certificates for when the optimal policy must be randomized
  and when it must be deterministic, with exact temperature thresholds.
* simulate: reproducible Monte Carlo rollouts of a policy/prior pair.
* cli: the `miocp` command (solve, sweep, check, simulate).
"""

from .alternating import (DescentViolation, PolicyVariance, RunHistory,
                          RunOptions, avg_policy_variance,
                          fixed_point_residual, run)
from .conditions import (ConditionReport, EpsilonThresholds, condition_report,
                         deterministic_condition, epsilon_thresholds,
                         sigma_x_zero, stochastic_condition)
from .fixed_point import (GradientSequence, ImageMismatch, NonInvertibleA,
                          ResidualSequence, gradient_reduced, kl_gaussian,
                          objective_reduced, policy_from_prior,
                          prior_from_policy, propagate_moments)
from .problem import (DimensionMismatch, GaussianPolicy, GaussianPrior,
                      InvalidArgument, NonPositiveDefinite,
                      NonPositiveEpsilon, ProblemSpec, StateMoments,
                      default_prior, validate)
from .psd_linalg import (NotPsd, NotSymmetric, PsdFactor, SymMatrix,
                         check_symmetric, is_pd, is_psd, min_eig, pinv,
                         psd_factor, psd_sqrt, sym_eig)
from .riccati import (IllConditioned, RiccatiBounds, RiccatiSolution,
                      riccati_bounds, solve_riccati)
from .simulate import RngHandle, RolloutResult, Trajectory, rollout, sample_gaussian

__all__ = [
    "ConditionReport",
    "DescentViolation",
    "DimensionMismatch",
    "EpsilonThresholds",
    "GaussianPolicy",
    "GaussianPrior",
    "GradientSequence",
    "IllConditioned",
    "ImageMismatch",
    "InvalidArgument",
    "NonInvertibleA",
    "NonPositiveDefinite",
    "NonPositiveEpsilon",
    "NotPsd",
    "NotSymmetric",
    "PolicyVariance",
    "ProblemSpec",
    "PsdFactor",
    "ResidualSequence",
    "RiccatiBounds",
    "RiccatiSolution",
    "RngHandle",
    "RolloutResult",
    "RunHistory",
    "RunOptions",
    "StateMoments",
    "SymMatrix",
    "Trajectory",
    "avg_policy_variance",
    "check_symmetric",
    "condition_report",
    "default_prior",
    "deterministic_condition",
    "epsilon_thresholds",
    "fixed_point_residual",
    "gradient_reduced",
    "is_pd",
    "is_psd",
    "kl_gaussian",
    "min_eig",
    "objective_reduced",
    "pinv",
    "policy_from_prior",
    "prior_from_policy",
    "propagate_moments",
    "psd_factor",
    "psd_sqrt",
    "riccati_bounds",
    "rollout",
    "run",
    "sample_gaussian",
    "sigma_x_zero",
    "solve_riccati",
    "stochastic_condition",
    "sym_eig",
    "validate",
]
