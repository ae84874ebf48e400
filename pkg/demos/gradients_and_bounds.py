"""
Analysis toolbox: bounds, gradients, and degenerate divergences
===============================================================

Three smaller capabilities carry the heavier machinery.  First, the
backward value recursion is sandwiched between two prior-independent
brackets (the open-loop weight above, the unregularized feedback weight
below), which also bracket the policy covariance scale.  Second, the
reduced objective has a closed-form matrix gradient whose directional
derivatives can be checked against finite differences.  Third, the
divergence between rank-deficient Gaussians is evaluated exactly on the
common image subspace, with a dedicated error for pairs at infinite
divergence.
"""

import numpy as np

from miocp import (GaussianPrior, ImageMismatch, gradient_reduced, kl_gaussian,
                   min_eig, objective_reduced, riccati_bounds, solve_riccati)
from miocp import ProblemSpec

rng = np.random.default_rng(5)


def random_pd(dim, scale=1.0):
    G = rng.standard_normal((dim, dim))
    return scale * (G @ G.T) + 0.1 * np.eye(dim)


spec = ProblemSpec.constant(
    T=3, A=np.array([[0.8, 0.3], [-0.2, 1.1]]), B=np.array([[1.0], [0.4]]),
    R=np.eye(1), F=random_pd(2), Sigma_w=0.05 * np.eye(2),
    Sigma_x_ini=random_pd(2), epsilon=0.7)
prior = GaussianPrior.zero_mean([random_pd(1, 0.5) for _ in range(spec.T)])

# The sandwich: every stage weight sits between the brackets, so any
# prior's cost-to-go is certified before the solver runs.
sol = solve_riccati(spec, prior)
bounds = riccati_bounds(spec)
print("value weight sandwich (worst slack eigenvalue per stage):")
for k in range(spec.T + 1):
    upper = min_eig(bounds.Pi_hat[k] - sol.Pi[k])
    lower = min_eig(sol.Pi[k] - bounds.Pi_check[k])
    print(f"  stage {k}: above lower bracket {lower:+.3e}, "
          f"below upper bracket {upper:+.3e}")

# The gradient: perturb the prior along a random direction and compare the
# analytic directional derivative with a central difference.
g = gradient_reduced(spec, prior)
direction = [random_pd(1, 0.3) - S for S in prior.Sigma]
analytic = sum(float(np.trace(g.Jk_prime[k] @ direction[k]))
               for k in range(spec.T))
h = 1e-6
plus = GaussianPrior.zero_mean(
    [S + h * D for S, D in zip(prior.Sigma, direction)])
minus = GaussianPrior.zero_mean(
    [S - h * D for S, D in zip(prior.Sigma, direction)])
numeric = (objective_reduced(spec, plus) - objective_reduced(spec, minus)) / (2 * h)
print(f"\ndirectional derivative: analytic {analytic:+.10f}, "
      f"central difference {numeric:+.10f}")

# Degenerate divergences: a rank-1 pair sharing an image line reduces to a
# one-dimensional divergence; a pair with different images is infinite and
# raises instead of returning a number.
line = np.array([[1.0, 1.0], [1.0, 1.0]])
value = kl_gaussian(np.zeros(2), line, np.zeros(2), 2 * line)
print(f"\nrank-1 pair on a shared image line: {value:.6f} "
      f"(one-dimensional closed form: {0.5 * (np.log(2) - 0.5):.6f})")
try:
    kl_gaussian(np.zeros(2), np.diag([1.0, 0.0]), np.zeros(2), np.eye(2))
except ImageMismatch as exc:
    print(f"mismatched images raise ImageMismatch: {exc}")
