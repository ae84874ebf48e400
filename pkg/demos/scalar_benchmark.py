"""
The scalar benchmark and its closed-form solution
=================================================

A one-dimensional instance is small enough to solve by hand: with A = B =
R = F = 1, noise variance 0.1 and initial state variance 2, the optimal
prior variance at the single stage is max(0, 1/2 - epsilon/2).  The demo
runs the alternating solver across a range of temperatures and checks the
limits against that formula, then confirms the same minimizer by brute
force on a dense grid of candidate variances.
"""

import numpy as np

from miocp import (GaussianPrior, ProblemSpec, RunOptions, objective_reduced,
                   run)

spec_at = lambda eps: ProblemSpec.constant(
    T=1, A=np.eye(1), B=np.eye(1), R=np.eye(1), F=np.eye(1),
    Sigma_w=0.1 * np.eye(1), Sigma_x_ini=2.0 * np.eye(1), epsilon=eps)

start = GaussianPrior.zero_mean([np.eye(1)])
options = RunOptions(max_iters=5_000_000, residual_tol=1e-14,
                     record_every=1_000_000)

# Sweep the temperature through the closed-form kink at epsilon = 1.  Below
# it the optimal prior keeps a positive variance; above it the variance
# collapses to zero and the optimal policy becomes deterministic.
print(f"{'epsilon':>8}  {'solver limit':>13}  {'closed form':>12}  "
      f"{'grid argmin':>12}  {'iterations':>10}")
grid = np.arange(0.0, 2.0 + 1e-4, 1e-4)
for eps in (0.25, 0.5, 0.75, 0.9, 1.1, 1.5, 2.0):
    spec = spec_at(eps)
    history = run(spec, start, options)
    limit = float(history.final_prior.Sigma[0][0, 0])
    closed = max(0.0, 0.5 - eps / 2)

    # Independent confirmation: evaluate the reduced objective on a dense
    # grid of prior variances and take the argmin.
    values = [objective_reduced(spec, GaussianPrior.zero_mean([[[s]]]))
              for s in grid]
    argmin = float(grid[int(np.argmin(values))])

    print(f"{eps:>8.2f}  {limit:>13.8f}  {closed:>12.8f}  "
          f"{argmin:>12.4f}  {history.iterations_run:>10d}")

# The temperatures above the kink converge sublinearly: the iterate decays
# like 1/t toward zero, so those rows stop on budget exhaustion and the
# printed microvariances are the expected 1/t transient, not a floor.
