"""
Certificates for stochastic and deterministic optimal policies
==============================================================

Whether the optimal policy keeps randomness is decided by two families of
stage-wise test matrices, each affine in the temperature.  When every
stochastic test matrix is positive definite the optimal policy provably
randomizes at every stage; when every deterministic test matrix is
negative definite the optimal policy is provably a pure feedback law.
Between the two thresholds neither certificate applies and the solver's
answer is the only guide.

The demo evaluates both certificates on the two-state tracking plant at
the four sweep temperatures and then prints the exact temperature
brackets, computed from generalized eigenvalues rather than by search.
"""

import importlib.resources

from miocp import condition_report, epsilon_thresholds
from miocp.cli import parse_config

CONFIG = importlib.resources.files("miocp").joinpath("configs", "sec6.cfg")
spec = parse_config(str(CONFIG)).to_spec()

print(f"{'epsilon':>8}  {'stochastic margin':>18}  {'deterministic margin':>21}"
      f"  {'verdict':>13}")
for eps in (1e-3, 1e-1, 10.0, 1e3):
    report = condition_report(spec.with_epsilon(eps))
    if report.stochastic_guaranteed:
        verdict = "stochastic"
    elif report.deterministic_guaranteed:
        verdict = "deterministic"
    else:
        verdict = "uncertified"
    print(f"{eps:>8.0e}  {min(report.stochastic_margins):>18.4e}  "
          f"{max(report.deterministic_margins):>21.4e}  {verdict:>13}")

# The margins are the worst stage eigenvalues of each test family: the
# stochastic certificate needs its margin positive, the deterministic one
# needs its margin negative.  The exact crossover temperatures per stage:
thresholds = epsilon_thresholds(spec)
print(f"\n{'stage':>5}  {'stochastic up to':>17}  {'deterministic from':>18}")
for k in range(spec.T):
    print(f"{k:>5}  {thresholds.stochastic_per_stage[k]:>17.6g}  "
          f"{thresholds.deterministic_per_stage[k]:>18.6g}")
print(f"\nstochastic guaranteed for epsilon < "
      f"{thresholds.eps_stochastic_max:.6g}")
print(f"deterministic guaranteed for epsilon > "
      f"{thresholds.eps_deterministic_min:.6g}")

# Both sweep temperatures in the middle of the range (0.1 and 10) fall in
# the uncertified gap, consistent with the verdict column above.
