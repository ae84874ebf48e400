"""
Temperature sweep on the two-state tracking plant
=================================================

The bundled two-state plant (one input channel, five stages, terminal
weight 10 I) shows the full qualitative range of the regularizer.  At low
temperature the KL term barely binds and every stage keeps a healthy prior
variance; at high temperature input randomness becomes expensive and the
variances collapse stage by stage.  The demo reruns the shipped experiment
at four temperatures and prints the per-stage prior variances next to the
stage-averaged policy variance.

Each point runs the full million-iteration budget from the bundled config;
the compiled update loop gets through all four in a few seconds.
"""

import importlib.resources

from miocp import avg_policy_variance, run
from miocp.cli import parse_config

CONFIG = importlib.resources.files("miocp").joinpath("configs", "sec6.cfg")

cfg = parse_config(str(CONFIG))
print(f"plant: n={cfg.n} states, m={cfg.m} input, T={cfg.T} stages, "
      f"{cfg.max_iters} iterations per temperature\n")

header = f"{'epsilon':>8}  {'avg policy var':>14}  " + "  ".join(
    f"{'rho var k=' + str(k):>12}" for k in range(cfg.T))
print(header)
for eps in (1e-3, 1e-1, 10.0, 1e3):
    point = cfg.with_epsilon(eps)
    history = run(point.to_spec(), point.to_prior(), point.to_options())
    pv = avg_policy_variance(history.final_policy).trace_mean
    stage_vars = "  ".join(f"{float(S[0, 0]):>12.3e}"
                           for S in history.final_prior.Sigma)
    print(f"{eps:>8.0e}  {pv:>14.4e}  {stage_vars}")

# Reading the rows top to bottom: the average policy variance tracks the
# temperature until the collapse sets in, after which it decays toward the
# deterministic limit.  The per-stage columns show the collapse is not
# uniform; later stages (closer to the terminal weight) give up their
# randomness first while the high-temperature transient is still draining.
