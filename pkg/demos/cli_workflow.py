"""
The command-line workflow end to end
====================================

Everything in the library is also reachable without writing Python: a
plain INI file declares the plant, and four subcommands cover solving,
sweeping temperatures, checking the optimality certificates, and Monte
Carlo validation.  Results land as CSV files so they feed straight into
any plotting or analysis stack.

The demo drives the installed module against the bundled scalar config in
a temporary directory and shows the head of each artifact it produces.
"""

import importlib.resources
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIG = str(importlib.resources.files("miocp").joinpath("configs", "s1.cfg"))


def show(path, lines=4):
    text = Path(path).read_text().splitlines()
    print(f"--- {Path(path).name} ({len(text) - 1} data rows) ---")
    for row in text[:lines]:
        print(f"  {row}")
    if len(text) > lines:
        print("  ...")


def cli(*args):
    cmd = [sys.executable, "-m", "miocp", *args]
    print(f"\n$ miocp {' '.join(args)}")
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.stdout:
        print(proc.stdout.rstrip())
    if proc.returncode != 0:
        print(proc.stderr.rstrip())
    return proc.returncode


with tempfile.TemporaryDirectory() as tmp:
    # One full solve: iteration history, final summary, certificate report.
    cli("solve", "--config", CONFIG, "--out", f"{tmp}/solve")
    show(f"{tmp}/solve/summary.csv", lines=2)
    show(f"{tmp}/solve/history.csv")

    # A temperature sweep reuses the config, replacing only epsilon.  Points
    # run in parallel (capped by MIOCP_THREADS) and rows arrive in order.
    cli("sweep", "--config", CONFIG, "--epsilons", "0.25,0.5,0.9,1.5",
        "--out", f"{tmp}/sweep")
    show(f"{tmp}/sweep/summary.csv", lines=6)
    show(f"{tmp}/sweep/thresholds.csv", lines=4)

    # The certificate check prints its table and writes conditions.csv.
    cli("check", "--config", CONFIG, "--out", f"{tmp}/check")

    # Monte Carlo validation of the converged pair against the formula.
    cli("simulate", "--config", CONFIG, "--n-traj", "20000",
        "--out", f"{tmp}/simulate")
    show(f"{tmp}/simulate/simulate.csv", lines=2)

# Exit codes are stable contract: 0 success, 2 config errors, 3 value
# violations caught by validation, 4 numerical failures.
