"""Command-line harness: INI problem configs in, CSV artifacts out.

Subcommands: solve (one run, full history), sweep (summary row per
temperature plus exact thresholds), check (certificate report), simulate
(Monte Carlo cross-check of the converged pair).  All artifacts are plain
CSV with 17-significant-digit floats, so files round-trip bit-exactly and
diff cleanly; configs re-serialize with their numeric lexemes untouched.

Exit codes: 0 success, 2 unreadable or malformed config, 3 a config that
parses but fails validation, 4 numerical failure during computation.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import os
import sys
from dataclasses import dataclass

import numpy as np

from .alternating import (DescentViolation, RunHistory, RunOptions,
                          avg_policy_variance, run)
from .conditions import condition_report, epsilon_thresholds
from .fixed_point import ImageMismatch
from .problem import GaussianPrior, InvalidArgument, ProblemSpec, validate
from .psd_linalg import NotPsd
from .riccati import IllConditioned
from .simulate import RngHandle, rollout

__all__ = [
    "ConfigError",
    "ConfigFile",
    "parse_config",
    "serialize_config",
    "cmd_solve",
    "cmd_sweep",
    "cmd_check",
    "cmd_simulate",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4

_PROBLEM_KEYS = ("T", "epsilon", "n", "m", "A", "B", "R", "F",
                 "sigma_w", "sigma_x_ini")
_INIT_KEYS = ("sigma_rho",)
_RUN_KEYS = ("max_iters", "residual_tol", "record_every", "seed")
_SECTIONS = {"problem": _PROBLEM_KEYS, "init": _INIT_KEYS, "run": _RUN_KEYS}

# Matrix-valued keys and their (rows, cols) in terms of the declared dims,
# plus whether a ';'-separated per-stage list is accepted.
_MATRIX_SHAPE = {
    "A": ("n", "n", True),
    "B": ("n", "m", True),
    "R": ("m", "m", True),
    "F": ("n", "n", False),
    "sigma_w": ("n", "n", True),
    "sigma_x_ini": ("n", "n", False),
    "sigma_rho": ("m", "m", True),
}


class ConfigError(ValueError):
    """The config file is missing, malformed, or has unknown content."""


@dataclass(frozen=True)
class ConfigFile:
    """Parsed config: raw lexemes for round-tripping plus typed views.

    entries preserves every present key in canonical section order with its
    whitespace-normalized value string; numeric lexemes are kept verbatim so
    re-serialization cannot perturb values.  The typed accessors build the
    domain objects and surface their validation errors unchanged.
    """

    entries: tuple[tuple[str, tuple[tuple[str, str], ...]], ...]
    T: int
    epsilon: float
    n: int
    m: int
    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    R: tuple[np.ndarray, ...]
    F: np.ndarray
    sigma_w: tuple[np.ndarray, ...]
    sigma_x_ini: np.ndarray
    init_sigma: tuple[np.ndarray, ...] | None
    max_iters: int
    residual_tol: float
    record_every: int
    seed: int

    def to_spec(self) -> ProblemSpec:
        return ProblemSpec(T=self.T, A=list(self.A), B=list(self.B),
                           R=list(self.R), F=self.F, Sigma_w=list(self.sigma_w),
                           Sigma_x_ini=self.sigma_x_ini, epsilon=self.epsilon)

    def to_prior(self) -> GaussianPrior:
        if self.init_sigma is None:
            sigmas = [np.eye(self.m) for _ in range(self.T)]
        elif len(self.init_sigma) == 1:
            sigmas = [self.init_sigma[0]] * self.T
        else:
            sigmas = list(self.init_sigma)
        return GaussianPrior.zero_mean(sigmas)

    def to_options(self) -> RunOptions:
        return RunOptions(max_iters=self.max_iters,
                          residual_tol=self.residual_tol,
                          record_every=self.record_every)

    def with_epsilon(self, epsilon: float) -> "ConfigFile":
        cfg = dict(self.__dict__)
        cfg["epsilon"] = float(epsilon)
        return ConfigFile(**cfg)


def _normalize_value(raw: str) -> str:
    stages = [" ".join(part.split()) for part in raw.split(";")]
    return " ; ".join(stages)


def _parse_matrix_key(key: str, raw: str, n: int, m: int) -> list[np.ndarray]:
    rows_dim, cols_dim, stagewise = _MATRIX_SHAPE[key]
    rows = n if rows_dim == "n" else m
    cols = n if cols_dim == "n" else m
    chunks = raw.split(";")
    if len(chunks) > 1 and not stagewise:
        raise ConfigError(f"key {key}: per-stage ';' lists are not allowed here")
    mats = []
    for ci, chunk in enumerate(chunks):
        toks = chunk.split()
        if len(toks) != rows * cols:
            raise ConfigError(
                f"key {key}, stage chunk {ci}: expected {rows * cols} entries "
                f"({rows}x{cols} row-major), got {len(toks)}")
        try:
            vals = [float(t) for t in toks]
        except ValueError as exc:
            raise ConfigError(f"key {key}: non-numeric entry ({exc})") from exc
        mats.append(np.array(vals).reshape(rows, cols))
    return mats


def _parse_int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw.strip(), 10)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}") from exc


def _parse_float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from exc


def parse_config(path: str) -> ConfigFile:
    """Parse and structurally check a config file.

    Rejects unknown sections and keys outright; shape errors against the
    declared dims are config errors here, while value-level violations
    (definiteness, positivity) surface later from validate with a different
    exit code.
    """
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=None)
    parser.optionxform = str.lower
    try:
        with open(path, "r", encoding="ascii") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config {path!r}: {exc}") from exc
    canonical = {key.lower(): key for keys in _SECTIONS.values() for key in keys}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = {k.lower() for k in _SECTIONS[section]}
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    if "problem" not in parser:
        raise ConfigError("missing required section [problem]")
    problem = parser["problem"]
    for key in _PROBLEM_KEYS:
        if key.lower() not in problem:
            raise ConfigError(f"missing required key {key} in [problem]")
    T = _parse_int("problem", "T", problem["t"])
    n = _parse_int("problem", "n", problem["n"])
    m = _parse_int("problem", "m", problem["m"])
    if T < 1 or n < 1 or m < 1:
        raise ConfigError(f"T, n, m must be positive (got T={T}, n={n}, m={m})")
    epsilon = _parse_float("problem", "epsilon", problem["epsilon"])
    mats = {}
    for key in ("A", "B", "R", "F", "sigma_w", "sigma_x_ini"):
        parsed = _parse_matrix_key(key, problem[key.lower()], n, m)
        stagewise = _MATRIX_SHAPE[key][2]
        if stagewise and len(parsed) not in (1, T):
            raise ConfigError(f"key {key}: expected 1 or {T} stage chunks, got {len(parsed)}")
        mats[key] = parsed
    init_sigma = None
    if "init" in parser and "sigma_rho" in parser["init"]:
        init_sigma = _parse_matrix_key("sigma_rho", parser["init"]["sigma_rho"], n, m)
        if len(init_sigma) not in (1, T):
            raise ConfigError(
                f"key sigma_rho: expected 1 or {T} stage chunks, got {len(init_sigma)}")
        init_sigma = tuple(init_sigma)
    defaults = RunOptions()
    max_iters, residual_tol = defaults.max_iters, defaults.residual_tol
    record_every, seed = defaults.record_every, 0
    if "run" in parser:
        sec = parser["run"]
        if "max_iters" in sec:
            max_iters = _parse_int("run", "max_iters", sec["max_iters"])
        if "residual_tol" in sec:
            residual_tol = _parse_float("run", "residual_tol", sec["residual_tol"])
        if "record_every" in sec:
            record_every = _parse_int("run", "record_every", sec["record_every"])
        if "seed" in sec:
            seed = _parse_int("run", "seed", sec["seed"])
    entries = []
    for section, keys in _SECTIONS.items():
        if section not in parser:
            continue
        present = []
        for key in keys:
            if key.lower() in parser[section]:
                present.append((canonical[key.lower()],
                                _normalize_value(parser[section][key.lower()])))
        if present:
            entries.append((section, tuple(present)))
    return ConfigFile(
        entries=tuple(entries), T=T, epsilon=epsilon, n=n, m=m,
        A=tuple(mats["A"]), B=tuple(mats["B"]), R=tuple(mats["R"]),
        F=mats["F"][0], sigma_w=tuple(mats["sigma_w"]),
        sigma_x_ini=mats["sigma_x_ini"][0], init_sigma=init_sigma,
        max_iters=max_iters, residual_tol=residual_tol,
        record_every=record_every, seed=seed)


def serialize_config(cfg: ConfigFile) -> str:
    """Canonical text form; numeric lexemes identical to the parsed input."""
    lines = []
    for section, pairs in cfg.entries:
        lines.append(f"[{section}]")
        for key, value in pairs:
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "assumptions_unmet"
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _history_rows(history: RunHistory):
    n_rec, T, m, _ = history.iterates.shape
    for j in range(n_rec):
        it = int(history.iteration_index[j])
        for k in range(T):
            for r in range(m):
                for c in range(m):
                    yield (it, k, r, c, history.iterates[j, k, r, c])


def write_history_csv(path: str, history: RunHistory) -> None:
    _write_csv(path, ["iter", "stage", "entry_row", "entry_col", "sigma_rho_value"],
               _history_rows(history))


def read_history_csv(path: str):
    """Inverse of write_history_csv; returns (iters, stages, rows, cols, values)."""
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["iter", "stage", "entry_row", "entry_col", "sigma_rho_value"]:
            raise ConfigError(f"unexpected history header {header}")
        cols = [(int(a), int(b), int(c), int(d), float(v))
                for a, b, c, d, v in reader]
    return cols


def _summary_header(T: int, m: int) -> list[str]:
    header = ["epsilon", "status", "iterations", "converged", "residual",
              "objective", "avg_policy_variance"]
    header += [f"avg_policy_variance_r{r}_c{c}" for r in range(m) for c in range(m)]
    for k in range(T):
        header += [f"sigma_rho_k{k}_r{r}_c{c}" for r in range(m) for c in range(m)]
    for k in range(T):
        header += [f"sigma_pi_k{k}_r{r}_c{c}" for r in range(m) for c in range(m)]
    return header


def _summary_row(epsilon: float, history: RunHistory) -> list:
    pv = avg_policy_variance(history.final_policy)
    row = [epsilon, "ok", history.iterations_run, history.converged,
           float(history.residuals[-1]), float(history.objectives[-1]),
           pv.trace_mean]
    row += [pv.matrix[r, c] for r in range(pv.matrix.shape[0])
            for c in range(pv.matrix.shape[1])]
    for S in history.final_prior.Sigma:
        row += [S[r, c] for r in range(S.shape[0]) for c in range(S.shape[1])]
    for S in history.final_policy.Sigma:
        row += [S[r, c] for r in range(S.shape[0]) for c in range(S.shape[1])]
    return row


def _conditions_rows(spec: ProblemSpec):
    report = condition_report(spec)
    thresholds = epsilon_thresholds(spec)
    rows = []
    for k in range(spec.T):
        rows.append([
            spec.epsilon, k,
            float(report.stochastic_margins[k]),
            float(report.deterministic_margins[k]),
            report.stochastic_guaranteed,
            report.deterministic_guaranteed,
            report.a_invertible[k],
            report.b_full_column_rank[k],
            float(thresholds.stochastic_per_stage[k]),
            float(thresholds.deterministic_per_stage[k]),
            thresholds.eps_stochastic_max,
            thresholds.eps_deterministic_min,
        ])
    return rows, report, thresholds


_CONDITIONS_HEADER = [
    "epsilon", "stage", "stochastic_margin", "deterministic_margin",
    "stochastic_guaranteed", "deterministic_guaranteed",
    "a_invertible", "b_full_column_rank",
    "eps_stochastic_max_stage", "eps_deterministic_min_stage",
    "eps_stochastic_max", "eps_deterministic_min",
]


def cmd_solve(config_path: str, out_dir: str) -> int:
    """One full run; writes history.csv, summary.csv and conditions.csv."""
    cfg = parse_config(config_path)
    spec = cfg.to_spec()
    validate(spec)
    prior = cfg.to_prior()
    opts = cfg.to_options()
    history = run(spec, prior, opts)
    os.makedirs(out_dir, exist_ok=True)
    write_history_csv(os.path.join(out_dir, "history.csv"), history)
    _write_csv(os.path.join(out_dir, "summary.csv"),
               _summary_header(spec.T, spec.m),
               [_summary_row(spec.epsilon, history)])
    rows, _, _ = _conditions_rows(spec)
    _write_csv(os.path.join(out_dir, "conditions.csv"), _CONDITIONS_HEADER, rows)
    return EXIT_OK


def _sweep_worker(config_path: str, epsilon: float):
    """Solve one sweep point; returns (row, exit code). Runs in a subprocess."""
    try:
        cfg = parse_config(config_path).with_epsilon(epsilon)
        spec = cfg.to_spec()
        validate(spec)
        history = run(spec, cfg.to_prior(), cfg.to_options())
        return _summary_row(epsilon, history), EXIT_OK
    except (ConfigError,) as exc:
        return _failure_row(epsilon, exc), EXIT_CONFIG
    except (InvalidArgument,) as exc:
        return _failure_row(epsilon, exc), EXIT_VALIDATION
    except (NotPsd, IllConditioned, ImageMismatch, DescentViolation,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        return _failure_row(epsilon, exc), EXIT_NUMERICAL


def _failure_row(epsilon: float, exc: Exception) -> list:
    return [epsilon, type(exc).__name__, "", "", "", "", ""]


def _max_workers(n_jobs: int) -> int:
    cap = os.environ.get("MIOCP_THREADS", "")
    try:
        cap_val = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        cap_val = os.cpu_count() or 1
    return max(1, min(n_jobs, cap_val))


def cmd_sweep(config_path: str, epsilons: list[float], out_dir: str) -> int:
    """Per-temperature summary rows (in temperature order) plus thresholds.csv.

    Points run in parallel subject to MIOCP_THREADS; rows are written and
    flushed in temperature order as results arrive, so an interrupted sweep
    leaves a valid prefix.  A failing point contributes a status row instead
    of killing the sweep.
    """
    if not epsilons:
        raise ConfigError("sweep needs at least one epsilon value")
    cfg = parse_config(config_path)
    spec = cfg.to_spec()
    validate(spec)
    eps_sorted = sorted(set(float(e) for e in epsilons))
    os.makedirs(out_dir, exist_ok=True)
    thresholds = epsilon_thresholds(spec)
    thr_rows = [[k, float(thresholds.stochastic_per_stage[k]),
                 float(thresholds.deterministic_per_stage[k]),
                 thresholds.stochastic_degenerate[k],
                 thresholds.deterministic_degenerate[k]]
                for k in range(spec.T)]
    thr_rows.append(["overall", thresholds.eps_stochastic_max,
                     thresholds.eps_deterministic_min,
                     all(thresholds.stochastic_degenerate),
                     all(thresholds.deterministic_degenerate)])
    _write_csv(os.path.join(out_dir, "thresholds.csv"),
               ["stage", "eps_stochastic_max", "eps_deterministic_min",
                "stochastic_degenerate", "deterministic_degenerate"],
               thr_rows)
    workers = _max_workers(len(eps_sorted))
    header = _summary_header(spec.T, spec.m)
    worst = EXIT_OK
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="ascii",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        fh.flush()
        if workers == 1:
            results = (_sweep_worker(config_path, eps) for eps in eps_sorted)
            for row, code in results:
                writer.writerow([_fmt(v) for v in row])
                fh.flush()
                worst = max(worst, code)
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_sweep_worker, config_path, eps)
                           for eps in eps_sorted]
                for fut in futures:
                    row, code = fut.result()
                    writer.writerow([_fmt(v) for v in row])
                    fh.flush()
                    worst = max(worst, code)
    return worst


def cmd_check(config_path: str, out_dir: str) -> int:
    """Print the certificate table and write conditions.csv."""
    cfg = parse_config(config_path)
    spec = cfg.to_spec()
    validate(spec)
    rows, report, thresholds = _conditions_rows(spec)
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "conditions.csv"), _CONDITIONS_HEADER, rows)
    print(f"epsilon = {_fmt(spec.epsilon)}")
    print(f"{'stage':>5}  {'stoch_margin':>13}  {'det_margin':>13}  "
          f"{'eps_stoch_max':>13}  {'eps_det_min':>13}")
    for k in range(spec.T):
        print(f"{k:>5}  {report.stochastic_margins[k]:>13.4e}  "
              f"{report.deterministic_margins[k]:>13.4e}  "
              f"{thresholds.stochastic_per_stage[k]:>13.6g}  "
              f"{thresholds.deterministic_per_stage[k]:>13.6g}")
    print(f"stochastic_guaranteed = {_fmt(report.stochastic_guaranteed)}")
    print(f"deterministic_guaranteed = {_fmt(report.deterministic_guaranteed)}")
    print(f"eps_stochastic_max = {_fmt(thresholds.eps_stochastic_max)}")
    print(f"eps_deterministic_min = {_fmt(thresholds.eps_deterministic_min)}")
    return EXIT_OK


def cmd_simulate(config_path: str, n_traj: int, seed: int | None,
                 out_dir: str) -> int:
    """Solve, then Monte Carlo the converged pair; writes simulate.csv."""
    cfg = parse_config(config_path)
    spec = cfg.to_spec()
    validate(spec)
    history = run(spec, cfg.to_prior(), cfg.to_options())
    use_seed = cfg.seed if seed is None else int(seed)
    result = rollout(spec, history.final_policy, history.final_prior,
                     RngHandle(use_seed), n_traj)
    analytic = float(history.objectives[-1])
    gap = abs(result.empirical_j - analytic)
    gap_in_se = gap / result.std_error if result.std_error > 0 else float("inf")
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "simulate.csv"),
               ["epsilon", "n_traj", "seed", "empirical_j", "std_error",
                "analytic_j", "gap_in_se"],
               [[spec.epsilon, n_traj, use_seed, result.empirical_j,
                 result.std_error, analytic, gap_in_se]])
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="miocp",
        description="Solver toolkit for KL-regularized linear-quadratic "
                    "control with optimized priors.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "run the alternating solver"),
                           ("sweep", "solve across a list of temperatures"),
                           ("check", "evaluate the stochastic/deterministic certificates"),
                           ("simulate", "Monte Carlo check of the converged pair")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to an INI problem config")
        p.add_argument("--out", default=".", help="output directory for CSV artifacts")
        if name == "sweep":
            p.add_argument("--epsilons", required=True,
                           help="comma-separated temperature values")
        if name == "simulate":
            p.add_argument("--n-traj", type=int, default=10_000,
                           help="number of Monte Carlo trajectories")
            p.add_argument("--seed", type=int, default=None,
                           help="override the config's rng seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.out)
        if args.command == "sweep":
            try:
                epsilons = [float(tok) for tok in args.epsilons.split(",") if tok.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --epsilons list: {exc}") from exc
            return cmd_sweep(args.config, epsilons, args.out)
        if args.command == "check":
            return cmd_check(args.config, args.out)
        if args.command == "simulate":
            return cmd_simulate(args.config, args.n_traj, args.seed, args.out)
        raise AssertionError(f"unreachable command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgument as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NotPsd, IllConditioned, ImageMismatch, DescentViolation,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
