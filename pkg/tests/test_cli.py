import csv
import importlib.resources
import subprocess
import sys

import numpy as np
import pytest

from miocp.cli import (ConfigError, main, parse_config, read_history_csv,
                       serialize_config)

S1_CFG = str(importlib.resources.files("miocp").joinpath("configs", "s1.cfg"))
SEC6_CFG = str(importlib.resources.files("miocp").joinpath("configs", "sec6.cfg"))

FAST_SCALAR = """\
[problem]
T = 1
epsilon = 0.5
n = 1
m = 1
A = 1
B = 1
R = 1
F = 1
sigma_w = 0.1
sigma_x_ini = 2

[run]
max_iters = 2000
residual_tol = 1e-13
record_every = 50
seed = 11
"""


def write_cfg(tmp_path, text, name="case.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="ascii")
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def column(header, rows, name):
    idx = header.index(name)
    return [row[idx] for row in rows]


def test_bundled_configs_parse():
    s1 = parse_config(S1_CFG)
    assert (s1.T, s1.n, s1.m) == (1, 1, 1)
    assert s1.epsilon == 0.5
    assert np.array_equal(s1.A[0], [[1.0]])
    assert np.array_equal(s1.sigma_x_ini, [[2.0]])
    sec6 = parse_config(SEC6_CFG)
    assert (sec6.T, sec6.n, sec6.m) == (5, 2, 1)
    assert np.array_equal(sec6.A[0], [[0.9, 0.2], [0.1, 1.1]])
    assert np.array_equal(sec6.B[0], [[0.0], [0.2]])
    assert np.array_equal(sec6.F, [[10.0, 0.0], [0.0, 10.0]])


@pytest.mark.parametrize("path", [S1_CFG, SEC6_CFG])
def test_round_trip_is_stable(tmp_path, path):
    first = serialize_config(parse_config(path))
    again = serialize_config(parse_config(write_cfg(tmp_path, first)))
    assert again == first


def test_round_trip_preserves_numeric_lexemes(tmp_path):
    text = FAST_SCALAR.replace("epsilon = 0.5", "epsilon = 5.00e-1") \
                      .replace("sigma_w = 0.1", "sigma_w = 1E-1")
    out = serialize_config(parse_config(write_cfg(tmp_path, text)))
    assert "epsilon = 5.00e-1" in out
    assert "sigma_w = 1E-1" in out
    reparsed = parse_config(write_cfg(tmp_path, out, "again.cfg"))
    assert reparsed.epsilon == 0.5
    assert np.array_equal(reparsed.sigma_w[0], [[0.1]])


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(write_cfg(tmp_path, FAST_SCALAR + "gain = 3\n"))


def test_unknown_section_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(write_cfg(tmp_path, FAST_SCALAR + "\n[extras]\nfoo = 1\n"))


def test_missing_required_key_rejected(tmp_path):
    text = FAST_SCALAR.replace("sigma_w = 0.1\n", "")
    with pytest.raises(ConfigError, match="sigma_w"):
        parse_config(write_cfg(tmp_path, text))


def test_bad_token_rejected(tmp_path):
    text = FAST_SCALAR.replace("A = 1", "A = fast")
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path, text))


def test_terminal_weight_rejects_stage_chunks(tmp_path):
    text = FAST_SCALAR.replace("F = 1", "F = 1 ; 2")
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path, text))


def test_wrong_matrix_size_rejected(tmp_path):
    text = FAST_SCALAR.replace("A = 1", "A = 1 2")
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path, text))


def test_default_prior_is_identity(tmp_path):
    cfg = parse_config(write_cfg(tmp_path, FAST_SCALAR))
    prior = cfg.to_prior()
    assert len(prior.Sigma) == 1
    assert np.array_equal(prior.Sigma[0], np.eye(1))


def test_single_init_chunk_broadcasts(tmp_path):
    text = FAST_SCALAR.replace("T = 1", "T = 3") + "\n[init]\nsigma_rho = 4\n"
    prior = parse_config(write_cfg(tmp_path, text)).to_prior()
    assert len(prior.Sigma) == 3
    for S in prior.Sigma:
        assert np.array_equal(S, [[4.0]])


def test_missing_file_exits_config(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path)]) == 2


def test_value_violation_exits_validation(tmp_path):
    path = write_cfg(tmp_path, FAST_SCALAR.replace("R = 1", "R = 0"))
    assert main(["solve", "--config", path, "--out", str(tmp_path)]) == 3


def test_overflow_exits_numerical(tmp_path):
    text = FAST_SCALAR.replace("T = 1", "T = 3") \
                      .replace("A = 1", "A = 1e200") \
                      .replace("F = 1", "F = 1e200") \
                      .replace("max_iters = 2000", "max_iters = 10")
    path = write_cfg(tmp_path, text)
    assert main(["solve", "--config", path, "--out", str(tmp_path)]) == 4


def test_solve_writes_summary_history_conditions(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--config", S1_CFG, "--out", str(out)]) == 0
    header, rows = read_csv(out / "summary.csv")
    assert header[:7] == ["epsilon", "status", "iterations", "converged",
                          "residual", "objective", "avg_policy_variance"]
    assert header[7:] == ["avg_policy_variance_r0_c0", "sigma_rho_k0_r0_c0",
                          "sigma_pi_k0_r0_c0"]
    assert len(rows) == 1
    row = dict(zip(header, rows[0]))
    assert row["status"] == "ok"
    assert float(row["sigma_rho_k0_r0_c0"]) == pytest.approx(0.25, abs=1e-8)
    assert float(row["objective"]) == pytest.approx(0.97329, abs=1e-5)
    cond_header, cond_rows = read_csv(out / "conditions.csv")
    assert cond_header == [
        "epsilon", "stage", "stochastic_margin", "deterministic_margin",
        "stochastic_guaranteed", "deterministic_guaranteed",
        "a_invertible", "b_full_column_rank",
        "eps_stochastic_max_stage", "eps_deterministic_min_stage",
        "eps_stochastic_max", "eps_deterministic_min"]
    assert len(cond_rows) == 1


def test_history_round_trips_exactly(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--config", S1_CFG, "--out", str(out)]) == 0
    rows = read_history_csv(str(out / "history.csv"))
    iters = sorted({r[0] for r in rows})
    assert iters[0] == 0
    assert all(b > a for a, b in zip(iters, iters[1:]))
    header, srows = read_csv(out / "summary.csv")
    assert iters[-1] == int(column(header, srows, "iterations")[0])
    # .17g formatting must reproduce the recorded floats bit for bit
    cfg = parse_config(S1_CFG)
    from miocp import run
    history = run(cfg.to_spec(), cfg.to_prior(), cfg.to_options())
    expected = {(int(history.iteration_index[j]), k, r, c):
                history.iterates[j, k, r, c]
                for j in range(history.iterates.shape[0])
                for k in range(history.iterates.shape[1])
                for r in range(history.iterates.shape[2])
                for c in range(history.iterates.shape[3])}
    assert len(rows) == len(expected)
    for it, stage, r, c, value in rows:
        assert expected[(it, stage, r, c)] == value


def test_sweep_grid_matches_closed_form(tmp_path, monkeypatch):
    monkeypatch.setenv("MIOCP_THREADS", "1")
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", S1_CFG,
                 "--epsilons", "2,0.9,0.25,1.1,0.5", "--out", str(out)])
    assert code == 0
    header, rows = read_csv(out / "summary.csv")
    eps = [float(v) for v in column(header, rows, "epsilon")]
    assert eps == [0.25, 0.5, 0.9, 1.1, 2.0]
    sigma = [float(v) for v in column(header, rows, "sigma_rho_k0_r0_c0")]
    limits = [max(0.0, 0.5 - e / 2) for e in eps]
    # the two temperatures above 1 decay sublinearly, hence the loose wall
    assert sigma == pytest.approx(limits, abs=1e-4)
    thr_header, thr_rows = read_csv(out / "thresholds.csv")
    assert thr_header == ["stage", "eps_stochastic_max", "eps_deterministic_min",
                          "stochastic_degenerate", "deterministic_degenerate"]
    assert [r[0] for r in thr_rows] == ["0", "overall"]
    overall = thr_rows[-1]
    assert float(overall[1]) == pytest.approx(1.0, abs=1e-9)
    assert float(overall[2]) == pytest.approx(1.0, abs=1e-9)
    assert overall[3] == "false" and overall[4] == "false"


def test_sweep_parallel_output_matches_serial(tmp_path, monkeypatch):
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    monkeypatch.setenv("MIOCP_THREADS", "1")
    assert main(["sweep", "--config", S1_CFG, "--epsilons", "0.5,0.25",
                 "--out", str(serial)]) == 0
    monkeypatch.setenv("MIOCP_THREADS", "2")
    assert main(["sweep", "--config", S1_CFG, "--epsilons", "0.25,0.5",
                 "--out", str(parallel)]) == 0
    assert (serial / "summary.csv").read_bytes() == \
        (parallel / "summary.csv").read_bytes()


def test_sweep_empty_list_exits_config(tmp_path):
    assert main(["sweep", "--config", S1_CFG, "--epsilons", ",",
                 "--out", str(tmp_path)]) == 2


def test_sweep_bad_point_yields_status_row(tmp_path, monkeypatch):
    monkeypatch.setenv("MIOCP_THREADS", "1")
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", S1_CFG, "--epsilons=-1,0.5",
                 "--out", str(out)])
    assert code == 3
    header, rows = read_csv(out / "summary.csv")
    status = column(header, rows, "status")
    assert status[0] == "NonPositiveEpsilon"
    assert status[1] == "ok"


def test_check_prints_certificate_table(tmp_path, capsys):
    assert main(["check", "--config", SEC6_CFG, "--out", str(tmp_path)]) == 0
    captured = capsys.readouterr().out
    assert "stoch_margin" in captured
    assert "eps_stochastic_max" in captured
    assert "deterministic_guaranteed = false" in captured
    _, cond_rows = read_csv(tmp_path / "conditions.csv")
    assert [r[1] for r in cond_rows] == ["0", "1", "2", "3", "4"]
    thresholds = {float(r[10]) for r in cond_rows}
    assert len(thresholds) == 1


def test_simulate_deterministic_output(tmp_path):
    fast = write_cfg(tmp_path, FAST_SCALAR)
    out_a, out_b, out_c = (tmp_path / d for d in ("a", "b", "c"))
    args = ["simulate", "--config", fast, "--n-traj", "400"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert (out_a / "simulate.csv").read_bytes() == \
        (out_b / "simulate.csv").read_bytes()
    assert main(args + ["--out", str(out_c), "--seed", "99"]) == 0
    assert (out_a / "simulate.csv").read_bytes() != \
        (out_c / "simulate.csv").read_bytes()
    header, rows = read_csv(out_a / "simulate.csv")
    assert header == ["epsilon", "n_traj", "seed", "empirical_j", "std_error",
                      "analytic_j", "gap_in_se"]
    row = dict(zip(header, rows[0]))
    assert row["seed"] == "11"
    assert float(row["gap_in_se"]) < 5.0


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "miocp", "check", "--config", S1_CFG,
         "--out", str(tmp_path)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "eps_deterministic_min" in proc.stdout
