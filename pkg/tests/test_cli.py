import os
import subprocess
import sys

import numpy as np
import pytest

from volmat import (
    msrvm,
    read_matrix_csv,
    scale_weights,
    validate_panel,
    write_panel_csv,
)
from volmat.cli import main


@pytest.fixture
def noisy_panel_csv(tmp_path):
    rng = np.random.default_rng(8)
    panel = validate_panel(np.cumsum(rng.normal(size=(3, 65)), axis=1) * 0.1)
    path = tmp_path / "panel.csv"
    write_panel_csv(panel, str(path))
    return path, panel


def test_estimate_msrvm_roundtrip(noisy_panel_csv, tmp_path, capsys):
    path, panel = noisy_panel_csv
    out = tmp_path / "m.csv"
    code = main(["estimate", "--input", str(path), "--method", "msrvm",
                 "--output", str(out)])
    assert code == 0
    expected = msrvm(panel, scale_weights(panel.n))
    assert read_matrix_csv(str(out)) == expected
    err = capsys.readouterr().err
    assert "n=64" in err and "p=3" in err and "N=8" in err


def test_estimate_thr_with_zero_varpi_matches_plain(noisy_panel_csv, tmp_path):
    path, _ = noisy_panel_csv
    plain = tmp_path / "plain.csv"
    thr = tmp_path / "thr.csv"
    assert main(["estimate", "--input", str(path), "--method", "msrvm",
                 "--output", str(plain)]) == 0
    assert main(["estimate", "--input", str(path), "--method", "thr-msrvm",
                 "--varpi", "0", "--output", str(thr)]) == 0
    assert plain.read_bytes() == thr.read_bytes()


def test_estimate_constant_prices_zero_matrix(tmp_path):
    panel = validate_panel(np.full((2, 33), 4.2))
    path = tmp_path / "const.csv"
    write_panel_csv(panel, str(path))
    out = tmp_path / "out.csv"
    assert main(["estimate", "--input", str(path), "--method", "msrvm",
                 "--output", str(out)]) == 0
    assert np.array_equal(read_matrix_csv(str(out)).entries, np.zeros((2, 2)))


def test_estimate_missing_input_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["estimate", "--method", "msrvm", "--output", "x.csv"])
    assert info.value.code == 2
    assert "input" in capsys.readouterr().err


def test_estimate_arvm_requires_K(noisy_panel_csv, tmp_path, capsys):
    path, panel = noisy_panel_csv
    out = tmp_path / "m.csv"
    code = main(["estimate", "--input", str(path), "--method", "arvm",
                 "--output", str(out)])
    assert code == 2
    assert "--K" in capsys.readouterr().err
    assert main(["estimate", "--input", str(path), "--method", "arvm",
                 "--K", "4", "--output", str(out)]) == 0


def test_estimate_threshold_needs_exactly_one_of_varpi_hbar(noisy_panel_csv, tmp_path):
    path, _ = noisy_panel_csv
    out = tmp_path / "m.csv"
    base = ["estimate", "--input", str(path), "--method", "thr-msrvm",
            "--output", str(out)]
    assert main(base) == 2
    assert main(base + ["--varpi", "0.1", "--hbar", "0.5"]) == 2
    assert main(base + ["--hbar", "0.5"]) == 0


def test_estimate_rejects_threshold_flags_on_plain_methods(noisy_panel_csv, tmp_path):
    path, _ = noisy_panel_csv
    out = tmp_path / "m.csv"
    assert main(["estimate", "--input", str(path), "--method", "msrvm",
                 "--varpi", "0.1", "--output", str(out)]) == 2


def test_estimate_unreadable_csv_exits_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,a1\n0,1\n0.5,oops\n1,2\n")
    assert main(["estimate", "--input", str(bad), "--method", "msrvm",
                 "--output", str(tmp_path / "m.csv")]) == 2


def test_benchmark_requires_seed(tmp_path):
    assert main(["benchmark", "--n", "64", "--p", "2", "--reps", "1",
                 "--out", str(tmp_path / "r.csv")]) == 2


def test_benchmark_single_rep_deterministic(tmp_path):
    args = ["benchmark", "--n", "64", "--p", "3", "--reps", "1", "--seed", "7",
            "--theta", "0,0.5", "--estimators", "msrvm,thr-msrvm",
            "--no-figure"]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "estimator,theta,mre_mean,mre_se,reps,seed"
    assert len(lines) == 1 + 2 * 2
    assert (tmp_path / "a_long.csv").exists()


def test_benchmark_theta_zero_emits_finite_row(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["benchmark", "--n", "64", "--p", "2", "--reps", "1",
                 "--seed", "3", "--theta", "0", "--estimators", "msrvm",
                 "--no-figure", "--out", str(out)]) == 0
    row = out.read_text().splitlines()[1].split(",")
    assert row[0] == "msrvm" and np.isfinite(float(row[2]))


def test_benchmark_writes_figure(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["benchmark", "--n", "64", "--p", "2", "--reps", "1",
                 "--seed", "3", "--theta", "0.5", "--estimators", "msrvm",
                 "--out", str(out)]) == 0
    figure = tmp_path / "r.png"
    assert figure.exists() and figure.stat().st_size > 0


def test_simulate_dumps_instance(tmp_path):
    prefix = str(tmp_path / "inst_")
    assert main(["simulate", "--n", "32", "--p", "2", "--seed", "5",
                 "--theta", "0.3", "--out-prefix", prefix]) == 0
    latent = tmp_path / "inst_latent.csv"
    observed = tmp_path / "inst_observed.csv"
    truth = tmp_path / "inst_truth.csv"
    assert latent.exists() and observed.exists() and truth.exists()
    assert read_matrix_csv(str(truth)).p == 2


def test_transform_zero_panel(tmp_path):
    panel = validate_panel(np.zeros((2, 9)))
    src = tmp_path / "zero.csv"
    write_panel_csv(panel, str(src))
    out = tmp_path / "u.csv"
    assert main(["transform", "--input", str(src), "--kappa", "1.0",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "l,a_l,U_1,U_2"
    assert len(lines) == 1 + 8
    for line in lines[1:]:
        cells = line.split(",")
        assert float(cells[2]) == 0.0 and float(cells[3]) == 0.0


def test_transform_n2_factors(tmp_path):
    panel = validate_panel(np.array([[0.0, 1.0, -1.0]]))
    src = tmp_path / "tiny.csv"
    write_panel_csv(panel, str(src))
    out = tmp_path / "u.csv"
    assert main(["transform", "--input", str(src), "--kappa", "2.0",
                 "--out", str(out)]) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    # factors 1 + kappa^2 n phi with phi = (1, 3)
    assert float(rows[0][1]) == pytest.approx(1.0 + 4.0 * 2 * 1.0, rel=1e-12)
    assert float(rows[1][1]) == pytest.approx(1.0 + 4.0 * 2 * 3.0, rel=1e-12)


def test_tune_singleton_grid_echoes_pair(noisy_panel_csv, tmp_path, capsys):
    path, _ = noisy_panel_csv
    out = tmp_path / "scores.csv"
    code = main(["tune", "--input", str(path), "--L", "2",
                 "--N-grid", "3", "--varpi-grid", "0.25", "--out", str(out)])
    assert code == 0
    assert "N = 3" in capsys.readouterr().out
    assert out.read_text().splitlines()[0] == "N,varpi,score"


def test_config_file_provides_flags_and_flags_override(noisy_panel_csv, tmp_path):
    path, _ = noisy_panel_csv
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    config = tmp_path / "run.cfg"
    config.write_text(
        f"input = {path}\n"
        f"method = msrvm\n"
        f"output = {out_a}\n"
        "# comment line\n"
    )
    assert main(["estimate", "--config", str(config)]) == 0
    assert out_a.exists()
    # a flag overrides the file value
    assert main(["estimate", "--config", str(config), "--output", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_config_file_rejects_unknown_keys(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text("no-such-flag = 1\n")
    assert main(["estimate", "--config", str(config)]) == 2
    assert "no-such-flag" in capsys.readouterr().err


def test_resolved_config_logged_and_refeedable(noisy_panel_csv, tmp_path, capsys):
    path, _ = noisy_panel_csv
    out_a = tmp_path / "a.csv"
    assert main(["estimate", "--input", str(path), "--method", "msrvm",
                 "--output", str(out_a)]) == 0
    err = capsys.readouterr().err
    resolved = [
        line.strip() for line in err.splitlines() if " = " in line
    ]
    config = tmp_path / "resolved.cfg"
    config.write_text("\n".join(resolved).replace(str(out_a), str(tmp_path / "b.csv")))
    assert main(["estimate", "--config", str(config)]) == 0
    assert (tmp_path / "b.csv").read_bytes() == out_a.read_bytes()


def test_cli_determinism_across_thread_env(tmp_path):
    # identical reports regardless of the VOLMAT_THREADS hint
    outputs = []
    for threads in ("1", "2"):
        out = tmp_path / f"r{threads}.csv"
        env = dict(os.environ, VOLMAT_THREADS=threads)
        proc = subprocess.run(
            [sys.executable, "-m", "volmat.cli", "benchmark",
             "--n", "64", "--p", "3", "--reps", "4", "--seed", "21",
             "--theta", "0,0.4", "--estimators", "msrvm,arvm",
             "--no-figure", "--out", str(out)],
            env=env, capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
