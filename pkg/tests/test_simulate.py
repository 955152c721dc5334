import math
from dataclasses import dataclass

import numpy as np
import pytest

from volmat import (
    SimConfig,
    VolMatrix,
    default_estimators,
    run_benchmark,
    simulate_instance,
    write_benchmark_csv,
    write_benchmark_long_csv,
)
from volmat.simulate import _ou_log_paths, canonical_config_text, config_digest


@dataclass(frozen=True)
class TruthOracle:
    """Test-only estimator that returns the instance's true matrix."""

    name: str = "oracle"

    def describe(self):
        return "oracle"

    def evaluate(self, instance):
        return {self.name: instance.truth}


@dataclass(frozen=True)
class ZeroEstimator:
    name: str = "zero"

    def describe(self):
        return "zero"

    def evaluate(self, instance):
        return {self.name: VolMatrix(np.zeros((instance.truth.p,) * 2))}


def small_cfg(**overrides):
    base = dict(n=64, p=4, theta_grid=(0.0, 0.5), reps=3, seed=11)
    base.update(overrides)
    return SimConfig(**base)


def test_zero_noise_observed_equals_latent():
    inst = simulate_instance(small_cfg(), 0, theta=0.0)
    assert inst.observed == inst.latent


def test_instances_are_bit_identical():
    cfg = small_cfg()
    a = simulate_instance(cfg, 2, theta=0.5)
    b = simulate_instance(cfg, 2, theta=0.5)
    assert a.observed == b.observed
    assert a.latent == b.latent
    assert a.truth == b.truth
    assert a.rho == b.rho


def test_different_reps_differ():
    cfg = small_cfg()
    a = simulate_instance(cfg, 0, theta=0.5)
    b = simulate_instance(cfg, 1, theta=0.5)
    assert not np.array_equal(a.latent.values, b.latent.values)


def test_theta_levels_share_latent_path():
    cfg = small_cfg()
    a = simulate_instance(cfg, 3, theta=0.1)
    b = simulate_instance(cfg, 3, theta=0.7)
    assert a.latent == b.latent
    assert not np.array_equal(a.observed.values, b.observed.values)


def test_truth_is_average_of_gamma_paths():
    inst = simulate_instance(small_cfg(), 0, theta=0.0)
    diag = inst.gamma_paths.mean(axis=1)
    assert np.diagonal(inst.truth.entries) == pytest.approx(diag, rel=1e-12)
    # off-diagonals follow the rho**|i-j| decay of the average cross terms
    i, j = 0, 2
    cross = inst.rho ** abs(i - j) * np.sqrt(
        inst.gamma_paths[i] * inst.gamma_paths[j]
    ).mean()
    assert inst.truth.entries[i, j] == pytest.approx(cross, rel=1e-12)


def test_truth_is_psd():
    cfg = small_cfg(p=8)
    for rep in range(5):
        truth = simulate_instance(cfg, rep, theta=0.0).truth.entries
        eigs = np.linalg.eigvalsh(truth)
        assert eigs.min() >= -1e-10 * abs(eigs).max()


def test_rho_within_bounds():
    cfg = small_cfg()
    rhos = [simulate_instance(cfg, rep, theta=0.0).rho for rep in range(10)]
    assert all(cfg.rho_low <= r <= cfg.rho_high for r in rhos)
    assert len(set(rhos)) > 1


def test_noise_calibration():
    cfg = small_cfg(n=2048, p=4, theta_grid=(0.5,))
    inst = simulate_instance(cfg, 0, theta=0.5)
    noise = inst.observed.values - inst.latent.values
    target = 0.25 * np.diagonal(inst.truth.entries)
    sample_var = noise.var(axis=1, ddof=1)
    # sample variance of m = n + 1 normal draws has sd target * sqrt(2 / m)
    tol = 4.0 * target * math.sqrt(2.0 / (cfg.n + 1))
    assert np.all(np.abs(sample_var - target) <= tol)


def test_latent_increment_variance_matches_truth():
    cfg = SimConfig(n=100_000, p=1, theta_grid=(0.0,), reps=1, seed=5)
    inst = simulate_instance(cfg, 0, theta=0.0)
    increments = np.diff(inst.latent.values[0]) * math.sqrt(cfg.n)
    assert increments.var() == pytest.approx(inst.truth.entries[0, 0], rel=0.05)


def test_ou_long_run_moments():
    rng = np.random.default_rng(0)
    path = _ou_log_paths(rng, p=1, steps=100_000, dt=1e-3, rate=6.0, mean=0.5)[0]
    assert abs(path.mean() - 0.5) <= 0.05  # 3 sigma for T = 100
    assert path.var() == pytest.approx(1.0 / 12.0, rel=0.10)


def test_benchmark_oracle_and_zero_estimators():
    cfg = small_cfg()
    report = run_benchmark(cfg, [TruthOracle(), ZeroEstimator()], workers=1)
    for row in report.rows:
        if row.estimator == "oracle":
            assert row.mre_mean == 0.0
        else:
            assert row.mre_mean == pytest.approx(1.0, abs=1e-10)


def test_benchmark_report_shape_and_provenance():
    cfg = small_cfg()
    estimators = default_estimators(cfg.n)
    report = run_benchmark(cfg, estimators, workers=1)
    assert len(report.rows) == 4 * len(cfg.theta_grid)
    names = [row.estimator for row in report.rows]
    assert names == sorted(names, key=names.index)  # estimator-major order
    digest = config_digest(cfg, estimators)
    assert all(row.config_digest == digest for row in report.rows)
    assert all(row.seed == cfg.seed for row in report.rows)
    assert all(len(row.rep_errors) == cfg.reps for row in report.rows)


def test_benchmark_deterministic_across_worker_counts():
    cfg = small_cfg(reps=4)
    estimators = default_estimators(cfg.n)
    serial = run_benchmark(cfg, estimators, workers=1)
    parallel = run_benchmark(cfg, estimators, workers=2)
    assert serial.rows == parallel.rows


def test_benchmark_csv_outputs(tmp_path):
    cfg = small_cfg()
    report = run_benchmark(cfg, [TruthOracle()], workers=1)
    out = tmp_path / "report.csv"
    write_benchmark_csv(report, str(out))
    lines = out.read_text().splitlines()
    assert lines[0] == "estimator,theta,mre_mean,mre_se,reps,seed"
    assert len(lines) == 1 + len(report.rows)
    long_out = tmp_path / "long.csv"
    write_benchmark_long_csv(report, str(long_out))
    long_lines = long_out.read_text().splitlines()
    assert long_lines[0] == "estimator,theta,rep,candidate,rel_err,seed,config_digest"
    assert len(long_lines) == 1 + len(report.rows) * cfg.reps


def test_benchmark_rerun_is_identical(tmp_path):
    cfg = small_cfg()
    estimators = default_estimators(cfg.n)
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    write_benchmark_csv(run_benchmark(cfg, estimators, workers=1), str(first))
    write_benchmark_csv(run_benchmark(cfg, estimators, workers=1), str(second))
    assert first.read_bytes() == second.read_bytes()


def test_canonical_config_round_trip_digest():
    cfg = small_cfg()
    estimators = default_estimators(cfg.n)
    text = canonical_config_text(cfg, estimators)
    assert f"seed = {cfg.seed}" in text.splitlines()
    assert config_digest(cfg, estimators) == config_digest(cfg, estimators)
    other = config_digest(small_cfg(seed=12), estimators)
    assert other != config_digest(cfg, estimators)


def test_tuned_candidates_reported():
    cfg = small_cfg(n=128, p=6, theta_grid=(0.5,), reps=2)
    estimators = default_estimators(cfg.n)
    report = run_benchmark(cfg, estimators, workers=1)
    thr_rows = [r for r in report.rows if r.estimator == "thr-msrvm"]
    assert thr_rows and all(r.selected.startswith("hbar=") for r in thr_rows)
    arvm_rows = [r for r in report.rows if r.estimator == "arvm"]
    assert arvm_rows and all(r.selected.startswith("K=") for r in arvm_rows)
