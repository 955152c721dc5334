"""Synthetic data generator and Monte Carlo benchmark of estimator accuracy.

The generator draws, per repetition, a correlation decay parameter
uniformly from a narrow band, per-asset log-variance paths from a
mean-reverting diffusion stepped by an Euler scheme, assembles the
instantaneous covariance ``gamma_ij(t) = sqrt(gamma_ii gamma_jj) *
rho**|i-j|``, drives the latent log prices through the Cholesky factor of
``gamma``, and adds i.i.d. Gaussian observation noise with per-asset
standard deviation ``theta * sqrt(Gamma_ii)`` at relative level ``theta``.
The target matrix is the time average of the instantaneous covariances.

The benchmark scores estimators by the mean relative spectral-norm error
(MRE) across seeded repetitions, selecting any tuning parameters per
estimator and noise level by minimizing that mean over a documented grid,
evaluated on the same repetitions.

Randomness is fully deterministic: every draw comes from a Philox
counter-based generator keyed through ``numpy.random.SeedSequence`` by
``(master seed, repetition index, stream tag)``, so repetitions are
independent streams and results are byte-identical regardless of how many
worker processes evaluate them.
"""

import hashlib
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import PricePanel, VolMatrix, VolmatError, _atomic_write_text
from .estimators import ThresholdRule, arvm, msrvm, scale_weights, threshold
from .norms import ZeroTruthNormError, spectral_norm

__all__ = [
    "CholeskyError",
    "BenchmarkError",
    "SimConfig",
    "SimInstance",
    "BenchmarkRow",
    "BenchmarkReport",
    "simulate_instance",
    "run_benchmark",
    "FixedEstimator",
    "MultiScaleEstimator",
    "ThresholdMultiScaleEstimator",
    "AveragedEstimator",
    "ThresholdAveragedEstimator",
    "default_hbar_grid",
    "default_gap_grid",
    "default_estimators",
    "config_digest",
    "write_benchmark_csv",
    "write_benchmark_long_csv",
]

# Stream tags for the per-repetition substreams.
_TAG_RHO = 1
_TAG_LOGVOL = 2
_TAG_DIFFUSION = 3
_TAG_NOISE = 4


class CholeskyError(VolmatError, RuntimeError):
    """Instantaneous covariance failed to factor; signals a generator bug."""

    def __init__(self, time_index: int):
        self.time_index = time_index
        super().__init__(
            f"covariance at time index {time_index} is not positive definite"
        )


class BenchmarkError(VolmatError, RuntimeError):
    """An estimator failed inside the benchmark loop."""

    def __init__(self, estimator: str, theta: float, rep: int):
        self.estimator = estimator
        self.theta = theta
        self.rep = rep
        super().__init__(
            f"estimator {estimator!r} failed at theta={theta}, rep={rep}"
        )


@dataclass(frozen=True)
class SimConfig:
    """Generator and benchmark configuration.

    ``theta_grid`` lists the relative noise levels to simulate,
    ``ou_rate`` and ``ou_mean`` parametrize the mean-reverting log-variance
    diffusion ``d log g = ou_rate (ou_mean - log g) dt + dW``, and the
    correlation decay parameter is drawn uniformly from
    ``[rho_low, rho_high]`` once per repetition (shared across noise
    levels, so the noise-level curves are paired).
    """

    n: int
    p: int
    theta_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
    reps: int = 200
    seed: int = 0
    ou_rate: float = 6.0
    ou_mean: float = 0.5
    rho_low: float = 0.47
    rho_high: float = 0.53

    def __post_init__(self):
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        if self.n < 4:
            raise ValueError(f"n must be at least 4, got {self.n}")
        if self.p < 1:
            raise ValueError(f"p must be at least 1, got {self.p}")
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps}")
        if not self.theta_grid:
            raise ValueError("theta_grid must be non-empty")
        if any(t < 0 for t in self.theta_grid):
            raise ValueError("relative noise levels must be non-negative")
        if not 0 <= self.rho_low <= self.rho_high < 1:
            raise ValueError("need 0 <= rho_low <= rho_high < 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.ou_rate <= 0:
            raise ValueError("ou_rate must be positive")


@dataclass(frozen=True, eq=False)
class SimInstance:
    """One simulated repetition at one noise level.

    ``latent`` holds the noise-free log prices, ``observed`` the noisy
    ones, ``truth`` the time-averaged instantaneous covariance matrix, and
    ``gamma_paths`` the per-asset instantaneous variances at the in-sample
    stamps (p by n).
    """

    latent: PricePanel
    observed: PricePanel
    truth: VolMatrix
    gamma_paths: np.ndarray
    rho: float
    theta: float
    rep_index: int

    def __post_init__(self):
        paths = np.ascontiguousarray(self.gamma_paths, dtype=np.float64)
        paths.setflags(write=False)
        object.__setattr__(self, "gamma_paths", paths)


def _stream(seed: int, rep_index: int, tag: int, extra: tuple[int, ...] = ()):
    key = np.random.SeedSequence(entropy=seed, spawn_key=(rep_index, tag, *extra))
    return np.random.Generator(np.random.Philox(key))


def _theta_words(theta: float) -> tuple[int, int]:
    bits = struct.unpack("<Q", struct.pack("<d", float(theta)))[0]
    return (bits & 0xFFFFFFFF, bits >> 32)


def _ou_log_paths(rng, p: int, steps: int, dt: float, rate: float,
                  mean: float) -> np.ndarray:
    """Euler paths of ``d x = rate (mean - x) dt + dW``, one row per asset.

    Returns ``p`` by ``steps + 1``; the initial value is drawn from the
    stationary law N(mean, 1 / (2 rate)) to avoid burn-in bias.
    """
    out = np.empty((p, steps + 1))
    out[:, 0] = mean + math.sqrt(1.0 / (2.0 * rate)) * rng.standard_normal(p)
    shocks = math.sqrt(dt) * rng.standard_normal((p, steps))
    for step in range(1, steps + 1):
        prev = out[:, step - 1]
        out[:, step] = prev + rate * (mean - prev) * dt + shocks[:, step - 1]
    return out


def _simulate_latent(cfg: SimConfig, rep_index: int):
    """Latent path, truth matrix, variance paths, and correlation draw."""
    n, p = cfg.n, cfg.p
    rho = float(_stream(cfg.seed, rep_index, _TAG_RHO).uniform(cfg.rho_low, cfg.rho_high))

    log_gamma = _ou_log_paths(
        _stream(cfg.seed, rep_index, _TAG_LOGVOL),
        p, n, 1.0 / n, cfg.ou_rate, cfg.ou_mean,
    )
    gamma = np.exp(log_gamma)  # (p, n+1) instantaneous variances
    decay = rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))

    # gamma(t_l) = decay * outer(sqrt(g(t_l)), sqrt(g(t_l))), stacked over l.
    roots = np.sqrt(gamma)
    stack = decay[None, :, :] * (roots.T[:, :, None] * roots.T[:, None, :])

    truth = VolMatrix(stack[1:].mean(axis=0))

    try:
        factors = np.linalg.cholesky(stack[:n])
    except np.linalg.LinAlgError:
        for l in range(n):
            try:
                np.linalg.cholesky(stack[l])
            except np.linalg.LinAlgError:
                raise CholeskyError(l) from None
        raise
    shocks = _stream(cfg.seed, rep_index, _TAG_DIFFUSION).standard_normal((n, p))
    increments = np.einsum("lij,lj->li", factors, shocks) / math.sqrt(n)
    values = np.concatenate(
        [np.zeros((p, 1)), np.cumsum(increments, axis=0).T], axis=1
    )
    return PricePanel(values), truth, gamma[:, 1:], rho


def simulate_instance(cfg: SimConfig, rep_index: int,
                      theta: float | None = None) -> SimInstance:
    """Generate one repetition at relative noise level ``theta``.

    ``theta`` defaults to the first entry of ``cfg.theta_grid``.  The same
    ``(cfg, rep_index, theta)`` always yields a bit-identical instance; the
    noise stream is keyed by ``theta`` itself, so different levels within a
    repetition share the latent path but draw independent noise.
    """
    if theta is None:
        theta = cfg.theta_grid[0]
    theta = float(theta)
    if theta < 0:
        raise ValueError(f"theta must be non-negative, got {theta}")
    latent, truth, gamma_paths, rho = _simulate_latent(cfg, rep_index)
    noise_scale = theta * np.sqrt(np.diagonal(truth.entries))
    rng = _stream(cfg.seed, rep_index, _TAG_NOISE, _theta_words(theta))
    noise = rng.standard_normal((cfg.p, cfg.n + 1)) * noise_scale[:, None]
    observed = PricePanel(latent.values + noise)
    return SimInstance(
        latent=latent,
        observed=observed,
        truth=truth,
        gamma_paths=gamma_paths,
        rho=rho,
        theta=theta,
        rep_index=rep_index,
    )


# ---------------------------------------------------------------------------
# Benchmark estimators.
#
# An estimator entry is any object with a ``name`` attribute, a
# ``describe()`` method returning a stable configuration string, and an
# ``evaluate(instance)`` method returning an ordered mapping from candidate
# label to VolMatrix.  When an estimator exposes several candidates (a
# tuning grid), the benchmark reports, per noise level, the candidate with
# the smallest mean relative error across the repetitions.


@dataclass(frozen=True)
class FixedEstimator:
    """A named panel -> VolMatrix function with no tuning grid.

    The callable must be picklable (a module-level function) when the
    benchmark runs with multiple worker processes.
    """

    name: str
    fn: object

    def describe(self) -> str:
        return f"{self.name}: fixed"

    def evaluate(self, instance: SimInstance) -> dict[str, VolMatrix]:
        return {self.name: self.fn(instance.observed)}


@dataclass(frozen=True)
class MultiScaleEstimator:
    """Multi-scale estimator with the scale count ``floor(c * sqrt(n))``."""

    name: str = "msrvm"
    scale_constant: float = 1.0

    def describe(self) -> str:
        return f"{self.name}: msrvm(c={self.scale_constant!r})"

    def evaluate(self, instance: SimInstance) -> dict[str, VolMatrix]:
        panel = instance.observed
        return {self.name: msrvm(panel, scale_weights(panel.n, self.scale_constant))}


@dataclass(frozen=True)
class ThresholdMultiScaleEstimator:
    """Thresholded multi-scale estimator tuned over a grid of constants.

    Each candidate thresholds the same multi-scale estimate at
    ``hbar * n**(-1/4) * sqrt(log(n p))``.
    """

    hbar_grid: tuple[float, ...]
    name: str = "thr-msrvm"
    scale_constant: float = 1.0

    def describe(self) -> str:
        return (
            f"{self.name}: threshold msrvm(c={self.scale_constant!r}) "
            f"over hbar in {list(self.hbar_grid)!r}"
        )

    def evaluate(self, instance: SimInstance) -> dict[str, VolMatrix]:
        panel = instance.observed
        base = msrvm(panel, scale_weights(panel.n, self.scale_constant))
        out = {}
        for hbar in self.hbar_grid:
            rule = ThresholdRule.from_hbar(hbar, panel.n, panel.p)
            out[f"hbar={hbar:g}"] = threshold(base, rule)
        return out


@dataclass(frozen=True)
class AveragedEstimator:
    """Noise-adjusted one-scale estimator tuned over a grid of gaps."""

    gap_grid: tuple[int, ...]
    name: str = "arvm"

    def describe(self) -> str:
        return f"{self.name}: arvm over K in {list(self.gap_grid)!r}"

    def evaluate(self, instance: SimInstance) -> dict[str, VolMatrix]:
        panel = instance.observed
        return {f"K={K}": arvm(panel, K) for K in self.gap_grid}


@dataclass(frozen=True)
class ThresholdAveragedEstimator:
    """Thresholded noise-adjusted estimator tuned over gaps and constants."""

    gap_grid: tuple[int, ...]
    hbar_grid: tuple[float, ...]
    name: str = "thr-arvm"

    def describe(self) -> str:
        return (
            f"{self.name}: threshold arvm over K in {list(self.gap_grid)!r} "
            f"and hbar in {list(self.hbar_grid)!r}"
        )

    def evaluate(self, instance: SimInstance) -> dict[str, VolMatrix]:
        panel = instance.observed
        out = {}
        for K in self.gap_grid:
            base = arvm(panel, K)
            for hbar in self.hbar_grid:
                rule = ThresholdRule.from_hbar(hbar, panel.n, panel.p)
                out[f"K={K},hbar={hbar:g}"] = threshold(base, rule)
        return out


def default_hbar_grid() -> tuple[float, ...]:
    """Threshold constants 0.125, 0.25, ..., 2.0 (16 candidates)."""
    return tuple(0.125 * i for i in range(1, 17))


def default_gap_grid(n: int) -> tuple[int, ...]:
    """Gaps ``round(c * sqrt(n))`` for c in {0.5, 0.75, 1, 1.5, 2, 3, 4}.

    Clipped to ``[1, n // 2]`` so every candidate admits a one-scale
    estimator.
    """
    root = math.sqrt(n)
    gaps = sorted(
        {
            min(max(1, round(c * root)), n // 2)
            for c in (0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0)
        }
    )
    return tuple(gaps)


def default_estimators(n: int) -> list:
    """The four benchmark estimators with their default tuning grids."""
    hbars = default_hbar_grid()
    gaps = default_gap_grid(n)
    return [
        MultiScaleEstimator(),
        AveragedEstimator(gap_grid=gaps),
        ThresholdMultiScaleEstimator(hbar_grid=hbars),
        ThresholdAveragedEstimator(gap_grid=gaps, hbar_grid=hbars),
    ]


@dataclass(frozen=True)
class BenchmarkRow:
    """Aggregated accuracy of one estimator at one noise level."""

    estimator: str
    theta: float
    mre_mean: float
    mre_se: float
    reps: int
    seed: int
    config_digest: str
    selected: str
    rep_errors: tuple[float, ...] = field(repr=False)


@dataclass(frozen=True)
class BenchmarkReport:
    """Full benchmark output: one row per (estimator, noise level)."""

    rows: tuple[BenchmarkRow, ...]
    config: SimConfig
    digest: str


def canonical_config_text(cfg: SimConfig, estimators) -> str:
    """Stable key = value rendering of a benchmark configuration."""
    lines = [
        f"n = {cfg.n}",
        f"p = {cfg.p}",
        f"theta_grid = {','.join(repr(t) for t in cfg.theta_grid)}",
        f"reps = {cfg.reps}",
        f"seed = {cfg.seed}",
        f"ou_rate = {cfg.ou_rate!r}",
        f"ou_mean = {cfg.ou_mean!r}",
        f"rho_low = {cfg.rho_low!r}",
        f"rho_high = {cfg.rho_high!r}",
    ]
    lines += [f"estimator.{i} = {est.describe()}" for i, est in enumerate(estimators)]
    return "\n".join(lines) + "\n"


def config_digest(cfg: SimConfig, estimators) -> str:
    """Hex hash of the canonicalized configuration text."""
    text = canonical_config_text(cfg, estimators)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _evaluate_rep(cfg: SimConfig, estimators, rep_index: int):
    """Relative errors of every candidate at every noise level, one rep."""
    results = []
    first = True
    truth_norm = None
    for theta in cfg.theta_grid:
        instance = simulate_instance(cfg, rep_index, theta)
        if first:
            truth_norm = spectral_norm(instance.truth)
            if truth_norm == 0.0:
                raise ZeroTruthNormError(
                    f"generated truth at rep {rep_index} has zero spectral norm"
                )
            first = False
        per_theta = []
        for est in estimators:
            try:
                candidates = est.evaluate(instance)
            except Exception as exc:
                raise BenchmarkError(est.name, theta, rep_index) from exc
            errors = tuple(
                spectral_norm(cand.entries - instance.truth.entries) / truth_norm
                for cand in candidates.values()
            )
            per_theta.append((tuple(candidates.keys()), errors))
        results.append(per_theta)
    return results


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("VOLMAT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_benchmark(cfg: SimConfig, estimators, workers: int | None = None) -> BenchmarkReport:
    """Score estimators by mean relative spectral error across repetitions.

    For every estimator and noise level the mean and standard error of the
    relative spectral-norm error over ``cfg.reps`` repetitions is reported;
    estimators exposing a tuning grid contribute the candidate with the
    smallest mean, selected on the same repetitions (ties go to the earlier
    candidate).  Repetitions run on ``workers`` processes (defaulting to the
    ``VOLMAT_THREADS`` environment variable, then the CPU count); the
    worker count never changes the numbers, because each repetition owns
    its random substream and aggregation runs in repetition order.
    """
    names = [est.name for est in estimators]
    if len(set(names)) != len(names):
        raise ValueError(f"estimator names must be unique, got {names}")
    digest = config_digest(cfg, estimators)
    nworkers = _worker_count(workers)

    if nworkers == 1 or cfg.reps == 1:
        per_rep = [_evaluate_rep(cfg, estimators, r) for r in range(cfg.reps)]
    else:
        with ProcessPoolExecutor(max_workers=min(nworkers, cfg.reps)) as pool:
            per_rep = list(
                pool.map(
                    _evaluate_rep,
                    [cfg] * cfg.reps,
                    [estimators] * cfg.reps,
                    range(cfg.reps),
                    chunksize=max(1, cfg.reps // (4 * nworkers)),
                )
            )

    rows = []
    for e_idx, est in enumerate(estimators):
        for t_idx, theta in enumerate(cfg.theta_grid):
            labels = per_rep[0][t_idx][e_idx][0]
            errors = np.array(
                [per_rep[r][t_idx][e_idx][1] for r in range(cfg.reps)]
            )  # (reps, candidates)
            means = errors.mean(axis=0)
            best = int(np.argmin(means))
            chosen = errors[:, best]
            se = float(chosen.std(ddof=1) / math.sqrt(cfg.reps)) if cfg.reps > 1 else 0.0
            rows.append(
                BenchmarkRow(
                    estimator=est.name,
                    theta=theta,
                    mre_mean=float(means[best]),
                    mre_se=se,
                    reps=cfg.reps,
                    seed=cfg.seed,
                    config_digest=digest,
                    selected=labels[best],
                    rep_errors=tuple(float(v) for v in chosen),
                )
            )
    return BenchmarkReport(rows=tuple(rows), config=cfg, digest=digest)


def write_benchmark_csv(report: BenchmarkReport, path: str) -> None:
    """Write the aggregated report (one row per estimator and noise level)."""
    lines = ["estimator,theta,mre_mean,mre_se,reps,seed"]
    for row in report.rows:
        lines.append(
            f"{row.estimator},{row.theta!r},{row.mre_mean!r},"
            f"{row.mre_se!r},{row.reps},{row.seed}"
        )
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_benchmark_long_csv(report: BenchmarkReport, path: str) -> None:
    """Write per-repetition errors in plot-ready long format."""
    lines = ["estimator,theta,rep,candidate,rel_err,seed,config_digest"]
    for row in report.rows:
        for rep, err in enumerate(row.rep_errors):
            lines.append(
                f"{row.estimator},{row.theta!r},{rep},\"{row.selected}\","
                f"{err!r},{row.seed},{row.config_digest}"
            )
    _atomic_write_text(path, "\n".join(lines) + "\n")
