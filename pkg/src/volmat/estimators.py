"""Realized volatility matrix estimators for noisy high-frequency panels.

The pipeline subsamples the ``n`` in-sample time points into ``K`` sparse
grids, averages the per-grid realized covariance matrices into a one-scale
estimator, combines one-scale estimators across gaps ``K_m = m + N`` with
signed weights into a multi-scale estimator (MSRVM), and finally applies
universal entrywise thresholding.  The averaged realized volatility matrix
(ARVM) baseline instead corrects a single one-scale estimator by
subtracting the estimated observation-noise variance from the diagonal.

All estimators are pure functions of immutable inputs.  Accumulations run
in a fixed order (grid point, then grid offset, then scale), so repeated
runs produce bit-identical results.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    PricePanel,
    SamplingGrid,
    ScaleWeights,
    VolMatrix,
    VolmatError,
    symmetrize_upper,
)

__all__ = [
    "GapTooLargeError",
    "OffsetOutOfRangeError",
    "GridTooShortError",
    "IndexOutOfPanelError",
    "SampleTooSmallError",
    "WeightsMismatchError",
    "NonPositiveHbarError",
    "ThresholdRule",
    "subsample_grid",
    "grid_estimator",
    "one_scale_estimator",
    "scale_weights",
    "msrvm",
    "threshold",
    "default_varpi",
    "noise_variance",
    "arvm",
    "threshold_msrvm",
    "threshold_arvm",
]


class GapTooLargeError(VolmatError, ValueError):
    """Subsampling gap exceeds the number of in-sample time points."""


class OffsetOutOfRangeError(VolmatError, ValueError):
    """Grid offset is outside ``[1, K]``."""


class GridTooShortError(VolmatError, ValueError):
    """A sampling grid has fewer than two points, so no increment exists."""


class IndexOutOfPanelError(VolmatError, ValueError):
    """A grid index exceeds the panel's last time index."""


class SampleTooSmallError(VolmatError, ValueError):
    """Sample size cannot support the requested number of scales."""


class WeightsMismatchError(VolmatError, ValueError):
    """Scale weights were built for a different sample size."""


class NonPositiveHbarError(VolmatError, ValueError):
    """Threshold constant must be positive."""


@dataclass(frozen=True)
class ThresholdRule:
    """Universal entrywise threshold.

    Entries with absolute value below ``varpi`` are zeroed; all others are
    kept bit-for-bit.  The diagonal is thresholded too unless
    ``apply_to_diagonal`` is False.  Build with :meth:`from_hbar` to derive
    ``varpi = hbar * n**(-1/4) * sqrt(log(n * p))`` from a constant and the
    panel dimensions; ``varpi`` is computed at construction and the rule is
    immutable, so it can never go stale.
    """

    varpi: float
    apply_to_diagonal: bool = True
    hbar: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.varpi) or self.varpi < 0:
            raise ValueError(f"varpi must be finite and non-negative, got {self.varpi}")

    @classmethod
    def from_hbar(cls, hbar: float, n: int, p: int,
                  apply_to_diagonal: bool = True) -> "ThresholdRule":
        return cls(default_varpi(n, p, hbar), apply_to_diagonal, hbar)


def default_varpi(n: int, p: int, hbar: float) -> float:
    """Threshold level ``hbar * n**(-1/4) * sqrt(log(n * p))``.

    Natural logarithm; any other base is absorbed into ``hbar``.  Positive
    whenever ``n * p >= 2``.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    if not hbar > 0:
        raise NonPositiveHbarError(f"hbar must be positive, got {hbar}")
    return hbar * n ** -0.25 * math.sqrt(math.log(n * p))


def subsample_grid(n: int, K: int, k: int) -> SamplingGrid:
    """Every-``K``-th time index starting at offset ``k``.

    Parameters
    ----------
    n : int
        Number of in-sample time points (indices run ``1..n``).
    K : int
        Subsampling gap, ``1 <= K <= n``.
    k : int
        Grid offset in ``[1, K]``.

    Returns
    -------
    SamplingGrid
        Indices ``{k, k + K, k + 2K, ...}`` up to ``n``; the length is
        ``floor((n - k) / K) + 1``.
    """
    if K < 1:
        raise GapTooLargeError(f"gap must be at least 1, got {K}")
    if K > n:
        raise GapTooLargeError(f"gap {K} exceeds sample size {n}")
    if not 1 <= k <= K:
        raise OffsetOutOfRangeError(f"offset {k} is outside [1, {K}]")
    return SamplingGrid(offset=k, gap=K, indices=np.arange(k, n + 1, K))


def grid_estimator(panel: PricePanel, grid: SamplingGrid) -> VolMatrix:
    """Realized covariance over the consecutive increments of one grid.

    Entry ``(i, j)`` is the sum over consecutive grid points of the product
    of the two assets' increments.  The first grid point is only a
    baseline; increments never wrap across grid boundaries.  The result is
    a sum of rank-one outer products, hence positive semidefinite.
    """
    if len(grid) < 2:
        raise GridTooShortError(
            f"grid with offset {grid.offset}, gap {grid.gap} has "
            f"{len(grid)} point(s); need at least 2"
        )
    if grid.indices[-1] > panel.n:
        raise IndexOutOfPanelError(
            f"grid index {int(grid.indices[-1])} exceeds panel n = {panel.n}"
        )
    sampled = panel.values[:, grid.indices]
    increments = sampled[:, 1:] - sampled[:, :-1]
    return symmetrize_upper(increments @ increments.T)


def one_scale_estimator(panel: PricePanel, K: int) -> VolMatrix:
    """Average of the ``K`` grid estimators at gap ``K``.

    Requires ``2 * K <= n`` so that every offset grid has at least one
    increment.  Symmetric and positive semidefinite.
    """
    n = panel.n
    if K < 1:
        raise GapTooLargeError(f"gap must be at least 1, got {K}")
    if 2 * K > n:
        raise GridTooShortError(
            f"gap {K} leaves an offset grid with fewer than 2 of the "
            f"{n} time points"
        )
    total = np.zeros((panel.p, panel.p))
    for k in range(1, K + 1):
        total += grid_estimator(panel, subsample_grid(n, K, k)).entries
    return VolMatrix(total / K)


def scale_weights(n: int, c: float = 1.0, N: int | None = None) -> ScaleWeights:
    """Multi-scale schedule for a sample of ``n`` intervals.

    The number of scales defaults to ``N = floor(c * sqrt(n))``; pass ``N``
    to fix it directly.  The gaps are ``K_m = m + N`` for ``m = 1..N``, the
    weights are ``a_m = 12 K_m (m - N/2 - 1/2) / (N (N^2 - 1))`` and the
    correction coefficient is ``zeta = K_1 K_N / (n (N - 1))``, all in
    closed form.

    Raises
    ------
    SampleTooSmallError
        If ``N < 2`` or the largest gap ``2N`` exceeds ``n / 2``.
    """
    if N is None:
        if c <= 0:
            raise ValueError(f"scale constant must be positive, got {c}")
        N = math.floor(c * math.sqrt(n))
    if N < 2:
        raise SampleTooSmallError(
            f"got N = {N}; need at least 2 scales (n = {n})"
        )
    if 2 * N > n / 2:
        raise SampleTooSmallError(
            f"largest gap 2N = {2 * N} exceeds n/2 = {n / 2}; "
            f"increase the sample or lower the scale count"
        )
    m = np.arange(1, N + 1, dtype=np.float64)
    K = np.arange(N + 1, 2 * N + 1, dtype=np.int64)
    a = 12.0 * K * (m - N / 2 - 0.5) / (N * (N * N - 1.0))
    zeta = float(K[0] * K[-1]) / (n * (N - 1))
    return ScaleWeights(N=N, K=K, a=a, zeta=zeta, n=n)


def msrvm(panel: PricePanel, weights: ScaleWeights) -> VolMatrix:
    """Multi-scale realized volatility matrix estimator.

    Weighted combination of the one-scale estimators at gaps ``K_1..K_N``
    plus the correction ``zeta * (first scale - last scale)`` that cancels
    the remaining noise bias.  The signed weights mean the result is
    symmetric but not necessarily positive semidefinite.
    """
    if weights.n != panel.n:
        raise WeightsMismatchError(
            f"weights were built for n = {weights.n}, panel has n = {panel.n}"
        )
    scales = [one_scale_estimator(panel, int(K)).entries for K in weights.K]
    combined = np.zeros((panel.p, panel.p))
    for a_m, scale in zip(weights.a, scales):
        combined += a_m * scale
    combined += weights.zeta * (scales[0] - scales[-1])
    return VolMatrix(combined)


def threshold(m: VolMatrix, rule: ThresholdRule) -> VolMatrix:
    """Zero out entries with absolute value below the rule's threshold.

    Surviving entries are returned bit-for-bit; the operation is
    idempotent, and a zero threshold returns the input unchanged.
    """
    entries = m.entries
    kept = np.where(np.abs(entries) >= rule.varpi, entries, 0.0)
    if not rule.apply_to_diagonal:
        np.fill_diagonal(kept, np.diagonal(entries))
    return VolMatrix(kept)


def noise_variance(panel: PricePanel) -> np.ndarray:
    """Per-asset observation-noise variance estimate.

    Half the average squared one-step increment over the in-sample points:
    ``(1 / (2n)) * sum over l = 2..n of (Y_i(t_l) - Y_i(t_{l-1}))**2``.
    Nonnegative by construction.
    """
    diffs = panel.values[:, 2:] - panel.values[:, 1:-1]
    return np.einsum("ij,ij->i", diffs, diffs) / (2.0 * panel.n)


def arvm(panel: PricePanel, K: int) -> VolMatrix:
    """Averaged realized volatility matrix with noise-variance adjustment.

    The one-scale estimator at gap ``K`` with its diagonal reduced by
    ``2 (n - K + 1) / K`` times the estimated noise variances.
    Off-diagonal entries equal the one-scale estimator's bit-for-bit.
    """
    base = one_scale_estimator(panel, K)
    adjusted = base.entries.copy()
    correction = 2.0 * (panel.n - K + 1) / K * noise_variance(panel)
    np.fill_diagonal(adjusted, np.diagonal(adjusted) - correction)
    return VolMatrix(adjusted)


def threshold_msrvm(panel: PricePanel, weights: ScaleWeights,
                    rule: ThresholdRule) -> VolMatrix:
    """Thresholded multi-scale estimator."""
    return threshold(msrvm(panel, weights), rule)


def threshold_arvm(panel: PricePanel, K: int, rule: ThresholdRule) -> VolMatrix:
    """Thresholded noise-adjusted one-scale estimator."""
    return threshold(arvm(panel, K), rule)
