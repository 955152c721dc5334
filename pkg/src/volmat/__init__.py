"""Large sparse integrated volatility matrix estimation from noisy
high-frequency observations.

The package provides the full estimation pipeline (subsampling grids,
one-scale and multi-scale realized covariance, universal thresholding, and
the noise-adjusted averaged baseline), the matrix norms used to score
estimates, a sine-transform whitening diagnostic, a reproducible Monte
Carlo benchmark, and rolling tuning-parameter selection.  See the ``volmat``
command-line tool for the file-based workflow.
"""

from .core import (
    CsvParseError,
    EmptyPanelError,
    HeaderMismatchError,
    NonFiniteError,
    NotSymmetricError,
    PricePanel,
    RaggedRowsError,
    SamplingGrid,
    ScaleWeights,
    TooFewTimesError,
    VolMatrix,
    VolmatError,
    read_matrix_csv,
    read_panel_csv,
    symmetrize_upper,
    validate_panel,
    write_matrix_csv,
    write_panel_csv,
)
from .estimators import (
    GapTooLargeError,
    GridTooShortError,
    IndexOutOfPanelError,
    NonPositiveHbarError,
    OffsetOutOfRangeError,
    SampleTooSmallError,
    ThresholdRule,
    WeightsMismatchError,
    arvm,
    default_varpi,
    grid_estimator,
    msrvm,
    noise_variance,
    one_scale_estimator,
    scale_weights,
    subsample_grid,
    threshold,
    threshold_arvm,
    threshold_msrvm,
)
from .norms import (
    NoConvergenceError,
    ZeroTruthNormError,
    l1_norm,
    linf_norm,
    relative_spectral_error,
    spectral_norm,
)
from .simulate import (
    AveragedEstimator,
    BenchmarkError,
    BenchmarkReport,
    BenchmarkRow,
    CholeskyError,
    FixedEstimator,
    MultiScaleEstimator,
    SimConfig,
    SimInstance,
    ThresholdAveragedEstimator,
    ThresholdMultiScaleEstimator,
    default_estimators,
    default_gap_grid,
    default_hbar_grid,
    run_benchmark,
    simulate_instance,
    write_benchmark_csv,
    write_benchmark_long_csv,
)
from .transform import (
    ToeplitzSpectrum,
    WhitenedSeries,
    dst_matrix,
    toeplitz_eigenvalues,
    toeplitz_spectrum,
    tridiagonal_toeplitz,
    whiten,
)
from .tuning import (
    BlockTooSmallError,
    EmptyGridError,
    TuningGrid,
    TuningScore,
    rolling_select,
    split_blocks,
)

__version__ = "0.1.0"
