"""Domain types, validation, and file formats shared by the whole toolkit.

All arrays are 64-bit floats.  Every type is immutable after construction
(backed by read-only numpy arrays), so instances can be shared freely
across threads.
"""

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

__all__ = [
    "VolmatError",
    "EmptyPanelError",
    "TooFewTimesError",
    "NonFiniteError",
    "RaggedRowsError",
    "CsvParseError",
    "HeaderMismatchError",
    "NotSymmetricError",
    "PricePanel",
    "VolMatrix",
    "SamplingGrid",
    "ScaleWeights",
    "validate_panel",
    "symmetrize_upper",
    "read_panel_csv",
    "write_panel_csv",
    "read_matrix_csv",
    "write_matrix_csv",
]


class VolmatError(Exception):
    """Base class for all errors raised by this package."""


class EmptyPanelError(VolmatError, ValueError):
    """Panel has no assets or no observations."""


class TooFewTimesError(VolmatError, ValueError):
    """Panel has fewer than two observation intervals."""


class NonFiniteError(VolmatError, ValueError):
    """A value is NaN or infinite."""

    def __init__(self, asset: int, time_index: int):
        self.asset = asset
        self.time_index = time_index
        super().__init__(
            f"non-finite value at asset {asset}, time index {time_index}"
        )


class RaggedRowsError(VolmatError, ValueError):
    """Rows have inconsistent lengths."""


class CsvParseError(VolmatError, ValueError):
    """A CSV cell could not be parsed."""

    def __init__(self, line: int, column: int, message: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class HeaderMismatchError(VolmatError, ValueError):
    """CSV header does not match the expected panel layout."""


class NotSymmetricError(VolmatError, ValueError):
    """Matrix is not exactly symmetric."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out is a and a.flags.writeable:
        out = out.copy()
    out.setflags(write=False)
    return out


def _check_finite(values: np.ndarray) -> None:
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteError(int(bad[0]), int(bad[1]))


@dataclass(frozen=True, eq=False)
class PricePanel:
    """Observed log prices of ``p`` assets at ``n + 1`` equally spaced stamps.

    ``values[i, l]`` is the observation of asset ``i`` at time ``l / n`` on
    the unit interval.  Column ``l = 0`` is the initial observation; the
    realized-covariance estimators start their increment sums at ``l = 1``
    and use column 0 only as a differencing baseline.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise EmptyPanelError("panel must be a non-empty 2-d array")
        if values.shape[1] < 3:
            raise TooFewTimesError(
                f"need at least 3 time stamps (n >= 2), got {values.shape[1]}"
            )
        _check_finite(values)
        object.__setattr__(self, "values", _readonly(values))

    @property
    def p(self) -> int:
        """Number of assets."""
        return self.values.shape[0]

    @property
    def n(self) -> int:
        """Number of observation intervals (stamps minus one)."""
        return self.values.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        """Implicit observation times ``l / n`` for ``l = 0..n``."""
        return np.arange(self.n + 1) / self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, PricePanel):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class VolMatrix:
    """A symmetric p-by-p integrated volatility matrix (true or estimated).

    Symmetry is exact: ``entries[i, j]`` and ``entries[j, i]`` are
    bit-identical.  Estimators guarantee this by computing the upper
    triangle and mirroring it.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"matrix must be square, got shape {entries.shape}")
        if entries.size == 0:
            raise EmptyPanelError("matrix must be non-empty")
        _check_finite(entries)
        if not np.array_equal(entries, entries.T):
            raise NotSymmetricError(
                "entries are not exactly symmetric; "
                "mirror one triangle before constructing"
            )
        object.__setattr__(self, "entries", _readonly(entries))

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, VolMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    __hash__ = None


def symmetrize_upper(m: np.ndarray) -> VolMatrix:
    """Build a :class:`VolMatrix` from the upper triangle of ``m``.

    The strict upper triangle is mirrored onto the lower one, which makes
    the result exactly symmetric regardless of roundoff in ``m``.
    """
    m = np.asarray(m, dtype=np.float64)
    upper = np.triu(m, 1)
    return VolMatrix(upper + upper.T + np.diag(np.diagonal(m)))


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """One subsampling grid: time indices ``{k, K + k, 2K + k, ...} <= n``.

    ``offset`` is the starting index ``k`` in ``[1, K]`` and ``gap`` is the
    subsampling spacing ``K``.  The grid length is ``floor((n - k) / K) + 1``,
    which is either ``floor(n / K)`` or ``floor(n / K) + 1``.
    """

    offset: int
    gap: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("grid must hold at least one index")
        if idx[0] != self.offset:
            raise ValueError("grid must start at its offset")
        if idx.size > 1 and not np.all(np.diff(idx) == self.gap):
            raise ValueError("grid indices must increase by the gap")
        idx = np.ascontiguousarray(idx)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SamplingGrid):
            return NotImplemented
        return (
            self.offset == other.offset
            and self.gap == other.gap
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None


_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ScaleWeights:
    """Multi-scale combination schedule for a sample of ``n`` intervals.

    Holds the ``N`` subsampling gaps ``K_m = m + N``, the signed combination
    weights ``a_m``, and the small-scale correction coefficient ``zeta``.
    The weights satisfy ``sum(a) == 1`` and ``sum(a / K) == 0`` up to 1e-12;
    ``sum(|a|)`` tends to 9/2 as ``N`` grows.
    """

    N: int
    K: np.ndarray
    a: np.ndarray
    zeta: float
    n: int

    def __post_init__(self):
        K = np.ascontiguousarray(self.K, dtype=np.int64)
        a = _readonly(np.asarray(self.a, dtype=np.float64))
        if K.shape != (self.N,) or a.shape != (self.N,):
            raise ValueError("K and a must both have length N")
        if abs(a.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must sum to 1")
        if abs((a / K).sum()) > _WEIGHT_TOL:
            raise ValueError("weights over gaps must sum to 0")
        if self.N >= 8 and not 4.0 <= np.abs(a).sum() <= 5.0:
            raise ValueError("absolute weight mass out of range")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "a", a)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScaleWeights):
            return NotImplemented
        return (
            self.N == other.N
            and self.n == other.n
            and self.zeta == other.zeta
            and np.array_equal(self.K, other.K)
            and np.array_equal(self.a, other.a)
        )

    __hash__ = None


_ORIENTATIONS = ("assets-by-time", "time-by-assets")


def validate_panel(raw, orientation: str = "assets-by-time") -> PricePanel:
    """Normalize a raw matrix of observations into a :class:`PricePanel`.

    Parameters
    ----------
    raw : array_like
        Rectangular matrix of observed log prices.
    orientation : str
        ``"assets-by-time"`` if rows are assets, ``"time-by-assets"`` if
        rows are time stamps (the matrix is transposed in that case).

    Returns
    -------
    PricePanel
        Panel with ``n = time stamps - 1`` intervals.  Validating an
        already valid panel returns an equal panel.
    """
    if orientation not in _ORIENTATIONS:
        raise ValueError(f"orientation must be one of {_ORIENTATIONS}")
    if isinstance(raw, PricePanel):
        raw = raw.values
    try:
        values = np.asarray(raw, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise RaggedRowsError(f"input is not a rectangular matrix: {exc}") from exc
    if values.ndim != 2:
        raise RaggedRowsError(
            f"input must be 2-dimensional, got {values.ndim} dimensions"
        )
    if orientation == "time-by-assets":
        values = values.T
    if values.size == 0:
        raise EmptyPanelError("panel must be non-empty")
    if values.shape[1] < 3:
        raise TooFewTimesError(
            f"need at least 3 time stamps (n >= 2), got {values.shape[1]}"
        )
    return PricePanel(values)


def _atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_panel_csv(panel: PricePanel, path: str, assets=None) -> None:
    """Write a panel as CSV with header ``time,<asset_1>,...,<asset_p>``.

    One row per stamp in ascending time order, LF line endings.  Values are
    emitted with shortest round-trip precision, so a read-back reproduces
    the panel exactly.
    """
    if assets is None:
        assets = [f"a{i + 1}" for i in range(panel.p)]
    if len(assets) != panel.p:
        raise ValueError(f"expected {panel.p} asset names, got {len(assets)}")
    lines = ["time," + ",".join(str(a) for a in assets)]
    times = panel.times
    for col in range(panel.n + 1):
        cells = [repr(float(times[col]))]
        cells += [repr(float(v)) for v in panel.values[:, col]]
        lines.append(",".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_panel_csv(path: str) -> PricePanel:
    """Read a panel CSV (see :func:`write_panel_csv` for the layout).

    The time column is checked for strict increase but carries no other
    information: stamps are implicitly ``l / n``.  Accepts LF or CRLF.
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise EmptyPanelError(f"{path}: empty file")
        if len(header) < 2 or header[0].strip() != "time":
            raise HeaderMismatchError(
                f"{path}: header must be 'time,<asset_1>,...,<asset_p>'"
            )
        width = len(header)
        times: list[float] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise RaggedRowsError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {width}"
                )
            parsed = []
            for col, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise CsvParseError(lineno, col, f"not a number: {cell!r}") from None
            times.append(parsed[0])
            rows.append(parsed[1:])
    for i in range(1, len(times)):
        if not times[i] > times[i - 1]:
            raise CsvParseError(i + 2, 1, "time stamps must be strictly increasing")
    if len(rows) < 3:
        raise TooFewTimesError(
            f"{path}: need at least 3 time stamps (n >= 2), got {len(rows)}"
        )
    return validate_panel(np.array(rows, dtype=np.float64), "time-by-assets")


def write_matrix_csv(m: VolMatrix, path: str) -> None:
    """Write a volatility matrix as ``p`` rows of ``p`` floats, no header.

    Values carry 17 significant digits, which round-trips 64-bit floats
    exactly.
    """
    lines = [
        ",".join(format(float(v), ".17g") for v in row) for row in m.entries
    ]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix_csv(path: str) -> VolMatrix:
    """Read a square symmetric matrix CSV written by :func:`write_matrix_csv`."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        rows: list[list[float]] = []
        width = None
        for lineno, row in enumerate(reader, start=1):
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise RaggedRowsError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {width}"
                )
            parsed = []
            for col, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise CsvParseError(lineno, col, f"not a number: {cell!r}") from None
            rows.append(parsed)
    if not rows:
        raise EmptyPanelError(f"{path}: empty file")
    if len(rows) != width:
        raise CsvParseError(
            len(rows), 1, f"expected a square matrix, got {len(rows)}x{width}"
        )
    return VolMatrix(np.array(rows, dtype=np.float64))
