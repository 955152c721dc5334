"""Data-driven selection of the scale count and threshold level.

The panel's time axis is split into ``L`` contiguous blocks of equal
length (remainder points join the last block).  Each block is re-indexed
as its own unit-interval panel, a thresholded multi-scale estimate is
computed on it for every candidate pair, and the candidates are scored by
the sum of spectral norms of the one-block-ahead prediction errors, i.e.
the distances between consecutive block estimates.  The pair with the
smallest score wins; exact ties go to the smaller threshold, then the
smaller scale count.
"""

from dataclasses import dataclass

import numpy as np

from .core import PricePanel, VolmatError
from .estimators import ThresholdRule, msrvm, scale_weights, threshold
from .norms import spectral_norm

__all__ = [
    "BlockTooSmallError",
    "EmptyGridError",
    "TuningGrid",
    "TuningScore",
    "split_blocks",
    "rolling_select",
]


class BlockTooSmallError(VolmatError, ValueError):
    """A block cannot support a candidate scale count."""

    def __init__(self, block: int, N: int, block_n: int):
        self.block = block
        self.N = N
        self.block_n = block_n
        super().__init__(
            f"block {block} has {block_n} intervals, too few for N = {N} "
            f"(need 4 N <= block intervals)"
        )


class EmptyGridError(VolmatError, ValueError):
    """A candidate list is empty."""


@dataclass(frozen=True)
class TuningGrid:
    """Candidate scale counts and absolute threshold levels.

    ``L`` is the number of contiguous time blocks used for the rolling
    prediction-error score.
    """

    N_candidates: tuple[int, ...]
    varpi_candidates: tuple[float, ...]
    L: int = 5

    def __post_init__(self):
        object.__setattr__(self, "N_candidates", tuple(int(v) for v in self.N_candidates))
        object.__setattr__(
            self, "varpi_candidates", tuple(float(v) for v in self.varpi_candidates)
        )
        if not self.N_candidates or not self.varpi_candidates:
            raise EmptyGridError("candidate lists must be non-empty")
        if any(v < 0 for v in self.varpi_candidates):
            raise ValueError("thresholds must be non-negative")
        if self.L < 2:
            raise ValueError(f"need at least 2 blocks, got L = {self.L}")


@dataclass(frozen=True)
class TuningScore:
    """Rolling prediction-error score of one candidate pair."""

    N: int
    varpi: float
    score: float


def split_blocks(panel: PricePanel, L: int) -> list[PricePanel]:
    """Split the time axis into ``L`` contiguous blocks of intervals.

    Block ``k`` keeps the stamp just before its first interval as its own
    column 0, so each block is a valid panel; remainder intervals go to
    the last block.
    """
    if L < 2:
        raise ValueError(f"need at least 2 blocks, got L = {L}")
    if L > panel.n:
        raise ValueError(f"cannot split {panel.n} intervals into {L} blocks")
    size = panel.n // L
    blocks = []
    for k in range(L):
        start = k * size
        end = (k + 1) * size if k < L - 1 else panel.n
        blocks.append(PricePanel(np.array(panel.values[:, start:end + 1])))
    return blocks


def rolling_select(panel: PricePanel, grid: TuningGrid):
    """Pick the scale count and threshold minimizing the rolling score.

    Returns
    -------
    (int, float, list[TuningScore])
        The selected scale count, the selected threshold, and the full
        score table in grid order (scale count outer, threshold inner).
    """
    blocks = split_blocks(panel, grid.L)
    for N in grid.N_candidates:
        for k, block in enumerate(blocks, start=1):
            if N < 2 or 4 * N > block.n:
                raise BlockTooSmallError(k, N, block.n)

    table = []
    for N in grid.N_candidates:
        base = [msrvm(block, scale_weights(block.n, N=N)) for block in blocks]
        for varpi in grid.varpi_candidates:
            rule = ThresholdRule(varpi)
            estimates = [threshold(b, rule).entries for b in base]
            score = 0.0
            for k in range(len(estimates) - 1):
                score += spectral_norm(estimates[k + 1] - estimates[k])
            table.append(TuningScore(N=N, varpi=varpi, score=score))

    best = min(table, key=lambda row: (row.score, row.varpi, row.N))
    return best.N, best.varpi, table
