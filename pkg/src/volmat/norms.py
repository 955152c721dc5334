"""Matrix norms and the relative spectral error used to score estimates.

The l1 norm is the maximum absolute column sum, the l-infinity norm the
maximum absolute row sum, and for a symmetric matrix the spectral norm is
the largest absolute eigenvalue.  These satisfy
``spectral(A)**2 <= l1(A) * linf(A)`` for any matrix, and for symmetric
``A`` the l1 and l-infinity norms coincide.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import NonFiniteError, NotSymmetricError, VolMatrix, VolmatError

__all__ = [
    "NoConvergenceError",
    "ZeroTruthNormError",
    "l1_norm",
    "linf_norm",
    "spectral_norm",
    "relative_spectral_error",
]


class NoConvergenceError(VolmatError, RuntimeError):
    """Power iteration did not converge; carries the best estimate seen."""

    def __init__(self, best_estimate: float, iterations: int):
        self.best_estimate = best_estimate
        self.iterations = iterations
        super().__init__(
            f"spectral norm did not converge after {iterations} iterations; "
            f"best estimate {best_estimate!r}"
        )


class ZeroTruthNormError(VolmatError, ValueError):
    """The reference matrix has zero spectral norm."""


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, VolMatrix):
        return m.entries
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NonFiniteError(int(bad[0]), int(bad[1]))
    return a


def _max_abs_line_sum(a: np.ndarray) -> float:
    # Per-line sums use math.fsum, so equal value sequences give equal
    # results regardless of memory layout; symmetric matrices then have
    # exactly equal l1 and l-infinity norms.
    return max(math.fsum(line) for line in a)


def l1_norm(m) -> float:
    """Maximum absolute column sum."""
    a = np.abs(_as_matrix(m))
    return _max_abs_line_sum(a.T)


def linf_norm(m) -> float:
    """Maximum absolute row sum."""
    a = np.abs(_as_matrix(m))
    return _max_abs_line_sum(a)


@dataclass
class _PowerState:
    best: float
    iterations: int


def _power_iterate(B: np.ndarray, x: np.ndarray, tol: float, max_iter: int,
                   lower_bound: float, state: _PowerState) -> float | None:
    """Run power iteration on PSD ``B`` from start ``x``.

    Returns the converged top eigenvalue of ``B`` or None if the start
    stagnated (landed on a sub-dominant eigenvector or the null space).
    """
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return None
    x = x / nx
    while state.iterations < max_iter:
        state.iterations += 1
        y = B @ x
        rayleigh = float(x @ y)
        state.best = max(state.best, rayleigh)
        residual = np.linalg.norm(y - rayleigh * x)
        if residual <= 0.5 * tol * rayleigh:
            if rayleigh >= lower_bound * (1.0 - 1e-8):
                return rayleigh
            return None  # converged below a known lower bound: wrong subspace
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return None  # start lay in the null space
        x = y / ny
    raise NoConvergenceError(
        best_estimate=math.sqrt(max(state.best, lower_bound)),
        iterations=state.iterations,
    )


def spectral_norm(m, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest absolute eigenvalue of a symmetric matrix.

    Power iteration runs on ``B = A @ A`` so that a spectrum with a
    ``+lambda / -lambda`` tie still has a unique dominant eigenvalue;
    the square root of the converged Rayleigh quotient is returned.  The
    start vector is the normalized all-ones vector, restarting with basis
    vectors whenever an iteration stagnates on a sub-dominant eigenvector.
    Convergence is declared when the eigen-residual of ``B`` is below
    ``tol`` relative to the Rayleigh quotient, which bounds the relative
    error of the returned value by about ``tol``.

    Parameters
    ----------
    m : VolMatrix or array_like
        Exactly symmetric matrix.
    tol : float
        Relative tolerance on the returned value.
    max_iter : int
        Total iteration budget across restarts.

    Raises
    ------
    NoConvergenceError
        If the budget is exhausted; the error carries the best estimate.
    """
    A = _as_matrix(m)
    if not np.array_equal(A, A.T):
        raise NotSymmetricError("spectral_norm requires an exactly symmetric matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = A.shape[0]
    scale = float(np.abs(A).max())
    if scale == 0.0:
        return 0.0
    An = A / scale
    B = An @ An
    # Cheap lower bounds on the top eigenvalue of B: diagonal entries and
    # two power steps from every basis vector (Rayleigh quotients of the
    # columns of B).  A converged Rayleigh quotient below these is a
    # stagnation on the wrong eigenvector, not convergence.
    B2 = B @ B
    diag_b2 = np.diagonal(B2)
    col_rayleigh = np.einsum("ij,ji->i", B2, B)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(diag_b2 > 0.0, col_rayleigh / diag_b2, 0.0)
    lower_bound = float(max(np.diagonal(B).max(), np.sqrt(diag_b2).max(), ratios.max()))

    state = _PowerState(best=0.0, iterations=0)
    starts = [np.full(p, 1.0)] + [None] * p  # None marks basis vector i-1
    for i, start in enumerate(starts):
        if start is None:
            start = np.zeros(p)
            start[i - 1] = 1.0
        top = _power_iterate(B, start, tol, max_iter, lower_bound, state)
        if top is not None:
            return math.sqrt(top) * scale
    # Every start stagnated below the lower bound; numerically impossible
    # for a symmetric matrix, but fail loudly rather than silently.
    raise NoConvergenceError(
        best_estimate=math.sqrt(max(state.best, lower_bound)) * scale,
        iterations=state.iterations,
    )


def relative_spectral_error(estimate, truth, tol: float = 1e-10,
                            max_iter: int = 100_000) -> float:
    """Spectral norm of ``estimate - truth`` relative to the norm of ``truth``."""
    est = _as_matrix(estimate)
    ref = _as_matrix(truth)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    denom = spectral_norm(ref, tol=tol, max_iter=max_iter)
    if denom == 0.0:
        raise ZeroTruthNormError("reference matrix has zero spectral norm")
    return spectral_norm(est - ref, tol=tol, max_iter=max_iter) / denom
