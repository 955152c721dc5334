"""Sine-transform whitening of differenced noisy observations.

Differencing an i.i.d. noise sequence yields a covariance proportional to
the tridiagonal Toeplitz matrix with 2 on the diagonal and -1 next to it.
Its eigenvectors form the discrete sine basis, so rotating the scaled
difference vectors of each asset by the sine-transform matrix produces
vectors ``U_1..U_n`` that are independent across the frequency index, with
covariance equal to the integrated volatility matrix plus an inflation
``(a_l - 1) I`` where ``a_l = 1 + kappa**2 * n * phi_l``.  This is exposed
as a diagnostic: only the low frequencies (``l`` up to about ``sqrt(n)``)
carry information about the volatility matrix.

The sine-transform matrix is materialized densely (intended for
``n <= 4096``); a fast transform is out of scope.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np

from .core import PricePanel, VolmatError

__all__ = [
    "ToeplitzSpectrum",
    "WhitenedSeries",
    "toeplitz_eigenvalues",
    "tridiagonal_toeplitz",
    "dst_matrix",
    "toeplitz_spectrum",
    "whiten",
]


def toeplitz_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues ``phi_l = 4 sin(pi l / (2 (n + 1)))**2`` for ``l = 1..n``.

    These are the eigenvalues of :func:`tridiagonal_toeplitz`, returned in
    ascending order; all lie strictly between 0 and 4.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    l = np.arange(1, n + 1, dtype=np.float64)
    return 4.0 * np.sin(np.pi * l / (2.0 * (n + 1))) ** 2


def tridiagonal_toeplitz(n: int) -> np.ndarray:
    """The n-by-n matrix with 2 on the diagonal and -1 on the off-diagonals."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    out = 2.0 * np.eye(n)
    off = np.arange(n - 1)
    out[off, off + 1] = -1.0
    out[off + 1, off] = -1.0
    return out


@functools.lru_cache(maxsize=8)
def _dst_matrix_cached(n: int) -> np.ndarray:
    # sin(l r pi / (n + 1)) depends on l*r only modulo 2(n + 1); reducing
    # the integer product first keeps the arguments small and the entries
    # accurate to machine precision even for large n.
    l = np.arange(1, n + 1, dtype=np.int64)
    lr = np.outer(l, l) % (2 * (n + 1))
    q = math.sqrt(2.0 / (n + 1)) * np.sin(np.pi * lr / (n + 1))
    q.setflags(write=False)
    return q


def dst_matrix(n: int) -> np.ndarray:
    """Orthogonal discrete sine transform matrix of size ``n``.

    Entry ``(l, r)`` (1-based) is ``sqrt(2 / (n + 1)) * sin(l r pi / (n + 1))``.
    The matrix is symmetric, orthogonal to machine precision, and
    diagonalizes :func:`tridiagonal_toeplitz` with the eigenvalues from
    :func:`toeplitz_eigenvalues`.  The returned array is read-only and
    cached; copy before mutating.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return _dst_matrix_cached(n)


@dataclass(frozen=True, eq=False)
class ToeplitzSpectrum:
    """Eigenvalues of the differencing Toeplitz matrix plus noise factors.

    ``phi`` holds the ``n`` ascending eigenvalues and ``a`` the
    noise-inflation factors ``a_l = 1 + kappa**2 * n * phi_l`` for noise
    standard deviation ``kappa``.  The factors are strictly increasing and
    at least 1.
    """

    n: int
    phi: np.ndarray
    a: np.ndarray
    kappa: float

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        if phi.shape != (self.n,) or a.shape != (self.n,):
            raise ValueError("phi and a must both have length n")
        if not (np.all(np.diff(phi) > 0) and phi[0] > 0 and phi[-1] < 4):
            raise ValueError("phi must increase strictly within (0, 4)")
        if not (np.all(a >= 1.0) and np.all(np.diff(a) > 0)):
            raise ValueError("a must be >= 1 and strictly increasing")
        phi.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "a", a)


def toeplitz_spectrum(n: int, kappa: float) -> ToeplitzSpectrum:
    """Spectrum and noise-inflation factors for sample size ``n``."""
    if not kappa > 0:
        raise VolmatError(f"kappa must be positive, got {kappa}")
    phi = toeplitz_eigenvalues(n)
    return ToeplitzSpectrum(n=n, phi=phi, a=1.0 + kappa * kappa * n * phi, kappa=kappa)


@dataclass(frozen=True, eq=False)
class WhitenedSeries:
    """Sine-transformed difference vectors with their inflation factors.

    Column ``l - 1`` of ``u`` is the p-vector ``U_l``; under the model with
    i.i.d. Gaussian noise of standard deviation ``kappa`` the ``U_l`` are
    independent with covariance ``Gamma + (a_l - 1) I``.
    """

    u: np.ndarray
    spectrum: ToeplitzSpectrum

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        if u.ndim != 2 or u.shape[1] != self.spectrum.n:
            raise ValueError("u must be a p-by-n matrix matching the spectrum")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def p(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def a(self) -> np.ndarray:
        return self.spectrum.a

    @property
    def phi(self) -> np.ndarray:
        return self.spectrum.phi


def whiten(panel: PricePanel, kappa: float) -> WhitenedSeries:
    """Rotate each asset's scaled difference vector into the sine basis.

    For asset ``i`` the length-``n`` vector of one-step differences, scaled
    by ``sqrt(n)``, is right-multiplied by :func:`dst_matrix`.  The
    differencing starts from the panel's column 0, so the initial
    observation acts as the baseline.  Whitening is linear in the panel
    values.

    Note: the independence and covariance statements for the output assume
    the initial observation is pure noise.  For a panel whose first stamp
    carries a genuine price, the low-frequency columns deviate from the
    nominal covariance target; treat the output as a diagnostic there.
    """
    values = panel.values
    n = panel.n
    diffs = math.sqrt(n) * (values[:, 1:] - values[:, :-1])
    u = diffs @ dst_matrix(n)
    return WhitenedSeries(u=u, spectrum=toeplitz_spectrum(n, kappa))
