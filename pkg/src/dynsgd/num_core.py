"""Numerical primitives: normal CDF/quantile, Cholesky, correlated sampling, RNG streams."""

from __future__ import annotations

import math
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Named substreams used throughout the harness.
STREAM_INSTANCE = 0
STREAM_EVAL = 1
STREAM_OPTIMIZE = 2


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by PCG64 seeded through ``SeedSequence(seed, spawn_key=(stream_id,))``,
    so distinct stream ids give independent sequences for the same seed.
    A stream is single-owner state; give each worker its own.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be nonnegative")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)


def _cdf_scalar(z: float) -> float:
    if not math.isfinite(z):
        raise ValueError(f"normal_cdf needs a finite argument, got {z!r}")
    return 0.5 * math.erfc(-z / _SQRT2)


def normal_cdf(z: ArrayLike) -> ArrayLike:
    """Standard normal CDF, via the complementary error function."""
    if np.ndim(z) == 0:
        return _cdf_scalar(float(z))
    arr = np.asarray(z, dtype=float)
    return np.array([_cdf_scalar(v) for v in arr.ravel()]).reshape(arr.shape)


# Acklam's rational approximation; relative error about 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF.

    Acklam's rational approximation followed by one Halley correction
    against :func:`normal_cdf`, which brings the error to near machine
    precision in the central range.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"normal_quantile needs 0 < p < 1, got {p!r}")
    if p == 0.5:
        return 0.0
    x = _acklam(p)
    # Halley step; evaluate the residual in the tail where it is better conditioned.
    if p < 0.5:
        e = 0.5 * math.erfc(-x / _SQRT2) - p
    else:
        e = (1.0 - p) - 0.5 * math.erfc(x / _SQRT2)
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


class CholeskyError(ValueError):
    """Raised when a matrix is not positive semidefinite within tolerance."""

    def __init__(self, pivot_index: int, pivot_value: float):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"matrix is not positive semidefinite: pivot {pivot_index} = {pivot_value:.6g}"
        )


def cholesky_factor(m, neg_tol: float = 1e-10, clamp: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Pivots that are tiny or slightly negative (down to ``-neg_tol * trace(m)``)
    are clamped to ``clamp * trace(m)``; anything more negative raises
    :class:`CholeskyError` naming the pivot.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"cholesky_factor needs a square matrix, got shape {a.shape}")
    scale = 1.0 + np.max(np.abs(a)) if a.size else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("cholesky_factor needs a symmetric matrix")
    n = a.shape[0]
    tr = float(np.trace(a))
    floor = clamp * tr
    L = np.zeros_like(a)
    for j in range(n):
        row = L[j, :j]
        d = a[j, j] - row @ row
        if d < floor:
            if d < -neg_tol * max(tr, 0.0):
                raise CholeskyError(j, d)
            d = floor
        if d <= 0.0:
            # zero matrix (trace 0): the column stays zero
            continue
        ljj = math.sqrt(d)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ row) / ljj
    return L


def sample_correlated_normals(L: np.ndarray, count: int, rng: RngStream) -> np.ndarray:
    """Draw ``count`` rows ``z = L u`` with ``u`` i.i.d. standard normal."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"factor must be square, got shape {L.shape}")
    if count < 1:
        raise ValueError("count must be positive")
    u = rng.standard_normal((count, L.shape[0]))
    return u @ L.T


def random_correlation_matrix(dim: int, num_factors: int, rng: RngStream) -> np.ndarray:
    """Random factor-model correlation matrix.

    ``C = normalize(B B^T + D)`` with Gaussian loadings ``B`` (dim x num_factors)
    and a positive diagonal ``D``; normalized to unit diagonal.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    if not 1 <= num_factors <= dim:
        raise ValueError(f"need 1 <= num_factors <= dim, got {num_factors} for dim {dim}")
    B = rng.standard_normal((dim, num_factors))
    idio = rng.uniform(0.2, 1.0, size=dim) * num_factors
    cov = B @ B.T + np.diag(idio)
    s = np.sqrt(np.diag(cov))
    corr = cov / np.outer(s, s)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def constant_correlation_matrix(dim: int, rho: float) -> np.ndarray:
    """Equicorrelation matrix with off-diagonal ``rho``."""
    if dim < 1:
        raise ValueError("dim must be positive")
    corr = np.full((dim, dim), float(rho))
    np.fill_diagonal(corr, 1.0)
    return corr
