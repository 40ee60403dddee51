"""Stationary fractional Gaussian noise generated by circulant embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import RngStream

#: Largest tolerated negative circulant eigenvalue; the fractional Gaussian
#: noise embedding is nonnegative definite in exact arithmetic, so anything
#: materially below zero signals a bug rather than a borderline input.
EIGENVALUE_TOLERANCE = 1e-8


class EmbeddingError(RuntimeError):
    """Raised when the circulant embedding is not nonnegative definite."""


@dataclass(frozen=True)
class FgnParams:
    """Length and Hurst index of a fractional Gaussian noise sample."""

    hurst: float
    n: int

    def __post_init__(self) -> None:
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"Hurst index must lie in (0, 1), got {self.hurst}")
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")

    @property
    def memory_parameter(self) -> float:
        """Covariance decay exponent D = 2(1 - H); in (0, 1) for H > 1/2."""
        return 2.0 * (1.0 - self.hurst)


def autocovariance(hurst: float, lags: int | np.ndarray) -> np.ndarray | float:
    """Exact autocovariance gamma(k) of unit-variance fractional Gaussian noise.

    gamma(k) = (|k+1|^2H - 2|k|^2H + |k-1|^2H) / 2, so gamma(0) = 1 and the
    H = 1/2 case degenerates to white noise.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got {hurst}")
    k = np.abs(np.asarray(lags, dtype=float))
    two_h = 2.0 * hurst
    out = 0.5 * (
        np.abs(k + 1.0) ** two_h - 2.0 * k**two_h + np.abs(k - 1.0) ** two_h
    )
    if np.isscalar(lags):
        return float(out)
    return out


def autocov_tail_constant(hurst: float) -> float:
    """Limit of gamma(k) * k^(2-2H): the constant H(2H - 1) for H > 1/2."""
    return hurst * (2.0 * hurst - 1.0)


def _embedding_eigenvalues(n: int, hurst: float) -> np.ndarray:
    # Circulant first row: gamma(0..m), then mirrored gamma(m-1..1), with the
    # embedding size the next power of two >= 2(n - 1) for FFT efficiency.
    m = 1
    while 2 * m < 2 * (n - 1):
        m *= 2
    size = 2 * m
    gamma = autocovariance(hurst, np.arange(m + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -EIGENVALUE_TOLERANCE:
        raise EmbeddingError(
            f"circulant embedding has eigenvalue {eig.min():.3e} < "
            f"-{EIGENVALUE_TOLERANCE:g} for n={n}, H={hurst}"
        )
    np.clip(eig, 0.0, None, out=eig)
    return eig


def sample(params: FgnParams, stream: RngStream, size: int | None = None) -> np.ndarray:
    """Sample fractional Gaussian noise paths with the exact target covariance.

    Davies-Harte construction: the covariance sequence is embedded in a
    circulant matrix whose eigenvalues come from one FFT; paths are the first
    n coordinates of the FFT of complex normals scaled by sqrt(eigenvalues).
    Returns shape (n,) when size is None, else (size, n).
    """
    n = params.n
    if n == 1:
        rng = stream.generator()
        out = rng.standard_normal(1 if size is None else (size, 1))
        return out[0] if size is None else out
    eig = _embedding_eigenvalues(n, params.hurst)
    m2 = eig.size
    m = m2 // 2
    batch = 1 if size is None else size

    rng = stream.generator()
    normals = rng.standard_normal((batch, m2))
    z = np.empty((batch, m2), dtype=complex)
    z[:, 0] = normals[:, 0]
    z[:, m] = normals[:, m]
    re = normals[:, 1:m]
    im = normals[:, m + 1:]
    half = (re + 1j * im) / np.sqrt(2.0)
    z[:, 1:m] = half
    z[:, m + 1:] = np.conj(half[:, ::-1])

    paths = np.fft.fft(np.sqrt(eig) * z, axis=1)[:, :n].real / np.sqrt(m2)
    return paths[0] if size is None else paths
