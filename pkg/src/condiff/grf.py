"""Stationary isotropic Gaussian random fields on the unit square.

Fields are sampled at cell centers of a regular n-by-n grid by circulant
embedding: the covariance matrix is extended to a torus whose block
circulant structure is diagonalized by the 2D FFT, so one complex white
noise draw per torus mode yields an exact sample (up to clipping of
negative eigenvalue dust).
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import DomainError, EmbeddingNotPD

# Versioned RNG scheme: Philox4x64 keyed with SHA-256 of the seed pair.
# Recorded in dataset manifests; changing any of this breaks byte
# reproducibility and requires a new scheme name.
RNG_SCHEME = "philox4x64-sha256-v1"

# Padding policy: start at the next power of two >= 2n, double until the
# clipped negative spectral mass is below _PAD_STOP, stop at the 8n cap.
_PAD_STOP = 1e-9
_CLIP_LIMIT = 1e-3


class CovarianceFamily(str, Enum):
    CUBIC = "cubic"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary isotropic covariance with variance sigma^2 and length l.

    ``covariance_eval`` gives the value at distance d for the three
    supported families (cubic has compact support: zero for d >= l).
    """

    family: CovarianceFamily
    variance: float
    correlation_length: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "family", CovarianceFamily(self.family))
        if not self.variance > 0:
            raise DomainError(f"variance must be positive, got {self.variance}")
        if not self.correlation_length > 0:
            raise DomainError(
                f"correlation_length must be positive, got {self.correlation_length}"
            )


@dataclass(frozen=True)
class GridSpec:
    """Regular n-by-n grid of cells over the unit square.

    Cell (column i, row j) has its center at ((i + 0.5) h, (j + 0.5) h)
    with h = 1/n. Flat storage is row-major: index = j * n + i.
    """

    n: int

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 2):
            raise DomainError(f"grid side must be an integer >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def cell_count(self) -> int:
        return self.n * self.n

    def cell_centers(self) -> np.ndarray:
        """1D coordinates of cell centers along one axis."""
        return (np.arange(self.n) + 0.5) * self.h


@dataclass(eq=False)
class ScalarField:
    """Cell-centered scalar values, stored flat (length n^2, row-major)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.grid.cell_count:
            raise DomainError(
                f"expected {self.grid.cell_count} values, got {self.values.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("field values must be finite")

    def as_grid(self) -> np.ndarray:
        """View shaped (n, n); first axis is the row j, second the column i."""
        return self.values.reshape(self.grid.n, self.grid.n)


def _sha256_words(tag: bytes, *fields: int) -> np.ndarray:
    payload = tag + b"".join(struct.pack("<Q", f & 0xFFFFFFFFFFFFFFFF) for f in fields)
    digest = hashlib.sha256(payload).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)


@dataclass(frozen=True)
class RngSeed:
    """Reproducible seed: a master seed plus a per-use substream index.

    The same (master_seed, stream_index) always yields the same generator
    state, independent of process, thread, or call order.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        key = _sha256_words(b"condiff.rng.v1:", self.master_seed, self.stream_index)
        return np.random.Generator(np.random.Philox(key=key))


def derive_stream(label: str, *indices: int) -> int:
    """Stable 64-bit substream index for a labeled purpose ("phi", "f", ...)."""
    payload = b"condiff.stream.v1:" + label.encode("utf-8")
    payload += b"".join(struct.pack("<q", i) for i in indices)
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def covariance_eval(model: CovarianceModel, d) -> float | np.ndarray:
    """Covariance at distance d (scalar or array), per the model family.

    Cubic: sigma^2 (1 - 7 t^2 + 35/4 t^3 - 7/2 t^5 + 3/4 t^7) for t = d/l < 1,
    exactly zero beyond. Exponential: sigma^2 exp(-d/l). Gaussian:
    sigma^2 exp(-d^2/l^2).
    """
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(d_arr < 0):
        raise DomainError("distance must be nonnegative")
    var, ell = model.variance, model.correlation_length
    if model.family is CovarianceFamily.CUBIC:
        t = d_arr / ell
        poly = 1.0 - 7.0 * t**2 + 8.75 * t**3 - 3.5 * t**5 + 0.75 * t**7
        out = np.where(t < 1.0, var * poly, 0.0)
    elif model.family is CovarianceFamily.EXPONENTIAL:
        out = var * np.exp(-d_arr / ell)
    else:
        out = var * np.exp(-(d_arr**2) / ell**2)
    return float(out) if np.isscalar(d) or d_arr.ndim == 0 else out


@dataclass(eq=False)
class SpectralEmbedding:
    """Eigenvalues of the block-circulant covariance extension on a torus.

    ``sqrt_eigenvalues`` is the (m, m) array of square roots after clipping
    negatives to zero; ``clipped_fraction`` is the clipped negative mass as
    a fraction of the total absolute spectral mass. Immutable after build.
    """

    model: CovarianceModel
    grid: GridSpec
    torus_n: int
    sqrt_eigenvalues: np.ndarray
    clipped_fraction: float

    def sample(self, seed: RngSeed) -> ScalarField:
        """One zero-mean field draw; a pure function of the seed.

        Draws the real noise block first, then the imaginary one, filters
        with sqrt eigenvalues and keeps the real part of the inverse FFT on
        the n-by-n corner. This draw order is part of the RNG scheme.
        """
        rng = seed.generator()
        m = self.torus_n
        noise = rng.standard_normal((2, m, m))
        z = np.fft.ifft2(self.sqrt_eigenvalues * (noise[0] + 1j * noise[1]))
        n = self.grid.n
        values = (m * z.real[:n, :n]).ravel()
        return ScalarField(self.grid, values)


def _embedding_spectrum(model: CovarianceModel, grid: GridSpec, m: int):
    lag = np.minimum(np.arange(m), m - np.arange(m)) * grid.h
    dist = np.hypot(lag[:, None], lag[None, :])
    eigenvalues = np.fft.fft2(covariance_eval(model, dist)).real
    total = np.abs(eigenvalues).sum()
    clipped = -eigenvalues[eigenvalues < 0].sum()
    return eigenvalues, float(clipped / total) if clipped > 0 else 0.0


@lru_cache(maxsize=16)
def build_embedding(model: CovarianceModel, grid: GridSpec) -> SpectralEmbedding:
    """Build (and cache) the spectral embedding for a model/grid pair.

    The torus starts at the next power of two >= 2n, which already makes
    the embedding exact for every kernel whose support (or numerical
    support) fits in half the torus. Doubling continues while the clipped
    negative mass stays above tolerance, up to the 8n cap; beyond a 0.1%
    clipped fraction at the cap the combination is rejected as unsampleable.
    """
    n = grid.n
    m = 1 << (2 * n - 1).bit_length()
    while True:
        eigenvalues, clipped_fraction = _embedding_spectrum(model, grid, m)
        if clipped_fraction <= _PAD_STOP or m >= 8 * n:
            break
        m *= 2
    if clipped_fraction > _CLIP_LIMIT:
        raise EmbeddingNotPD(
            f"clipped negative spectral mass {clipped_fraction:.3e} exceeds "
            f"{_CLIP_LIMIT:.0e} at torus side {m} (cap 8n={8 * n}); "
            "this covariance/grid combination cannot be sampled faithfully",
            clipped_fraction=clipped_fraction,
        )
    return SpectralEmbedding(
        model=model,
        grid=grid,
        torus_n=m,
        sqrt_eigenvalues=np.sqrt(np.clip(eigenvalues, 0.0, None)),
        clipped_fraction=clipped_fraction,
    )


def sample_grf(model: CovarianceModel, grid: GridSpec, seed: RngSeed) -> ScalarField:
    """Sample one zero-mean Gaussian field with the model's covariance.

    Deterministic in (model, grid, seed); safe to call concurrently with
    distinct stream indices. The embedding is cached per (model, grid).
    """
    return build_embedding(model, grid).sample(seed)
