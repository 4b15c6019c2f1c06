"""Reproducible sampling of the matrix-variate distributions used by inference.

Streams are keyed by (seed, stream_index) plus an optional derivation path so
per-draw substreams are reproducible regardless of evaluation order.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovarianceError, DimensionMismatchError, UndefinedMomentError
from .matparam import symmetrize

_JITTER_START = 1e-12
_JITTER_STOP = 1e-8


@dataclass(frozen=True)
class RngStream:
    """Deterministic, splittable random stream."""

    seed: int
    stream_index: int = 0
    path: tuple = field(default_factory=tuple)

    def generator(self):
        key = (self.stream_index,) + tuple(self.path)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    def child(self, index):
        """Derive an independent substream; same index always gives the same stream."""
        return RngStream(self.seed, self.stream_index, tuple(self.path) + (int(index),))


def _as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


def chol_psd(cov, name="covariance"):
    """Cholesky factor with escalating diagonal jitter for marginally PSD inputs."""
    cov = symmetrize(cov)
    scale = max(np.max(np.abs(np.diag(cov))), 1.0)
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(cov + jitter * scale * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = _JITTER_START
            elif jitter < _JITTER_STOP:
                jitter = min(jitter * 100.0, _JITTER_STOP)
            else:
                raise DegenerateCovarianceError(
                    f"{name} is not positive semidefinite even after jitter {jitter:g}"
                )


@dataclass(frozen=True)
class InverseWishartParams:
    """Scale matrix and degrees of freedom of an inverse-Wishart distribution."""

    H: np.ndarray
    nu: float

    def __post_init__(self):
        h = symmetrize(self.H)
        object.__setattr__(self, "H", h)
        m = h.shape[0]
        if np.linalg.eigvalsh(h)[0] <= 0.0:
            raise DegenerateCovarianceError("inverse-Wishart scale matrix must be positive definite")
        if not self.nu > m + 1:
            raise UndefinedMomentError(
                f"inverse-Wishart needs nu > M+1 = {m + 1} for a finite mean, got nu={self.nu}"
            )

    @property
    def dim(self):
        return self.H.shape[0]


def sample_mvn(mean, cov, rng):
    """One multivariate normal draw."""
    gen = _as_generator(rng)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise DimensionMismatchError(
            f"mean length {mean.size} does not match covariance shape {cov.shape}"
        )
    if not np.any(cov):
        return mean.copy()
    factor = chol_psd(cov)
    return mean + factor @ gen.standard_normal(mean.size)


def sample_wishart(scale, dof, rng):
    """Wishart draw via the Bartlett construction; E[draw] = dof * scale."""
    gen = _as_generator(rng)
    scale = symmetrize(scale)
    m = scale.shape[0]
    if dof < m:
        raise ValueError(f"Wishart needs dof >= M = {m}, got {dof}")
    factor = chol_psd(scale, name="Wishart scale")
    a = np.zeros((m, m))
    il, jl = np.tril_indices(m, k=-1)
    a[il, jl] = gen.standard_normal(il.size)
    a[np.diag_indices(m)] = np.sqrt(gen.chisquare(dof - np.arange(m)))
    fa = factor @ a
    return symmetrize(fa @ fa.T)


def sample_inverse_wishart(params, rng):
    """Inverse-Wishart draw, realized as the inverse of a Wishart(H^-1, nu) draw."""
    h_inv = np.linalg.inv(params.H)
    w = sample_wishart(symmetrize(h_inv), params.nu, rng)
    return symmetrize(np.linalg.inv(w))


def iw_mean(params):
    """Mean H / (nu - M - 1); requires nu > M + 1."""
    m = params.dim
    if not params.nu > m + 1:
        raise UndefinedMomentError(f"mean undefined for nu={params.nu} <= M+1={m + 1}")
    return params.H / (params.nu - m - 1)


def iw_mode(params):
    """Mode H / (nu + M + 1)."""
    return params.H / (params.nu + params.dim + 1)
