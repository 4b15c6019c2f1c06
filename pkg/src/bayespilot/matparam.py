"""Covariance decomposition and the log-correlation (gamma) transform.

A covariance matrix factors as Sigma = D R D with D the diagonal of standard
deviations and R the correlation matrix.  Strictly positive-definite
correlation matrices are mapped bijectively to unconstrained vectors by
taking the strictly-lower triangle of the matrix logarithm; the inverse map
is recovered by a diagonal fixed-point iteration.
"""

import math

import numpy as np

from .errors import (
    DegenerateCovarianceError,
    DimensionMismatchError,
    FixedPointDivergenceError,
    TransformDomainError,
)

SYMMETRY_TOL = 1e-12
PSD_EIG_FLOOR = -1e-10
_LOG_EIG_CLAMP = 1e-14

DEFAULT_FIXED_POINT_TOL = 1e-7
DEFAULT_FIXED_POINT_MAXITER = 1000


def symmetrize(a):
    """Average a matrix with its transpose."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def check_covariance(s, name="covariance"):
    """Validate symmetry and positive semidefiniteness, return symmetrized copy."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {s.shape}")
    if np.max(np.abs(s - s.T)) > max(SYMMETRY_TOL, SYMMETRY_TOL * np.max(np.abs(s))):
        raise DegenerateCovarianceError(f"{name} is not symmetric")
    s = symmetrize(s)
    w = np.linalg.eigvalsh(s)
    if w[0] < PSD_EIG_FLOOR * max(1.0, abs(w[-1])):
        raise DegenerateCovarianceError(
            f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})"
        )
    return s


def check_correlation(r, name="correlation"):
    """Validate correlation-matrix invariants, return symmetrized copy with unit diagonal."""
    r = check_covariance(r, name=name)
    if np.max(np.abs(np.diag(r) - 1.0)) > 1e-12:
        raise DegenerateCovarianceError(f"{name} diagonal is not one")
    off = r - np.eye(r.shape[0])
    if np.max(np.abs(off)) > 1.0 + 1e-12:
        raise DegenerateCovarianceError(f"{name} has off-diagonal entries outside [-1, 1]")
    np.fill_diagonal(r, 1.0)
    return r


def decompose_cov(s):
    """Split a covariance matrix into standard deviations and a correlation matrix."""
    s = symmetrize(s)
    d = np.diag(s)
    bad = np.flatnonzero(d <= 0.0)
    if bad.size:
        raise DegenerateCovarianceError(
            f"nonpositive diagonal entry at index {bad[0]} ({d[bad[0]]:.3e})"
        )
    sigma = np.sqrt(d)
    r = s / np.outer(sigma, sigma)
    np.fill_diagonal(r, 1.0)
    return sigma, symmetrize(r)


def compose_cov(sigma, r):
    """Rebuild a covariance matrix from standard deviations and a correlation matrix."""
    sigma = np.asarray(sigma, dtype=float)
    r = np.asarray(r, dtype=float)
    if sigma.ndim != 1 or r.shape != (sigma.size, sigma.size):
        raise DimensionMismatchError(
            f"sigma length {sigma.size} does not match correlation shape {r.shape}"
        )
    return symmetrize(r * np.outer(sigma, sigma))


def vecl(a):
    """Strictly-lower-triangular entries in column-major order.

    Ordering is (2,1),(3,1),...,(M,1),(3,2),...,(M,M-1) in one-based indices,
    giving a vector of length M(M-1)/2.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    iu, ju = np.triu_indices(a.shape[0], k=1)
    return a[ju, iu].copy()


def vecl_inverse_size(length):
    """Matrix dimension M with M(M-1)/2 == length."""
    m = int(round((1.0 + np.sqrt(1.0 + 8.0 * length)) / 2.0))
    if m < 2 or m * (m - 1) // 2 != length:
        raise DimensionMismatchError(f"{length} is not a triangular number")
    return m


def fill_lower(gamma):
    """Place a vecl vector back into a strictly-lower triangle (zeros elsewhere)."""
    gamma = np.asarray(gamma, dtype=float)
    m = vecl_inverse_size(gamma.size)
    a = np.zeros((m, m))
    iu, ju = np.triu_indices(m, k=1)
    a[ju, iu] = gamma
    return a


def _eigh_fun(a, fun):
    w, q = np.linalg.eigh(symmetrize(a))
    return symmetrize((q * fun(w)) @ q.T)


def logm_sym(a, clamp=_LOG_EIG_CLAMP):
    """Principal matrix logarithm of a symmetric PD matrix via eigendecomposition."""
    return _eigh_fun(a, lambda w: np.log(np.maximum(w, clamp)))


def expm_sym(a):
    """Matrix exponential of a symmetric matrix via eigendecomposition."""
    return _eigh_fun(a, np.exp)


def gamma_forward(r):
    """Map a strictly PD correlation matrix to its unconstrained parameters."""
    r = symmetrize(r)
    w = np.linalg.eigvalsh(r)
    if w[0] <= 1e-12:
        raise TransformDomainError(
            f"correlation matrix is singular or indefinite (min eigenvalue {w[0]:.3e})"
        )
    return vecl(logm_sym(r))


def gamma_inverse(
    gamma,
    tol=DEFAULT_FIXED_POINT_TOL,
    max_iter=DEFAULT_FIXED_POINT_MAXITER,
    diag0=None,
    return_diag=False,
):
    """Recover the correlation matrix for a vector of unconstrained parameters.

    Diagonal fixed-point iteration: adjust diag(A) until exp(A) has a unit
    diagonal, then overwrite the diagonal with ones exactly.  diag0 seeds the
    iteration (the converged diagonal of a nearby vector cuts the iteration
    count sharply); return_diag additionally returns the converged diagonal
    for such reuse.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    a = fill_lower(gamma)
    a = a + a.T
    m = a.shape[0]
    if diag0 is not None and np.ndim(diag0) == 1 and len(diag0) == m:
        a[np.diag_indices(m)] = diag0
    threshold = np.sqrt(m) * tol
    d = np.inf
    it = 0
    diag_idx = np.diag_indices(m)
    while d > threshold:
        if it >= max_iter:
            raise FixedPointDivergenceError(
                f"fixed point not converged after {max_iter} iterations "
                f"(residual {d:.3e}, threshold {threshold:.3e})",
                residual=d,
                iterations=it,
            )
        w, q = np.linalg.eigh(a)
        delta = np.log(((q * np.exp(w)) * q).sum(axis=1))
        a[diag_idx] -= delta
        d = math.sqrt(float(delta @ delta))
        it += 1
    r = expm_sym(a)
    np.fill_diagonal(r, 1.0)
    r = symmetrize(r)
    w = np.linalg.eigvalsh(r)
    if w[0] <= 0.0:
        if w[0] < -1e-6 * max(1.0, w[-1]):
            raise TransformDomainError(
                f"recovered matrix lost positive semidefiniteness "
                f"(min eigenvalue {w[0]:.3e})"
            )
        # exp of a symmetric matrix is positive definite; a tiny negative
        # eigenvalue here is roundoff from restoring the unit diagonal.
        # Shrink toward the identity just enough to restore definiteness.
        c = 1e-12 - w[0]
        r = (r + c * np.eye(m)) / (1.0 + c)
    np.fill_diagonal(r, 1.0)
    if return_diag:
        return r, a[diag_idx].copy()
    return r
