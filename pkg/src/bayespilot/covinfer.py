"""Bayesian inference over the cross-model output covariance.

Two posterior families are supported.  The inverse-Wishart posterior is fully
conjugate and cheap.  The gamma-Gaussian posterior parameterizes the
correlation matrix through the matrix-log vector gamma and the per-model
standard deviations through log sigma; its likelihood is approximated by
simulating the sampling distribution of the biased covariance estimate and
moment-matching a Gaussian, which keeps the update conjugate in closed form.

Posteriors are immutable values; projected posteriors (what the posterior
would look like after a hypothetical batch of additional pilot rows) are
computed without drawing any new model evaluations.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DimensionMismatchError,
    InferenceDegeneracyError,
    InsufficientDataError,
    TransformDomainError,
    FixedPointDivergenceError,
    TruncationError,
)
from .matparam import (
    check_covariance,
    compose_cov,
    decompose_cov,
    gamma_forward,
    gamma_inverse,
    symmetrize,
    vecl_inverse_size,
)
from .randmat import (
    InverseWishartParams,
    RngStream,
    sample_inverse_wishart,
    sample_mvn,
    sample_wishart,
)

_RANK_EIG_TOL = 1e-12


@dataclass(frozen=True)
class PilotData:
    """Accumulated pilot evaluations: one row per input, one column per model."""

    outputs: np.ndarray
    cost_per_row: float

    def __post_init__(self):
        outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if outputs.ndim != 2:
            raise DimensionMismatchError("pilot outputs must be a 2-d array")
        if not np.all(np.isfinite(outputs)):
            raise ValueError("pilot outputs contain non-finite entries")
        if self.cost_per_row < 0.0:
            raise ValueError("cost per pilot row must be nonnegative")
        object.__setattr__(self, "outputs", outputs)

    @property
    def n_rows(self):
        return self.outputs.shape[0]

    @property
    def n_models(self):
        return self.outputs.shape[1]

    def extended(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != self.n_models:
            raise DimensionMismatchError(
                f"new pilot rows have {rows.shape[1]} columns, expected {self.n_models}"
            )
        return PilotData(np.vstack([self.outputs, rows]), self.cost_per_row)


@dataclass(frozen=True)
class IWPosterior:
    """Inverse-Wishart posterior over the covariance matrix."""

    h: np.ndarray
    nu: float

    def __post_init__(self):
        h = symmetrize(np.asarray(self.h, dtype=float))
        m = h.shape[0]
        if np.linalg.eigvalsh(h).min() <= 0.0:
            raise ValueError("inverse-Wishart scale matrix must be positive definite")
        if self.nu <= m + 1:
            raise ValueError("inverse-Wishart dof must exceed dim + 1")
        object.__setattr__(self, "h", h)

    @property
    def dim(self):
        return self.h.shape[0]

    def as_params(self):
        return InverseWishartParams(self.h, self.nu)


@dataclass(frozen=True)
class GammaGaussianPosterior:
    """Independent Gaussians over gamma (matrix-log correlation) and log sigma.

    ``full_cov`` selects whether the gamma block carries a full covariance
    matrix or is restricted to its diagonal.  ``prior`` records the prior the
    posterior was updated from, so projected posteriors can re-run the update
    from the same starting point; a prior itself carries ``prior=None``.
    """

    mean_gamma: np.ndarray
    cov_gamma: np.ndarray
    mean_logsigma: np.ndarray
    var_logsigma: np.ndarray
    full_cov: bool = True
    prior: "GammaGaussianPosterior | None" = None

    def __post_init__(self):
        mg = np.asarray(self.mean_gamma, dtype=float)
        cg = symmetrize(np.asarray(self.cov_gamma, dtype=float))
        ml = np.asarray(self.mean_logsigma, dtype=float)
        vl = np.asarray(self.var_logsigma, dtype=float)
        m = vecl_inverse_size(mg.size)
        if ml.size != m or vl.size != m:
            raise DimensionMismatchError(
                "log-sigma parameters are inconsistent with the gamma length"
            )
        if cg.shape != (mg.size, mg.size):
            raise DimensionMismatchError("gamma covariance has the wrong shape")
        if np.linalg.eigvalsh(cg).min() < -1e-10 or np.any(vl < 0.0):
            raise ValueError("posterior covariance blocks must be PSD")
        if not self.full_cov:
            cg = np.diag(np.diag(cg))
        object.__setattr__(self, "mean_gamma", mg)
        object.__setattr__(self, "cov_gamma", cg)
        object.__setattr__(self, "mean_logsigma", ml)
        object.__setattr__(self, "var_logsigma", vl)

    @property
    def dim(self):
        return self.mean_logsigma.size


@dataclass(frozen=True)
class InferenceConfig:
    """Knobs for the simulation-based gamma-Gaussian likelihood."""

    rng: RngStream
    n_sim: int = 1000
    trunc_quantiles: tuple = (0.2, 0.8)
    projection_pin_logsigma_mean: bool = True

    def __post_init__(self):
        lo, hi = self.trunc_quantiles
        if not (0.0 < lo < hi < 1.0):
            raise ValueError("truncation quantiles must satisfy 0 < lo < hi < 1")
        if self.n_sim < 10:
            raise ValueError("n_sim too small for moment matching")


def scatter_and_stats(data):
    """Column means, biased covariance, and the centered scatter matrix."""

    if data.n_rows < 2:
        raise InsufficientDataError(
            f"need at least 2 pilot rows, have {data.n_rows}"
        )
    mean = data.outputs.mean(axis=0)
    centered = data.outputs - mean
    scatter = centered.T @ centered
    biased_cov = symmetrize(scatter / data.n_rows)
    return mean, biased_cov, symmetrize(scatter)


def iw_update(prior, data):
    """Conjugate inverse-Wishart update from pilot rows."""

    _, _, scatter = scatter_and_stats(data)
    h = prior.h if isinstance(prior, IWPosterior) else prior.scale
    nu = prior.nu
    if scatter.shape[0] != h.shape[0]:
        raise DimensionMismatchError("pilot data dimension does not match the prior")
    return IWPosterior(h + scatter, nu + data.n_rows)


def _gamma_likelihood(biased_cov, dof, m, cfg, full_cov):
    """Moment-matched Gaussian likelihood for (gamma, log sigma).

    Simulates the sampling distribution of the biased covariance estimate by
    drawing Wishart covariances with scale biased_cov/dof and dof degrees of
    freedom, mapping each draw through the (gamma, log sigma)
    parameterization.  Gamma rows falling outside the componentwise
    [q_lo, q_hi] quantile box are dropped before moment matching (the
    matrix-log coordinates have heavy tails at small dof); log-sigma moments
    use the full draw set.
    """

    n_sim = cfg.n_sim
    if n_sim < 10 * m * m:
        raise ValueError(f"n_sim must be at least {10 * m * m} for dimension {m}")
    scale = biased_cov / dof
    p = m * (m - 1) // 2
    gammas = np.empty((n_sim, p))
    logsigmas = np.empty((n_sim, m))
    for i in range(n_sim):
        gen = cfg.rng.child(i).generator()
        for _attempt in range(10):
            draw = sample_wishart(scale, dof, gen)
            try:
                sigma, corr = decompose_cov(draw)
                gammas[i] = gamma_forward(corr)
            except (TransformDomainError, ValueError):
                continue
            logsigmas[i] = np.log(sigma)
            break
        else:
            raise InferenceDegeneracyError(
                "simulated covariance repeatedly failed the gamma transform; "
                "more pilot samples are needed"
            )
    lo, hi = cfg.trunc_quantiles
    lo_box = np.quantile(gammas, lo, axis=0)
    hi_box = np.quantile(gammas, hi, axis=0)
    keep = np.all((gammas >= lo_box) & (gammas <= hi_box), axis=1)
    kept = gammas[keep]
    if kept.shape[0] < 2:
        raise TruncationError(
            "quantile truncation removed all simulated gamma rows"
        )
    mu_g = kept.mean(axis=0)
    if full_cov:
        cov_g = np.atleast_2d(np.cov(kept, rowvar=False))
    else:
        cov_g = np.diag(kept.var(axis=0, ddof=1))
    mu_ls = logsigmas.mean(axis=0)
    var_ls = logsigmas.var(axis=0, ddof=1)
    return mu_g, symmetrize(cov_g), mu_ls, var_ls


def _gaussian_product(mu_prior, cov_prior, mu_lik, cov_lik):
    """Conjugate product of two Gaussians, stable for near-degenerate factors.

    Uses the symmetric form cov_post = cov_lik (cov_prior + cov_lik)^-1
    cov_prior, which satisfies precision additivity without ever inverting a
    near-zero covariance on its own.
    """

    total = cov_prior + cov_lik
    solve = np.linalg.solve
    cov_post = symmetrize(cov_lik @ solve(total, cov_prior))
    mu_post = cov_prior @ solve(total, mu_lik) + cov_lik @ solve(total, mu_prior)
    return mu_post, cov_post


def _gamma_update_core(prior, biased_cov, dof, cfg):
    m = prior.dim
    root = prior.prior if prior.prior is not None else prior
    mu_g, cov_g, mu_ls, var_ls = _gamma_likelihood(
        biased_cov, dof, m, cfg, full_cov=prior.full_cov
    )
    mean_g, cov_post_g = _gaussian_product(
        root.mean_gamma, root.cov_gamma, mu_g, cov_g
    )
    mean_ls, cov_post_ls = _gaussian_product(
        root.mean_logsigma, np.diag(root.var_logsigma), mu_ls, np.diag(var_ls)
    )
    return GammaGaussianPosterior(
        mean_gamma=mean_g,
        cov_gamma=cov_post_g,
        mean_logsigma=mean_ls,
        var_logsigma=np.diag(cov_post_ls),
        full_cov=prior.full_cov,
        prior=root,
    )


def gamma_update(prior, data, cfg):
    """Update a gamma-Gaussian posterior from pilot rows.

    The likelihood is a moment-matched Gaussian over (gamma, log sigma)
    obtained by simulating the sampling spread of the biased covariance
    estimate at the observed point estimate.
    """

    m = prior.dim
    if data.n_models != m:
        raise DimensionMismatchError("pilot data dimension does not match the prior")
    if data.n_rows < m + 1:
        raise InsufficientDataError(
            f"need at least {m + 1} pilot rows for a full-rank covariance, "
            f"have {data.n_rows}"
        )
    _, biased_cov, _ = scatter_and_stats(data)
    if np.linalg.eigvalsh(biased_cov).min() <= _RANK_EIG_TOL * np.trace(biased_cov) / m:
        raise InferenceDegeneracyError(
            "biased sample covariance is rank deficient; draw more pilot samples"
        )
    return _gamma_update_core(prior, biased_cov, data.n_rows, cfg)


def project_posterior(post, data, n_additional, cfg):
    """Posterior after a hypothetical batch of additional pilot rows.

    Assumes the future rows reproduce the per-sample statistics of the data
    observed so far, so no model evaluations are spent.  For the
    inverse-Wishart family this scales the scatter; for the gamma-Gaussian
    family the likelihood simulation is re-run at the tightened degrees of
    freedom, optionally pinning the log-sigma posterior mean at its current
    value.
    """

    if n_additional == 0:
        return post
    if n_additional < 0:
        raise ValueError("n_additional must be nonnegative")
    n = data.n_rows
    if isinstance(post, IWPosterior):
        _, _, scatter = scatter_and_stats(data)
        return IWPosterior(
            post.h + scatter * (n_additional / n), post.nu + n_additional
        )
    _, biased_cov, _ = scatter_and_stats(data)
    root = post.prior if post.prior is not None else post
    projected = _gamma_update_core(root, biased_cov, n + n_additional, cfg)
    if cfg.projection_pin_logsigma_mean:
        projected = replace(projected, mean_logsigma=post.mean_logsigma)
    return projected


def posterior_point_estimate(post):
    """Posterior-mean covariance matrix."""

    if isinstance(post, IWPosterior):
        m = post.dim
        return check_covariance(post.h / (post.nu - m - 1), name="posterior mean")
    sigma = np.exp(post.mean_logsigma)
    corr = gamma_inverse(post.mean_gamma)
    return compose_cov(sigma, corr)


def posterior_sample(post, n, rng):
    """Draw n covariance matrices from the posterior.

    Each slot uses its own child stream so results are independent of batching
    order; gamma-transform failures are redrawn in place (up to 10 tries).
    """

    if n == 0:
        return []
    if isinstance(post, IWPosterior):
        params = post.as_params()
        return [
            sample_inverse_wishart(params, rng.child(i).generator())
            for i in range(n)
        ]
    draws = []
    sd_ls = np.sqrt(post.var_logsigma)
    warm_diag = None
    for i in range(n):
        gen = rng.child(i).generator()
        for _attempt in range(10):
            gamma = sample_mvn(post.mean_gamma, post.cov_gamma, gen)
            logsigma = post.mean_logsigma + sd_ls * gen.standard_normal(post.dim)
            try:
                corr, warm_diag = gamma_inverse(
                    gamma, diag0=warm_diag, return_diag=True
                )
            except (FixedPointDivergenceError, TransformDomainError):
                warm_diag = None
                continue
            draws.append(compose_cov(np.exp(logsigma), corr))
            break
        else:
            raise InferenceDegeneracyError(
                "posterior draw repeatedly failed the inverse gamma transform"
            )
    return draws
