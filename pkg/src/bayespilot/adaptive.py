"""Adaptive pilot-sampling termination loop.

Pilot rows are drawn in batches; after each batch the covariance posterior is
recomputed from all accumulated rows, and the expected loss of committing now
is compared against projected losses after hypothetical future batches.  When
every projected loss exceeds the current loss, pilot sampling stops and the
remaining budget funds the final estimator.  The posterior also yields a
sample-based picture of the final estimator's variance.
"""

from dataclasses import dataclass, replace

import numpy as np

from .acv import (
    FAMILIES,
    EstimatorConfig,
    estimator_variance,
    evaluate_acv,
    min_family_budget,
    optimal_weights,
    optimize_allocation,
)
from .covinfer import (
    GammaGaussianPosterior,
    IWPosterior,
    PilotData,
    gamma_update,
    iw_update,
    posterior_point_estimate,
    posterior_sample,
)
from .errors import AdaptiveRunError, BudgetInfeasibleError
from .loss import calibrate_nmc, expected_loss, projected_expected_loss
from .randmat import RngStream

_FINAL_RUN_STREAM = 1_000_000
_VARIANCE_STREAM = 1_000_001


@dataclass(frozen=True)
class AdaptiveConfig:
    """Settings for one adaptive run."""

    b_tot: float
    prior: object
    loss_cfg: object
    rng: RngStream
    k: int = 2
    n_steps: int = 1
    infer_cfg: object = None
    n_variance_samples: int = 1000

    def __post_init__(self):
        if self.k < 1 or self.n_steps < 1:
            raise ValueError("batch size and projection horizon must be >= 1")
        if self.b_tot <= 0.0:
            raise ValueError("total budget must be positive")


@dataclass(frozen=True)
class IterationRecord:
    """One loop iteration: pilot size, remaining budget, loss comparison."""

    n_pilot: int
    b_remaining: float
    current: object
    projected: tuple
    terminated: bool
    forced: bool


@dataclass(frozen=True)
class AdaptiveResult:
    q_tilde: float
    n_pilot_star: int
    variance_samples: np.ndarray
    iteration_trace: tuple
    final_config: EstimatorConfig
    final_posterior: object
    point_estimate: np.ndarray
    predicted_variance: float
    realized_cost: float
    pilot_data: PilotData


def _update_posterior(prior, data, infer_cfg):
    if isinstance(prior, IWPosterior):
        return iw_update(prior, data)
    if isinstance(prior, GammaGaussianPosterior):
        return gamma_update(prior, data, infer_cfg)
    raise TypeError(f"unsupported prior type {type(prior).__name__}")


def run_adaptive(ensemble, cfg):
    """Adaptive pilot-sampling run; returns the estimate and its diagnostics.

    The initial batch holds M+1 joint evaluations (M+2 for the gamma-Gaussian
    prior, whose update needs a full-rank sample covariance); each later batch
    adds k.  The loop also stops early when the remaining budget can no longer
    fund one more batch plus a minimal final estimator.
    """

    m = ensemble.n_models
    w = ensemble.cost_model
    row_cost = ensemble.pilot_row_cost
    gamma_prior = isinstance(cfg.prior, GammaGaussianPosterior)
    n_init = m + 2 if gamma_prior else m + 1
    if cfg.b_tot <= n_init * row_cost:
        raise BudgetInfeasibleError(
            f"budget {cfg.b_tot:g} cannot fund the initial {n_init}-row pilot batch",
            min_budget=n_init * row_cost,
        )
    min_final = min(min_family_budget(w.w, fam) for fam in FAMILIES)

    data = PilotData(
        ensemble.pilot_rows(n_init, cfg.rng.child(0)), cost_per_row=row_cost
    )
    trace = []
    loss_cfg = cfg.loss_cfg
    iteration = 0
    while True:
        posterior = _update_posterior(cfg.prior, data, cfg.infer_cfg)
        sigma_prime = posterior_point_estimate(posterior)
        b_prime = cfg.b_tot - data.n_rows * row_cost
        forced = b_prime < cfg.k * row_cost + min_final
        if forced:
            trace.append(
                IterationRecord(data.n_rows, b_prime, None, (), True, True)
            )
            break
        current = expected_loss(
            sigma_prime, b_prime, posterior, cfg.b_tot, w, loss_cfg
        )
        projected = tuple(
            projected_expected_loss(
                sigma_prime, cfg.k * i, data, posterior, cfg.b_tot, w, loss_cfg,
                infer_cfg=cfg.infer_cfg,
            )
            for i in range(1, cfg.n_steps + 1)
        )
        if loss_cfg.adaptive_nmc:
            n_mc, _capped = calibrate_nmc(current, list(projected), loss_cfg)
            if n_mc > loss_cfg.n_mc:
                loss_cfg = replace(loss_cfg, n_mc=n_mc)
                current = expected_loss(
                    sigma_prime, b_prime, posterior, cfg.b_tot, w, loss_cfg
                )
                projected = tuple(
                    projected_expected_loss(
                        sigma_prime, cfg.k * i, data, posterior, cfg.b_tot, w,
                        loss_cfg, infer_cfg=cfg.infer_cfg,
                    )
                    for i in range(1, cfg.n_steps + 1)
                )
        terminated = all(current.total < r.total for r in projected)
        trace.append(
            IterationRecord(
                data.n_rows, b_prime, current, projected, terminated, False
            )
        )
        if terminated:
            break
        iteration += 1
        data = data.extended(
            ensemble.pilot_rows(cfg.k, cfg.rng.child(iteration))
        )

    n_star = data.n_rows
    b_prime = cfg.b_tot - n_star * row_cost
    try:
        alloc, family, predicted = optimize_allocation(sigma_prime, b_prime, w)
    except BudgetInfeasibleError as err:
        raise AdaptiveRunError(
            f"no feasible final estimator with remaining budget {b_prime:g}: {err}",
            trace=trace,
        ) from err
    alpha = optimal_weights(sigma_prime, alloc)
    zeta = EstimatorConfig(alpha=alpha, allocation=alloc)
    estimate, final_cost = evaluate_acv(
        ensemble, zeta, cfg.rng.child(_FINAL_RUN_STREAM)
    )
    variance_samples = predictive_variance_samples(
        posterior, zeta, cfg.n_variance_samples, cfg.rng.child(_VARIANCE_STREAM)
    )
    return AdaptiveResult(
        q_tilde=float(estimate),
        n_pilot_star=n_star,
        variance_samples=variance_samples,
        iteration_trace=tuple(trace),
        final_config=zeta,
        final_posterior=posterior,
        point_estimate=sigma_prime,
        predicted_variance=float(predicted),
        realized_cost=float(n_star * row_cost + final_cost),
        pilot_data=data,
    )


def predictive_variance_samples(post, zeta, n, rng):
    """Posterior-predictive distribution of the estimator's true variance."""

    draws = posterior_sample(post, n, rng)
    return np.array([estimator_variance(s, zeta) for s in draws])
