"""Expected-loss criterion for pilot-sampling termination.

The loss of committing to an estimator built from a point-estimate covariance
with the remaining budget decomposes exactly into an accuracy part (variance
inflation from the inexact covariance at fixed budget) and a cost part
(variance inflation from the budget already spent on pilot rows).  Both parts
are evaluated in continuous relaxation, where optimal variance scales exactly
as 1/budget, so a single unit-budget solve per covariance serves every budget
that appears in the decomposition.
"""

import math
from dataclasses import dataclass

import numpy as np

from .acv import (
    FAMILIES,
    CostModel,
    SampleAllocation,
    _unit_optimal_counts,
    coupling,
    optimal_weights,
    unit_optimal_variance,
)
from .covinfer import posterior_sample, project_posterior
from .randmat import RngStream

NMC_CAP_FACTOR = 64


@dataclass(frozen=True)
class LossConfig:
    """Monte Carlo settings for expected-loss estimates."""

    seed: RngStream
    n_mc: int = 500
    fixed_family: str = None
    adaptive_nmc: bool = False
    target_resolution_ratio: float = 0.1

    def __post_init__(self):
        if self.n_mc < 50:
            raise ValueError("n_mc below 50 gives unusable loss resolution")
        if self.fixed_family is not None and self.fixed_family not in FAMILIES:
            raise ValueError(f"unknown family {self.fixed_family!r}")


@dataclass(frozen=True)
class LossReport:
    """Expected loss with its accuracy/cost split and MC error bar.

    A budget-exhausted report carries total = inf so it orders above every
    finite loss in termination comparisons.
    """

    total: float
    accuracy: float
    cost: float
    mc_std_error: float
    n_mc: int
    family_used: str
    budget_exhausted: bool = False


def _best_family(s, w, families=FAMILIES):
    """Family with the smallest unit-budget optimal variance under s."""
    best = None
    for fam in families:
        _, f, _ = _unit_optimal_counts(s, w, fam, n_starts=4, maxfev=300)
        if best is None or f < best[1]:
            best = (fam, f)
    return best[0]


def _as_cost_vector(w):
    return w.w if isinstance(w, CostModel) else np.asarray(w, dtype=float)


def loss_single(sigma_prime, b_prime, sigma_or, b_tot, w, family):
    """Loss of the (sigma_prime, b_prime) estimator when sigma_or is the truth.

    Returns (total, accuracy, cost).  accuracy compares the committed
    estimator against the best same-family estimator at the same budget under
    sigma_or; cost compares best estimators at the reduced and full budgets.
    The decomposition telescopes, so total = accuracy + cost exactly.
    """

    if not 0.0 < b_prime <= b_tot:
        raise ValueError("budgets must satisfy 0 < b_prime <= b_tot")
    wv = _as_cost_vector(w)
    unit_counts, _, x_prime = unit_optimal_variance(
        sigma_prime, wv, family, n_starts=4, maxfev=300
    )
    alloc = SampleAllocation(family, unit_counts * b_prime)
    alpha = optimal_weights(np.asarray(sigma_prime, dtype=float), alloc)
    var_committed = _variance_under(np.asarray(sigma_or, dtype=float), alloc, alpha)
    _, f_or, _ = unit_optimal_variance(
        sigma_or, wv, family, warm_starts=(x_prime,), n_starts=4, maxfev=300
    )
    accuracy = var_committed - f_or / b_prime
    cost = f_or / b_prime - f_or / b_tot
    return accuracy + cost, accuracy, cost


def _variance_under(s, alloc, alpha):
    c = coupling(alloc)
    gsl = c.G * s[1:, 1:]
    gs = c.g * s[0, 1:]
    return float(s[0, 0] / c.n0 + alpha @ gsl @ alpha + 2.0 * alpha @ gs)


def expected_loss(sigma_prime, b_prime, post, b_tot, w, cfg):
    """Posterior-averaged loss of committing now with (sigma_prime, b_prime).

    Fixes the allocation family to the best one for sigma_prime (or
    cfg.fixed_family), then averages the per-draw decomposition over n_mc
    posterior covariances drawn from cfg.seed.  Components share the draw set,
    so the report satisfies total = accuracy + cost exactly.
    """

    sigma_prime = np.asarray(sigma_prime, dtype=float)
    wv = _as_cost_vector(w)
    if not 0.0 < b_prime <= b_tot:
        raise ValueError("budgets must satisfy 0 < b_prime <= b_tot")
    family = cfg.fixed_family or _best_family(sigma_prime, wv)

    unit_counts, _, x_prime = unit_optimal_variance(
        sigma_prime, wv, family, n_starts=4, maxfev=300
    )
    alloc = SampleAllocation(family, unit_counts * b_prime)
    alpha = optimal_weights(sigma_prime, alloc)
    c = coupling(alloc)

    draws = posterior_sample(post, cfg.n_mc, cfg.seed)
    accuracy = []
    cost = []
    cache = {}
    x_warm = x_prime
    inv_bp = 1.0 / b_prime
    inv_btot = 1.0 / b_tot
    for s in draws:
        key = s.tobytes()
        hit = cache.get(key)
        if hit is None:
            gsl = c.G * s[1:, 1:]
            gs = c.g * s[0, 1:]
            var_committed = float(
                s[0, 0] / c.n0 + alpha @ gsl @ alpha + 2.0 * alpha @ gs
            )
            _, f_i, x_warm = unit_optimal_variance(
                s, wv, family, warm_starts=(x_prime, x_warm)
            )
            hit = (var_committed, f_i)
            cache[key] = hit
        var_committed, f_i = hit
        accuracy.append(var_committed - f_i * inv_bp)
        cost.append(f_i * (inv_bp - inv_btot))
    n = len(draws)
    acc_mean = math.fsum(accuracy) / n
    cost_mean = math.fsum(cost) / n
    totals = [a + q for a, q in zip(accuracy, cost)]
    total = acc_mean + cost_mean
    var_tot = math.fsum((t - total) ** 2 for t in totals) / (n - 1) if n > 1 else 0.0
    return LossReport(
        total=total,
        accuracy=acc_mean,
        cost=cost_mean,
        mc_std_error=math.sqrt(max(var_tot, 0.0) / n),
        n_mc=n,
        family_used=family,
    )


def projected_expected_loss(
    sigma_prime, n_additional, data, post, b_tot, w, cfg, infer_cfg=None
):
    """Expected loss anticipated after n_additional more pilot rows.

    The reduced budget accounts for the hypothetical rows and the posterior is
    replaced by its projection; the Monte Carlo seed matches expected_loss so
    current and projected reports are comparable draw by draw.
    """

    if n_additional < 1:
        raise ValueError("projection needs at least one additional pilot row")
    wv = _as_cost_vector(w)
    row_cost = float(wv.sum())
    b_prime_n = b_tot - (data.n_rows + n_additional) * row_cost
    family = cfg.fixed_family or _best_family(np.asarray(sigma_prime, float), wv)
    if b_prime_n <= 0.0:
        return LossReport(
            total=math.inf,
            accuracy=math.nan,
            cost=math.nan,
            mc_std_error=0.0,
            n_mc=cfg.n_mc,
            family_used=family,
            budget_exhausted=True,
        )
    projected = project_posterior(post, data, n_additional, infer_cfg)
    return expected_loss(sigma_prime, b_prime_n, projected, b_tot, wv, cfg)


def calibrate_nmc(initial_report, candidate_reports, cfg):
    """Monte Carlo size needed to resolve current-vs-projected differences.

    Grows n_mc geometrically (powers of two, capped at 64x) until the standard
    error is below target_resolution_ratio times the smallest nonzero
    difference.  Returns (n_mc, capped).
    """

    diffs = [
        abs(initial_report.total - r.total)
        for r in candidate_reports
        if not r.budget_exhausted and math.isfinite(r.total)
        and abs(initial_report.total - r.total) > 0.0
    ]
    if not diffs or initial_report.mc_std_error == 0.0:
        return cfg.n_mc, False
    target = cfg.target_resolution_ratio * min(diffs)
    if initial_report.mc_std_error <= target:
        return cfg.n_mc, False
    factor = (initial_report.mc_std_error / target) ** 2
    grow = 2
    while grow < factor and grow < NMC_CAP_FACTOR:
        grow *= 2
    capped = grow < factor
    return cfg.n_mc * grow, capped
