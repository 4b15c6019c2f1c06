import numpy as np
import pytest

from bayespilot.acv import estimator_variance
from bayespilot.adaptive import (
    AdaptiveConfig,
    predictive_variance_samples,
    run_adaptive,
)
from bayespilot.covinfer import (
    GammaGaussianPosterior,
    InferenceConfig,
    IWPosterior,
)
from bayespilot.errors import BudgetInfeasibleError
from bayespilot.loss import LossConfig
from bayespilot.matparam import decompose_cov, gamma_forward
from bayespilot.models import monomial_ensemble, monomial_oracle_cov
from bayespilot.randmat import RngStream

ORACLE = monomial_oracle_cov(4)


def iw_prior():
    return IWPosterior(ORACLE * (6.0 - 4 - 1), 6.0)


def make_config(b_mult=50.0, n_mc=60, seed=0, prior=None, **kw):
    ens = monomial_ensemble(4)
    return ens, AdaptiveConfig(
        b_tot=b_mult * ens.pilot_row_cost,
        prior=prior if prior is not None else iw_prior(),
        loss_cfg=LossConfig(seed=RngStream(seed, 1000, ()), n_mc=n_mc),
        rng=RngStream(seed, 0, ()),
        n_variance_samples=100,
        **kw,
    )


def test_run_is_deterministic_and_budget_safe():
    ens, cfg = make_config()
    a = run_adaptive(ens, cfg)
    b = run_adaptive(monomial_ensemble(4), cfg)
    assert a.q_tilde == b.q_tilde
    assert a.n_pilot_star == b.n_pilot_star
    assert np.array_equal(a.variance_samples, b.variance_samples)
    assert a.realized_cost <= cfg.b_tot + 1e-9
    assert a.n_pilot_star >= 5  # M + 1


def test_trace_increments_by_batch_size():
    ens, cfg = make_config(k=2)
    res = run_adaptive(ens, cfg)
    sizes = [rec.n_pilot for rec in res.iteration_trace]
    assert sizes[0] == 5
    assert all(b - a == 2 for a, b in zip(sizes, sizes[1:]))
    assert res.iteration_trace[-1].terminated
    assert all(not rec.terminated for rec in res.iteration_trace[:-1])


def test_dirac_prior_terminates_at_first_check():
    std, corr = decompose_cov(ORACLE)
    dirac = GammaGaussianPosterior(
        mean_gamma=gamma_forward(corr),
        cov_gamma=np.zeros((6, 6)),
        mean_logsigma=np.log(std),
        var_logsigma=np.zeros(4),
    )
    ens, cfg = make_config(
        prior=dirac,
        infer_cfg=InferenceConfig(rng=RngStream(0, 2000, ()), n_sim=200),
    )
    res = run_adaptive(ens, cfg)
    assert len(res.iteration_trace) == 1
    assert res.n_pilot_star == 6  # M + 2 initial rows for the gamma family


def test_forced_stop_near_budget_exhaustion():
    # budget fits the initial batch plus barely one more; loop must stop early
    ens, cfg = make_config(b_mult=7.0)
    res = run_adaptive(ens, cfg)
    assert res.realized_cost <= cfg.b_tot + 1e-9
    assert res.iteration_trace[-1].forced or res.iteration_trace[-1].terminated


def test_infeasible_budget_raises():
    ens, _ = make_config()
    with pytest.raises(BudgetInfeasibleError):
        run_adaptive(
            ens,
            AdaptiveConfig(
                b_tot=2.0 * ens.pilot_row_cost,
                prior=iw_prior(),
                loss_cfg=LossConfig(seed=RngStream(0, 1, ()), n_mc=60),
                rng=RngStream(0, 0, ()),
            ),
        )


def test_predictive_samples_degenerate_posterior():
    std, corr = decompose_cov(ORACLE)
    dirac = GammaGaussianPosterior(
        gamma_forward(corr), np.zeros((6, 6)), np.log(std), np.zeros(4)
    )
    ens, cfg = make_config()
    res = run_adaptive(ens, cfg)
    samples = predictive_variance_samples(
        dirac, res.final_config, 20, RngStream(9, 0, ())
    )
    assert samples.shape == (20,)
    # spread limited only by the correlation fixed-point tolerance
    assert np.ptp(samples) <= 1e-5 * samples[0]
    assert samples[0] == pytest.approx(
        estimator_variance(posterior_point(dirac), res.final_config), rel=1e-5
    )


def posterior_point(post):
    from bayespilot.covinfer import posterior_point_estimate

    return posterior_point_estimate(post)


def test_variance_samples_nonnegative_and_counted():
    ens, cfg = make_config()
    res = run_adaptive(ens, cfg)
    assert res.variance_samples.size == 100
    assert np.all(res.variance_samples >= 0.0)
