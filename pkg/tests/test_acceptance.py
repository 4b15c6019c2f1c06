"""End-to-end acceptance checks for the whole package.

Each test prints a single PASS/FAIL line naming the behavior it certifies.
The adaptive studies (criteria 6 and 7) share one cached set of trial runs.
"""

import math
import statistics
import time

import numpy as np

from bayespilot.acv import (
    EstimatorConfig,
    SampleAllocation,
    estimator_variance,
    evaluate_acv,
    mlmc_allocation,
    optimal_variance,
    optimal_weights,
    optimize_allocation,
)
from bayespilot.cli import _run_one_trial
from bayespilot.covinfer import (
    GammaGaussianPosterior,
    InferenceConfig,
    PilotData,
    gamma_update,
)
from bayespilot.adaptive import predictive_variance_samples
from bayespilot.loss import loss_single
from bayespilot.matparam import decompose_cov, gamma_forward, gamma_inverse
from bayespilot.models import monomial_ensemble, monomial_oracle_cov
from bayespilot.randmat import RngStream

M = 4
ENSEMBLE = monomial_ensemble(M)
ORACLE = monomial_oracle_cov(M)
W = ENSEMBLE.cost_model
ROW_COST = ENSEMBLE.pilot_row_cost

R0_4 = np.array(
    [
        [1.0, 0.975, 0.95, 0.925],
        [0.975, 1.0, 0.95, 0.95],
        [0.95, 0.95, 1.0, 0.95],
        [0.925, 0.95, 0.95, 1.0],
    ]
)
R0_3 = np.array([[1.0, 0.8, 0.7], [0.8, 1.0, 0.7], [0.7, 0.7, 1.0]])
GAMMA_4 = np.array([1.5883, 1.14386, 0.6994, 0.9291, 1.1858, 1.2053])
GAMMA_3 = np.array([0.9429, 0.6573, 0.6573])
MU_LOGSIGMA = 0.1

_STUDIES = {}


def _report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _mc_variance(b_tot):
    return ORACLE[0, 0] / math.floor(b_tot / W.w[0])


def test_criterion_1_gamma_transform_reference_vectors():
    start = time.time()
    err4 = float(np.max(np.abs(gamma_forward(R0_4) - GAMMA_4)))
    err3 = float(np.max(np.abs(gamma_forward(R0_3) - GAMMA_3)))
    elapsed = time.time() - start
    ok = err4 <= 1e-3 and err3 <= 1e-3 and elapsed < 1.0
    _report(
        "criterion 1 (reference transform vectors)",
        ok,
        f"max errors {err4:.2e} (4x4), {err3:.2e} (3x3) in {elapsed:.3f}s",
    )


def _random_correlation(rng, m):
    a = rng.normal(size=(m, m + 2))
    cov = a @ a.T / (m + 2)
    return decompose_cov(cov)[1]


def test_criterion_2_round_trip_property():
    start = time.time()
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for i in range(500):
        m = 2 + i % 5
        corr = _random_correlation(rng, m)
        back = gamma_inverse(gamma_forward(corr), tol=1e-7)
        worst = max(worst, float(np.max(np.abs(back - corr))))
    elapsed = time.time() - start
    ok = worst <= 1e-6 and elapsed < 30.0
    _report(
        "criterion 2 (500 correlation round trips)",
        ok,
        f"max error {worst:.2e} in {elapsed:.1f}s",
    )


def test_criterion_3_oracle_baselines():
    start = time.time()
    budgets = [50.0 * ROW_COST, 100.0 * ROW_COST, 200.0 * ROW_COST]
    acv_vrrs, mlmc_vrrs = [], []
    for b in budgets:
        _, _, var = optimize_allocation(ORACLE, b, W)
        acv_vrrs.append(_mc_variance(b) / var)
        mlmc_zeta = mlmc_allocation(ORACLE, b, W)
        mlmc_vrrs.append(_mc_variance(b) / estimator_variance(ORACLE, mlmc_zeta))
    spread = (max(acv_vrrs) - min(acv_vrrs)) / min(acv_vrrs)
    elapsed = time.time() - start
    ok = (
        all(24.0 <= v <= 30.0 for v in acv_vrrs)
        and spread <= 0.05
        and all(16.4 <= v <= 20.2 for v in mlmc_vrrs)
        and elapsed < 120.0
    )
    _report(
        "criterion 3 (oracle baseline variance reduction)",
        ok,
        "best-ACV VRR "
        + "/".join(f"{v:.2f}" for v in acv_vrrs)
        + f" (spread {100 * spread:.1f}%), multilevel VRR "
        + "/".join(f"{v:.2f}" for v in mlmc_vrrs)
        + f" in {elapsed:.1f}s",
    )


def test_criterion_4_loss_sign_and_decomposition():
    start = time.time()
    rng = np.random.default_rng(7)
    min_acc, min_cost, worst_gap = math.inf, math.inf, 0.0
    for _ in range(200):
        m = int(rng.integers(2, 6))
        a = rng.normal(size=(m, m))
        s_or = a @ a.T + 1e-2 * np.eye(m)
        b = rng.normal(size=(m, m))
        s_p = s_or + rng.uniform(0.05, 0.5) * (b @ b.T) / m
        w = np.sort(rng.uniform(0.001, 1.0, size=m))[::-1].copy()
        w[0] = 1.0
        b_tot = rng.uniform(50.0, 400.0)
        b_prime = rng.uniform(0.3, 1.0) * b_tot
        family = ("acvis", "mfmc", "mlmc")[int(rng.integers(3))]
        total, acc, cost = loss_single(s_p, b_prime, s_or, b_tot, w, family)
        min_acc = min(min_acc, acc)
        min_cost = min(min_cost, cost)
        worst_gap = max(worst_gap, abs(total - (acc + cost)))
    elapsed = time.time() - start
    ok = min_acc >= -1e-9 and min_cost >= -1e-9 and worst_gap <= 1e-10 and elapsed < 300
    _report(
        "criterion 4 (loss nonnegativity and exact decomposition, 200 instances)",
        ok,
        f"min accuracy {min_acc:.2e}, min cost {min_cost:.2e}, "
        f"max decomposition gap {worst_gap:.2e} in {elapsed:.1f}s",
    )


def test_criterion_5_variance_algebra_and_realized_variance():
    start = time.time()
    rng = np.random.default_rng(11)
    worst_rel = 0.0
    for family in ("acvis", "mfmc", "mlmc"):
        for _ in range(100):
            m = int(rng.integers(2, 6))
            a = rng.normal(size=(m, m))
            s = a @ a.T + 1e-3 * np.eye(m)
            counts = np.sort(rng.uniform(2.0, 500.0, size=m))
            alloc = SampleAllocation(family, counts)
            zeta = EstimatorConfig(optimal_weights(s, alloc), alloc)
            v_direct = estimator_variance(s, zeta)
            v_formula = optimal_variance(s, alloc)
            worst_rel = max(worst_rel, abs(v_direct - v_formula) / v_formula)

    alloc, _, _ = optimize_allocation(ORACLE, 200.0 * ROW_COST, W)
    alloc = alloc.rounded_down()
    zeta = EstimatorConfig(optimal_weights(ORACLE, alloc), alloc)
    predicted = estimator_variance(ORACLE, zeta)
    root = RngStream(314159, 0, ())
    estimates = [
        evaluate_acv(monomial_ensemble(M), zeta, root.child(rep))[0]
        for rep in range(2000)
    ]
    realized = statistics.variance(estimates)
    rel_gap = abs(realized - predicted) / predicted
    elapsed = time.time() - start
    ok = worst_rel <= 1e-12 and rel_gap <= 0.15 and elapsed < 300
    _report(
        "criterion 5 (variance algebra identity and realized variance)",
        ok,
        f"identity rel err {worst_rel:.2e}; realized/predicted "
        f"{realized / predicted:.3f} over 2000 repetitions in {elapsed:.1f}s",
    )


def _base_config():
    return {
        "ensemble": {"kind": "monomial", "n_models": 4},
        "budget": "200x-pilot",
        "k": 2,
        "n_steps": 1,
        "loss": {"n_mc": 500},
        "n_variance_samples": 200,
    }


def _prior_spec(kind):
    if kind == "iw":
        sigma0 = np.outer([0.1] * 4, [0.1] * 4) * R0_4
        return {"kind": "iw", "sigma0": sigma0.tolist(), "nu": 6}
    if kind == "iw-informative":
        return {"kind": "iw", "h": (ORACLE * 15.0).tolist(), "nu": 20}
    return {
        "kind": "gamma-full",
        "mean_gamma": GAMMA_4.tolist(),
        "var_gamma": [1.0] * 6,
        "mean_logsigma": [MU_LOGSIGMA] * 4,
        "var_logsigma": [1.0] * 4,
    }


def _adaptive_study(kind, n_trials=20, master_seed=2024):
    key = (kind, n_trials, master_seed)
    if key not in _STUDIES:
        cfg = _base_config()
        cfg["prior"] = _prior_spec(kind)
        records = [
            _run_one_trial(cfg, t, master_seed)[0] for t in range(n_trials)
        ]
        _STUDIES[key] = records
    return _STUDIES[key]


def test_criterion_6_adaptive_statistical_reproduction():
    start = time.time()
    iw = _adaptive_study("iw")
    gg = _adaptive_study("gamma-full")
    iw_vrr = statistics.fmean(r["vrr"] for r in iw)
    iw_np = statistics.fmean(r["n_pilot_star"] for r in iw)
    gg_vrr = statistics.fmean(r["vrr"] for r in gg)
    gg_np = statistics.fmean(r["n_pilot_star"] for r in gg)
    elapsed = time.time() - start
    ok = (
        15.0 <= iw_vrr <= 27.0
        and 8.0 <= iw_np <= 25.0
        and 13.0 <= gg_vrr <= 21.0
        and 40.0 <= gg_np <= 90.0
        and elapsed < 1800
    )
    _report(
        "criterion 6 (adaptive runs, 20 trials per prior family)",
        ok,
        f"Wishart prior: mean VRR {iw_vrr:.1f}, mean pilot size {iw_np:.1f}; "
        f"correlation-transform prior: mean VRR {gg_vrr:.1f}, "
        f"mean pilot size {gg_np:.1f}; {elapsed / 60:.1f} min",
    )


def test_criterion_7_informative_prior_effect():
    uninf = _adaptive_study("iw")
    inf_ = _adaptive_study("iw-informative")
    uninf_np = statistics.fmean(r["n_pilot_star"] for r in uninf)
    inf_np = statistics.fmean(r["n_pilot_star"] for r in inf_)
    uninf_std = statistics.stdev([r["vrr"] for r in uninf])
    inf_std = statistics.stdev([r["vrr"] for r in inf_])
    ok = inf_np < uninf_np and inf_std < uninf_std
    _report(
        "criterion 7 (informative prior stops earlier, less spread)",
        ok,
        f"mean pilot size {inf_np:.1f} vs {uninf_np:.1f}; "
        f"VRR std {inf_std:.2f} vs {uninf_std:.2f}",
    )


def test_criterion_8_pilot_study_shape():
    from bayespilot.covinfer import scatter_and_stats

    start = time.time()
    b_tot = 200.0 * ROW_COST
    grid = [3, 5, 8, 12, 20, 35, 60, 100, 150, 198]
    n_seeds = 20
    ratios = {n: [] for n in grid}
    actual = {n: [] for n in grid}
    for n_pilot in grid:
        for s in range(n_seeds):
            stream = RngStream(0, s, (n_pilot,))
            pilot = ENSEMBLE.pilot_rows(n_pilot, stream)
            _, _, scatter = scatter_and_stats(PilotData(pilot, ROW_COST))
            est_cov = scatter / (n_pilot - 1)
            b_prime = b_tot - n_pilot * ROW_COST
            alloc, _, predicted = optimize_allocation(est_cov, b_prime, W)
            zeta = EstimatorConfig(optimal_weights(est_cov, alloc), alloc)
            act = estimator_variance(ORACLE, zeta)
            ratios[n_pilot].append(act / predicted if predicted > 0 else math.inf)
            actual[n_pilot].append(act)
    smallest_ratio = statistics.median(ratios[grid[0]])
    curve = [statistics.median(actual[n]) for n in grid]
    interior_min = min(curve[1:-1])
    elapsed = time.time() - start
    ok = (
        smallest_ratio > 10.0
        and interior_min < curve[0]
        and interior_min < curve[-1]
        and elapsed < 600
    )
    _report(
        "criterion 8 (pilot-size study: overconfidence and interior optimum)",
        ok,
        f"median underestimation ratio {smallest_ratio:.1f} at {grid[0]} rows; "
        f"variance curve {curve[0]:.2e} -> min {interior_min:.2e} -> "
        f"{curve[-1]:.2e} in {elapsed:.1f}s",
    )


def test_criterion_9_predictive_variance_concentration():
    checkpoints = (12, 36, 60)
    b_final = 200.0 * ROW_COST - checkpoints[-1] * ROW_COST
    alloc, _, _ = optimize_allocation(ORACLE, b_final, W)
    zeta = EstimatorConfig(optimal_weights(ORACLE, alloc), alloc)
    prior = GammaGaussianPosterior(
        mean_gamma=GAMMA_4,
        cov_gamma=np.eye(6),
        mean_logsigma=np.full(4, MU_LOGSIGMA),
        var_logsigma=np.ones(4),
    )
    iqrs = {n: [] for n in checkpoints}
    for seed in range(10):
        root = RngStream(99, seed, ())
        pilot = ENSEMBLE.pilot_rows(checkpoints[-1], root.child(0))
        for i, n_pilot in enumerate(checkpoints):
            data = PilotData(pilot[:n_pilot], ROW_COST)
            cfg = InferenceConfig(rng=root.child(10 + i), n_sim=1000)
            post = gamma_update(prior, data, cfg)
            samples = predictive_variance_samples(
                post, zeta, 400, root.child(20 + i)
            )
            q25, q75 = np.percentile(samples, [25, 75])
            iqrs[n_pilot].append(float(q75 - q25))
    means = [statistics.fmean(iqrs[n]) for n in checkpoints]
    ok = means[0] > means[1] > means[2]
    _report(
        "criterion 9 (posterior predictive variance concentrates with pilot size)",
        ok,
        "mean interquartile range "
        + " -> ".join(f"{v:.2e}" for v in means)
        + f" at pilot sizes {checkpoints}",
    )
