"""Command-line front end: experiment runs, baselines, pilot studies.

Subcommands:
  run          adaptive trials from a config file; writes summary.json,
               trials.csv, and per-trial iteration traces
  baselines    single-fidelity MC, best multilevel, and best control-variate
               variances under the oracle covariance
  pilot-study  frequentist sweep of estimator performance vs pilot count
  transform    gamma-transform round-trip utility for matrix files

Configs are JSON documents; budgets may be given as absolute reals or as
"<n>x-pilot" multiples of the joint pilot-row cost.  Exit codes: 0 success,
1 validation error, 2 runtime error, 3 partial trial failure.
"""

import argparse
import csv
import json
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .acv import (
    EstimatorConfig,
    FAMILIES,
    estimator_variance,
    min_family_budget,
    mlmc_allocation,
    optimal_weights,
    optimize_allocation,
)
from .adaptive import AdaptiveConfig, run_adaptive
from .covinfer import (
    GammaGaussianPosterior,
    IWPosterior,
    InferenceConfig,
    PilotData,
    scatter_and_stats,
)
from .errors import BayesPilotError
from .loss import LossConfig
from .matparam import gamma_forward, gamma_inverse, vecl_inverse_size
from .models import monomial_ensemble, monomial_oracle_cov, tabular_ensemble
from .randmat import RngStream

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


class ValidationFailure(Exception):
    pass


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationFailure(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ValidationFailure(f"config file {path} is not valid JSON: {err}")


def _build_ensemble(cfg):
    spec = cfg.get("ensemble")
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValidationFailure("config needs an ensemble section with a 'kind'")
    if spec["kind"] == "monomial":
        m = int(spec.get("n_models", 4))
        ens = monomial_ensemble(m)
        oracle = monomial_oracle_cov(m)
        return ens, oracle
    if spec["kind"] == "tabular":
        path = spec.get("path")
        if not path or not Path(path).exists():
            raise ValidationFailure(f"tabular ensemble file not found: {path}")
        ens = tabular_ensemble(path, spec.get("schema"))
        oracle = None
        if "oracle_cov" in spec:
            oracle = np.asarray(spec["oracle_cov"], dtype=float)
        return ens, oracle
    raise ValidationFailure(f"unknown ensemble kind {spec['kind']!r}")


def _parse_budget(raw, row_cost):
    if isinstance(raw, str):
        if raw.endswith("x-pilot"):
            try:
                return float(raw[: -len("x-pilot")]) * row_cost
            except ValueError:
                raise ValidationFailure(f"malformed budget string {raw!r}")
        try:
            return float(raw)
        except ValueError:
            raise ValidationFailure(f"malformed budget {raw!r}")
    if raw is None:
        raise ValidationFailure("config must set a budget")
    return float(raw)


def _build_prior(cfg, m):
    spec = cfg.get("prior")
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValidationFailure("config needs a prior section with a 'kind'")
    kind = spec["kind"]
    if kind == "iw":
        if "h" in spec:
            h = np.asarray(spec["h"], dtype=float)
        elif "sigma0" in spec:
            sigma0 = np.asarray(spec["sigma0"], dtype=float)
            h = sigma0 * (float(spec["nu"]) - m - 1)
        else:
            raise ValidationFailure("iw prior needs 'h' or 'sigma0'")
        return IWPosterior(h, float(spec["nu"]))
    if kind in ("gamma-diag", "gamma-full"):
        p = m * (m - 1) // 2
        mean_gamma = np.asarray(spec["mean_gamma"], dtype=float)
        if mean_gamma.size != p:
            raise ValidationFailure(
                f"gamma prior mean has length {mean_gamma.size}, expected {p}"
            )
        var_gamma = np.asarray(spec.get("var_gamma", np.ones(p)), dtype=float)
        mean_ls = np.asarray(spec.get("mean_logsigma", np.zeros(m)), dtype=float)
        var_ls = np.asarray(spec.get("var_logsigma", np.ones(m)), dtype=float)
        return GammaGaussianPosterior(
            mean_gamma=mean_gamma,
            cov_gamma=np.diag(var_gamma),
            mean_logsigma=mean_ls,
            var_logsigma=var_ls,
            full_cov=(kind == "gamma-full"),
        )
    raise ValidationFailure(f"unknown prior kind {kind!r}")


def _mc_variance(oracle, b_tot, w0):
    n = math.floor(b_tot / w0)
    return float(oracle[0, 0] / n)


def _run_one_trial(cfg_dict, trial_index, master_seed):
    """One adaptive trial; importable at module level so process pools work."""

    ensemble, oracle = _build_ensemble(cfg_dict)
    m = ensemble.n_models
    row_cost = ensemble.pilot_row_cost
    b_tot = _parse_budget(cfg_dict.get("budget"), row_cost)
    prior = _build_prior(cfg_dict, m)
    k = int(cfg_dict.get("k", 2))
    n_steps = int(cfg_dict.get("n_steps", 1))
    loss_spec = cfg_dict.get("loss", {})
    infer_spec = cfg_dict.get("inference", {})
    trial_rng = RngStream(master_seed, trial_index, ())
    loss_cfg = LossConfig(
        seed=trial_rng.child(1_000),
        n_mc=int(loss_spec.get("n_mc", 500)),
        fixed_family=loss_spec.get("fixed_family"),
        adaptive_nmc=bool(loss_spec.get("adaptive_nmc", False)),
        target_resolution_ratio=float(loss_spec.get("target_resolution_ratio", 0.1)),
    )
    infer_cfg = InferenceConfig(
        rng=trial_rng.child(2_000),
        n_sim=int(infer_spec.get("n_sim", 1000)),
        trunc_quantiles=tuple(infer_spec.get("trunc_quantiles", (0.2, 0.8))),
        projection_pin_logsigma_mean=bool(
            infer_spec.get("projection_pin_logsigma_mean", True)
        ),
    )
    adaptive_cfg = AdaptiveConfig(
        b_tot=b_tot,
        prior=prior,
        loss_cfg=loss_cfg,
        infer_cfg=infer_cfg,
        rng=trial_rng,
        k=k,
        n_steps=n_steps,
        n_variance_samples=int(cfg_dict.get("n_variance_samples", 1000)),
    )
    result = run_adaptive(ensemble, adaptive_cfg)

    record = {
        "trial": trial_index,
        "estimate": result.q_tilde,
        "n_pilot_star": result.n_pilot_star,
        "predicted_variance": result.predicted_variance,
        "realized_cost": result.realized_cost,
        "family": result.final_config.allocation.family,
        "predictive_variance_mean": float(np.mean(result.variance_samples)),
    }
    if oracle is not None:
        actual = estimator_variance(oracle, result.final_config)
        record["actual_variance"] = float(actual)
        record["vrr"] = _mc_variance(oracle, b_tot, ensemble.cost_model.w[0]) / actual
    trace_rows = []
    for rec in result.iteration_trace:
        row = {
            "n_pilot": rec.n_pilot,
            "b_remaining": rec.b_remaining,
            "terminated": rec.terminated,
            "forced": rec.forced,
        }
        if rec.current is not None:
            row.update(
                total=rec.current.total,
                accuracy=rec.current.accuracy,
                cost=rec.current.cost,
                mc_std_error=rec.current.mc_std_error,
                projected_totals=[r.total for r in rec.projected],
            )
        trace_rows.append(row)
    return record, trace_rows


def cmd_run(args):
    cfg = _load_config(args.config)
    if args.budget is not None:
        cfg["budget"] = args.budget
    n_trials = int(cfg.get("n_trials", 1))
    if n_trials < 1:
        raise ValidationFailure("n_trials must be at least 1")
    master_seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    out = Path(args.out or cfg.get("out", "bayespilot-out"))
    out.mkdir(parents=True, exist_ok=True)
    # validate eagerly so a bad config fails before any work is spent
    ensemble, _ = _build_ensemble(cfg)
    _build_prior(cfg, ensemble.n_models)
    _parse_budget(cfg.get("budget"), ensemble.pilot_row_cost)

    records, failures = [], []
    if args.jobs and args.jobs > 1 and cfg["ensemble"]["kind"] != "tabular":
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                pool.submit(_run_one_trial, cfg, t, master_seed): t
                for t in range(n_trials)
            }
            results = {}
            for fut, t in futures.items():
                try:
                    results[t] = fut.result()
                except BayesPilotError as err:
                    failures.append({"trial": t, "error": str(err)})
            ordered = [results[t] for t in sorted(results)]
    else:
        ordered = []
        for t in range(n_trials):
            try:
                ordered.append(_run_one_trial(cfg, t, master_seed))
            except BayesPilotError as err:
                failures.append({"trial": t, "error": str(err)})
    for record, trace_rows in ordered:
        records.append(record)
        with open(out / f"trace_trial{record['trial']:03d}.json", "w") as fh:
            json.dump(trace_rows, fh, indent=2)

    if records:
        fields = sorted({k for r in records for k in r})
        with open(out / "trials.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(records)
    summary = {
        "config": cfg,
        "seed": master_seed,
        "n_trials": n_trials,
        "n_failures": len(failures),
        "failures": failures,
    }
    for key in ("n_pilot_star", "predicted_variance", "actual_variance", "vrr"):
        vals = [r[key] for r in records if key in r]
        if vals:
            summary[f"{key}_mean"] = float(np.mean(vals))
            summary[f"{key}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(
        f"{len(records)}/{n_trials} trials complete"
        + (f", mean VRR {summary.get('vrr_mean', float('nan')):.2f}" if records else "")
    )
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_baselines(args):
    cfg = _load_config(args.config)
    if args.budget is not None:
        cfg["budget"] = args.budget
    ensemble, oracle = _build_ensemble(cfg)
    if oracle is None:
        raise ValidationFailure(
            "baselines need an oracle covariance; supply ensemble.oracle_cov"
        )
    b_tot = _parse_budget(cfg.get("budget"), ensemble.pilot_row_cost)
    w = ensemble.cost_model
    mc_var = _mc_variance(oracle, b_tot, w.w[0])
    alloc, family, acv_var = optimize_allocation(oracle, b_tot, w)
    mlmc_cfg = mlmc_allocation(oracle, b_tot, w)
    mlmc_var = estimator_variance(oracle, mlmc_cfg)
    report = {
        "budget": b_tot,
        "mc_variance": mc_var,
        "acv_best_variance": float(acv_var),
        "acv_best_family": family,
        "acv_best_vrr": mc_var / acv_var,
        "mlmc_best_variance": float(mlmc_var),
        "mlmc_best_vrr": mc_var / mlmc_var,
        "mc_vrr": 1.0,
    }
    text = json.dumps(report, indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "baselines.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_pilot_study(args):
    cfg = _load_config(args.config)
    if args.budget is not None:
        cfg["budget"] = args.budget
    ensemble, oracle = _build_ensemble(cfg)
    if oracle is None:
        raise ValidationFailure("pilot-study needs an oracle covariance")
    b_tot = _parse_budget(cfg.get("budget"), ensemble.pilot_row_cost)
    w = ensemble.cost_model
    row_cost = ensemble.pilot_row_cost
    m = ensemble.n_models
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    n_seeds = int(cfg.get("n_seeds", 20))
    grid = cfg.get("pilot_grid")
    if grid is None:
        top = int(b_tot / row_cost) - 2
        grid = sorted({3, m + 1, 8, 12, 20, 35, 60, 100, 150, top})
    min_final = min(min_family_budget(w.w, fam) for fam in FAMILIES)
    usable = [n for n in grid if b_tot - n * row_cost >= min_final and n >= 3]
    if len(usable) < len(grid):
        print(
            f"warning: truncated pilot grid to {usable} (budget {b_tot:g})",
            file=sys.stderr,
        )
    rows = []
    for n_pilot in usable:
        for s in range(n_seeds):
            stream = RngStream(seed, s, (n_pilot,))
            pilot = ensemble.pilot_rows(n_pilot, stream)
            data = PilotData(pilot, row_cost)
            _, _, scatter = scatter_and_stats(data)
            est_cov = scatter / (n_pilot - 1)
            b_prime = b_tot - n_pilot * row_cost
            try:
                alloc, family, predicted = optimize_allocation(est_cov, b_prime, w)
            except BayesPilotError as err:
                rows.append(
                    {"n_pilot": n_pilot, "seed": s, "error": str(err)}
                )
                continue
            zeta = EstimatorConfig(optimal_weights(est_cov, alloc), alloc)
            actual = estimator_variance(oracle, zeta)
            rows.append(
                {
                    "n_pilot": n_pilot,
                    "seed": s,
                    "family": family,
                    "predicted_variance": float(predicted),
                    "actual_variance": float(actual),
                    "underestimation_ratio": float(actual / predicted)
                    if predicted > 0
                    else math.inf,
                }
            )
    out = Path(args.out or cfg.get("out", "bayespilot-out"))
    out.mkdir(parents=True, exist_ok=True)
    fields = [
        "n_pilot", "seed", "family", "predicted_variance", "actual_variance",
        "underestimation_ratio", "error",
    ]
    with open(out / "pilot_study.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out / 'pilot_study.csv'}")
    return EXIT_OK


def cmd_transform(args):
    try:
        data = np.loadtxt(args.matrix, ndmin=1)
    except OSError:
        raise ValidationFailure(f"cannot read {args.matrix}")
    if data.ndim == 2 and data.shape[0] == data.shape[1] and data.shape[0] > 1:
        gamma = gamma_forward(data)
        print(" ".join(f"{v:.6f}" for v in gamma))
    elif data.ndim == 1:
        vecl_inverse_size(data.size)
        corr = gamma_inverse(data)
        for row in corr:
            print(" ".join(f"{v:.6f}" for v in row))
    else:
        raise ValidationFailure(
            f"{args.matrix}: expected a square matrix or a gamma vector"
        )
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="bayespilot",
        description="Adaptive pilot sampling for multi-fidelity Monte Carlo",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument(
            "--budget",
            help="budget override: absolute real or '<n>x-pilot' multiples of the pilot-row cost",
        )
        p.add_argument("--jobs", type=int, default=1, help="concurrent trials")

    p_run = sub.add_parser("run", help="adaptive trials; writes summary.json + trials.csv")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_base = sub.add_parser("baselines", help="oracle MC / best-multilevel / best-ACV variances")
    common(p_base)
    p_base.set_defaults(func=cmd_baselines)

    p_pilot = sub.add_parser(
        "pilot-study", help="estimator variance and prediction error vs pilot count"
    )
    common(p_pilot)
    p_pilot.set_defaults(func=cmd_pilot_study)

    p_tr = sub.add_parser("transform", help="gamma-transform a matrix or vector file")
    p_tr.add_argument("matrix", help="file holding a correlation matrix or gamma vector")
    p_tr.set_defaults(func=cmd_transform)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except BayesPilotError as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
