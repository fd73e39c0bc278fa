"""Command-line interface: fit, predict, simulate, compare, benchmark.

Exit codes: 0 success, 1 validation or fitting error, 2 file or usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .ebayes import estimate_thresholds
from .ep import fit_ep
from .errors import CumprobitError
from .mfvb import fit_mfvb
from .model import GaussianPosterior, GaussianPrior, Thresholds, read_dataset_csv, read_design_csv
from .numkern import rng_stream
from .oracle import gibbs_fit
from .pmf import PmfPosterior, fit_pmf
from .predict import classify, predict_gaussian, predict_pmf
from .simbench import (
    METHODS,
    SCHEMA_VERSION,
    SimConfig,
    config_dict,
    coverage_study,
    error_vs_oracle,
    gen_dataset,
    run_benchmark,
    write_json,
    write_rows_csv,
)

SEED_ENV = "CUMPROBIT_SEED"


class UsageError(Exception):
    """Bad flag combination detected after parsing (exit code 1)."""


def _default_seed() -> int:
    try:
        return int(os.environ.get(SEED_ENV, "0"))
    except ValueError:
        return 0


def _dataset_path(arg: str):
    if arg == "example":
        return resources.files("cumprobit") / "data" / "example.csv"
    return Path(arg)


def _float_list(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix_json(A) -> dict:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return {"shape": list(A.shape), "data": A.ravel().tolist()}


def _matrix_from_json(obj) -> np.ndarray:
    return np.array(obj["data"], dtype=float).reshape(obj["shape"])


def build_prior(args, p: int) -> GaussianPrior:
    mean = _float_list(args.prior_mean)
    mean = np.full(p, mean[0]) if mean.size == 1 else mean
    if args.prior_cov:
        cov = np.loadtxt(args.prior_cov, delimiter=",", ndmin=2)
    else:
        var = _float_list(args.prior_var)
        cov = np.diag(np.full(p, var[0]) if var.size == 1 else var)
    return GaussianPrior(mean, cov)


def _load_thresholds(path) -> Thresholds:
    values = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
    return Thresholds(values)


def _fit_one(method, dataset, prior, thresholds, args):
    opts = {"epsilon": args.tol, ("max_sweeps" if method == "ep" else "max_iter"): args.max_iter}
    outer = None
    if thresholds is None:
        thresholds, fit, outer = estimate_thresholds(dataset, prior, method=method, fit_options=opts)
    elif method == "mfvb":
        fit = fit_mfvb(dataset, prior, thresholds, **opts)
    elif method == "pmf":
        fit = fit_pmf(dataset, prior, thresholds, **opts)
    else:
        fit = fit_ep(dataset, prior, thresholds, **opts)
    return thresholds, fit, outer


def _report_json(report, timing: bool) -> dict:
    d = report.to_dict()
    if not timing:
        d.pop("elapsed", None)
    return d


def fit_record(method, names, prior, thresholds, fit, outer, timing=True) -> dict:
    post = fit.posterior
    rec = {
        "method": method,
        "covariates": names,
        "prior": {"mean": prior.mean.tolist(), "cov": _matrix_json(prior.cov)},
        "thresholds": thresholds.cutpoints.tolist(),
        "thresholds_estimated": outer is not None,
        "posterior": {"mean": post.mean.tolist(), "cov": _matrix_json(post.cov)},
        "report": _report_json(fit.report, timing),
        "converged": bool(fit.report.converged and (outer is None or outer.converged)),
    }
    if outer is not None:
        rec["threshold_report"] = _report_json(outer, timing)
    if method == "pmf":
        q: PmfPosterior = fit.pmf
        rec["pmf"] = {
            "xi": q.xi.tolist(), "sigma": q.sigma.tolist(),
            "lower": q.lower.tolist(), "upper": q.upper.tolist(),
            "V": _matrix_json(q.V), "X": _matrix_json(q.X), "prior_shift": q.prior_shift.tolist(),
        }
    return rec


def cmd_fit(args) -> int:
    dataset, names = read_dataset_csv(_dataset_path(args.data), K=args.K)
    prior = build_prior(args, dataset.p)
    fixed = _load_thresholds(args.thresholds) if args.thresholds else None
    methods = list(METHODS) if args.method == "all" else [args.method]
    records = []
    for m in methods:
        thr, fit, outer = _fit_one(m, dataset, prior, fixed, args)
        records.append(fit_record(m, names, prior, thr, fit, outer, timing=not args.omit_timing))
    payload = records[0] if len(records) == 1 else {"fits": records}
    _write_json(args.out, payload)
    for r in records:
        print(f"{r['method']}: converged={r['converged']} thresholds={np.round(r['thresholds'], 4).tolist()}",
              file=sys.stderr)
    return 0


def _write_json(path, payload):
    text = json.dumps({"schema_version": SCHEMA_VERSION, **payload}, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _select_fit(doc: dict, method: str | None) -> dict:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise UsageError(f"unsupported fit schema_version {doc.get('schema_version')!r}")
    fits = doc["fits"] if "fits" in doc else [doc]
    if method is None:
        if len(fits) > 1:
            raise UsageError("fit file holds several methods; choose one with --method")
        return fits[0]
    for f in fits:
        if f["method"] == method:
            return f
    raise UsageError(f"fit file has no {method} fit")


def cmd_predict(args) -> int:
    doc = json.loads(Path(args.fit).read_text())
    rec = _select_fit(doc, args.method)
    Xnew, names = read_design_csv(_dataset_path(args.data))
    if names != rec["covariates"]:
        raise UsageError(f"covariates {names} do not match the fit's {rec['covariates']}")
    thresholds = Thresholds(rec["thresholds"])
    if rec["method"] == "pmf":
        q = rec["pmf"]
        mean = np.array(rec["prior"]["mean"])
        post = PmfPosterior(np.array(q["xi"]), np.array(q["sigma"]), np.zeros(len(q["xi"])),
                            _matrix_from_json(q["V"]), np.array(q["lower"]), np.array(q["upper"]),
                            GaussianPrior(mean, _matrix_from_json(rec["prior"]["cov"])),
                            _matrix_from_json(q["X"]).reshape(len(q["xi"]), -1), np.array(q["prior_shift"]))
        dist = predict_pmf(post, thresholds, Xnew, draws=args.draws, rng=rng_stream(args.seed))
    else:
        post = GaussianPosterior(np.array(rec["posterior"]["mean"]), _matrix_from_json(rec["posterior"]["cov"]))
        dist = predict_gaussian(post, thresholds, Xnew)
    K = dist.K
    labels = classify(dist)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        w = csv.writer(out)
        w.writerow([f"p{k}" for k in range(1, K + 1)] + [f"F{k}" for k in range(1, K)] + ["class"])
        for r in range(len(dist)):
            w.writerow([repr(float(v)) for v in dist.probs[r]] + [repr(float(v)) for v in dist.cumulative[r]]
                       + [int(labels[r])])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_simulate(args) -> int:
    config = SimConfig(n=args.n, p=args.p, K=args.K, reps=1, seed=args.seed)
    dataset, beta, thr = gen_dataset(config, rng_stream(args.seed))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(dataset.p)] + ["y"])
        for x, y in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
    if args.truth:
        write_json(args.truth, {"config": config_dict(config), "beta": beta.tolist(),
                                "thresholds": thr.cutpoints.tolist()})
    return 0


def cmd_compare(args) -> int:
    dataset, names = read_dataset_csv(_dataset_path(args.data), K=args.K)
    prior = build_prior(args, dataset.p)
    if args.thresholds:
        thresholds = _load_thresholds(args.thresholds)
    else:
        thresholds = estimate_thresholds(dataset, prior, method="ep")[0]
    methods = list(METHODS) if args.method == "all" else [args.method]
    samples = gibbs_fit(dataset, prior, thresholds, args.iterations, args.burn_in, rng_stream(args.seed))
    if args.samples_csv:
        samples.to_csv(args.samples_csv, names)
    res = error_vs_oracle(dataset, prior, thresholds, methods, samples=samples)
    payload = {"thresholds": thresholds.cutpoints.tolist(), "oracle_mean": samples.mean.tolist(),
               "oracle_sd": samples.sd.tolist(), "mean_error": res.mean_error, "sd_error": res.sd_error}
    if not args.omit_timing:
        payload["elapsed"] = res.elapsed
    _write_json(args.out, payload)
    for m in methods:
        print(f"{m}: mean error {res.mean_error[m]:.3e}  sd error {res.sd_error[m]:.3e}")
    return 0


def cmd_benchmark(args) -> int:
    if args.reps < 1:
        raise UsageError("reps must be positive")
    config = SimConfig(n=args.n, p=args.p, K=args.K, reps=args.reps, seed=args.seed)
    methods = list(METHODS) if args.methods == "all" else args.methods.split(",")
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timing_rows = []
    if args.coverage:
        levels = [float(v) for v in _float_list(args.levels)]
        res = coverage_study(config, levels=levels, methods=methods, jobs=args.jobs)
        rows = [{"replication": "all", "method": m, "metric": f"coverage{lv:g}_beta{j + 1}", "value": v}
                for m in methods for lv in levels for j, v in enumerate(res["coverage"][m][lv])]
        for m in methods:
            timing_rows += [{"replication": r, "method": m, "metric": "elapsed", "value": t}
                            for r, t in enumerate(res["elapsed"][m])]
        summary = {m: {f"{lv:g}": float(np.mean(res["coverage"][m][lv])) for lv in levels} for m in methods}
        print("method  " + "  ".join(f"cov{lv:g}" for lv in levels) + "  median_s")
        for m in methods:
            print(f"{m:6s}  " + "  ".join(f"{summary[m][f'{lv:g}']:6.1f}" for lv in levels)
                  + f"  {np.median(res['elapsed'][m]):.3f}")
        payload = {"config": config_dict(config), "levels": levels,
                   "coverage": {m: {f"{lv:g}": res["coverage"][m][lv] for lv in levels} for m in methods}}
    else:
        results = run_benchmark(config, methods, args.iterations, args.burn_in, jobs=args.jobs)
        rows = []
        for r, br in enumerate(results):
            rows += [row for row in br.rows(r) if row["metric"] != "elapsed"]
            timing_rows += [row for row in br.rows(r) if row["metric"] == "elapsed"]
        summary = {m: {"mean_error": float(np.mean([b.mean_error[m] for b in results])),
                       "sd_error": float(np.mean([b.sd_error[m] for b in results]))} for m in methods}
        print("method  mean_err   sd_err     median_s")
        for m in methods:
            med = np.median([b.elapsed[m] for b in results])
            print(f"{m:6s}  {summary[m]['mean_error']:.3e}  {summary[m]['sd_error']:.3e}  {med:.3f}")
        payload = {"config": config_dict(config), "summary": summary, "rows": rows}
    write_rows_csv(out_dir / "results.csv", rows)
    write_json(out_dir / "results.json", payload)
    write_rows_csv(out_dir / "timing.csv", timing_rows)
    return 0


def _add_prior(p):
    p.add_argument("--prior-mean", default="0", help="scalar or comma-separated vector (default 0)")
    p.add_argument("--prior-var", default="2", help="scalar or comma-separated diagonal (default 2)")
    p.add_argument("--prior-cov", help="CSV file with the full prior covariance (overrides --prior-var)")


def _add_thresholds(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--thresholds", help="CSV file with fixed cutpoints (default: estimate them)")
    g.add_argument("--estimate-thresholds", action="store_true", help="estimate cutpoints (the default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cumprobit", description="Approximate Bayesian cumulative probit regression")
    sub = parser.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    p = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p.add_argument("--data", required=True, help="CSV with a y column, or 'example' for the bundled data")
    p.add_argument("--method", choices=(*METHODS, "all"), default="ep")
    p.add_argument("--K", type=int, help="number of categories (default: max y)")
    _add_prior(p)
    _add_thresholds(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--omit-timing", action="store_true", help="leave elapsed times out of the JSON")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive probabilities for new rows")
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--truth", help="optional JSON file for the true beta and cutoffs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare approximations with a Gibbs reference")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=(*METHODS, "all"), default="all")
    p.add_argument("--K", type=int)
    _add_prior(p)
    _add_thresholds(p)
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--samples-csv", help="also write the Gibbs draws here")
    p.add_argument("--omit-timing", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("benchmark", help="simulation benchmark or coverage study")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--methods", default="all", help="comma-separated subset of mfvb,pmf,ep")
    p.add_argument("--coverage", action="store_true", help="run the coverage study instead")
    p.add_argument("--levels", default="80,90,95")
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default="bench")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CumprobitError, UsageError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
