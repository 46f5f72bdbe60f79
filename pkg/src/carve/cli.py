"""Command-line entry point ``carve``.

Subcommands::

    carve dist tnorm|sntn ...           distribution queries, JSON on stdout
    carve analyze --x X.csv --y y.csv   inference on user data
    carve analyze diabetes --data PATH  the diabetes study
    carve simulate sample-mean|hdr      simulation studies
    carve bench bvn|rootfind            numerical benchmarks

A JSON file passed with ``--config`` overrides flag values (keys use the
flag names with underscores). ``--plot`` also writes PNG figures next to the
CSV output.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import experiments as exp
from .errors import CarveError
from .report import emit_report

log = logging.getLogger("carve")


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    path = getattr(args, "config", None)
    if not path:
        return args
    data = json.loads(Path(path).read_text())
    for key, value in data.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise CarveError(f"config key {key!r} is not an option of this subcommand")
        setattr(args, key, value)
    return args


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# dist

def _cmd_dist(args) -> int:
    from .dists import tnorm_cdf, tnorm_ci, tnorm_pdf, tnorm_ppf, tnorm_pvalue
    from .sntn import SntnInputs, sntn_cdf, sntn_ci, sntn_pdf, sntn_ppf, sntn_pvalue

    out: dict = {"family": args.family}
    if args.family == "tnorm":
        params = dict(mu=args.mu, sigma2=args.sigma2, a=args.a, b=args.b)
        out["params"] = params
        if args.cdf is not None:
            out["cdf"] = float(tnorm_cdf(args.cdf, **params))
        if args.pdf is not None:
            out["pdf"] = float(tnorm_pdf(args.pdf, **params))
        if args.ppf is not None:
            out["ppf"] = float(tnorm_ppf(args.ppf, **params))
        if args.pvalue is not None:
            out["pvalue"] = tnorm_pvalue(args.pvalue, args.mu, args.sigma2, args.a, args.b, args.tail)
        if args.ci is not None:
            out["ci"] = list(tnorm_ci(args.ci, args.sigma2, args.a, args.b, args.alpha))
    else:
        inp = SntnInputs(args.mu1, args.tau1_2, args.mu2, args.tau2_2, args.a, args.b, args.c1, args.c2)
        out["params"] = asdict(inp)
        if args.cdf is not None:
            out["cdf"] = float(sntn_cdf(args.cdf, inp, args.method))
        if args.pdf is not None:
            out["pdf"] = float(sntn_pdf(args.pdf, inp))
        if args.ppf is not None:
            out["ppf"] = float(sntn_ppf(args.ppf, inp, args.method))
        if args.pvalue is not None:
            out["pvalue"] = sntn_pvalue(args.pvalue, inp, args.tail, args.method)
        if args.ci is not None:
            out["ci"] = list(sntn_ci(args.ci, inp, args.alpha, args.method))
    json.dump(out, sys.stdout, indent=1, default=float)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# analyze

def _cmd_analyze(args) -> int:
    if args.target == "diabetes":
        return _analyze_diabetes(args)
    from .inference import CSV_COLUMNS, CarveConfig, analyze
    from .selection import read_matrix_csv, standardize

    if not (args.x and args.y):
        raise CarveError("analyze needs --x and --y (or the 'diabetes' target)")
    X = read_matrix_csv(args.x)
    y = read_matrix_csv(args.y).ravel()
    if X.shape[0] != y.size:
        raise CarveError(f"X has {X.shape[0]} rows but y has {y.size}")
    X, y = standardize(X, y)
    algo = "marginal_screen" if args.algo in ("screen", "marginal_screen") else args.algo
    sigma2 = args.sigma2 if args.sigma2 == "estimate" else float(args.sigma2)
    cfg = CarveConfig(frac_b=args.frac_b, alpha=args.alpha, sigma2=sigma2, algorithm=algo,
                      lam_frac=args.lam_frac if algo == "lasso" else None,
                      k=args.k if algo == "marginal_screen" else None)
    res = analyze(X, y, cfg, seed=args.seed)
    rows = [{c: getattr(r, c) for c in CSV_COLUMNS} for r in res.results]
    out = Path(args.out)
    if not rows:
        log.warning("no features selected on block A; writing an empty report")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(",".join(CSV_COLUMNS) + "\n")
    else:
        emit_report(rows, "csv", out)
    log.info("sigma2=%.6g (%s), selected on A: %s", res.sigma2, res.meta["sigma2_source"], res.selected_A.tolist())
    if args.plot:
        from .plotting import plot_intervals
        from .experiments import DiabetesRow

        drows = [DiabetesRow(str(r.feature), r.method, 0.0, r.estimate, r.pvalue, r.ci_lo, r.ci_hi,
                             not r.ci_lo <= 0 <= r.ci_hi) for r in res.results]
        if drows:
            plot_intervals(drows, out.with_suffix(".png"))
    return 0


def _analyze_diabetes(args) -> int:
    out = _outdir(args)
    sigma2 = None if args.sigma2 in (None, "estimate") else float(args.sigma2)
    res = exp.analyze_diabetes(args.data, lam=args.lam, frac_grid=_frac_grid(args), alpha=args.alpha,
                               seed=args.seed, reading=args.lam_reading, sigma2=sigma2)
    emit_report(res.rows, "csv", out / "diabetes_cis.csv")
    meta = dict(res.meta, sigma2=res.sigma2, penalty=res.penalty, reading=res.reading,
                selected_full=res.selected_full)
    (out / "diabetes_meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    log.info("selected on all rows: %s", ", ".join(res.selected_full))
    if args.plot:
        from .plotting import plot_intervals

        plot_intervals(res.rows, out / "diabetes_cis.png", title=f"{int(100 * (1 - args.alpha))}% intervals")
    return 0


def _frac_grid(args):
    return tuple(args.frac_grid) if isinstance(args.frac_grid, (list, tuple)) else _float_list(args.frac_grid)


# ---------------------------------------------------------------------------
# simulate

def _cmd_simulate(args) -> int:
    out = _outdir(args)
    if args.study == "sample-mean":
        mu = np.linspace(0.0, args.mu_max, args.mu_steps)
        rows = exp.power_sample_mean(n=args.n, sigma2=args.sigma2, alpha=args.alpha, mu_grid=mu,
                                     threshold=args.threshold)
        emit_report(rows, "csv", out / "fig1_power.csv")
        if args.mc_spot:
            spots = []
            rng = np.random.default_rng(args.seed)
            cells = [(int(rng.integers(1, args.n)), float(rng.choice(mu[1:]))) for _ in range(args.mc_spot)]
            table = {(r.n_a, r.mu): r for r in rows}
            for i, (n_a, m) in enumerate(cells):
                rate = exp.mc_power_sample_mean(args.n, n_a, args.sigma2, args.alpha, m, args.threshold,
                                                draws=args.mc_draws, seed=args.seed + i)
                analytic = table[(n_a, m)].carve
                se = exp.binomial_se(analytic, args.mc_draws)
                spots.append({"n_a": n_a, "mu": m, "analytic": analytic, "mc": rate, "mc_se": se,
                              "z": (analytic - rate) / se})
            emit_report(spots, "csv", out / "fig1_mc_spot.csv")
        if args.plot:
            from .plotting import plot_power_surface

            plot_power_surface(rows, out / "fig1_power.png")
        return 0

    snr = exp.FULL_SNR if args.full_scale else _float_list(args.snr) if isinstance(args.snr, str) else args.snr
    n_sims = 500 if args.full_scale else args.n_sims
    cfg = exp.SimConfig(n=args.n, p=args.p, s=args.s, sigma2=args.sigma2, alpha=args.alpha,
                        snr_grid=tuple(snr), frac_grid=_frac_grid(args), n_sims=n_sims,
                        base_seed=args.seed, algorithm=args.algo, lam_frac=args.lam_frac, k=args.k,
                        workers=args.workers)
    records = exp.run_hdr_grid(cfg)
    emit_report(records, "csv", out / "hdr_metrics.csv")
    if args.plot:
        from .plotting import plot_hdr_metric

        for metric in exp.METRICS:
            plot_hdr_metric(records, out / f"hdr_{metric}.png", metric, alpha=cfg.alpha)
    return 0


# ---------------------------------------------------------------------------
# bench

def _bench_path(args) -> Path:
    # --out is either a directory or the report file itself
    out = Path(args.out)
    if out.suffix == ".csv":
        out.parent.mkdir(parents=True, exist_ok=True)
        return out
    return _outdir(args) / f"bench_{args.what}.csv"


def _cmd_bench(args) -> int:
    path = _bench_path(args)
    if args.what == "bvn":
        from .bvn import BvnMethod, METHODS, MC_METHODS, bvn_benchmark, random_grid

        methods = [BvnMethod(tag=m, mc_samples=args.mc_samples, seed=args.seed) if m in MC_METHODS
                   else BvnMethod(tag=m) for m in (args.methods or METHODS)]
        bench = bvn_benchmark(random_grid(args.grid, args.seed), methods, args.oracle_samples, args.seed)
        emit_report(bench.rows, "csv", path)
        rows = bench.rows
    else:
        rows, _ = exp.bench_rootfind(count=args.count, alpha=args.alpha, seed=args.seed, tol=args.tol)
        emit_report(rows, "csv", path)
    if args.plot:
        from .plotting import plot_bench

        plot_bench(rows, path.with_suffix(".png"))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carve", description="Exact inference after selection by data carving.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="JSON file whose keys override flags")
        sp.add_argument("--out", default=out_default)
        sp.add_argument("--plot", action="store_true", help="also write PNG figures")
        sp.add_argument("--seed", type=int, default=1)

    d = sub.add_parser("dist", help="distribution queries")
    d.add_argument("family", choices=("tnorm", "sntn"))
    d.add_argument("--config")
    for flag in ("--cdf", "--pdf", "--ppf", "--pvalue", "--ci"):
        d.add_argument(flag, type=float)
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--tail", choices=("left", "right", "two-sided"), default="two-sided")
    d.add_argument("--method", default="owen", help="BVN backend for sntn")
    d.add_argument("--mu", type=float, default=0.0)
    d.add_argument("--sigma2", type=float, default=1.0)
    d.add_argument("--a", type=float, default=-math.inf)
    d.add_argument("--b", type=float, default=math.inf)
    d.add_argument("--mu1", type=float, default=0.0)
    d.add_argument("--tau1-2", dest="tau1_2", type=float, default=1.0)
    d.add_argument("--mu2", type=float, default=0.0)
    d.add_argument("--tau2-2", dest="tau2_2", type=float, default=1.0)
    d.add_argument("--c1", type=float, default=0.5)
    d.add_argument("--c2", type=float, default=0.5)
    d.set_defaults(func=_cmd_dist)

    a = sub.add_parser("analyze", help="inference on a dataset")
    a.add_argument("target", nargs="?", choices=("diabetes",))
    common(a, "results.csv")
    a.add_argument("--x")
    a.add_argument("--y")
    a.add_argument("--data", help="diabetes CSV (442 rows, age..s6 plus target)")
    a.add_argument("--algo", choices=("lasso", "screen", "marginal_screen"), default="lasso")
    a.add_argument("--lam-frac", type=float, default=0.725)
    a.add_argument("--k", type=int, default=10)
    a.add_argument("--frac-b", type=float, default=0.15)
    a.add_argument("--frac-grid", default="0.15,0.20,0.25")
    a.add_argument("--alpha", type=float, default=0.1)
    a.add_argument("--sigma2", default="estimate")
    a.add_argument("--lam", type=float, default=0.25, help="diabetes penalty")
    a.add_argument("--lam-reading", choices=exp.LAMBDA_READINGS, default="unit_norm")
    a.set_defaults(func=_cmd_analyze)

    s = sub.add_parser("simulate", help="simulation studies")
    s.add_argument("study", choices=("sample-mean", "hdr"))
    common(s, "out")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--p", type=int, default=150)
    s.add_argument("--s", type=int, default=5)
    s.add_argument("--sigma2", type=float, default=None)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--threshold", type=float, default=1.0)
    s.add_argument("--mu-max", type=float, default=2.0)
    s.add_argument("--mu-steps", type=int, default=21)
    s.add_argument("--mc-spot", type=int, default=0, help="number of Monte Carlo spot cells")
    s.add_argument("--mc-draws", type=int, default=1_000_000)
    s.add_argument("--algo", choices=("lasso", "screen"), default="lasso")
    s.add_argument("--lam-frac", type=float, default=0.725)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--snr", default="-1,0,1", help="log10 SNR values")
    s.add_argument("--frac-grid", default="0.15,0.20,0.25")
    s.add_argument("--n-sims", type=int, default=100)
    s.add_argument("--full-scale", action="store_true", help="500 runs over 7 SNR values")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_cmd_simulate)

    b = sub.add_parser("bench", help="numerical benchmarks")
    b.add_argument("what", choices=("bvn", "rootfind"))
    common(b, "out")
    b.add_argument("--grid-size", "--grid", dest="grid", type=int, default=1000)
    b.add_argument("--oracle-samples", type=int, default=1_000_000)
    b.add_argument("--mc-samples", type=int, default=10_000)
    b.add_argument("--methods", nargs="*")
    b.add_argument("--n", "--count", dest="count", type=int, default=1050, help="number of two-sided intervals")
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--tol", type=float, default=1e-8)
    b.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = _apply_config(args)
        if getattr(args, "command", None) == "simulate" and args.sigma2 is None:
            args.sigma2 = 4.0 if args.study == "sample-mean" else 1.0
        return args.func(args)
    except (CarveError, OSError, json.JSONDecodeError) as exc:
        print(f"carve: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
