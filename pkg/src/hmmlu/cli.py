"""Command-line front end.

Commands: fit, compare, residuals, check-id, simulate, mc, dist.  Exit
codes: 0 success, 2 non-convergence, 1 input error.  See FORMATS.md for
the file formats.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np
import yaml

from .marparam import ConvergenceError
from .mc import mc_study, sample_scenario, scenario_catalog
from .mle import (fit, joint_residuals, local_identifiability,
                  marginal_residuals)
from .model import (compile_marginal, compile_model, load_model_spec,
                    necessary_identifiability)
from .shapes import shaped_pmf
from .tables import InputError, read_counts_csv


def _limit_threads() -> None:
    n = os.environ.get("HMMLU_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(int(n))
    except ImportError:
        pass


def _write_or_print(text: str, path, quiet: bool) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    if not quiet and not path:
        print(text)


def _report_text(res) -> str:
    lines = [
        f"log-likelihood  {res.loglik:.4f}",
        f"parameters      {res.n_params}",
        f"observations    {res.n_obs:.0f}",
        f"AIC {res.aic:.3f}   BIC {res.bic:.3f}",
        f"converged       {res.converged} ({res.method}, "
        f"{res.n_iter} iterations, |score| {res.grad_norm:.2e})",
        f"rank            {res.rank} / {res.n_params}"
        + ("" if res.identifiable else "  ** rank deficient **"),
    ]
    if res.boundary:
        lines.append("warning: association estimate near the boundary; "
                     "standard errors unreliable")
    if res.message:
        lines.append(f"note: {res.message}")
    lines.append("")
    lines.append(f"{'parameter':<34} {'estimate':>10} {'se':>9} "
                 f"{'z':>8} {'p':>8}")
    for row in res.summary_rows():
        lines.append(f"{row['name']:<34} {row['estimate']:>10.4f} "
                     f"{row['se']:>9.4f} {row['z']:>8.3f} "
                     f"{row['p_value']:>8.4f}")
    return "\n".join(lines)


def cmd_fit(args) -> int:
    spec = load_model_spec(args.model)
    cm = compile_marginal(spec) if args.marginal else compile_model(spec)
    table = read_counts_csv(args.data, v=spec.schema.v)
    counts = cm.align_counts(table)
    res = fit(cm, counts, method=args.method, n_starts=args.starts,
              seed=args.seed, tol=args.tol, max_iter=args.max_iter)
    if args.out:
        res.to_json(args.out)
    _write_or_print(_report_text(res), args.report, args.quiet)
    if args.quiet and not args.out and not args.report:
        print(f"{res.loglik:.4f}")
    return 0 if res.converged else 2


def cmd_compare(args) -> int:
    with open(args.fit_restricted) as fh:
        a = json.load(fh)
    with open(args.fit_general) as fh:
        b = json.load(fh)
    if a["n_params"] > b["n_params"]:
        raise InputError("first fit must be the restricted model")
    import scipy.stats
    stat = max(0.0, 2.0 * (b["loglik"] - a["loglik"]))
    df = b["n_params"] - a["n_params"]
    p = 1.0 if df == 0 else float(scipy.stats.chi2.sf(stat, df))
    row = {"statistic": stat, "df": df, "p_value": p,
           "loglik_restricted": a["loglik"], "loglik_general": b["loglik"]}
    text = json.dumps(row, indent=2)
    _write_or_print(text, args.out, args.quiet)
    if args.quiet and not args.out:
        print(f"{stat:.4f} {df} {p:.4f}")
    return 0


class _StoredFit:
    """Just enough of a fit for the residual helpers."""

    def __init__(self, d):
        self.fitted_q = np.asarray(d["fitted_q"], dtype=float)
        self.strata = d["strata"]


def cmd_residuals(args) -> int:
    spec = load_model_spec(args.model)
    table = read_counts_csv(args.data, v=spec.schema.v)
    with open(args.fit) as fh:
        stored = _StoredFit(json.load(fh))
    if list(table.strata) != list(stored.strata):
        order = [table.strata.index(s) for s in stored.strata]
        counts = table.counts[order]
    else:
        counts = table.counts
    out = sys.stdout if not args.out else open(args.out, "w", newline="")
    w = csv.writer(out)
    try:
        if args.kind == "joint":
            r = joint_residuals(stored, counts)
            w.writerow(["stratum"]
                       + [f"r{i+1}" for i in range(spec.schema.v)]
                       + ["count", "residual"])
            cells = list(np.ndindex(*spec.schema.m))
            for h, lab in enumerate(stored.strata):
                for c, cell in enumerate(cells):
                    w.writerow([lab] + [x + 1 for x in cell]
                               + [int(counts[h, c]), f"{r[h, c]:.4f}"])
            share = float(np.mean(np.abs(r) <= 4.0))
            print(f"# share of |residual| <= 4: {share:.4f}",
                  file=sys.stderr if args.out else sys.stdout)
        else:
            rs = marginal_residuals(stored, counts, spec.schema)
            w.writerow(["item", "category", "stratum", "residual"])
            for i in range(spec.schema.v):
                for h, lab in enumerate(stored.strata):
                    for j in range(spec.schema.m[i]):
                        w.writerow([spec.item_names[i], j + 1, lab,
                                    f"{rs[i][h, j]:.4f}"])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_check_id(args) -> int:
    spec = load_model_spec(args.model)
    nec = necessary_identifiability(spec.schema)
    cm = compile_model(spec)
    lines = [
        f"model parameters: {cm.p}",
        f"single-stratum necessary condition: {nec['params']} parameter "
        f"slots vs {nec['free_frequencies']} free frequencies -> "
        + ("satisfied" if nec["satisfied"]
           else f"violated ({nec['params']} > {nec['free_frequencies']})"),
    ]
    ok = True
    if args.fit:
        with open(args.fit) as fh:
            d = json.load(fh)
        beta = np.asarray(d["beta"], dtype=float)
        if beta.shape != (cm.p,):
            raise InputError("fit.json does not match the model config")
        rank, null = local_identifiability(cm, beta)
        ok = rank == cm.p
        lines.append(f"rank(D) = {rank} of p = {cm.p}: "
                     + ("locally identifiable" if ok
                        else "rank deficient"))
        if not ok:
            for k in range(null.shape[1]):
                top = np.argsort(-np.abs(null[:, k]))[:5]
                terms = ", ".join(f"{cm.param_names[j]}:{null[j, k]:+.3f}"
                                  for j in top)
                lines.append(f"null direction {k + 1}: {terms}")
    _write_or_print("\n".join(lines), args.out, args.quiet)
    return 0 if ok else 2


def cmd_simulate(args) -> int:
    cat = scenario_catalog()
    if args.scenario not in cat:
        raise InputError(f"unknown scenario {args.scenario!r}; "
                         f"choose from {sorted(cat)}")
    sc = cat[args.scenario]
    if args.reps == 0:
        # draw a single dataset instead of running a study
        rng = np.random.default_rng(args.seed)
        table = sample_scenario(sc, args.n, rng)
        out = sys.stdout if not args.out else open(args.out, "w",
                                                   newline="")
        w = csv.writer(out)
        w.writerow(["stratum"]
                   + [f"r{i+1}" for i in range(sc.schema.v)] + ["count"])
        for c, cell in enumerate(np.ndindex(*sc.m)):
            w.writerow(["all"] + [x + 1 for x in cell]
                       + [int(table.counts[0, c])])
        if args.out:
            out.close()
        return 0
    study = mc_study(sc, args.n, args.reps, seed=args.seed,
                     fit_ignoring=not args.no_ignoring,
                     verbose=not args.quiet)
    if study.n_failed == study.reps:
        raise InputError("all replications failed to converge")
    text = json.dumps(study.summary(), indent=2)
    _write_or_print(text, args.out, args.quiet)
    if args.boxplot:
        with open(args.boxplot, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "rep", "parameter", "error"])
            for row in study.boxplot_rows():
                w.writerow(row)
    return 0


def cmd_dist(args) -> int:
    pmf = shaped_pmf(args.m, args.kind, phi=args.phi)
    out = sys.stdout if not args.out else open(args.out, "w", newline="")
    w = csv.writer(out)
    w.writerow(["category", "prob"])
    for j, pr in enumerate(pmf.probs, start=1):
        w.writerow([j, f"{pr:.10f}"])
    if args.out:
        out.close()
    return 0


def _common(sub, data=False, model=False):
    if data:
        sub.add_argument("--data", required=True,
                         help="counts CSV (see FORMATS.md)")
    if model:
        sub.add_argument("--model", required=True,
                         help="model config YAML")
    sub.add_argument("--out", help="output path (default: stdout)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--tol", type=float, default=1e-6)
    sub.add_argument("--max-iter", type=int, default=500)
    sub.add_argument("--method", choices=("fisher", "bfgs"),
                     default="bfgs")
    sub.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hmmlu",
        description="Hierarchical marginal models with latent uncertainty")
    sp = ap.add_subparsers(dest="command", required=True)

    s = sp.add_parser("fit", help="fit a model to a counts table")
    _common(s, data=True, model=True)
    s.add_argument("--report", help="write the human-readable report here")
    s.add_argument("--starts", type=int, default=5,
                   help="number of optimizer starts")
    s.add_argument("--marginal", action="store_true",
                   help="fit the comparator that ignores uncertainty")
    s.set_defaults(func=cmd_fit)

    s = sp.add_parser("compare",
                      help="likelihood-ratio test of two stored fits")
    s.add_argument("fit_restricted", help="fit.json of the nested model")
    s.add_argument("fit_general", help="fit.json of the general model")
    _common(s)
    s.set_defaults(func=cmd_compare)

    s = sp.add_parser("residuals", help="residuals of a stored fit")
    _common(s, data=True, model=True)
    s.add_argument("--fit", required=True, help="fit.json from `hmmlu fit`")
    s.add_argument("--kind", choices=("joint", "marginal"),
                   default="joint")
    s.set_defaults(func=cmd_residuals)

    s = sp.add_parser("check-id", help="identifiability diagnostics")
    _common(s, model=True)
    s.add_argument("--fit", help="optional fit.json for the rank check")
    s.set_defaults(func=cmd_check_id)

    for name in ("simulate", "mc"):
        s = sp.add_parser(
            name, help="Monte Carlo study on a benchmark scenario"
            + ("" if name == "simulate" else " (alias of simulate)"))
        _common(s)
        s.add_argument("--scenario", required=True)
        s.add_argument("--n", type=int, default=10000)
        s.add_argument("--reps", type=int, default=100,
                       help="0 draws a single dataset as counts CSV")
        s.add_argument("--boxplot",
                       help="write per-replication errors CSV here")
        s.add_argument("--no-ignoring", action="store_true",
                       help="skip the uncertainty-ignoring comparator")
        s.set_defaults(func=cmd_simulate)

    s = sp.add_parser("dist", help="print an uncertainty pmf as CSV")
    _common(s)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--kind", required=True)
    s.add_argument("--phi", type=float)
    s.set_defaults(func=cmd_dist)
    return ap


def main(argv=None) -> int:
    _limit_threads()
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, json.JSONDecodeError,
            yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
