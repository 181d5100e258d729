"""Command-line front end.

Every run appends one JSON record (one line) to the records file given by
``--out`` (default ``vinolab-records.jsonl``); the whole file is rewritten
through a temporary file and renamed into place.  ``--plot-dir`` additionally
writes the run's tidy CSV, a plot description and a PNG.

Exit codes: 0 success, 1 other package error, 2 budget exceeded, 3 invalid
input, 64 malformed command line.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np

from . import __version__
from .core import Instance, StepFunction, WeightProfile, as_fraction, fraction_str, make_rng
from .errors import BudgetExceeded, EmptySelection, ValidationError, VinolabError

EXIT_OK, EXIT_ERROR, EXIT_BUDGET, EXIT_INVALID, EXIT_USAGE = 0, 1, 2, 3, 64

BUDGET_ENV = "VINOLAB_BUDGET_PROFILE"
BUDGET_PROFILES = {
    "small": {"max_tuples": 10 ** 7, "max_bytes": 2 * 10 ** 8, "max_panels": 200_000,
              "max_grid_points": 5_000_000},
    "default": {"max_tuples": 10 ** 9, "max_bytes": 2 * 10 ** 9, "max_panels": 2_000_000,
                "max_grid_points": 120_000_000},
    "large": {"max_tuples": 10 ** 10, "max_bytes": 8 * 10 ** 9, "max_panels": 20_000_000,
              "max_grid_points": 300_000_000},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# serialization

def jsonable(obj):
    """Fractions become "num/den" strings; numpy scalars and arrays become Python values."""
    if isinstance(obj, Fraction):
        return fraction_str(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(dataclasses.asdict(obj))
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def append_record(path: str, record: dict):
    """Append one JSON line to ``path`` atomically (temp file + rename)."""
    line = json.dumps(record, sort_keys=True) + "\n"
    old = b""
    if os.path.exists(path):
        with open(path, "rb") as fh:
            old = fh.read()
        if old and not old.endswith(b"\n"):
            old += b"\n"
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".records-", dir=d)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(old + line.encode())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_records(path: str) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _atomic_write_text(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d)
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# plot data

def _plot_table(record: dict):
    """(columns, rows, description) for a record, or None if it has no natural plot."""
    sub, res, par = record["subcommand"], record["results"], record["params"]
    if sub == "count" and "growth" in res:
        gr = res["growth"]
        rows = [{"N": N, "J": J, "log_N": float(np.log(N)), "log_J": float(np.log(J))}
                for N, J in zip(gr["N"], gr["J"])]
        x0, y0 = rows[0]["log_N"], rows[0]["log_J"]
        refs = [{"slope": s, "intercept": y0 - s * x0, "label": f"slope {s:g}"}
                for s in sorted(set(gr["reference_slopes"]))]
        desc = {"title": f"J_(s,n)(N), n={gr['n']}, s={gr['s']}", "x": "N", "y": "J",
                "logx": True, "logy": True, "reference_lines": refs}
        return ["N", "J", "log_N", "log_J"], rows, desc
    if sub == "vp-scan":
        rows = []
        for p, e in res["experiments"].items():
            for d, r in zip(e["params"]["deltas"], e["ratios"]):
                inv = 1 / float(Fraction(d))
                rows.append({"p": p, "delta": d, "inv_delta": inv, "log_inv_delta": float(np.log(inv)),
                             "max_ratio": r, "log_max_ratio": float(np.log(r))})
        desc = {"title": f"max decoupling ratio, n={par['n']}", "x": "inv_delta", "y": "max_ratio",
                "series": "p", "logx": True, "logy": True, "xlabel": "1/delta"}
        return ["p", "delta", "inv_delta", "log_inv_delta", "max_ratio", "log_max_ratio"], rows, desc
    if sub in ("appendix", "threshold") and "sweep" in res:
        rows = [{"Delta": float(Fraction(r["Delta"])), "Delta_exact": r["Delta"],
                 "margin": float(Fraction(r["margin"]))} for r in res["sweep"]]
        desc = {"title": f"omega_1(Delta, 0) - 1, n={par['n']}", "x": "Delta", "y": "margin",
                "hlines": [{"y": 0.0, "label": "omega_1 = 1"}]}
        return ["Delta", "Delta_exact", "margin"], rows, desc
    if sub == "minor-sup":
        rows = [{"N": r["N"], "sup_estimate": r["sup_estimate"]} for r in res["rows"]]
        x0, y0 = np.log(rows[0]["N"]), np.log(rows[0]["sup_estimate"])
        refs = [{"slope": s, "intercept": float(y0 - s * x0), "label": f"slope {s:g}"} for s in (0.5, 1.0)]
        desc = {"title": f"minor-arc sup of |F|, n={par['n']}", "x": "N", "y": "sup_estimate",
                "logx": True, "logy": True, "reference_lines": refs}
        return ["N", "sup_estimate"], rows, desc
    if sub == "decouple" and par.get("inequality") == "l2" and "experiments" in res:
        rows = [{"inv_delta": 1 / e["delta"], "max_ratio": e["max_ratio"]} for e in res["experiments"]]
        desc = {"title": "L2 orthogonality, max ratio", "x": "inv_delta", "y": "max_ratio",
                "logx": True, "xlabel": "1/delta"}
        return ["inv_delta", "max_ratio"], rows, desc
    return None


def emit_plotdata(records: list, out_dir: str, stem: str = "plot") -> dict:
    """Tidy CSV, plot description JSON and PNG for records sharing one subcommand."""
    from .plotting import render, write_csv

    if not records:
        raise EmptySelection("no records selected")
    subs = {r["subcommand"] for r in records}
    if len(subs) != 1:
        raise ValidationError(f"records mix subcommands {sorted(subs)}")
    columns, rows, desc = None, [], None
    for k, rec in enumerate(records):
        t = _plot_table(rec)
        if t is None:
            continue
        columns, r, desc = t
        if len(records) > 1:
            columns = ["record"] + [c for c in columns if c != "record"]
            for row in r:
                row["record"] = k
            desc = dict(desc, series=desc.get("series") or "record")
        rows += r
    if not rows:
        raise EmptySelection(f"no plottable data in {subs.pop()} records")
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f"{stem}.{ext}") for k, ext in
             (("csv", "csv"), ("description", "plot.json"), ("figure", "png"))}
    write_csv(paths["csv"], rows, columns)
    desc = dict(desc, csv=os.path.basename(paths["csv"]))
    _atomic_write_text(paths["description"], json.dumps(desc, indent=2, sort_keys=True) + "\n")
    render(desc, rows, paths["figure"])
    return paths


# --------------------------------------------------------------------------
# subcommands

def _ints(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _rationals(text: str) -> list:
    return [as_fraction(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _budget(args):
    from .counting import Budget
    return Budget(max_tuples=args.max_tuples, max_bytes=args.max_bytes)


def _qcfg(args, base=None):
    from .decouple import DEFAULT_CFG
    base = base or DEFAULT_CFG
    return dataclasses.replace(base, max_panels=args.max_panels, max_grid_points=args.max_grid_points,
                               seed=args.seed if args.seed is not None else base.seed)


def _profile(args) -> WeightProfile:
    return WeightProfile(args.weight_exponent)


def cmd_count(args):
    from .counting import count_mitm, count_naive, growth_fit
    from .expsum import torus_integral_power
    budget = _budget(args)
    res = {}
    if args.N_list:
        res["growth"] = growth_fit(args.n, args.s, _ints(args.N_list), algo=args.algo if args.algo != "all" else "mitm",
                                   budget=budget, workers=args.workers)
        return res
    if args.N is None:
        raise ValidationError("give --N or --N-list")
    inst = Instance(args.n, args.s, args.N)
    algos = ["naive", "mitm", "torus"] if args.algo == "all" else [args.algo]
    for a in algos:
        if a == "naive":
            res["naive"] = count_naive(inst, budget)
        elif a == "mitm":
            res["mitm"] = count_mitm(inst, budget, method=args.method, workers=args.workers)
        elif a == "torus":
            res["torus"] = torus_integral_power(inst)
    res["agreement"] = len(set(res.values())) == 1
    return res


def cmd_count_real(args):
    from .counting import SeparatedPointSet, count_real
    pts = SeparatedPointSet(tuple(_rationals(args.points)))
    return {"J": count_real(pts, args.s, args.n, _budget(args)), "N": pts.N}


def cmd_torus_moment(args):
    from .expsum import QuadratureConfig, moment_monte_carlo, torus_integral_power
    inst = Instance(args.n, args.s, args.N)
    res = {"exact": torus_integral_power(inst)}
    if args.samples:
        cfg = QuadratureConfig(mc_samples=args.samples, seed=args.seed or 0)
        mean, se = moment_monte_carlo(inst, cfg)
        res["monte_carlo"] = {"mean": mean, "stderr": se, "samples": args.samples}
    return res


def cmd_arcs(args):
    from .arcs import enumerate_major_arcs
    e = enumerate_major_arcs(args.N, args.n, samples=args.samples, seed=args.seed or 0)
    return {"labels": [{"q": lab.q, "a": list(lab.a)} for lab in e.labels], "count": len(e.labels),
            "raw_measure": e.raw_measure, "mc_measure": e.mc_measure, "mc_stderr": e.mc_stderr,
            "samples": e.samples}


def cmd_minor_sup(args):
    from .arcs import minor_sup_estimate, minor_sup_fit
    N_list = _ints(args.N_list)
    seed = args.seed or 0
    if len(N_list) == 1:
        rows = [minor_sup_estimate(N_list[0], args.n, args.samples, seed)]
        fit = {}
    else:
        out = minor_sup_fit(N_list, args.n, args.samples, seed)
        rows, fit = out["rows"], {"slope": out["slope"], "intercept": out["intercept"]}
    return dict(fit, rows=[{"N": r.N, "sup_estimate": r.sup_estimate, "samples": r.samples,
                            "acceptance_rate": r.acceptance_rate, "seed": r.seed} for r in rows])


def cmd_weights(args):
    from .weights import closed_form_weights, omega1_series, weights_from_relations
    w = weights_from_relations(args.n, args.p)
    res = {"weights": w.to_record()}
    try:
        res["closed_form_agrees"] = closed_form_weights(args.n, args.p) == w
    except ValidationError:
        res["closed_form_agrees"] = None
    if args.series_r is not None:
        res["series"] = omega1_series(args.n, args.p, args.series_r).to_record()
    return res


def cmd_tree(args):
    from .weights import build_tree
    t = build_tree(args.n, args.p, args.depth)
    return {"leaves": [[lab, fraction_str(w)] for lab, w in t.leaf_terms()],
            "gamma_b": [[fraction_str(g), fraction_str(b)] for g, b in t.gamma_b()],
            "text": t.to_text(), "tree": t.to_json()}


def cmd_appendix(args):
    from .appendix import omega1_affine, residuals, solve_system
    if args.delta_list:
        sweep = []
        for D in _rationals(args.delta_list):
            s = solve_system(args.n, D, args.theta)
            sweep.append({"Delta": D, "omega1": s.omega1, "margin": s.omega1 - 1})
        return {"sweep": sweep}
    sol = solve_system(args.n, args.delta, args.theta)
    A, B = omega1_affine(args.n, args.delta)
    res = sol.to_record()
    res.update(A=A, B=B, residuals_zero=all(r == 0 for r in residuals(sol)))
    return res


def cmd_threshold(args):
    from .appendix import empirical_threshold, verify_threshold
    res = {}
    if args.delta is not None:
        ok, margin = verify_threshold(args.n, args.delta)
        res.update(verdict=ok, margin=margin, margin_float=float(margin))
    if args.scan:
        lo, hi = empirical_threshold(args.n)
        res["empirical_threshold"] = {"lo": lo, "hi": hi, "lo_float": float(lo), "hi_float": float(hi)}
    if not res:
        raise ValidationError("give --delta and/or --scan")
    return res


def _trial_g(args, m: int) -> StepFunction:
    if args.g == "one":
        return StepFunction.constant(m)
    return StepFunction.random_unimodular(m, make_rng(args.seed or 0, 6, m))


def cmd_decouple(args):
    from . import decouple as dc
    cfg, prof = _qcfg(args), _profile(args)
    if args.inequality == "l2":
        exps = dc.l2_orthogonality_scan(args.n, _rationals(args.delta), args.trials, args.seed or 0, cfg, prof)
        return {"experiments": [e.to_record() for e in exps]}
    if args.inequality == "lower_dim":
        g = _trial_g(args, args.cells)
        return {"ratio": dc.lower_dim_ratio(args.sigma, args.R, g, args.t0, args.p[0], cfg, prof)}
    delta = _rationals(args.delta)[0]
    g = _trial_g(args, as_fraction(delta).denominator)
    out = dc.decoupling_ratios(args.n, args.p, delta, g, None, cfg, prof)
    res = {str(p): {"ratio": r, "rel_quadrature_error": e} for p, (r, e) in out.items()}
    if args.check_convergence:
        fine = dc.decoupling_ratios(args.n, args.p, delta, g, None, cfg.doubled(), prof)
        for p, (r, _) in fine.items():
            shift = abs(r / out[p][0] - 1)
            res[str(p)].update(doubled_ratio=r, converged=shift < dc.CONVERGENCE_TOL)
    return res


def cmd_vp_scan(args):
    from .decouple import vp_scan_multi
    exps = vp_scan_multi(args.n, args.p, _rationals(args.delta), args.trials, args.seed or 0,
                         _qcfg(args), _profile(args), check_convergence=args.check_convergence)
    return {"experiments": {f"{p:g}": e.to_record() for p, e in exps.items()},
            "eta_hat": {f"{p:g}": e.params["eta_hat"] for p, e in exps.items()}}


def cmd_restriction(args):
    from .decouple import discrete_restriction_ratio
    N = args.N
    cfg = dataclasses.replace(_qcfg(args), mc_samples=args.samples)
    a = np.ones(N, dtype=complex)
    t = np.arange(1, N + 1) / N
    return discrete_restriction_ratio(args.n, args.p[0], N, a, t, args.R, cfg, _profile(args))


def cmd_inflate(args):
    from .decouple import ball_inflation_ratio
    m = as_fraction(args.rho).denominator
    g = _trial_g(args, m)
    return ball_inflation_ratio(args.p[0], args.rho, g, args.K, _qcfg(args), _profile(args))


def cmd_plot(args):
    recs = [r for r in read_records(args.records) if r["subcommand"] == args.select]
    return {"paths": emit_plotdata(recs, args.plot_dir or ".", args.stem)}


COMMANDS = {
    "count": cmd_count, "count-real": cmd_count_real, "torus-moment": cmd_torus_moment,
    "arcs": cmd_arcs, "minor-sup": cmd_minor_sup, "weights": cmd_weights, "tree": cmd_tree,
    "appendix": cmd_appendix, "threshold": cmd_threshold, "decouple": cmd_decouple,
    "vp-scan": cmd_vp_scan, "restriction": cmd_restriction, "inflate": cmd_inflate,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default="vinolab-records.jsonl", help="records file (JSON lines)")
    common.add_argument("--no-record", action="store_true", help="do not persist the record")
    common.add_argument("--format", choices=["json", "csv"], default="json", help="stdout format")
    common.add_argument("--plot-dir", help="also write CSV, plot description and PNG here")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--budget-profile", choices=sorted(BUDGET_PROFILES),
                        default=os.environ.get(BUDGET_ENV, "default"))
    for k in ("max_tuples", "max_bytes", "max_panels", "max_grid_points"):
        common.add_argument("--" + k.replace("_", "-"), type=int, default=None)
    common.add_argument("--weight-exponent", type=float, default=None,
                        help="decay exponent of the ball weight (default 100 n)")

    p = _Parser(prog="vinolab", description="Vinogradov mean value / decoupling numerics.")
    p.add_argument("--version", action="version", version=__version__)
    sp = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    c = sp.add_parser("count", parents=[common], help="J_{s,n}(N) by enumeration")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--s", type=int, required=True)
    c.add_argument("--N", type=int)
    c.add_argument("--N-list", help="comma separated N values: fit the growth exponent")
    c.add_argument("--algo", choices=["naive", "mitm", "torus", "all"], default="mitm")
    c.add_argument("--method", choices=["sort", "hash"], default="sort")
    c.add_argument("--workers", type=int, default=1)

    c = sp.add_parser("count-real", parents=[common], help="J_s for 1-separated real points")
    c.add_argument("--points", required=True, help="comma separated rationals, x_i in (i-1, i]")
    c.add_argument("--s", type=int, required=True)
    c.add_argument("--n", type=int, required=True)

    c = sp.add_parser("torus-moment", parents=[common], help="exact grid average of |F|^{2s}")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--s", type=int, required=True)
    c.add_argument("--N", type=int, required=True)
    c.add_argument("--samples", type=int, default=0, help="also a Monte Carlo estimate")

    c = sp.add_parser("arcs", parents=[common], help="enumerate major arcs")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--N", type=int, required=True)
    c.add_argument("--samples", type=int, default=100_000)

    c = sp.add_parser("minor-sup", parents=[common], help="sampled sup of |F| on minor arcs")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--N-list", required=True)
    c.add_argument("--samples", type=int, default=100_000)

    c = sp.add_parser("weights", parents=[common], help="alpha_j, beta_j and the b gamma series")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--p", type=as_fraction, required=True)
    c.add_argument("--series-r", type=int)

    c = sp.add_parser("tree", parents=[common], help="iteration tree")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--p", type=as_fraction, required=True)
    c.add_argument("--depth", type=int, required=True)

    c = sp.add_parser("appendix", parents=[common], help="exact omega/eta system")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--delta", type=as_fraction)
    c.add_argument("--delta-list", help="comma separated rationals: sweep omega_1 - 1")
    c.add_argument("--theta", type=as_fraction, default=Fraction(0))

    c = sp.add_parser("threshold", parents=[common], help="omega_1(Delta, 0) > 1 check")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--delta", type=as_fraction)
    c.add_argument("--scan", action="store_true", help="bracket the Delta below which omega_1 <= 1")

    for name, hlp in (("decouple", "one decoupling-type ratio"), ("vp-scan", "max ratio over delta"),
                      ("restriction", "discrete restriction ratio"), ("inflate", "ball inflation ratio")):
        c = sp.add_parser(name, parents=[common], help=hlp)
        c.add_argument("--n", type=int, default=2)
        c.add_argument("--p", type=_floats, default=[6.0], help="comma separated exponents")
        c.add_argument("--g", choices=["one", "random"], default="one")
        if name in ("decouple", "vp-scan"):
            c.add_argument("--delta", default="1/8", help="comma separated 1/m values")
            c.add_argument("--trials", type=int, default=20)
            c.add_argument("--check-convergence", action="store_true")
        if name == "decouple":
            c.add_argument("--inequality", choices=["main", "l2", "lower_dim"], default="main")
            c.add_argument("--sigma", type=as_fraction, default=Fraction(1, 4))
            c.add_argument("--R", type=int, default=64)
            c.add_argument("--t0", type=as_fraction, default=Fraction(0))
            c.add_argument("--cells", type=int, default=8)
        if name == "restriction":
            c.add_argument("--N", type=int, required=True)
            c.add_argument("--R", type=float)
            c.add_argument("--samples", type=int, default=100_000)
        if name == "inflate":
            c.add_argument("--rho", type=as_fraction, default=Fraction(1, 8))
            c.add_argument("--K", type=int, default=4)

    c = sp.add_parser("plot", parents=[common], help="plot records from a records file")
    c.add_argument("--records", required=True)
    c.add_argument("--select", required=True, help="subcommand whose records to plot")
    c.add_argument("--stem", default="plot")
    return p


def _apply_budget(args):
    prof = BUDGET_PROFILES[args.budget_profile]
    for k, v in prof.items():
        if getattr(args, k) is None:
            setattr(args, k, v)
    for k in prof:
        if getattr(args, k) <= 0:
            raise ValidationError(f"--{k.replace('_', '-')} must be positive")


def _params(args) -> dict:
    skip = {"out", "no_record", "format", "plot_dir", "subcommand"}
    return {k: jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _csv_text(record) -> str:
    t = _plot_table(record)
    if t is None:
        flat = {k: v for k, v in record["results"].items() if not isinstance(v, (dict, list))}
        cols, rows = sorted(flat), [flat]
    else:
        cols, rows, _ = t
    lines = [",".join(cols)] + [",".join(str(r.get(c, "")) for c in cols) for r in rows]
    return "\n".join(lines) + "\n"


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help / --version
        return int(exc.code or 0)
    try:
        _apply_budget(args)
        t0 = time.perf_counter()
        results = COMMANDS[args.subcommand](args)
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "version": __version__,
            "subcommand": args.subcommand,
            "params": _params(args),
            "results": jsonable(results),
            "runtime_seconds": time.perf_counter() - t0,
        }
        if not args.no_record and args.subcommand != "plot":
            append_record(args.out, record)
        if args.plot_dir and args.subcommand != "plot" and _plot_table(record) is not None:
            record["plot_paths"] = emit_plotdata([record], args.plot_dir, args.subcommand)
        if args.format == "csv":
            sys.stdout.write(_csv_text(record))
        else:
            print(json.dumps(record["results"], indent=2, sort_keys=True))
        return EXIT_OK
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except VinolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
