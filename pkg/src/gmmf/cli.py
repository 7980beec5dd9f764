"""Command-line front end: ``gmmf {replicate,sweep,wia,estimate}``.

A human-readable report goes to stdout; ``--out`` receives the CSV.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from gmmf import mc, wia
from gmmf.core import DataError, SingularMatrixError, load_dataset
from gmmf.designs import ConfigError, GroupedDesign, PanelDesign, load_design, shipped_design
from gmmf.estimators import CHI2_1_95, first_stage, gmm_two_step, gmmf, ols, two_sls
from gmmf.firststage import diagnostics

log = logging.getLogger("gmmf")

TABLES = ("table1", "table2", "table3", "table4", "table5", "tableA1", "tableA2")
_DEFAULT_CONFIG = {
    "table2": "moderate", "table3": "moderate",
    "tableA1": "high", "tableA2": "high",
    "table4": "panel", "table5": "panel",
}


def _csv_list(text: str, conv=float) -> list:
    return [conv(v) for v in text.split(",") if v.strip()]


SHIPPED = ("moderate", "high", "panel")


def _design(args, default: str) -> GroupedDesign | PanelDesign:
    if not args.config:
        return shipped_design(default)
    if args.config in SHIPPED:
        return shipped_design(args.config)
    return load_design(args.config)


def _emit(args, header, rows, title=None):
    if title:
        print(title)
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    print(line(header))
    for r in rows:
        print(line(r))
    if args.out:
        mc._write(args.out, header, rows)
        print(f"wrote {args.out}")


def _add_common(p, reps_default=10_000):
    p.add_argument("--config", help="design JSON path or shipped name (moderate, high, panel)")
    p.add_argument("--reps", type=int, default=reps_default, help="Monte Carlo replications")
    p.add_argument("--seed", type=int, default=1, help="master seed")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
    p.add_argument("--n", type=int, default=10_000, help="grouped-design sample size")


# ---------------------------------------------------------------- replicate

def _table1(args):
    rows = []
    for s2, mu2, _ in wia.TABLE1_ROWS:
        w = wia.wia_weights(wia.WIAGroupConfig(s2, mu2, draws=args.draws), args.seed, args.threads)
        rows.append([*map(mc._fmt, (*s2, *mu2)), mc._fmt(w.w_2sls[0]), mc._fmt(w.w_gmmf[0])])
    header = ["sigma2_v1", "sigma2_v2", "mu2_1", "mu2_2", "w_2sls_1", "w_gmmf_1"]
    _emit(args, header, rows, f"Limiting weights, {args.draws} draws")


def _mc_summary(args, design):
    cfg = mc.MCConfig(design, reps=args.reps, master_seed=args.seed, n=args.n, threads=args.threads)
    return mc.run(cfg)


def _grouped_results(args, design):
    s = _mc_summary(args, design)
    rows = [[st, "", mc._fmt(s.get_mean(st)), mc._fmt(s.get_sd(st)), ""] for st in ("F", "F_eff", "F_r")]
    rows += [r for r in mc.summary_rows(s) if r[0] in ("beta", "relbias", "reps_effective", "reps_aborted")]
    _emit(args, mc.SUMMARY_HEADER, rows, f"Grouped design, {args.reps} replications, n={args.n}")
    if not s.structural:
        print(f"note: beta and Wald cells need sigma_uu/sigma_uv in the config; emitted as {mc.SENTINEL!r}")


def _grouped_groups(args, design):
    s = _mc_summary(args, design)
    mu2 = design.mu2_n()
    rows = []
    for k in range(design.S):
        j = k + 1
        rows.append([
            str(j), mc._fmt(design.pi_s[k]), mc._fmt(design.sigma_vv[k]), mc._fmt(mu2[k]),
            mc._fmt(s.get_mean(f"F_pi_{j}")), mc._fmt(s.get_mean(f"w_{j}", "twosls")),
            mc._fmt(s.get_mean(f"w_{j}", "gmmf")),
        ])
    header = ["group", "pi", "sigma2_v", "mu2_n", "F_pi", "w_2sls", "w_gmmf"]
    _emit(args, header, rows, f"Group information, {args.reps} replications, n={args.n}")


def _panel_results(args, design):
    s = _mc_summary(args, design)
    rows = [r for r in mc.summary_rows(s)
            if r[0] in ("F", "F_r", "gamma", "relbias", "reps_effective", "reps_aborted")]
    _emit(args, mc.SUMMARY_HEADER, rows, f"AR(1) panel, {args.reps} replications")


def _panel_periods(args, design):
    s = _mc_summary(args, design)
    rows = []
    for t in range(2, design.T):
        rows.append([
            str(t), mc._fmt(s.get_mean(f"sigma2_v_{t}")), mc._fmt(s.get_mean(f"F_{t}")),
            mc._fmt(s.get_mean(f"w_{t}", "twosls")), mc._fmt(s.get_mean(f"w_{t}", "sigma_v_weighted")),
        ])
    header = ["t", "sigma2_v", "F_t", "w_2sls", "w_sigma_v"]
    _emit(args, header, rows, f"Period information, {args.reps} replications")


def cmd_replicate(args) -> int:
    if args.table == "table1":
        _table1(args)
        return 0
    design = _design(args, _DEFAULT_CONFIG[args.table])
    want_panel = args.table in ("table4", "table5")
    if want_panel != isinstance(design, PanelDesign):
        raise ConfigError(f"{args.table} needs a {'panel' if want_panel else 'grouped'} design config")
    {
        "table2": _grouped_results, "tableA2": _grouped_results,
        "table3": _grouped_groups, "tableA1": _grouped_groups,
        "table4": _panel_results, "table5": _panel_periods,
    }[args.table](args, design)
    return 0


# ---------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    design = _design(args, "panel")
    cfg = mc.MCConfig(design, reps=args.reps, master_seed=args.seed, n=args.n, threads=args.threads)
    grid = _csv_list(args.grid) if args.grid else None
    points = mc.sweep(cfg, grid, args.parameter)
    header, rows = mc.sweep_rows(points)
    _emit(args, header, rows, f"Sweep, {args.reps} replications per grid point")
    return 0


# ---------------------------------------------------------------- wia

def cmd_wia(args) -> int:
    if args.what == "weights":
        cfg = wia.WIAGroupConfig(tuple(_csv_list(args.sigma2_v)), tuple(_csv_list(args.mu2)), args.draws)
        w = wia.wia_weights(cfg, args.seed, args.threads)
        rows = [[str(s + 1), mc._fmt(a), mc._fmt(b)] for s, (a, b) in enumerate(zip(w.w_2sls, w.w_gmmf))]
        _emit(args, ["group", "w_2sls", "w_gmmf"], rows, f"Limiting weights, {args.draws} draws")
        return 0
    cfg = wia.WIALimitConfig(args.k_z, args.lambda2, args.rho, args.draws)
    if args.what == "relbias":
        val = wia.relbias_limit(cfg, args.seed, args.threads)
        header = ["k_z", "lambda2", "relbias"]
    else:
        val = wia.wald_size_limit(cfg, args.alpha, args.seed, args.threads)
        header = ["k_z", "lambda2", "rho", "alpha", "rejection"]
    rows = [[str(args.k_z), mc._fmt(args.lambda2)]
            + ([] if args.what == "relbias" else [mc._fmt(args.rho), mc._fmt(args.alpha)])
            + [mc._fmt(val)]]
    _emit(args, header, rows, f"Limit functional ({args.what}), {args.draws} draws")
    return 0


# ---------------------------------------------------------------- estimate

def cmd_estimate(args) -> int:
    d = load_dataset(args.data, args.y, args.x, _csv_list(args.z, str))
    est = _csv_list(args.estimators, str)
    fs = first_stage(d)
    fits = []
    for e in est:
        if e == "ols":
            fits.append(ols(d.y, d.x, beta0=args.beta0))
        elif e == "twosls":
            fits.append(two_sls(d, beta0=args.beta0))
        elif e == "gmmf":
            fits.append(gmmf(d, fs, beta0=args.beta0))
        elif e == "gmm2":
            fits.append(gmm_two_step(d, beta0=args.beta0))
        else:
            raise ValueError(f"unknown estimator {e!r}")
    crit = CHI2_1_95
    rows = [[f.method, mc._fmt(f.beta_hat), mc._fmt(f.se), mc._fmt(f.wald),
             "yes" if f.wald is not None and f.wald > crit else "no"] for f in fits]
    _emit(args, ["estimator", "beta", "se_robust", "wald", "reject_5pct"], rows,
          f"n={d.n}, k_z={d.k_z}, H0: beta={args.beta0}")
    dg = diagnostics(d, fs)
    print(f"F = {dg.f_nonrobust:.6g}   F_eff = {dg.f_effective:.6g}   F_r = {dg.f_robust:.6g}")
    if args.weights:
        if not d.is_grouped:
            log.warning("instruments are not group indicators; weight decomposition omitted")
        else:
            header = ["group", "F_pi"] + [f"w_{f.method}" for f in fits if f.weights is not None]
            wrows = []
            for s in range(d.k_z):
                wrows.append([str(s + 1), mc._fmt(dg.f_group[s])]
                             + [mc._fmt(f.weights[s]) for f in fits if f.weights is not None])
            print()
            _emit(argparse.Namespace(out=None), header, wrows, "Weight decomposition")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmmf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("replicate", help="reproduce a results table")
    r.add_argument("table", choices=TABLES)
    _add_common(r)
    r.add_argument("--draws", type=int, default=100_000, help="draws for table1")
    r.set_defaults(func=cmd_replicate)

    s = sub.add_parser("sweep", help="relative bias / rejection over a parameter grid")
    _add_common(s)
    s.add_argument("--grid", help="comma-separated grid values")
    s.add_argument("--parameter", help="sigma_u_<t> (panel) or scale_d (grouped)")
    s.set_defaults(func=cmd_sweep)

    w = sub.add_parser("wia", help="weak-instrument limit simulators")
    w.add_argument("what", choices=("weights", "relbias", "size"))
    w.add_argument("--sigma2-v", default="5,5")
    w.add_argument("--mu2", default="5.76,5.76")
    w.add_argument("--k-z", type=int, default=1)
    w.add_argument("--lambda2", type=float, default=5.76)
    w.add_argument("--rho", type=float, default=0.0)
    w.add_argument("--alpha", type=float, default=0.05)
    w.add_argument("--draws", type=int, default=None)
    w.add_argument("--seed", type=int, default=1)
    w.add_argument("--threads", type=int, default=1)
    w.add_argument("--out")
    w.set_defaults(func=cmd_wia)

    e = sub.add_parser("estimate", help="estimate on a CSV dataset")
    e.add_argument("data")
    e.add_argument("--y", required=True)
    e.add_argument("--x", required=True)
    e.add_argument("--z", required=True, help="comma-separated instrument columns")
    e.add_argument("--estimators", default="ols,twosls,gmmf")
    e.add_argument("--beta0", type=float, default=0.0)
    e.add_argument("--weights", action="store_true", help="print the group weight decomposition")
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "wia" and args.draws is None:
        args.draws = 100_000 if args.what == "weights" else 1_000_000
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, SingularMatrixError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
