"""Monte Carlo replication engine for the grouped and panel designs.

Replication ``r`` always draws from substream ``(master_seed, r)``; results
are written to an indexed buffer and aggregated in replication order, so
summaries do not depend on the number of worker threads.  Every grid point
of a sweep reuses the same substreams.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from gmmf.core import DataError, Dataset, SingularMatrixError, grouped_view
from gmmf.designs import (
    GroupedDesign,
    PanelDesign,
    gen_ar1_panel,
    gen_grouped,
    gen_grouped_first_stage,
)
from gmmf.estimators import first_stage, gmm_two_step, gmmf, ols, two_sls
from gmmf.firststage import f_effective, f_group, f_nonrobust, f_robust
from gmmf.panel import build_panel, cross_section_decomposition, panel_estimators, sigma_v_weighted
from gmmf.rng import substream

log = logging.getLogger(__name__)

SENTINEL = "requires-sigma-u"
GROUPED_ESTIMATORS = ("ols", "twosls", "gmm2", "gmmf")
PANEL_ESTIMATORS = ("ols", "twosls", "gmm2", "gmmf", "sigma_v_weighted")
PANEL_SWEEP_GRID = tuple(round(1.0 + 0.3 * k, 10) for k in range(18))
# multiples of the config's scale_d; spans mean robust F of roughly 2..100
# for the shipped grouped designs
GROUPED_SWEEP_FACTORS = tuple(float(f) for f in np.round(np.geomspace(0.11, 1.12, 12), 6))


@dataclass(frozen=True)
class MCConfig:
    design: GroupedDesign | PanelDesign
    reps: int = 10_000
    master_seed: int = 0
    n: int = 10_000
    estimators: tuple[str, ...] | None = None
    beta0: float | None = None
    alpha: float = 0.05
    threads: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        allowed = PANEL_ESTIMATORS if self.is_panel else GROUPED_ESTIMATORS
        if self.estimators is not None:
            bad = set(self.estimators) - set(allowed)
            if bad:
                raise ValueError(f"unknown estimator(s) for this design: {sorted(bad)}")

    @property
    def is_panel(self) -> bool:
        return isinstance(self.design, PanelDesign)

    @property
    def estimator_set(self) -> tuple[str, ...]:
        if self.estimators is not None:
            est = tuple(self.estimators)
        elif self.is_panel:
            est = PANEL_ESTIMATORS
        else:
            est = ("ols", "twosls", "gmmf")
        return est if "ols" in est else ("ols", *est)

    @property
    def null(self) -> float:
        if self.beta0 is not None:
            return self.beta0
        return self.design.gamma if self.is_panel else self.design.beta


@dataclass(frozen=True)
class Column:
    statistic: str
    estimator: str = ""


@dataclass(eq=False)
class MCSummary:
    """Aggregated replication results.

    ``values`` keeps the per-replication rows of successful replications
    (aborted replications are dropped and counted in ``n_aborted``).
    """

    columns: list[Column]
    values: np.ndarray
    reps: int
    n_aborted: int
    truth: float
    structural: bool = True
    abort_reasons: dict[str, int] = field(default_factory=dict)

    @property
    def reps_effective(self) -> int:
        return self.values.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def sd(self) -> np.ndarray:
        return self.values.std(axis=0)

    def _index(self, statistic: str, estimator: str = "") -> int:
        return self.columns.index(Column(statistic, estimator))

    def has(self, statistic: str, estimator: str = "") -> bool:
        return Column(statistic, estimator) in self.columns

    def get_mean(self, statistic: str, estimator: str = "") -> float:
        return float(self.mean[self._index(statistic, estimator)])

    def get_sd(self, statistic: str, estimator: str = "") -> float:
        return float(self.sd[self._index(statistic, estimator)])

    @property
    def point_statistic(self) -> str:
        return "gamma" if any(c.statistic == "gamma" for c in self.columns) else "beta"

    def estimators(self) -> list[str]:
        p = self.point_statistic
        return [c.estimator for c in self.columns if c.statistic == p]

    def rejfreq(self, estimator: str) -> float:
        return self.get_mean("reject", estimator)

    def relbias(self, estimator: str) -> float:
        """``|mean(b) - truth| / |mean(b_ols) - truth|``."""
        p = self.point_statistic
        return abs(self.get_mean(p, estimator) - self.truth) / abs(
            self.get_mean(p, "ols") - self.truth
        )


def _grouped_columns(cfg: MCConfig) -> list[Column]:
    S = cfg.design.S
    cols = [Column("F"), Column("F_eff"), Column("F_r")]
    cols += [Column(f"F_pi_{s}") for s in range(1, S + 1)]
    cols += [Column(f"w_{s}", "twosls") for s in range(1, S + 1)]
    cols += [Column(f"w_{s}", "gmmf") for s in range(1, S + 1)]
    if cfg.design.has_structural:
        est = cfg.estimator_set
        cols += [Column("beta", e) for e in est]
        cols += [Column("reject", e) for e in est if e != "ols"]
    return cols


def _panel_columns(cfg: MCConfig) -> list[Column]:
    T = cfg.design.T
    periods = range(2, T)
    est = cfg.estimator_set
    cols = [Column("F"), Column("F_r")]
    cols += [Column("gamma", e) for e in est]
    cols += [Column("reject", e) for e in est if e != "ols"]
    cols += [Column(f"sigma2_v_{t}") for t in periods]
    cols += [Column(f"F_{t}") for t in periods]
    cols += [Column(f"gamma_{t}") for t in periods]
    cols += [Column(f"w_{t}", "twosls") for t in periods]
    cols += [Column(f"w_{t}", "sigma_v_weighted") for t in periods]
    return cols


def columns_for(cfg: MCConfig) -> list[Column]:
    return _panel_columns(cfg) if cfg.is_panel else _grouped_columns(cfg)


def _grouped_rep(cfg: MCConfig, r: int, crit: float) -> np.ndarray:
    design = cfg.design
    rng = substream(cfg.master_seed, r)
    if design.has_structural:
        d = gen_grouped(design, cfg.n, rng)
    else:
        g, x = gen_grouped_first_stage(design, cfg.n, rng)
        Z = np.zeros((cfg.n, design.S))
        Z[np.arange(cfg.n), g] = 1.0
        # y is irrelevant for first-stage statistics
        d = Dataset(y=np.zeros(cfg.n), x=x, Z=Z)
    fs = first_stage(d)
    gv = grouped_view(d)
    fp = f_group(gv, fs)
    a = gv.n_s * gv.xbar**2
    row = [f_nonrobust(d, fs), f_effective(d, fs), f_robust(d, fs)]
    row += list(fp) + list(a / a.sum()) + list(fp / fp.sum())
    if design.has_structural:
        b0 = cfg.null
        est = cfg.estimator_set
        fits = {}
        for e in est:
            if e == "ols":
                fits[e] = ols(d.y, d.x, beta0=b0)
            elif e == "twosls":
                fits[e] = two_sls(d, beta0=b0)
            elif e == "gmm2":
                fits[e] = gmm_two_step(d, beta0=b0)
            elif e == "gmmf":
                fits[e] = gmmf(d, fs, beta0=b0)
        row += [fits[e].beta_hat for e in est]
        row += [float(fits[e].wald > crit) for e in est if e != "ols"]
    return np.array(row)


def _panel_rep(cfg: MCConfig, r: int, crit: float) -> np.ndarray:
    rng = substream(cfg.master_seed, r)
    pd = build_panel(gen_ar1_panel(cfg.design, rng)[:, 1:])
    g0 = cfg.null
    pe = panel_estimators(pd, gamma0=g0)
    dec = cross_section_decomposition(pd)
    sv = sigma_v_weighted(pd, dec, gamma0=g0)
    fits = {**pe.as_dict(), "sigma_v_weighted": sv}
    est = cfg.estimator_set
    row = [pe.f_nonrobust, pe.f_robust]
    row += [fits[e].beta_hat for e in est]
    row += [float(fits[e].wald > crit) for e in est if e != "ols"]
    row += list(dec.sigma2_v) + list(dec.f_t) + list(dec.gamma_t)
    row += list(dec.w_2sls) + list(sv.weights)
    return np.array(row)


_ABORTS = (DataError, SingularMatrixError, FloatingPointError)


def run(cfg: MCConfig) -> MCSummary:
    cols = columns_for(cfg)
    crit = float(chi2.ppf(1 - cfg.alpha, 1))
    rep = _panel_rep if cfg.is_panel else _grouped_rep
    buf = np.full((cfg.reps, len(cols)), np.nan)
    ok = np.zeros(cfg.reps, dtype=bool)
    reasons: dict[str, int] = {}

    def work(block: range):
        out = []
        for r in block:
            try:
                out.append((r, rep(cfg, r, crit), None))
            except _ABORTS as exc:
                out.append((r, None, type(exc).__name__))
        return out

    step = max(1, cfg.reps // (8 * cfg.threads))
    blocks = [range(s, min(s + step, cfg.reps)) for s in range(0, cfg.reps, step)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(work, blocks))
    else:
        results = [work(b) for b in blocks]
    for block in results:
        for r, row, err in block:
            if row is None:
                reasons[err] = reasons.get(err, 0) + 1
            else:
                buf[r] = row
                ok[r] = True
    n_abort = int((~ok).sum())
    if n_abort:
        log.warning("%d of %d replications aborted: %s", n_abort, cfg.reps, reasons)
    truth = cfg.design.gamma if cfg.is_panel else cfg.design.beta
    structural = cfg.is_panel or cfg.design.has_structural
    return MCSummary(cols, buf[ok], cfg.reps, n_abort, truth, structural, reasons)


@dataclass(eq=False)
class SweepPoint:
    grid_value: float
    summary: MCSummary


def sweep(cfg: MCConfig, grid: Sequence[float] | None = None, parameter: str | None = None) -> list[SweepPoint]:
    """Run the design over a grid of ``scale_d`` (grouped) or a period's
    shock sd (panel, ``parameter='sigma_u_3'`` by default)."""
    if cfg.is_panel:
        parameter = parameter or "sigma_u_3"
        if not parameter.startswith("sigma_u_"):
            raise ValueError("panel sweeps vary sigma_u_<t>")
        t = int(parameter.rsplit("_", 1)[1])
        grid = PANEL_SWEEP_GRID if grid is None else grid
        make = lambda v: cfg.design.with_sigma_u(t, v)  # noqa: E731
    else:
        if parameter not in (None, "scale_d"):
            raise ValueError("grouped sweeps vary scale_d")
        if grid is None:
            grid = [round(cfg.design.scale_d * f, 10) for f in GROUPED_SWEEP_FACTORS]
        make = lambda v: cfg.design.with_scale(v)  # noqa: E731
    if any(not v > 0 for v in grid):
        raise ValueError("grid values must be positive")
    return [SweepPoint(float(v), run(replace(cfg, design=make(float(v))))) for v in grid]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None or not np.isfinite(v):
        return ""
    return format(float(v), ".10g")


def summary_rows(s: MCSummary) -> list[list[str]]:
    """Rows ``statistic, estimator, mean, sd, rejfreq`` for one summary."""
    rows = []
    for c, m, sd in zip(s.columns, s.mean, s.sd):
        if c.statistic == "reject":
            continue
        rej = ""
        if c.statistic == s.point_statistic and c.estimator != "ols":
            rej = _fmt(s.rejfreq(c.estimator))
        rows.append([c.statistic, c.estimator, _fmt(m), _fmt(sd), rej])
    if s.structural:
        for e in s.estimators():
            if e != "ols":
                rows.append(["relbias", e, _fmt(s.relbias(e)), "", ""])
    else:
        for e in ("ols", "twosls", "gmmf"):
            rows.append(["beta", e, SENTINEL, SENTINEL, "" if e == "ols" else SENTINEL])
    rows.append(["reps_effective", "", str(s.reps_effective), "", ""])
    rows.append(["reps_aborted", "", str(s.n_aborted), "", ""])
    return rows


SUMMARY_HEADER = ["statistic", "estimator", "mean", "sd", "rejfreq"]


def write_summary_csv(s: MCSummary, path: str | Path | io.TextIOBase) -> None:
    _write(path, SUMMARY_HEADER, summary_rows(s))


def sweep_rows(points: list[SweepPoint]) -> tuple[list[str], list[list[str]]]:
    s0 = points[0].summary
    est = [e for e in (s0.estimators() if s0.structural else ["twosls", "gmmf"]) if e != "ols"]
    header = ["grid_value", "mean_Fr"] + [f"relbias_{e}" for e in est] + [f"rejfreq_{e}" for e in est]
    rows = []
    for p in points:
        s = p.summary
        row = [_fmt(p.grid_value), _fmt(s.get_mean("F_r"))]
        if s.structural:
            row += [_fmt(s.relbias(e)) for e in est] + [_fmt(s.rejfreq(e)) for e in est]
        else:
            row += [SENTINEL] * (2 * len(est))
        rows.append(row)
    return header, rows


def write_sweep_csv(points: list[SweepPoint], path) -> None:
    header, rows = sweep_rows(points)
    _write(path, header, rows)


def _write(path, header, rows):
    if isinstance(path, (str, Path)):
        with open(path, "w", newline="") as fh:
            _write(fh, header, rows)
        return
    w = csv.writer(path, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
