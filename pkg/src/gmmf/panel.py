"""AR(1) panel estimation in forward orthogonal deviations.

Observed levels are ``y_i1..y_iT``.  The model equations for t = 2..T are
transformed by forward orthogonal deviations, leaving T-2 equations per
unit (t = 2..T-1); equation t is instrumented by ``y_i1..y_i,t-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from gmmf._linalg import spd_solve
from gmmf.core import DataError, Dataset, SingularMatrixError
from gmmf.estimators import (
    Estimate,
    FirstStage,
    first_stage,
    gmm_two_step,
    gmmf,
    linear_gmm,
    ols,
    two_sls,
)
from gmmf.firststage import f_nonrobust, f_robust


def fod_transform(series) -> np.ndarray:
    """Forward orthogonal deviations along the last axis.

    ``out_t = sqrt((T-t)/(T-t+1)) * (y_t - mean(y_{t+1..T}))`` for t = 1..T-1.
    """
    a = np.asarray(series, dtype=float)
    T = a.shape[-1]
    if T < 2:
        raise DataError("forward orthogonal deviations need at least 2 periods")
    # forward means via reversed cumulative sums
    tail = np.cumsum(a[..., ::-1], axis=-1)[..., ::-1]
    m = np.arange(T - 1, 0, -1, dtype=float)
    fwd = tail[..., 1:] / m
    return np.sqrt(m / (m + 1)) * (a[..., :-1] - fwd)


def _instrument_blocks(levels: np.ndarray) -> np.ndarray:
    n, T = levels.shape
    k = (T - 1) * (T - 2) // 2
    Z = np.zeros((n, T - 2, k))
    col = 0
    for r in range(T - 2):
        Z[:, r, col:col + r + 1] = levels[:, :r + 1]
        col += r + 1
    return Z


@dataclass(frozen=True, eq=False)
class PanelData:
    """FOD-transformed panel with its instrument blocks.

    ``y_star`` and ``y_lag_star`` are ``(n, T-2)``; row ``j`` corresponds to
    period ``t = j + 2``.  ``Z_blocks[i]`` is unit i's ``(T-2, k_z)``
    lower-triangular instrument matrix.
    """

    levels: np.ndarray
    y_star: np.ndarray
    y_lag_star: np.ndarray
    Z_blocks: np.ndarray

    @property
    def n(self) -> int:
        return self.levels.shape[0]

    @property
    def T(self) -> int:
        return self.levels.shape[1]

    @property
    def k_z(self) -> int:
        return self.Z_blocks.shape[2]

    @property
    def periods(self) -> range:
        return range(2, self.T)

    @cached_property
    def stacked(self) -> Dataset:
        """Unit-major stacked data with unit clusters."""
        return Dataset(
            y=self.y_star.reshape(-1),
            x=self.y_lag_star.reshape(-1),
            Z=self.Z_blocks.reshape(-1, self.k_z),
            cluster=np.repeat(np.arange(self.n), self.T - 2),
        )

    def period(self, t: int) -> Dataset:
        """Cross-section for period t (2..T-1) with instruments y_1..y_{t-1}."""
        if t not in self.periods:
            raise ValueError(f"period must be in 2..{self.T - 1}")
        j = t - 2
        return Dataset(y=self.y_star[:, j], x=self.y_lag_star[:, j], Z=self.levels[:, :t - 1])

    def block_columns(self, t: int) -> slice:
        start = (t - 2) * (t - 1) // 2
        return slice(start, start + t - 1)


def build_panel(levels) -> PanelData:
    """Build FOD data and instruments from observed levels ``(n, T)``."""
    levels = np.array(levels, dtype=float)
    if levels.ndim != 2:
        raise DataError("panel levels must be an (n, T) array")
    if levels.shape[1] < 3:
        raise DataError("need T >= 3 observed periods for any instrument")
    if not np.all(np.isfinite(levels)):
        raise DataError("panel contains non-finite values")
    # equations t = 2..T: dependent y_t, lag y_{t-1}
    y_star = fod_transform(levels[:, 1:])
    y_lag_star = fod_transform(levels[:, :-1])
    Z = _instrument_blocks(levels)
    for a in (levels, y_star, y_lag_star, Z):
        a.setflags(write=False)
    return PanelData(levels=levels, y_star=y_star, y_lag_star=y_lag_star, Z_blocks=Z)


def block_moment_covariance(pd: PanelData, resid: np.ndarray) -> np.ndarray:
    """``sum_i Z_i' e_i e_i' Z_i`` accumulated unit by unit."""
    e = np.asarray(resid, dtype=float).reshape(pd.n, pd.T - 2)
    g = np.einsum("itk,it->ik", pd.Z_blocks, e)
    return g.T @ g


@dataclass(frozen=True, eq=False)
class PanelEstimates:
    ols: Estimate
    twosls: Estimate
    gmm2: Estimate
    gmmf: Estimate
    f_nonrobust: float
    f_robust: float
    first_stage: FirstStage

    def as_dict(self) -> dict[str, Estimate]:
        return {"ols": self.ols, "twosls": self.twosls, "gmm2": self.gmm2, "gmmf": self.gmmf}


def panel_estimators(pd: PanelData, gamma0: float = 0.0) -> PanelEstimates:
    d = pd.stacked
    fs = first_stage(d)
    return PanelEstimates(
        ols=ols(d.y, d.x, beta0=gamma0, cluster=d.cluster),
        twosls=two_sls(d, beta0=gamma0),
        gmm2=gmm_two_step(d, beta0=gamma0),
        gmmf=gmmf(d, fs, beta0=gamma0),
        f_nonrobust=f_nonrobust(d, fs),
        f_robust=f_robust(d, fs),
        first_stage=fs,
    )


@dataclass(frozen=True, eq=False)
class PeriodDecomposition:
    """Per-period cross-sectional 2SLS pieces, indexed by t = 2..T-1."""

    t: np.ndarray
    gamma_t: np.ndarray
    w_2sls: np.ndarray
    xpx: np.ndarray  # y*_{t,-1}' P_{Z_t} y*_{t,-1}
    sigma2_v: np.ndarray  # v_t'v_t / n
    f_t: np.ndarray


def cross_section_decomposition(pd: PanelData) -> PeriodDecomposition:
    ts = np.array(list(pd.periods))
    gam, xpx, s2, ft = [], [], [], []
    for t in ts:
        d = pd.period(int(t))
        try:
            fs = first_stage(d)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"period {t}: {exc}") from None
        a = float(fs.pi_hat @ (d.Z.T @ d.x))
        if not a > 0:
            raise DataError(f"period {t}: no first-stage signal")
        gam.append(float(fs.pi_hat @ (d.Z.T @ d.y)) / a)
        xpx.append(a)
        s2.append(float(fs.v_hat @ fs.v_hat) / d.n)
        ft.append(f_nonrobust(d, fs))
    xpx = np.array(xpx)
    return PeriodDecomposition(
        t=ts, gamma_t=np.array(gam), w_2sls=xpx / xpx.sum(), xpx=xpx,
        sigma2_v=np.array(s2), f_t=np.array(ft),
    )


def sigma_v_weighted(
    pd: PanelData, decomposition: PeriodDecomposition | None = None, gamma0: float = 0.0
) -> Estimate:
    """Period estimates weighted by ``xpx_t / sigma2_v_t``.

    Computed as a linear GMM on the stacked data with the block-diagonal
    weight ``blockdiag(sigma2_v_t Z_t'Z_t)^{-1}``, which gives the robust
    variance; the attached weights reproduce the point estimate as a
    weighted average of the period estimates.
    """
    dec = cross_section_decomposition(pd) if decomposition is None else decomposition
    if np.any(dec.sigma2_v <= 0):
        bad = dec.t[dec.sigma2_v <= 0]
        raise SingularMatrixError(f"zero first-stage variance in period(s) {bad.tolist()}")
    d = pd.stacked
    M = d.Z.T @ d.Z
    scale = np.empty(pd.k_z)
    for t, s2 in zip(dec.t, dec.sigma2_v):
        scale[pd.block_columns(int(t))] = s2
    M = M * scale[:, None]
    h = spd_solve(M, d.Z.T @ d.x, "period-weighted instrument moment matrix")
    a = dec.xpx / dec.sigma2_v
    return linear_gmm(d, h, "sigma_v_weighted", gamma0, weights=a / a.sum())
