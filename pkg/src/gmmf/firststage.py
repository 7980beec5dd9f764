"""First-stage F-statistics: non-robust, robust, effective and per-group."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from gmmf._linalg import _RTOL, spd_solve
from gmmf.core import Dataset, GroupedView, SingularMatrixError
from gmmf.estimators import FirstStage, _grouped, factor_omega_v, first_stage


@dataclass(frozen=True, eq=False)
class Diagnostics:
    f_nonrobust: float
    f_robust: float
    f_effective: float
    f_group: np.ndarray | None = None


def f_group(gv: GroupedView, fs: FirstStage) -> np.ndarray:
    """Per-group first-stage Wald statistics ``n_s xbar_s^2 / sigma2_v_s``."""
    s2 = fs.sigma2_v_s
    if s2 is None:
        raise ValueError("first stage carries no per-group variances (data not grouped)")
    # same relative threshold as the Cholesky check on Omega_v (scale: mean x^2 in group)
    zero = np.flatnonzero(s2 <= _RTOL * (gv.xbar**2 + s2))
    if zero.size:
        raise SingularMatrixError(
            f"zero first-stage variance in group(s) {', '.join(str(s + 1) for s in zero)}"
        )
    return gv.n_s * gv.xbar**2 / s2


def _xPx(d: Dataset, fs: FirstStage) -> float:
    return float(fs.pi_hat @ (d.Z.T @ d.x))


def f_robust(d: Dataset, fs: FirstStage) -> float:
    """``x'Z Omega_v^{-1} Z'x / k_z``; the mean of the group F's on grouped data."""
    zx = d.Z.T @ d.x
    h = cho_solve(factor_omega_v(d, fs), zx, check_finite=False)
    return float(zx @ h) / d.k_z


def f_nonrobust(d: Dataset, fs: FirstStage) -> float:
    s2 = float(fs.v_hat @ fs.v_hat) / d.n
    if not s2 > 0:
        raise SingularMatrixError("first-stage residual variance is zero")
    return _xPx(d, fs) / d.k_z / s2


def f_effective(d: Dataset, fs: FirstStage) -> float:
    """``x'P_Z x / tr((Z'Z)^{-1} Omega_v)``.

    Equal to the non-robust F on balanced grouped data.
    """
    tr = float(np.trace(spd_solve(d.Z.T @ d.Z, fs.omega_v, "Z'Z")))
    if not tr > 0:
        raise SingularMatrixError("first-stage residual moment matrix has zero trace")
    return _xPx(d, fs) / tr


def diagnostics(d: Dataset, fs: FirstStage | None = None) -> Diagnostics:
    fs = first_stage(d) if fs is None else fs
    gv = _grouped(d)
    fg = f_group(gv, fs) if gv is not None else None
    return Diagnostics(
        f_nonrobust=f_nonrobust(d, fs),
        f_robust=f_robust(d, fs),
        f_effective=f_effective(d, fs),
        f_group=fg,
    )

