"""Single-regressor IV/GMM estimators written over generic ``(y, x, Z)``.

All estimators share the linear GMM form

    beta = (x'Z M^{-1} Z'x)^{-1} x'Z M^{-1} Z'y

and differ only in the matrix ``M``: ``Z'Z`` for 2SLS, the first-stage
residual moment matrix for GMMf, the 2SLS residual moment matrix for
two-step GMM.  On indicator instruments the grouped closed forms
(weighted averages of per-group Wald ratios) are attached as weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from gmmf._linalg import moment_covariance, spd_factor, spd_solve
from gmmf.core import (
    DataError,
    Dataset,
    DegenerateGroupError,
    GroupedView,
    grouped_view,
)

METHODS = (
    "ols",
    "twosls",
    "gmmf",
    "gmm2",
    "gmm_infeasible",
    "gmmuf_infeasible",
    "group_iv",
    "sigma_v_weighted",
)

CHI2_1_95 = 3.841458820694124


@dataclass(frozen=True, eq=False)
class FirstStage:
    """OLS first stage of ``x`` on ``Z``.

    ``omega_v`` is ``sum_i v_i^2 z_i z_i'`` (accumulated per cluster when
    the dataset carries clusters).  ``sigma2_v_s`` is only set for grouped
    data and uses divisor ``n_s``.
    """

    pi_hat: np.ndarray
    v_hat: np.ndarray
    omega_v: np.ndarray
    sigma2_v_s: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Estimate:
    beta_hat: float
    var_robust: float
    method: str
    var_nonrobust: float | None = None
    weights: np.ndarray | None = None
    wald: float | None = None

    @property
    def se(self) -> float:
        return float(np.sqrt(self.var_robust))


def wald(e: Estimate, beta0: float) -> float:
    """Robust Wald statistic ``(beta_hat - beta0)^2 / var_robust``."""
    if not e.var_robust > 0:
        raise ValueError(f"Wald statistic undefined: variance of {e.method} estimate is {e.var_robust}")
    return (e.beta_hat - beta0) ** 2 / e.var_robust


def _wald_or_nan(beta, var, beta0):
    return (beta - beta0) ** 2 / var if var > 0 else float("nan")


def _labels(d: Dataset) -> list[str]:
    word = "group" if d.is_grouped else "instrument"
    return [f"{word} {j + 1}" for j in range(d.k_z)]


def _reference_diag(d: Dataset, w: np.ndarray) -> np.ndarray:
    """Diagonal of the moment matrix built from a raw variable, used as the
    zero threshold scale for residual-based moment matrices."""
    if d.cluster is None:
        return (d.Z * d.Z).T @ (w * w)
    return np.diag(moment_covariance(d.Z, w, d.cluster))


def _grouped(d: Dataset) -> GroupedView | None:
    if d.cluster is not None or not d.is_grouped:
        return None
    try:
        return grouped_view(d)
    except DegenerateGroupError:
        return None


def first_stage(d: Dataset) -> FirstStage:
    ZZ = d.Z.T @ d.Z
    pi_hat = spd_solve(ZZ, d.Z.T @ d.x, "Z'Z", labels=_labels(d))
    v_hat = d.x - d.Z @ pi_hat
    omega_v = moment_covariance(d.Z, v_hat, d.cluster)
    sigma2 = None
    if d.cluster is None and d.is_grouped:
        sigma2 = np.diag(omega_v) / np.diag(ZZ)
    for a in (pi_hat, v_hat, omega_v) + ((sigma2,) if sigma2 is not None else ()):
        a.setflags(write=False)
    return FirstStage(pi_hat=pi_hat, v_hat=v_hat, omega_v=omega_v, sigma2_v_s=sigma2)


def factor_omega_v(d: Dataset, fs: FirstStage):
    """Cholesky factor of the first-stage residual moment matrix."""
    return spd_factor(
        fs.omega_v, "first-stage residual moment matrix Omega_v",
        reference_diag=_reference_diag(d, d.x), labels=_labels(d),
    )


def linear_gmm(
    d: Dataset,
    h: np.ndarray,
    method: str,
    beta0: float = 0.0,
    weights: np.ndarray | None = None,
) -> Estimate:
    """Linear GMM estimate given ``h = M^{-1} Z'x``.

    The robust variance is the sandwich with the moment covariance built
    from the estimator's own residuals.
    """
    denom = float(h @ (d.Z.T @ d.x))
    beta = float(h @ (d.Z.T @ d.y)) / denom
    u = d.y - d.x * beta
    omega_u = moment_covariance(d.Z, u, d.cluster)
    var = float(h @ omega_u @ h) / denom**2
    return Estimate(beta, var, method, weights=weights, wald=_wald_or_nan(beta, var, beta0))


def ols(y, x, beta0: float = 0.0, cluster=None) -> Estimate:
    """OLS of ``y`` on the single regressor ``x`` (no constant)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    xx = float(x @ x)
    if not xx > 0:
        raise DataError("OLS undefined: regressor has zero norm")
    beta = float(x @ y) / xx
    u = y - x * beta
    if cluster is None:
        meat = float(np.sum(x * x * u * u))
    else:
        _, codes = np.unique(cluster, return_inverse=True)
        meat = float(moment_covariance(x[:, None], u, codes)[0, 0])
    var = meat / xx**2
    var_nr = float(u @ u) / len(u) / xx
    return Estimate(beta, var, "ols", var_nonrobust=var_nr, wald=_wald_or_nan(beta, var, beta0))


def _check_signal(d: Dataset, denom: float):
    if not denom > 1e-12 * float(d.x @ d.x):
        raise DataError("no first-stage signal: x is orthogonal to the instrument span")


def two_sls(d: Dataset, beta0: float = 0.0) -> Estimate:
    ZZ = d.Z.T @ d.Z
    h = spd_solve(ZZ, d.Z.T @ d.x, "Z'Z", labels=_labels(d))
    denom = float(h @ (d.Z.T @ d.x))
    _check_signal(d, denom)
    gv = _grouped(d)
    w = None
    if gv is not None:
        a = gv.n_s * gv.xbar**2
        w = a / a.sum()
    e = linear_gmm(d, h, "twosls", beta0, w)
    u = d.y - d.x * e.beta_hat
    var_nr = float(u @ u) / d.n / denom
    return Estimate(e.beta_hat, e.var_robust, "twosls", var_nr, w, e.wald)


def gmmf(d: Dataset, fs: FirstStage | None = None, beta0: float = 0.0) -> Estimate:
    """GMM with the weight matrix built from first-stage residuals.

    The denominator ``x'Z Omega_v^{-1} Z'x`` equals ``k_z`` times the robust
    first-stage F-statistic.
    """
    fs = first_stage(d) if fs is None else fs
    c = factor_omega_v(d, fs)
    h = cho_solve(c, d.Z.T @ d.x, check_finite=False)
    _check_signal(d, float(fs.pi_hat @ (d.Z.T @ d.x)))
    w = None
    gv = _grouped(d)
    if gv is not None:
        f = gv.n_s * gv.xbar**2 / fs.sigma2_v_s
        w = f / f.sum()
    return linear_gmm(d, h, "gmmf", beta0, w)


def gmm_two_step(d: Dataset, beta0: float = 0.0) -> Estimate:
    """Two-step GMM; first step 2SLS, weight from 2SLS residuals.

    Variance is the usual efficient two-step form ``(x'Z Omega_u^{-1} Z'x)^{-1}``
    with ``Omega_u`` from the first-step residuals.
    """
    first = two_sls(d)
    u = d.y - d.x * first.beta_hat
    omega_u = moment_covariance(d.Z, u, d.cluster)
    c = spd_factor(
        omega_u, "structural residual moment matrix Omega_u",
        reference_diag=_reference_diag(d, d.y), labels=_labels(d),
    )
    h = cho_solve(c, d.Z.T @ d.x, check_finite=False)
    denom = float(h @ (d.Z.T @ d.x))
    beta = float(h @ (d.Z.T @ d.y)) / denom
    var = 1.0 / denom
    w = None
    gv = _grouped(d)
    if gv is not None:
        s2u = np.diag(omega_u) / gv.n_s
        a = gv.n_s * gv.xbar**2 / s2u
        w = a / a.sum()
    return Estimate(beta, var, "gmm2", weights=w, wald=_wald_or_nan(beta, var, beta0))


def group_iv(gv: GroupedView, d: Dataset | None = None) -> list[Estimate]:
    """Per-group Wald ratios ``ybar_s / xbar_s``.

    Groups with ``xbar_s == 0`` get ``nan`` estimates and a warning.  Passing
    the dataset adds the within-group robust variances.
    """
    undefined = gv.xbar == 0
    if undefined.any():
        warnings.warn(
            f"{int(undefined.sum())} group(s) with zero first-stage mean; "
            "their IV estimates are undefined",
            RuntimeWarning,
            stacklevel=2,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(undefined, np.nan, gv.ybar / np.where(undefined, 1.0, gv.xbar))
    var = np.full(gv.S, np.nan)
    if d is not None:
        g = gv.group_index
        u = d.y - d.x * beta[g]
        ss = np.bincount(g, weights=u * u, minlength=gv.S)
        with np.errstate(divide="ignore", invalid="ignore"):
            var = np.where(undefined, np.nan, ss / (gv.n_s * gv.xbar) ** 2)
    return [Estimate(float(b), float(v), "group_iv") for b, v in zip(beta, var)]


def _weighted_group_estimate(gv, a, var, method, beta0):
    num = float(np.sum(a * gv.ybar / np.where(gv.xbar == 0, 1.0, gv.xbar)))
    tot = float(a.sum())
    if not tot > 0:
        raise DataError("no first-stage signal: all group means are zero")
    beta = num / tot
    return Estimate(beta, var, method, weights=a / tot, wald=_wald_or_nan(beta, var, beta0))


def infeasible_gmm(gv: GroupedView, sigma2_u_s, beta0: float = 0.0) -> Estimate:
    """Grouped GMM weighting by known structural variances ``sigma2_u_s``."""
    s2u = np.asarray(sigma2_u_s, dtype=float)
    if s2u.shape != (gv.S,) or not np.all(s2u > 0):
        raise ValueError("sigma2_u_s must be S positive variances")
    a = gv.n_s * gv.xbar**2 / s2u
    return _weighted_group_estimate(gv, a, 1.0 / float(a.sum()), "gmm_infeasible", beta0)


def infeasible_gmmuf(gv: GroupedView, sigma2_u_s, sigma2_v_s, beta0: float = 0.0) -> Estimate:
    """Grouped GMM weighting by the product of known structural and
    first-stage variances."""
    s2u = np.asarray(sigma2_u_s, dtype=float)
    s2v = np.asarray(sigma2_v_s, dtype=float)
    if s2u.shape != (gv.S,) or s2v.shape != (gv.S,):
        raise ValueError("variances must have one entry per group")
    if not (np.all(s2u > 0) and np.all(s2v > 0)):
        raise ValueError("variances must be positive")
    a = gv.n_s * gv.xbar**2 / (s2u * s2v)
    # sandwich with M = diag(n_s s2u s2v) and true Omega_u = diag(n_s s2u)
    var = float(np.sum(gv.n_s * gv.xbar**2 / (s2u * s2v**2))) / float(a.sum()) ** 2
    return _weighted_group_estimate(gv, a, var, "gmmuf_infeasible", beta0)
