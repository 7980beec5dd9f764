"""Data-generating processes: heteroskedastic grouped IV and the AR(1) panel."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from gmmf.core import Dataset, DegenerateGroupError


class ConfigError(ValueError):
    """Invalid design configuration."""


class MissingCovarianceError(ConfigError):
    """The design lacks the structural error covariances needed to draw y."""


def _vec(a, name, S=None):
    if a is None:
        return None
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1 or (S is not None and arr.shape[0] != S):
        raise ConfigError(f"{name} must be a vector of length {S}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GroupedDesign:
    """Grouped IV design with group-specific error covariance matrices.

    ``pi`` holds the unscaled first-stage parameters; observations in group
    ``s`` have ``x = scale_d * pi[s] + v`` and ``y = beta * x + u`` with
    ``(u, v)`` bivariate normal with variances ``sigma_uu[s]``,
    ``sigma_vv[s]`` and covariance ``sigma_uv[s]``.  The structural entries
    may be left as ``None``, in which case only ``x`` can be generated.
    """

    S: int
    probs: np.ndarray
    pi: np.ndarray
    sigma_vv: np.ndarray
    sigma_uu: np.ndarray | None = None
    sigma_uv: np.ndarray | None = None
    beta: float = 0.0
    scale_d: float = 1.0

    def __post_init__(self):
        S = int(self.S)
        if S < 1:
            raise ConfigError("S must be positive")
        object.__setattr__(self, "S", S)
        for name in ("probs", "pi", "sigma_vv", "sigma_uu", "sigma_uv"):
            object.__setattr__(self, name, _vec(getattr(self, name), name, S))
        if np.any(self.probs <= 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise ConfigError("probs must be positive and sum to 1")
        if np.any(self.sigma_vv <= 0):
            raise ConfigError("sigma_vv must be positive")
        if (self.sigma_uu is None) != (self.sigma_uv is None):
            raise ConfigError("sigma_uu and sigma_uv must be given together")
        if self.sigma_uu is not None:
            if np.any(self.sigma_uu < 0):
                raise ConfigError("sigma_uu must be nonnegative")
            bad = np.flatnonzero(self.sigma_uv**2 > self.sigma_uu * self.sigma_vv * (1 + 1e-12))
            if bad.size:
                raise ConfigError(
                    f"covariance matrix of group(s) {', '.join(str(s + 1) for s in bad)} "
                    "is not positive semidefinite"
                )
        if not np.isfinite(self.beta) or not np.isfinite(self.scale_d):
            raise ConfigError("beta and scale_d must be finite")

    @property
    def pi_s(self) -> np.ndarray:
        return self.scale_d * self.pi

    @property
    def has_structural(self) -> bool:
        return self.sigma_uu is not None

    def mu2_n(self, n_eff: float = 1000.0) -> np.ndarray:
        """Group concentration parameters ``n_eff * pi_s^2 / sigma_vv``."""
        return n_eff * self.pi_s**2 / self.sigma_vv

    def with_scale(self, scale_d: float) -> GroupedDesign:
        return replace(self, scale_d=float(scale_d))

    def to_dict(self) -> dict:
        lst = lambda a: None if a is None else [float(v) for v in a]  # noqa: E731
        return {
            "S": self.S, "probs": lst(self.probs), "pi": lst(self.pi),
            "sigma_uu": lst(self.sigma_uu), "sigma_uv": lst(self.sigma_uv),
            "sigma_vv": lst(self.sigma_vv), "beta": self.beta, "scale_d": self.scale_d,
        }


@dataclass(frozen=True, eq=False)
class PanelDesign:
    """AR(1) panel ``y_it = gamma y_i,t-1 + eta_i + u_it`` with
    period-specific shock standard deviations ``sigma_u`` (t = 1..T) and
    ``eta_i ~ N(0, sigma_eta^2)``."""

    n: int
    T: int
    gamma: float
    sigma_u: np.ndarray
    sigma_eta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "sigma_u", _vec(self.sigma_u, "sigma_u", self.T))
        if self.n < 1 or self.T < 1:
            raise ConfigError("n and T must be positive")
        if not abs(self.gamma) < 1:
            raise ConfigError("|gamma| must be below 1 for a stationary start")
        if np.any(self.sigma_u <= 0):
            raise ConfigError("sigma_u must be positive")
        if not self.sigma_eta >= 0:
            raise ConfigError("sigma_eta must be nonnegative")

    def with_sigma_u(self, t: int, value: float) -> PanelDesign:
        """Copy with the shock sd of period ``t`` (1-based) replaced."""
        s = np.array(self.sigma_u)
        s[t - 1] = value
        return replace(self, sigma_u=s)

    def to_dict(self) -> dict:
        return {"n": self.n, "T": self.T, "gamma": self.gamma,
                "sigma_u": [float(v) for v in self.sigma_u], "sigma_eta": self.sigma_eta}


def design_from_dict(cfg: dict) -> GroupedDesign | PanelDesign:
    cfg = {k: v for k, v in cfg.items() if not k.startswith("_")}
    try:
        if "sigma_vv" in cfg:
            return GroupedDesign(
                S=cfg["S"], probs=cfg.get("probs") or [1.0 / cfg["S"]] * cfg["S"],
                pi=cfg["pi"], sigma_vv=cfg["sigma_vv"],
                sigma_uu=cfg.get("sigma_uu"), sigma_uv=cfg.get("sigma_uv"),
                beta=float(cfg.get("beta", 0.0)), scale_d=float(cfg.get("scale_d", 1.0)),
            )
        if "gamma" in cfg:
            return PanelDesign(n=cfg["n"], T=cfg["T"], gamma=float(cfg["gamma"]),
                               sigma_u=cfg["sigma_u"],
                               sigma_eta=float(cfg.get("sigma_eta", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"missing config field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raise ConfigError("config is neither a grouped design nor a panel design")


def load_design(path: str | Path) -> GroupedDesign | PanelDesign:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return design_from_dict(cfg)


def shipped_design(name: str) -> GroupedDesign | PanelDesign:
    """Load one of the bundled configs: ``moderate``, ``high`` or ``panel``."""
    text = resources.files("gmmf.configs").joinpath(f"{name}.json").read_text()
    return design_from_dict(json.loads(text))


def _draw_groups(design: GroupedDesign, n: int, rng) -> np.ndarray:
    cdf = np.cumsum(design.probs)
    cdf[-1] = 1.0
    g = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(g, design.S - 1)


def gen_grouped_first_stage(design: GroupedDesign, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw group ids (0-based) and ``x`` only.

    Uses the same stream positions as :func:`gen_grouped`, so ``x`` is
    identical whether or not the structural errors are drawn.
    """
    g = _draw_groups(design, n, rng)
    n_s = np.bincount(g, minlength=design.S)
    small = np.flatnonzero(n_s < 2)
    if small.size:
        raise DegenerateGroupError(
            f"degenerate group: realized group size below 2 in group(s) "
            f"{', '.join(str(s + 1) for s in small)}"
        )
    e1 = rng.standard_normal(n)
    x = design.pi_s[g] + np.sqrt(design.sigma_vv[g]) * e1
    return g, x


def gen_grouped(design: GroupedDesign, n: int, rng) -> Dataset:
    """Draw one grouped dataset with indicator instruments.

    ``(v, u)`` is built from the Cholesky factor of the group covariance
    ordered with ``v`` first.
    """
    if not design.has_structural:
        raise MissingCovarianceError(
            "design has no sigma_uu/sigma_uv: structural errors cannot be drawn"
        )
    g, x = gen_grouped_first_stage(design, n, rng)
    e2 = rng.standard_normal(n)
    sv = np.sqrt(design.sigma_vv)
    load = design.sigma_uv / sv
    resid = np.sqrt(np.maximum(design.sigma_uu - load**2, 0.0))
    v = x - design.pi_s[g]
    u = (load / sv)[g] * v + resid[g] * e2
    Z = np.zeros((n, design.S))
    Z[np.arange(n), g] = 1.0
    return Dataset(y=design.beta * x + u, x=x, Z=Z)


def gen_ar1_panel(design: PanelDesign, rng) -> np.ndarray:
    """Simulate an AR(1) panel from a stationary start.

    Returns an ``(n, T + 1)`` array whose column 0 is the initial condition
    ``y_i0`` (not observed) and columns 1..T are ``y_i1..y_iT``.
    """
    n, T, g = design.n, design.T, design.gamma
    eta = design.sigma_eta * rng.standard_normal(n)
    y = np.empty((n, T + 1))
    y[:, 0] = eta / (1 - g) + rng.standard_normal(n) / np.sqrt(1 - g * g)
    u = rng.standard_normal((n, T)) * design.sigma_u
    for t in range(1, T + 1):
        y[:, t] = g * y[:, t - 1] + eta + u[:, t - 1]
    return y
