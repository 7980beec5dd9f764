"""Weak-instrument limit simulators.

Draws are split into fixed-size chunks; chunk ``c`` always uses substream
``(seed, c)`` and chunk sums are folded in chunk order, so the thread
count never changes a result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from gmmf.rng import substream

CHUNK = 1 << 16

# (sigma2_v1, sigma2_v2, mu2_1, mu2_2) -> reported (w_2sls,1, w_gmmf,1)
TABLE1_ROWS = (
    ((5.0, 5.0), (5.76, 5.76), (0.50, 0.50)),
    ((5.0, 0.1), (5.76, 5.76), (0.95, 0.50)),
    ((5.0, 0.1), (1.96, 5.76), (0.84, 0.32)),
)


@dataclass(frozen=True)
class WIAGroupConfig:
    sigma2_v: tuple[float, ...]
    mu2: tuple[float, ...]
    draws: int = 100_000

    def __post_init__(self):
        s = np.asarray(self.sigma2_v, dtype=float)
        m = np.asarray(self.mu2, dtype=float)
        if s.shape != m.shape or s.ndim != 1:
            raise ValueError("sigma2_v and mu2 must be vectors of equal length")
        if np.any(s <= 0) or np.any(m < 0):
            raise ValueError("need positive variances and nonnegative mu2")
        if self.draws < 1:
            raise ValueError("draws must be at least 1")


@dataclass(frozen=True)
class WIALimitConfig:
    """Scalar description of the limit experiment.

    Only ``lambda2`` (the squared norm of the noncentrality vector) matters
    by rotational invariance; the vector is taken as ``(sqrt(lambda2), 0, ...)``.
    """

    k_z: int
    lambda2: float
    rho: float = 0.0
    draws: int = 1_000_000

    def __post_init__(self):
        if self.k_z < 1:
            raise ValueError("k_z must be positive")
        if self.lambda2 < 0:
            raise ValueError("lambda2 must be nonnegative")
        if abs(self.rho) > 1:
            raise ValueError("|rho| must not exceed 1")
        if self.draws < 1:
            raise ValueError("draws must be at least 1")


def _chunked_sum(fn, draws: int, seed: int, threads: int = 1) -> np.ndarray:
    sizes = [min(CHUNK, draws - c) for c in range(0, draws, CHUNK)]
    jobs = [(i, m) for i, m in enumerate(sizes)]
    run = lambda job: fn(substream(seed, job[0]), job[1])  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    total = np.zeros_like(np.asarray(parts[0], dtype=float))
    for p in parts:
        total = total + p
    return total


@dataclass(frozen=True, eq=False)
class WIAWeights:
    w_2sls: np.ndarray
    w_gmmf: np.ndarray


def wia_weights(cfg: WIAGroupConfig, seed: int = 0, threads: int = 1) -> WIAWeights:
    """Expected limiting 2SLS and GMMf group weights."""
    s2 = np.asarray(cfg.sigma2_v, dtype=float)
    mu = np.sqrt(np.asarray(cfg.mu2, dtype=float))
    S = s2.shape[0]

    def chunk(rng, m):
        q = (mu + rng.standard_normal((m, S))) ** 2
        a = s2 * q
        return np.concatenate([
            (a / a.sum(axis=1, keepdims=True)).sum(axis=0),
            (q / q.sum(axis=1, keepdims=True)).sum(axis=0),
        ])

    tot = _chunked_sum(chunk, cfg.draws, seed, threads) / cfg.draws
    return WIAWeights(w_2sls=tot[:S], w_gmmf=tot[S:])


def f_limit_sample(mu2: float, draws: int, seed: int = 0) -> np.ndarray:
    """Draws of ``(mu + T)^2``, the limit of a group F-statistic
    (noncentral chi-squared, 1 df, noncentrality ``mu2``)."""
    if mu2 < 0 or draws < 1:
        raise ValueError("need mu2 >= 0 and draws >= 1")
    mu = np.sqrt(mu2)
    out = [(mu + substream(seed, c).standard_normal(min(CHUNK, draws - c0))) ** 2
           for c, c0 in enumerate(range(0, draws, CHUNK))]
    return np.concatenate(out)


def _lam_plus(z: np.ndarray, lambda2: float) -> np.ndarray:
    a = z.copy()
    a[:, 0] += np.sqrt(lambda2)
    return a


def relbias_limit(cfg: WIALimitConfig, seed: int = 0, threads: int = 1) -> float:
    """Limit of the GMMf bias relative to OLS bias,
    ``E[(lam + z)'z / (lam + z)'(lam + z)]`` with ``z ~ N(0, I_k)``.

    For ``k_z = 1`` and ``lambda2 > 0`` the expectation does not exist and
    the Monte Carlo average does not settle.
    """

    def chunk(rng, m):
        z = rng.standard_normal((m, cfg.k_z))
        a = _lam_plus(z, cfg.lambda2)
        return np.array([np.sum(np.einsum("ij,ij->i", a, z) / np.einsum("ij,ij->i", a, a))])

    return float(_chunked_sum(chunk, cfg.draws, seed, threads)[0] / cfg.draws)


def wald_size_limit(
    cfg: WIALimitConfig, alpha: float = 0.05, seed: int = 0, threads: int = 1
) -> float:
    """Limiting rejection probability of the GMMf Wald test at level ``alpha``
    when the structural/first-stage correlation matrix is ``rho * I``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    crit = chi2.ppf(1 - alpha, 1)
    rho = cfg.rho
    c = np.sqrt(max(1.0 - rho * rho, 0.0))

    def chunk(rng, m):
        zv = rng.standard_normal((m, cfg.k_z))
        eps = rng.standard_normal((m, cfg.k_z))
        zu = rho * zv + c * eps
        a = _lam_plus(zv, cfg.lambda2)
        eta1 = np.einsum("ij,ij->i", a, a)
        eta2 = np.einsum("ij,ij->i", a, zu)
        r = eta2 / eta1
        with np.errstate(divide="ignore", invalid="ignore"):
            W = eta1 * r * r / (1.0 - 2.0 * rho * r + r * r)
        return np.array([np.count_nonzero(W > crit)], dtype=float)

    return float(_chunked_sum(chunk, cfg.draws, seed, threads)[0] / cfg.draws)
