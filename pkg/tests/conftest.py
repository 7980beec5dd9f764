import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from gmmf.core import Dataset

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def indicators(groups, S):
    Z = np.zeros((len(groups), S))
    Z[np.arange(len(groups)), groups] = 1.0
    return Z


def grouped(xs, ys):
    """Dataset from per-group lists of x and y values."""
    g = np.concatenate([np.full(len(a), s) for s, a in enumerate(xs)])
    return Dataset(y=np.concatenate(ys), x=np.concatenate(xs), Z=indicators(g, len(xs)))


@pytest.fixture
def d0():
    # two groups, x = (1, 3) in each
    return grouped([[1.0, 3.0], [1.0, 3.0]], [[2.0, 2.0], [1.0, 3.0]])


@pytest.fixture
def d1():
    return grouped([[0.9, 1.1], [-2.0, 6.0]], [[1.0, 1.0], [4.0, 4.0]])


def random_grouped(seed, S, n_s, hetero=True, endog=0.5):
    rng = np.random.default_rng(seed)
    g = np.repeat(np.arange(S), n_s)
    rng.shuffle(g)
    pi = rng.normal(0, 1.0, S)
    sv = rng.uniform(0.2, 3.0, S) if hetero else np.ones(S)
    v = rng.standard_normal(len(g)) * np.sqrt(sv[g])
    u = endog * v + rng.standard_normal(len(g))
    x = pi[g] + v
    return Dataset(y=0.7 * x + u, x=x, Z=indicators(g, S))


@st.composite
def grouped_data(draw, balanced=False):
    S = draw(st.integers(2, 6))
    if balanced:
        n_s = [draw(st.integers(2, 12))] * S
    else:
        n_s = draw(st.lists(st.integers(2, 12), min_size=S, max_size=S))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_grouped(seed, S, n_s)


@st.composite
def general_data(draw):
    """Continuous instruments, n >= k_z + 2."""
    k = draw(st.integers(1, 4))
    n = draw(st.integers(k + 3, 40))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    Z = rng.standard_normal((n, k))
    x = Z @ rng.normal(0, 1, k) + rng.standard_normal(n) * rng.uniform(0.5, 2, n)
    y = 0.3 * x + rng.standard_normal(n)
    return Dataset(y=y, x=x, Z=Z)
