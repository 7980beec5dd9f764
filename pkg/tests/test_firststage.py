import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import general_data, grouped, grouped_data
from gmmf.core import Dataset, SingularMatrixError, grouped_view
from gmmf.estimators import first_stage
from gmmf.firststage import diagnostics, f_effective, f_group, f_nonrobust, f_robust


def dense_f(d):
    """All three F's from explicit matrices."""
    Z, x = d.Z, d.x
    ZZi = np.linalg.inv(Z.T @ Z)
    pi = ZZi @ Z.T @ x
    v = x - Z @ pi
    Ov = sum(vi**2 * np.outer(zi, zi) for vi, zi in zip(v, Z))
    k, n = Z.shape[1], len(x)
    F = (pi @ Z.T @ Z @ pi) / k / (v @ v / n)
    Fr = (x @ Z @ np.linalg.inv(Ov) @ Z.T @ x) / k
    Feff = (x @ Z @ ZZi @ Z.T @ x) / np.trace(ZZi @ Ov)
    return F, Fr, Feff


def test_single_group_hand():
    d = grouped([[1.0, 3.0], [0.5, 1.5]], [[0, 0], [0, 0]])
    fp = f_group(grouped_view(d), first_stage(d))
    assert fp[0] == pytest.approx(8.0)


def test_zero_mean_group():
    d = grouped([[-1.0, 1.0], [0.5, 1.5]], [[0, 0], [0, 0]])
    assert f_group(grouped_view(d), first_stage(d))[0] == 0.0


def test_d1(d1):
    fs = first_stage(d1)
    np.testing.assert_allclose(f_group(grouped_view(d1), fs), [200, 0.5])
    assert f_robust(d1, fs) == pytest.approx(100.25)
    assert f_nonrobust(d1, fs) == pytest.approx(0.5 * 10 / (32.02 / 4))
    assert f_nonrobust(d1, fs) == pytest.approx(0.6246, abs=5e-5)
    assert f_effective(d1, fs) == pytest.approx(10 / 16.01)


def test_d0(d0):
    dg = diagnostics(d0)
    assert dg.f_robust == pytest.approx(8)
    assert dg.f_nonrobust == pytest.approx(8)
    assert dg.f_effective == pytest.approx(8)
    np.testing.assert_allclose(dg.f_group, [8, 8])


def test_exact_fit_is_singular():
    Z = np.array([[1.0, 0], [1, 0], [0, 1], [0, 1]])
    d = Dataset(y=np.ones(4), x=Z @ [2.0, -1.0], Z=Z)
    with pytest.raises(SingularMatrixError):
        f_robust(d, first_stage(d))
    with pytest.raises(SingularMatrixError):
        f_group(grouped_view(d), first_stage(d))


def test_homoskedastic_nonrobust_equals_robust():
    d = grouped([[1.0, 3.0], [-1.0, 1.0, -1.0, 1.0], [4.0, 6.0]], [[0, 0], [0] * 4, [0, 0]])
    fs = first_stage(d)
    assert f_nonrobust(d, fs) == pytest.approx(f_robust(d, fs), rel=1e-12)


def test_unbalanced_effective_differs():
    d = grouped([[0.9, 1.1], [-2.0, 6.0, 1.0, 3.0]], [[0, 0], [0] * 4])
    dg = diagnostics(d)
    F, Fr, Feff = dense_f(d)
    assert dg.f_effective != pytest.approx(dg.f_nonrobust, rel=1e-3)
    assert dg.f_nonrobust == pytest.approx(F, rel=1e-12)
    assert dg.f_effective == pytest.approx(Feff, rel=1e-12)
    assert dg.f_robust == pytest.approx(Fr, rel=1e-12)


def test_general_instruments_no_group_f():
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((30, 3))
    d = Dataset(y=rng.standard_normal(30), x=Z @ [1, 0.5, 0] + rng.standard_normal(30), Z=Z)
    dg = diagnostics(d)
    assert dg.f_group is None
    np.testing.assert_allclose([dg.f_nonrobust, dg.f_robust, dg.f_effective], dense_f(d), rtol=1e-10)


@given(grouped_data())
def test_fr_is_mean_of_group_f(d):
    dg = diagnostics(d)
    assert dg.f_robust == pytest.approx(dg.f_group.mean(), rel=1e-10)
    assert min(dg.f_nonrobust, dg.f_robust, dg.f_effective) >= 0


@given(grouped_data(balanced=True))
def test_balanced_effective_equals_nonrobust(d):
    dg = diagnostics(d)
    assert dg.f_effective == pytest.approx(dg.f_nonrobust, rel=1e-10)


@given(st.one_of(grouped_data(), general_data()), st.floats(0.01, 100))
def test_scale_invariance(d, c):
    a = diagnostics(d)
    b = diagnostics(Dataset(y=d.y, x=c * d.x, Z=d.Z))
    for u, v in ((a.f_nonrobust, b.f_nonrobust), (a.f_robust, b.f_robust), (a.f_effective, b.f_effective)):
        assert v == pytest.approx(u, rel=1e-9)
