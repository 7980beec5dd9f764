import numpy as np
import pytest
from hypothesis import given

from conftest import grouped_data
from gmmf.core import (
    DataError,
    Dataset,
    DegenerateGroupError,
    NotGroupedError,
    grouped_view,
    load_dataset,
)


def _csv(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestDataset:
    def test_shapes_and_readonly(self):
        d = Dataset(y=[1, 2, 3], x=[1, 0, 1], Z=[1.0, 2.0, 3.0])
        assert (d.n, d.k_z) == (3, 1)
        assert d.Z.shape == (3, 1)
        with pytest.raises(ValueError):
            d.x[0] = 5.0

    def test_length_mismatch(self):
        with pytest.raises(DataError, match="length mismatch"):
            Dataset(y=[1, 2], x=[1, 2, 3], Z=np.ones((3, 1)))

    def test_nonfinite(self):
        with pytest.raises(DataError):
            Dataset(y=[1, np.nan, 3], x=[1, 2, 3], Z=np.ones((3, 1)))

    def test_n_below_kz(self):
        with pytest.raises(DataError, match="n >= k_z"):
            Dataset(y=[1, 2], x=[1, 2], Z=np.eye(2, 3))

    def test_cluster_recoded(self):
        d = Dataset(y=[1, 2, 3, 4], x=[1, 2, 3, 4], Z=np.ones((4, 1)), cluster=[7, 7, 3, 3])
        assert d.cluster.tolist() == [1, 1, 0, 0]

    def test_is_grouped(self, d0):
        assert d0.is_grouped
        assert not Dataset(y=[1, 2], x=[1, 2], Z=[[1.0], [0.5]]).is_grouped
        assert not Dataset(y=[1, 2], x=[1, 2], Z=[[1.0, 1.0], [0.0, 1.0]]).is_grouped


class TestLoad:
    def test_four_rows(self, tmp_path):
        p = _csv(tmp_path, "y,x,z1,z2\n2,1,1,0\n2,3,1,0\n1,1,0,1\n3,3,0,1\n")
        d = load_dataset(p, "y", "x", ["z1", "z2"])
        assert (d.n, d.k_z) == (4, 2)
        assert d.x.tolist() == [1, 3, 1, 3]
        assert d.is_grouped

    def test_column_order(self, tmp_path):
        p = _csv(tmp_path, "z2,x,y,z1\n0,1,2,1\n1,3,4,0\n0,5,6,1\n")
        d = load_dataset(p, "y", "x", ["z1", "z2"])
        assert d.y.tolist() == [2, 4, 6]
        assert d.Z[:, 0].tolist() == [1, 0, 1]

    def test_missing_column(self, tmp_path):
        p = _csv(tmp_path, "y,x,z1\n1,1,1\n")
        with pytest.raises(DataError, match="column not found: 'z2'"):
            load_dataset(p, "y", "x", ["z1", "z2"])

    def test_non_numeric_names_row_and_column(self, tmp_path):
        p = _csv(tmp_path, "y,x,z1,z2\n1,2,1,0\n1.0,abc,0,1\n")
        with pytest.raises(DataError, match=r"'abc' at row 3, column 'x'"):
            load_dataset(p, "y", "x", ["z1", "z2"])

    def test_too_few_rows(self, tmp_path):
        p = _csv(tmp_path, "y,x,z1,z2,z3\n1,2,1,0,0\n1,1,0,1,0\n")
        with pytest.raises(DataError, match="k_z"):
            load_dataset(p, "y", "x", ["z1", "z2", "z3"])

    def test_round_trip_deterministic(self, tmp_path):
        p = _csv(tmp_path, "y,x,z1,z2\n2,1,1,0\n5,3,0,1\n2,3,1,0\n1,1,0,1\n")
        a = grouped_view(load_dataset(p, "y", "x", ["z1", "z2"]))
        b = grouped_view(load_dataset(p, "y", "x", ["z1", "z2"]))
        assert a.group_index.tolist() == [0, 1, 0, 1]
        np.testing.assert_array_equal(a.xbar, b.xbar)
        np.testing.assert_array_equal(a.ybar, [2.0, 3.0])


class TestGroupedView:
    def test_d0(self, d0):
        gv = grouped_view(d0)
        assert gv.n_s.tolist() == [2, 2]
        assert gv.xbar.tolist() == [2.0, 2.0]
        assert (gv.S, gv.n) == (2, 4)

    def test_overlapping_row(self):
        d = Dataset(y=[1, 2, 3], x=[1, 2, 3], Z=[[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(NotGroupedError, match="not grouped data"):
            grouped_view(d)

    def test_singleton_group(self):
        d = Dataset(y=[1, 2, 3], x=[1, 2, 3], Z=[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateGroupError, match="degenerate group"):
            grouped_view(d)

    @given(grouped_data())
    def test_group_sums(self, d):
        gv = grouped_view(d)
        assert gv.n == d.n
        np.testing.assert_allclose(np.sum(gv.n_s * gv.xbar), d.x.sum(), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(np.sum(gv.n_s * gv.ybar), d.y.sum(), rtol=1e-12, atol=1e-12)
