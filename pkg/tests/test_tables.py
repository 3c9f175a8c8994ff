import numpy as np
import pytest

from hmmlu import CountTable, InputError, ItemSchema, read_counts_csv
from hmmlu.tables import marginal_of


def test_schema_basics():
    s = ItemSchema((3, 4))
    assert s.v == 2
    assert s.n_obs_cells == 12
    assert s.joint_arities == (3, 4, 2, 2)
    with pytest.raises(InputError):
        ItemSchema((1, 3))
    with pytest.raises(InputError):
        ItemSchema(())


def test_count_table_validation():
    s = ItemSchema((2, 2))
    CountTable(schema=s, strata=["a"], counts=np.array([[1, 2, 3, 4]]))
    with pytest.raises(InputError):
        CountTable(schema=s, strata=["a"], counts=np.array([[1, 2, 3]]))
    with pytest.raises(InputError):
        CountTable(schema=s, strata=["a"], counts=np.array([[1, -2, 3, 4]]))


def test_marginal_of():
    p = np.arange(12, dtype=float)
    p /= p.sum()
    m = marginal_of(p, (3, 4), [0])
    np.testing.assert_allclose(m, p.reshape(3, 4).sum(axis=1))
    with pytest.raises(InputError):
        marginal_of(p, (3, 4), [2])


def test_read_counts_csv_roundtrip(tmp_path):
    path = tmp_path / "counts.csv"
    path.write_text(
        "stratum,g,r1,r2,count\n"
        "a,x,1,1,5\n"
        "a,x,2,2,7\n"
        "b,y,1,2,3\n")
    t = read_counts_csv(path)
    assert t.schema.m == (2, 2)
    assert t.strata == ["a", "b"]
    # last item fastest: cells (1,1),(1,2),(2,1),(2,2)
    np.testing.assert_array_equal(t.counts, [[5, 0, 0, 7], [0, 3, 0, 0]])
    assert t.covariates[0] == {"g": "x"}


def test_read_counts_csv_diagnostics(tmp_path):
    bad_header = tmp_path / "h.csv"
    bad_header.write_text("foo,r1,count\n")
    with pytest.raises(InputError):
        read_counts_csv(bad_header)

    bad_cell = tmp_path / "c.csv"
    bad_cell.write_text("stratum,r1,count\na,1,5\na,zero,2\n")
    with pytest.raises(InputError, match=":3"):
        read_counts_csv(bad_cell)

    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(InputError):
        read_counts_csv(empty)


def test_read_counts_csv_v_check(tmp_path):
    path = tmp_path / "counts.csv"
    path.write_text("stratum,r1,r2,count\na,1,1,5\n")
    with pytest.raises(InputError):
        read_counts_csv(path, v=3)
