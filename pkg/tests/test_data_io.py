import numpy as np
import pytest

from hybridtvp.data_io import Dataset, load_csv, load_transform_spec, permute_columns
from hybridtvp.errors import (
    DimensionMismatch,
    MissingValue,
    NonPositiveForLog,
    NotAPermutation,
    RaggedCsv,
    UnknownTransform,
)


def write(path, text):
    path.write_text(text)
    return str(path)


def test_load_plain_csv(tmp_path):
    p = write(tmp_path / "d.csv", "a,b\n1,2\n3,4\n5,6\n")
    d = load_csv(p)
    assert d.names == ["a", "b"]
    assert d.transforms == ["none", "none"]
    assert d.dates is None
    np.testing.assert_array_equal(d.values, [[1, 2], [3, 4], [5, 6]])


def test_leading_date_column(tmp_path):
    p = write(tmp_path / "d.csv", "date,gdp\n1959Q1,100\n1959Q2,102\n")
    d = load_csv(p)
    assert d.names == ["gdp"]
    assert d.dates == ["1959Q1", "1959Q2"]
    np.testing.assert_array_equal(d.values[:, 0], [100, 102])


def test_log_diff_400_value(tmp_path):
    p = write(tmp_path / "d.csv", "gdp\n100\n102\n")
    d = load_csv(p, {"gdp": "log_diff_400"})
    # 400 * (log 102 - log 100)
    assert d.values.shape == (1, 1)
    assert d.values[0, 0] == pytest.approx(400.0 * np.log(1.02), rel=1e-12)


def test_global_first_row_drop(tmp_path):
    # one differenced column shortens every column, keeping rows aligned
    p = write(tmp_path / "d.csv",
              "date,gdp,unrate\n1959Q1,100,5.0\n1959Q2,102,5.5\n1959Q3,105,5.2\n")
    d = load_csv(p, {"gdp": "log_diff_400"})
    assert d.values.shape == (2, 2)
    np.testing.assert_allclose(d.values[:, 1], [5.5, 5.2])
    assert d.dates == ["1959Q2", "1959Q3"]


def test_no_drop_without_difference(tmp_path):
    p = write(tmp_path / "d.csv", "a,b\n1,2\n3,4\n")
    d = load_csv(p, {"a": "none"})
    assert d.values.shape == (2, 2)


def test_round_trip_inverse_accumulation(tmp_path):
    # x_t = x_{t-1} * exp(v_t / 400) recovers the raw levels
    rng = np.random.default_rng(7)
    levels = np.exp(np.cumsum(rng.normal(0, 0.02, size=80)) + 3.0)
    p = write(tmp_path / "d.csv",
              "x\n" + "\n".join(repr(float(v)) for v in levels) + "\n")
    d = load_csv(p, {"x": "log_diff_400"})
    rebuilt = [levels[0]]
    for v in d.values[:, 0]:
        rebuilt.append(rebuilt[-1] * np.exp(v / 400.0))
    np.testing.assert_allclose(rebuilt, levels, rtol=1e-10)


def test_non_positive_for_log(tmp_path):
    p = write(tmp_path / "d.csv", "x\n1\n0\n2\n")
    with pytest.raises(NonPositiveForLog):
        load_csv(p, {"x": "log_diff_400"})


def test_ragged_rows(tmp_path):
    p = write(tmp_path / "d.csv", "a,b\n1,2\n3\n")
    with pytest.raises(RaggedCsv):
        load_csv(p)


def test_missing_cell(tmp_path):
    p = write(tmp_path / "d.csv", "a,b\n1,\n3,4\n")
    with pytest.raises(MissingValue):
        load_csv(p)


def test_na_cell(tmp_path):
    p = write(tmp_path / "d.csv", "a\n1\nNA\n")
    with pytest.raises(MissingValue):
        load_csv(p)


def test_unknown_transform_tag(tmp_path):
    p = write(tmp_path / "d.csv", "a\n1\n2\n")
    with pytest.raises(UnknownTransform):
        load_csv(p, {"a": "first_diff"})


def test_transform_for_unknown_column(tmp_path):
    p = write(tmp_path / "d.csv", "a\n1\n2\n")
    with pytest.raises(UnknownTransform):
        load_csv(p, {"b": "none"})


def test_transform_spec_sidecar(tmp_path):
    spec_path = write(tmp_path / "spec.csv", "gdp,log_diff_400\nunrate,none\n")
    spec = load_transform_spec(spec_path)
    assert spec == {"gdp": "log_diff_400", "unrate": "none"}
    with pytest.raises(UnknownTransform):
        load_transform_spec(write(tmp_path / "bad.csv", "gdp,diff\n"))
    with pytest.raises(RaggedCsv):
        load_transform_spec(write(tmp_path / "wide.csv", "gdp,none,extra\n"))


def test_dataset_validation():
    with pytest.raises(DimensionMismatch):
        Dataset(np.zeros((3, 2)), ["a"], ["none", "none"])
    with pytest.raises(MissingValue):
        Dataset(np.array([[1.0], [np.nan]]), ["a"], ["none"])
    with pytest.raises(UnknownTransform):
        Dataset(np.zeros((2, 1)), ["a"], ["diff"])
    with pytest.raises(DimensionMismatch):
        Dataset(np.zeros((2, 1)), ["a"], ["none"], dates=["1959Q1"])


def test_permute_columns_moves_labels():
    d = Dataset(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]),
                ["a", "b", "c"], ["none", "log_diff_400", "none"])
    q = permute_columns(d, [2, 0, 1])
    assert q.names == ["c", "a", "b"]
    assert q.transforms == ["none", "none", "log_diff_400"]
    np.testing.assert_array_equal(q.values, [[3, 1, 2], [6, 4, 5]])


def test_permutation_group_action():
    rng = np.random.default_rng(0)
    d = Dataset(rng.normal(size=(4, 5)), list("abcde"), ["none"] * 5)
    p1 = [1, 3, 0, 4, 2]
    p2 = [4, 2, 3, 1, 0]
    left = permute_columns(permute_columns(d, p1), p2)
    composed = [p1[j] for j in p2]
    right = permute_columns(d, composed)
    np.testing.assert_array_equal(left.values, right.values)
    assert left.names == right.names
    # applying a permutation then its inverse restores the original
    inv = np.argsort(p1)
    back = permute_columns(permute_columns(d, p1), inv)
    np.testing.assert_array_equal(back.values, d.values)
    assert back.names == d.names


def test_not_a_permutation():
    d = Dataset(np.zeros((2, 3)), list("abc"), ["none"] * 3)
    for bad in ([0, 1], [0, 1, 1], [0, 1, 3], [1, 2, 3]):
        with pytest.raises(NotAPermutation):
            permute_columns(d, bad)
