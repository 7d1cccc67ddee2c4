import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gdrcsvm.data_io import (
    Dataset, MinMaxScaler, SplitSpec, load_builtin, make_rng, parse_csv, parse_svmlight, split,
    split_indices, write_svmlight,
)
from gdrcsvm.errors import DegenerateDataset, DegenerateSplit, LabelError, ParseError, ShapeError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- parse_csv ---------------------------------------------------------------------

def test_label_mapping(tmp_path):
    p = write(tmp_path, "a.csv", "x,y,label\n1,2,2\n3,4,4\n5,6,4\n")
    ds = parse_csv(p, "label", 2)
    assert ds.labels.tolist() == [1, -1, -1]
    np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4], [5, 6]])


def test_non_numeric_cell_reports_row(tmp_path):
    p = write(tmp_path, "a.csv", "x,y,label\na,b,1\n")
    with pytest.raises(ParseError) as info:
        parse_csv(p, "label", 1)
    assert info.value.row == 1


def test_missing_rows_dropped_and_counted(tmp_path):
    p = write(tmp_path, "a.csv", "x,y,label\n1,?,1\n3,4,0\n5,6,1\n,1,0\n")
    ds = parse_csv(p, "label", 1)
    assert len(ds) == 2 and ds.dropped_rows == 2


def test_single_class_file_rejected(tmp_path):
    p = write(tmp_path, "a.csv", "x,label\n1,1\n2,1\n")
    with pytest.raises(DegenerateDataset):
        parse_csv(p, "label", 1)


@pytest.mark.parametrize("column", ["label", 2])
def test_label_column_by_name_or_position(tmp_path, column):
    p = write(tmp_path, "a.csv", "x,y,label\n1,2,a\n3,4,b\n")
    assert parse_csv(p, column, "a").labels.tolist() == [1, -1]


def test_wisconsin_class_counts():
    ds = load_builtin("wisconsin")
    assert (ds.n_pos, ds.n_neg, ds.n) == (239, 444, 9)


@pytest.mark.parametrize("name, counts", [
    ("balance-scale", (288, 288, 4)),
    ("ionosphere", (225, 126, 34)),
])
def test_other_bundled_dataset_counts(name, counts):
    ds = load_builtin(name)
    assert (ds.n_pos, ds.n_neg, ds.n) == counts


# --- parse_svmlight ----------------------------------------------------------------

def test_svmlight_line(tmp_path):
    p = write(tmp_path, "a.svm", "+1 1:0.5 3:2\n-1 2:1\n")
    ds = parse_svmlight(p)
    np.testing.assert_array_equal(ds.features, [[0.5, 0, 2], [0, 1, 0]])
    assert ds.labels.tolist() == [1, -1]


@pytest.mark.parametrize("text, exc", [
    ("+1 1:x\n-1 1:1\n", ParseError),
    ("+1 3:1 2:1\n-1 1:1\n", ParseError),
    ("+1 0:1\n-1 1:1\n", ParseError),
    ("+1 1:1\n-1 1:1\n7 1:1\n", LabelError),
])
def test_svmlight_errors(tmp_path, text, exc):
    with pytest.raises(exc):
        parse_svmlight(write(tmp_path, "a.svm", text))


@pytest.mark.parametrize("env, counts", [
    ("GDRCSVM_MUSHROOMS", (3916, 4208, 112)),
    ("GDRCSVM_COD_RNA", (19845, 39690, 8)),
])
def test_libsvm_dataset_counts(env, counts):
    path = os.environ.get(env)
    if not path:
        pytest.skip(f"set {env} to a local copy of the file to run this check")
    ds = parse_svmlight(path, positive_label=1)
    assert (ds.n_pos, ds.n_neg, ds.n) == counts


labels_strategy = st.lists(st.sampled_from([1.0, -1.0]), min_size=2, max_size=15).filter(
    lambda ys: 1.0 in ys and -1.0 in ys)


@given(labels_strategy, st.integers(1, 5), st.data())
def test_svmlight_round_trip(tmp_path_factory, labels, n, data):
    X = data.draw(arrays(float, (len(labels), n),
                         elements=st.floats(-1e6, 1e6, allow_nan=False).map(lambda v: round(v, 6))))
    ds = Dataset(X, labels)
    path = tmp_path_factory.mktemp("rt") / "d.svm"
    write_svmlight(ds, path)
    back = parse_svmlight(path, n_features=n)
    assert back.labels.tolist() == list(labels)
    np.testing.assert_array_equal(back.features, X)


# --- split -------------------------------------------------------------------------

def balanced(n_per_class, n=2, seed=0):
    r = np.random.default_rng(seed)
    X = r.standard_normal((2 * n_per_class, n))
    y = np.r_[np.ones(n_per_class), -np.ones(n_per_class)]
    return Dataset(X, y)


@pytest.mark.parametrize("per_class, expected_train", [(50, 10), (300, 60)])
def test_stratified_counts(per_class, expected_train):
    train, test = split(balanced(per_class), SplitSpec(0.2, seed=3))
    assert (train.n_pos, train.n_neg) == (expected_train, expected_train)
    assert (test.n_pos, test.n_neg) == (per_class - expected_train, per_class - expected_train)


def test_split_deterministic():
    ds = balanced(50)
    a = split_indices(ds, SplitSpec(0.2, seed=7))
    b = split_indices(ds, SplitSpec(0.2, seed=7))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@given(st.integers(0, 2**32), st.integers(5, 40), st.floats(0.1, 0.9))
def test_split_is_partition(seed, per_class, frac):
    ds = balanced(per_class)
    try:
        tr, te = split_indices(ds, SplitSpec(frac, seed=seed))
    except DegenerateSplit:
        return
    assert len(tr) + len(te) == len(ds)
    assert not set(tr) & set(te)


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.5])
def test_split_fraction_range(frac):
    with pytest.raises(DegenerateSplit):
        SplitSpec(frac)


def test_rng_is_reproducible():
    assert make_rng(5).integers(0, 10**9) == make_rng(5).integers(0, 10**9)


# --- Dataset and scaling -----------------------------------------------------------

def test_dataset_rejects_bad_labels():
    with pytest.raises(LabelError):
        Dataset(np.zeros((2, 1)), [0, 1])
    with pytest.raises(ShapeError):
        Dataset(np.zeros((2, 1)), [1, -1, 1])


def test_minmax_uses_training_extremes():
    train = Dataset([[0.0, 5.0], [2.0, 5.0]], [1, -1])
    test = Dataset([[1.0, 7.0], [4.0, 5.0]], [1, -1])
    scaler = MinMaxScaler().fit(train)
    np.testing.assert_allclose(scaler.transform(train).features, [[0, 0], [1, 0]])
    np.testing.assert_allclose(scaler.transform(test).features, [[0.5, 2], [2, 0]])


def test_summary_json_fields():
    assert balanced(3).summary() == {"name": "dataset", "n": 2, "n_pos": 3, "n_neg": 3}
