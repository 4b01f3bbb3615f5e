import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scr.data import (
    Dataset,
    SynthSpec,
    fit_standardizer,
    generate_synthetic,
    load_csv,
    read_sidecar,
    split,
    write_csv,
)
from scr.errors import ContractError, DataError, SplitError
from scr.metrics import pearson_r


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_minimal(tmp_path):
    ds = load_csv(write(tmp_path, "label,f1,f2\n1.0,2,3\n"))
    assert (ds.n, ds.d) == (1, 2)
    assert ds.labels.tolist() == [1.0]
    assert ds.features.tolist() == [[2.0, 3.0]]
    assert ds.feature_names == ("f1", "f2")


def test_empty_cell_is_zero(tmp_path):
    ds = load_csv(write(tmp_path, "label,fa1,fa2\n0.5,0.4,0.3\n1.5,,0.2\n-1,0.1,1e-1\n"))
    assert ds.features[1, 0] == 0.0
    assert ds.features[2, 1] == 0.1
    assert ds.n == 3


def test_label_column_anywhere_and_modality_from_stem(tmp_path):
    ds = load_csv(write(tmp_path, "a,label,b\n1,2,3\n4,5,6\n", name="FA.csv"))
    assert ds.labels.tolist() == [2.0, 5.0]
    assert ds.features.tolist() == [[1.0, 3.0], [4.0, 6.0]]
    assert ds.modality_tag == "FA"


def test_constant_features_load(tmp_path):
    ds = load_csv(write(tmp_path, "label,f\n1,5\n2,5\n3,5\n"))
    assert fit_standardizer(ds, [0, 1, 2]).constant.tolist() == [True]


@pytest.mark.parametrize("text,where", [
    ("f1,f2\n1,2\n", "label"),
    ("", "header"),
    ("1,2\n3,4\n", "header"),
    ("label,f1\n1,abc\n", "row 2, column 2"),
    ("label,f1\n1,2\n3,4,5\n", "row 3"),
    ("label,f1\n,2\n", "row 2"),
])
def test_ingestion_errors(tmp_path, text, where):
    with pytest.raises(DataError, match=where):
        load_csv(write(tmp_path, text))


def test_csv_roundtrip_is_exact(tmp_path):
    ds, _ = generate_synthetic(SynthSpec(n_samples=50, n_features=7, informative_indices=(1, 3), seed=3))
    write_csv(ds, tmp_path / "x.csv")
    back = load_csv(tmp_path / "x.csv")
    assert back.equals(ds)


def test_dataset_is_immutable():
    ds = Dataset(np.ones((2, 2)), np.zeros(2), ("a", "b"))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 3.0


def test_dataset_rejects_non_finite():
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan]]), np.zeros(1), ("a",))


@pytest.mark.parametrize("n,sizes", [(100, (70, 10, 20)), (101, (70, 10, 21)), (10, (7, 1, 2))])
def test_split_sizes(n, sizes):
    sp = split(n, seed=0)
    assert (sp.train.size, sp.val.size, sp.test.size) == sizes


def test_split_is_deterministic():
    a, b = split(500, 42), split(500, 42)
    for x, y in zip((a.train, a.val, a.test), (b.train, b.val, b.test)):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a.train, split(500, 43).train)


def test_split_too_small():
    with pytest.raises(SplitError):
        split(9, 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(10, 10000), st.integers(0, 2**32 - 1))
def test_split_partition_property(n, seed):
    sp = split(n, seed)
    allidx = np.concatenate([sp.train, sp.val, sp.test])
    assert np.array_equal(np.sort(allidx), np.arange(n))
    assert sp.train.size == int(np.floor(0.7 * n + 1e-9))
    assert sp.val.size == n // 10
    assert sp.test.size == n - sp.train.size - sp.val.size


def test_standardize_hand_values():
    ds = Dataset(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), np.array([7.0, 8.0, 9.0]), ("a", "b"))
    z = fit_standardizer(ds, [0, 1, 2]).apply(ds)
    s = np.sqrt(1.5)  # 1 / population std of [1, 2, 3]
    np.testing.assert_allclose(z.features[:, 0], [-s, 0, s], rtol=1e-15)
    assert z.features[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert z.labels.tolist() == [7.0, 8.0, 9.0]


def test_standardize_uses_train_rows_only():
    x = np.array([[0.0], [2.0], [100.0]])
    ds = Dataset(x, np.zeros(3), ("a",))
    std = fit_standardizer(ds, [0, 1])
    assert std.mean.tolist() == [1.0] and std.std.tolist() == [1.0]
    assert std.apply(ds).features[2, 0] == 99.0


def test_double_standardization_rejected():
    ds = Dataset(np.arange(6.0).reshape(3, 2), np.zeros(3), ("a", "b"))
    std = fit_standardizer(ds, [0, 1, 2])
    with pytest.raises(ContractError):
        std.apply(std.apply(ds))
    with pytest.raises(ContractError):
        fit_standardizer(ds, [])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(1, 6), st.integers(0, 10**6))
def test_standardized_train_columns_have_zero_mean_unit_std(n, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(rng.uniform(-50, 50, d), rng.uniform(0.1, 20, d), size=(n, d))
    x[:, 0] = 3.25  # one constant column
    ds = Dataset(x, np.zeros(n), tuple(f"f{i}" for i in range(d)))
    z = fit_standardizer(ds, np.arange(n)).apply(ds).features
    assert np.all(np.abs(z.mean(axis=0)) < 1e-10)
    assert np.all(z[:, 0] == 0.0)
    stds = z.std(axis=0)[1:]
    assert np.all(np.abs(stds - 1) < 1e-10)


def test_noiseless_single_feature_is_perfectly_correlated():
    ds, truth = generate_synthetic(
        SynthSpec(n_samples=200, n_features=5, informative_indices=(2,), noise_std=0.0, nonlinear=False, seed=1)
    )
    assert abs(pearson_r(ds.features[:, 2], ds.labels)) == pytest.approx(1.0, abs=1e-12)
    assert ds.labels.min() == pytest.approx(-3.0) and ds.labels.max() == pytest.approx(3.0)


def test_synthetic_is_deterministic():
    spec = SynthSpec(n_samples=300, n_features=20, seed=9)
    (a, ta), (b, tb) = generate_synthetic(spec), generate_synthetic(spec)
    assert a.equals(b)
    assert np.array_equal(ta.weights, tb.weights)


def ols_test_r(ds, truth, seed=0):
    sp = split(ds.n, seed)
    cols = list(truth.informative)
    a = np.column_stack([ds.features[:, cols], np.ones(ds.n)])
    coef, *_ = np.linalg.lstsq(a[sp.train], ds.labels[sp.train], rcond=None)
    return pearson_r(a[sp.test] @ coef, ds.labels[sp.test])


def test_ols_oracle_on_benchmark_task():
    ds, truth = generate_synthetic(SynthSpec(n_samples=2000, n_features=100, noise_std=0.5, nonlinear=False, seed=0))
    assert ols_test_r(ds, truth) > 0.8


def test_labels_depend_only_on_informative_columns():
    ds, truth = generate_synthetic(SynthSpec(n_samples=100, n_features=12, informative_indices=(0, 5), noise_std=0.0, seed=4))
    np.testing.assert_array_equal(truth.regenerate_labels(ds.features), ds.labels)
    rng = np.random.default_rng(0)
    for j in range(12):
        if j in truth.informative:
            continue
        x = np.array(ds.features)
        x[:, j] = x[rng.permutation(ds.n), j]
        np.testing.assert_array_equal(truth.regenerate_labels(x), ds.labels)


def test_sidecar(tmp_path):
    ds, truth = generate_synthetic(SynthSpec(n_samples=20, n_features=6, informative_indices=(1, 4), seed=2))
    truth.write_sidecar(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "feature_index,weight,informative"
    w, mask = read_sidecar(tmp_path / "t.csv")
    assert mask.tolist() == [False, True, False, False, True, False]
    np.testing.assert_array_equal(w[[1, 4]], truth.weights)
    assert np.all(w[~mask] == 0)


def test_synth_spec_validation():
    with pytest.raises(ContractError):
        SynthSpec(n_features=5, informative_indices=())
    with pytest.raises(ContractError):
        SynthSpec(n_features=5, informative_indices=(5,))
    with pytest.raises(ContractError):
        SynthSpec(noise_std=-1)
