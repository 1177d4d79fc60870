import numpy as np
import pytest

from dataset import bootstrap_resample, continuous_features, kfold, split, standardize
from errors import ContractError, DegenerateFeatureError, ValidationError
from models import Dataset, SplitPlan, SurvRecord


def _column_dataset(values):
    x = np.asarray(values, dtype=float).reshape(-1, 1)
    n = x.shape[0]
    return Dataset(x, np.arange(1.0, n + 1), np.ones(n, dtype=bool), ["f"])


def test_standardize_population_sd():
    ds = standardize(_column_dataset([1, 2, 3]), [0])
    np.testing.assert_allclose(ds.x[:, 0], [-1.2247449, 0.0, 1.2247449], atol=1e-6)


def test_standardize_is_idempotent(rng):
    raw = Dataset(rng.normal(3.0, 2.0, size=(50, 3)), rng.exponential(5.0, 50), np.ones(50, dtype=bool),
                  ["a", "b", "c"])
    once = standardize(raw, [0, 1, 2])
    twice = standardize(once, [0, 1, 2])
    np.testing.assert_allclose(twice.x, once.x, atol=1e-9)
    np.testing.assert_allclose(once.x.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(once.x.var(axis=0), 1.0, atol=1e-9)


def test_standardize_time_statistics_feed_the_network(rng):
    raw = Dataset(rng.normal(size=(40, 2)), rng.exponential(5.0, 40), np.ones(40, dtype=bool), ["a", "b"])
    ds = standardize(raw, [0, 1])
    np.testing.assert_array_equal(ds.time, raw.time)
    assert ds.scaled_time.mean() == pytest.approx(0.0, abs=1e-9)
    assert ds.scaled_time.var() == pytest.approx(1.0, abs=1e-9)


def test_standardize_constant_column_raises():
    with pytest.raises(DegenerateFeatureError):
        standardize(_column_dataset([4, 4, 4]), [0])


def test_standardize_leaves_unlisted_features(tiny_dataset):
    ds = standardize(tiny_dataset, [0])
    np.testing.assert_array_equal(ds.x[:, 1], tiny_dataset.x[:, 1])
    assert ds.standardization.feature_indices == (0,)


def test_standardize_uses_fit_rows_only(rng):
    raw = Dataset(rng.normal(size=(30, 1)), np.arange(1.0, 31), np.ones(30, dtype=bool), ["a"])
    fit = np.arange(20)
    ds = standardize(raw, [0], fit_indices=fit)
    assert ds.standardization.feature_means[0] == pytest.approx(raw.x[fit, 0].mean())
    test_point = raw.x[25]
    np.testing.assert_allclose(ds.standardization.transform_x(test_point), ds.x[25])


def test_continuous_features_skips_binary(tiny_dataset):
    assert continuous_features(tiny_dataset) == [0]


def test_split_sizes_and_disjoint():
    plan = split(10, 0.8, np.random.default_rng(1))
    assert len(plan.train_indices) == 8 and len(plan.valid_indices) == 2
    assert set(plan.train_indices).isdisjoint(plan.valid_indices)
    assert sorted(np.concatenate([plan.train_indices, plan.valid_indices])) == list(range(10))


def test_split_large_sample():
    plan = split(10_000, 0.8, np.random.default_rng(3))
    assert (len(plan.train_indices), len(plan.valid_indices)) == (8000, 2000)


def test_split_deterministic_given_seed():
    a = split(100, 0.8, np.random.default_rng(7))
    b = split(100, 0.8, np.random.default_rng(7))
    np.testing.assert_array_equal(a.train_indices, b.train_indices)
    np.testing.assert_array_equal(a.valid_indices, b.valid_indices)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
def test_split_fraction_out_of_range(fraction):
    with pytest.raises(ContractError):
        split(10, fraction, np.random.default_rng(0))


def test_split_empty_side_rejected():
    with pytest.raises(ContractError):
        split(3, 0.9, np.random.default_rng(0))


def test_split_plan_rejects_overlap():
    with pytest.raises(ContractError):
        SplitPlan(np.array([0, 1]), np.array([1, 2]), 0.5)


def test_bootstrap_singleton():
    np.testing.assert_array_equal(bootstrap_resample([0], np.random.default_rng(0)), [0])


def test_bootstrap_never_touches_validation():
    plan = split(200, 0.8, np.random.default_rng(2))
    rng = np.random.default_rng(5)
    for _ in range(20):
        sample = bootstrap_resample(plan.train_indices, rng)
        assert sample.size == plan.train_indices.size
        assert not np.isin(sample, plan.valid_indices).any()


def test_bootstrap_distinct_fraction():
    rng = np.random.default_rng(11)
    train = np.arange(1000)
    fractions = [np.unique(bootstrap_resample(train, rng)).size / 1000 for _ in range(200)]
    assert np.mean(fractions) == pytest.approx(1 - np.exp(-1), abs=0.02)


def test_bootstrap_empty_train():
    with pytest.raises(ContractError):
        bootstrap_resample([], np.random.default_rng(0))


def test_kfold_partitions_all_rows():
    folds = kfold(23, 5, np.random.default_rng(4))
    assert len(folds) == 5
    assert sorted(np.concatenate(folds)) == list(range(23))
    assert {f.size for f in folds} <= {4, 5}


def test_dataset_rejects_negative_time():
    with pytest.raises(ValidationError):
        Dataset(np.zeros((2, 1)), np.array([1.0, -1.0]), np.array([True, False]), ["a"])


def test_from_records_and_back(tiny_dataset):
    rebuilt = Dataset.from_records(tiny_dataset.records, tiny_dataset.feature_names)
    np.testing.assert_array_equal(rebuilt.x, tiny_dataset.x)
    np.testing.assert_array_equal(rebuilt.event, tiny_dataset.event)
    with pytest.raises(ValidationError):
        SurvRecord(np.zeros(1), -0.5, True)
