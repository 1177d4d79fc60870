import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import kstest

from errors import ContractError
from models import TimeGrid
from simgen import (SETTING_IDS, cumulative_hazard, draw_covariates, g_eval, generate, get_setting,
                    sample_event_time, truth_curve)


def _censoring_probability(setting, x, steps=1501):
    """E_x P(T > C) for C ~ Exp(rate) capped at the cutoff, by trapezoid integration."""
    c = np.linspace(0.0, setting.admin_cutoff, steps)
    rate = setting.censor_rate_param
    surv = np.exp(-np.stack([cumulative_hazard(setting, np.full(x.shape[0], ci), x) for ci in c], axis=1))
    density = rate * np.exp(-rate * c)
    inside = trapezoid(density * surv, c, axis=1)
    tail = np.exp(-rate * setting.admin_cutoff) * surv[:, -1]
    return float(np.mean(inside + tail))


def test_g_at_origin_is_zero():
    assert g_eval(get_setting(1), 0.0, np.zeros(3)) == pytest.approx(0.0)


def test_g_linear_setting():
    assert g_eval(get_setting(1), 0.0, np.ones(3)) == pytest.approx(1.98)


def test_g_copula_setting():
    assert g_eval(get_setting(4), 0.0, np.array([1.0, 1.0, 0.0, 0.0, 0.0])) == pytest.approx(-5.2)


def test_g_quadratic_setting():
    # b'x + 2/3 * (1 + 1 + 1 + 1 + 1)
    assert g_eval(get_setting(2), 0.0, np.ones(3)) == pytest.approx(1.98 + 10.0 / 3.0)


def test_g_time_varying_setting():
    x = np.array([1.0, 1.0, 0.0])
    a = 0.44 + 0.66 + 2.0 / 3.0 * (1.0 + 1.0)
    b = (0.2 * 2.0 + 0.5) ** 2
    assert g_eval(get_setting(3), 2.0, x) == pytest.approx(a + 2.0 * b)


@pytest.mark.parametrize("setting_id", SETTING_IDS)
def test_uncensored_hazard_is_unit_exponential(setting_id):
    setting = get_setting(setting_id)
    ds, oracle = generate(setting, 5000, np.random.default_rng(100 + setting_id), censoring=False)
    assert ds.event.all()
    transformed = oracle.cumulative_hazard(ds.time, ds.x)
    assert kstest(transformed, "expon").pvalue > 0.001


@pytest.mark.parametrize("setting_id", [1, 4])
def test_ks_statistic_within_critical_value(setting_id):
    n = 50_000
    ds, oracle = generate(get_setting(setting_id), n, np.random.default_rng(200 + setting_id), censoring=False)
    statistic = kstest(oracle.cumulative_hazard(ds.time, ds.x), "expon").statistic
    assert statistic < 1.36 / np.sqrt(n)


@pytest.mark.parametrize("setting_id", [1, 3, 4, 5])
def test_censoring_rate_matches_law(setting_id):
    setting = get_setting(setting_id)
    ds, _ = generate(setting, 50_000, np.random.default_rng(7))
    expected = _censoring_probability(setting, draw_covariates(setting, 2000, np.random.default_rng(8)))
    assert ds.censoring_fraction == pytest.approx(expected, abs=0.02)


@pytest.mark.parametrize("setting_id, tolerance", [(1, 0.02), (4, 0.02), (5, 0.08)])
def test_censoring_rate_matches_stated_rate(setting_id, tolerance):
    # Settings 3 and 5 as written censor about 0.50 and 0.57 against stated rates of 0.30 and 0.60,
    # so 3 is only checked against its law above and 5 gets a wide band.
    setting = get_setting(setting_id)
    ds, _ = generate(setting, 50_000, np.random.default_rng(7))
    assert ds.censoring_fraction == pytest.approx(setting.expected_censoring, abs=tolerance)


def test_censored_times_respect_cutoff():
    setting = get_setting(1)
    ds, _ = generate(setting, 5000, np.random.default_rng(9))
    assert ds.time.max() <= setting.admin_cutoff
    assert (~ds.event).any()


def test_generate_deterministic_given_seed():
    a, _ = generate(get_setting(2), 50, np.random.default_rng(3))
    b, _ = generate(get_setting(2), 50, np.random.default_rng(3))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.time, b.time)
    np.testing.assert_array_equal(a.event, b.event)


def test_generate_with_fixed_covariates():
    x = np.array([0.2, -0.3, 0.4])
    ds, _ = generate(get_setting(1), 30, np.random.default_rng(0), x_fixed=x)
    np.testing.assert_array_equal(ds.x, np.tile(x, (30, 1)))


def test_copula_covariates_range_and_dependence():
    x = draw_covariates(get_setting(4), 20_000, np.random.default_rng(1))
    assert x.shape == (20_000, 5)
    assert x.min() >= 0.0 and x.max() <= 2.0
    corr = np.corrcoef(x, rowvar=False)
    off_diagonal = corr[~np.eye(5, dtype=bool)]
    assert off_diagonal.min() > 0.35


@pytest.mark.parametrize("setting_id", SETTING_IDS)
def test_truth_curve_monotone(setting_id):
    setting = get_setting(setting_id)
    _, oracle = generate(setting, 1, np.random.default_rng(0))
    x = draw_covariates(setting, 1, np.random.default_rng(setting_id))[0]
    curve = truth_curve(oracle, x, setting.grid)
    assert np.all(np.diff(curve.values) <= 0)
    assert np.all((curve.values >= 0) & (curve.values <= 1))
    assert oracle.survival(0.0, x) == pytest.approx(1.0)


def test_truth_curve_rejects_grid_past_cutoff():
    setting = get_setting(1)
    _, oracle = generate(setting, 1, np.random.default_rng(0))
    with pytest.raises(ContractError):
        truth_curve(oracle, np.zeros(3), TimeGrid.regular(1.0, 40.0, 1.0))


def test_dimension_mismatch():
    with pytest.raises(ContractError):
        g_eval(get_setting(4), 0.0, np.zeros(3))


def test_unknown_setting():
    with pytest.raises(ContractError):
        get_setting(6)
