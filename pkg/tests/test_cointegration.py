import numpy as np
import pytest
from scipy.signal import lfilter

from tools.cointegration import (
    CointegrationFit, adf_test, estimate_ou, fit_factor_regression, schwert_max_lag, screen_universe,
    screening_table, select_universe,
)
from tools.errors import CollinearityError, DegenerateSeriesError, InsufficientDataError
from tools.factors import build_factors
from tools.marketdata import to_returns
from tools.synth import planted_config, rng_for, simulate, to_panel

DT = 1 / 252


def _ou(seed, delta, n, theta=0.0, sigma=0.3, dt=DT):
    """Exact discretization of an OU process started at theta."""
    a = np.exp(-delta * dt)
    scale = sigma * np.sqrt((1.0 - a * a) / (2.0 * delta))
    noise = rng_for(seed).standard_normal(n) * scale
    return theta + lfilter([1.0], [1.0, -a], noise)


def test_factor_regression_recovers_loadings_and_builds_spread():
    rng = rng_for(1)
    n = 1000
    factors = rng.normal(0.0, 0.01, (n, 2))
    y = 0.05 * DT + factors @ np.array([1.2, -0.3]) + rng.normal(0.0, 1e-4, n)

    reg = fit_factor_regression(y, factors, DT)

    np.testing.assert_allclose(reg.beta_row, [1.2, -0.3], atol=1e-2)
    assert reg.z_series.shape == (n + 1,)
    assert reg.z_series[0] == 0.0
    np.testing.assert_allclose(np.diff(reg.z_series), reg.residuals, atol=1e-15)
    assert abs(reg.z_series[-1]) < 1e-10


def test_factor_regression_residuals_orthogonal_to_design():
    rng = rng_for(4)
    n = 2000
    factors = rng.normal(0.0, 0.01, (n, 3))
    y = 0.1 * DT + factors @ np.array([0.8, 0.2, -0.5]) + rng.normal(0.0, 0.02, n)

    reg = fit_factor_regression(y, factors, DT)

    assert abs(reg.residuals.sum()) < 1e-10
    np.testing.assert_allclose(factors.T @ reg.residuals, 0.0, atol=1e-10)


def test_factor_regression_collinear_factors():
    rng = rng_for(2)
    f = rng.normal(0.0, 0.01, 100)
    with pytest.raises(CollinearityError):
        fit_factor_regression(rng.normal(0.0, 0.01, 100), np.column_stack([f, f]), DT)


def test_factor_regression_too_few_observations():
    with pytest.raises(InsufficientDataError):
        fit_factor_regression(np.ones(3), np.ones((3, 2)), DT)


def test_schwert_rule():
    assert schwert_max_lag(100) == 12
    assert schwert_max_lag(2000) == 25


@pytest.mark.slow
def test_adf_rarely_rejects_random_walk():
    trials = 500
    rejections = sum(adf_test(np.cumsum(rng_for(seed).standard_normal(2000))).pvalue <= 0.01 for seed in range(trials))
    assert rejections < 0.03 * trials


@pytest.mark.slow
def test_adf_rejects_stationary_ar1():
    trials, rejections = 500, 0
    for seed in range(trials):
        z = lfilter([1.0], [1.0, -0.5], rng_for(1000 + seed).standard_normal(2000))
        rejections += adf_test(z).pvalue <= 0.01
    assert rejections >= 0.95 * trials


def test_adf_degenerate_inputs():
    with pytest.raises(DegenerateSeriesError):
        adf_test(np.ones(100))
    with pytest.raises(InsufficientDataError):
        adf_test(np.arange(5.0), max_lag=2)


def test_adf_pure_drift_is_not_stationary():
    result = adf_test(np.arange(200.0) * 0.01)
    assert result.stat == 0.0
    assert result.pvalue > 0.5


@pytest.mark.slow
def test_ou_estimator_recovers_reversion_speed():
    n, hits = 100_000, 0
    for seed in range(100):
        est = estimate_ou(_ou(seed, delta=10.0, n=n, theta=0.2), DT)
        hits += abs(est.delta_hat - 10.0) / 10.0 < 0.10
        # std of the sample mean is about sigma / (delta sqrt(T))
        assert abs(est.theta_hat - 0.2) < 4.5 * 0.3 / (10.0 * np.sqrt(n * DT))
    assert hits >= 95


def test_ou_estimate_under_affine_maps():
    z = _ou(7, delta=20.0, n=5000, theta=0.1)
    base = estimate_ou(z, DT)

    shifted = estimate_ou(z + 3.0, DT)
    assert shifted.delta_hat == pytest.approx(base.delta_hat, rel=1e-9)
    assert shifted.theta_hat == pytest.approx(base.theta_hat + 3.0, rel=1e-12)

    scaled = estimate_ou(-2.5 * z, DT)
    assert scaled.delta_hat == pytest.approx(base.delta_hat, rel=1e-9)
    assert scaled.theta_hat == pytest.approx(-2.5 * base.theta_hat, rel=1e-12)


def test_ou_negative_autocorrelation_not_tradeable():
    est = estimate_ou(np.tile([1.0, -1.0], 50), DT)
    assert est.delta_hat is None
    assert not est.tradeable


def _fit(ticker, pvalue, delta, ou_defined=True):
    return CointegrationFit(
        ticker=ticker, alpha=0.0, beta_row=np.zeros(1), z_series=np.zeros(3), adf_stat=-5.0,
        adf_pvalue=pvalue, adf_lag=0, theta_hat=0.0, delta_hat=delta, residual_variance=1.0,
        ou_defined=ou_defined,
    )


def test_select_universe_orders_by_reversion_speed_and_caps():
    fits = [
        _fit("A", 0.001, 20.0),
        _fit("B", 0.001, 50.0),
        _fit("C", 0.05, 90.0),      # fails the p-value gate
        _fit("D", 0.001, 50.0),
        _fit("E", 0.001, 0.0, ou_defined=False),
        _fit("F", 0.001, 30.0),
    ]
    selection = select_universe(fits, d_max=3, p_threshold=0.01)

    assert selection.tickers == ("B", "D", "F")
    np.testing.assert_array_equal(selection.delta_hat, [50.0, 50.0, 30.0])


def test_select_universe_can_be_empty():
    selection = select_universe([_fit("A", 0.5, 10.0)], d_max=5, p_threshold=0.01)
    assert selection.d == 0
    assert selection.tickers == ()


def test_screening_planted_universe_selects_planted_stocks():
    config = planted_config(d_universe=10, n_planted=3, m=2, n_steps=3000, seed=3, planted_delta=(5.0, 15.0))
    returns = to_returns(to_panel(simulate(config)), DT)
    factors = build_factors(returns, 2)

    fits = screen_universe(returns, factors.factor_returns)
    selection = select_universe(fits, d_max=3, p_threshold=0.01)

    assert set(selection.tickers) == {"P01", "P02", "P03"}

    table = screening_table(fits, selection, DT)
    assert list(table.columns[-4:]) == ["delta_hat", "reversion_days", "tradeable", "selected"]
    assert table["selected"].sum() == 3
    chosen = table[table["selected"]]
    np.testing.assert_allclose(chosen["reversion_days"], 252.0 / chosen["delta_hat"])


def test_screen_universe_parallel_matches_serial():
    config = planted_config(d_universe=6, n_planted=2, m=1, n_steps=600, seed=5)
    returns = to_returns(to_panel(simulate(config)), DT)
    factors = build_factors(returns, 1)

    serial = screen_universe(returns, factors.factor_returns, jobs=1)
    parallel = screen_universe(returns, factors.factor_returns, jobs=3)

    assert [f.ticker for f in serial] == [f.ticker for f in parallel]
    np.testing.assert_array_equal([f.delta_hat for f in serial], [f.delta_hat for f in parallel])
