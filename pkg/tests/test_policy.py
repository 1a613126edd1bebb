import numpy as np
import pandas as pd
import pytest

from tools.errors import BankruptcyError, ConfigError, DimensionError
from tools.hjb import solve_hjb
from tools.policy import (
    POLICY_KINDS, ControlPolicy, WealthPath, build_policies, cash_path, control, simulate_model_wealth,
    simulate_wealth, stationary_log_growth, wealth_recursion,
)
from tools.synth import rng_for

DT = 1 / 252


def _solutions(params):
    return {v: solve_hjb(params, v) for v in ("unconstrained", "constrained")}


def test_neutral_policies_have_zero_factor_exposure(make_params):
    for seed in range(20):
        params = make_params(seed, d=2 + seed % 4, delta_range=(10.0, 30.0))
        policies = build_policies(params, _solutions(params))
        rng = rng_for(500 + seed)
        for _ in range(10):
            z = rng.normal(0.0, 0.05, params.d)
            for kind in ("optimal_neutral", "myopic_neutral"):
                pi = control(policies[kind], z)
                scale = max(1.0, float(np.abs(pi).max()))
                assert np.abs(params.beta.T @ pi).max() < 1e-10 * scale


def test_myopic_control_formula(make_params):
    params = make_params(2, d=4, m=2, gamma=-10.0)
    policy = ControlPolicy("myopic", "unconstrained", params)
    z = np.array([0.01, -0.02, 0.0, 0.03])

    expected = params.sigma1_inv @ (params.mu - params.delta @ z) / (1.0 - params.gamma)
    np.testing.assert_allclose(control(policy, z), expected, rtol=1e-10, atol=1e-12)


def test_optimal_control_formula(make_params):
    params = make_params(3, d=3, m=1, gamma=-20.0, delta_range=(10.0, 30.0))
    solution = solve_hjb(params, "unconstrained")
    policy = ControlPolicy("optimal", "unconstrained", params, solution)
    z = np.array([0.02, -0.01, 0.005])

    feedback = params.mu + params.sigma2 @ solution.b_bar + (-params.delta + 2.0 * params.sigma2 @ solution.C_bar) @ z
    np.testing.assert_allclose(control(policy, z), params.sigma1_inv @ feedback / (1.0 - params.gamma),
                               rtol=1e-10, atol=1e-12)


def test_control_is_vectorized_over_rows(make_params):
    params = make_params(4, d=3, m=1)
    policy = ControlPolicy("myopic", "neutral", params)
    z = rng_for(1).normal(0.0, 0.05, (7, 3))

    batch = control(policy, z)
    assert batch.shape == (7, 3)
    np.testing.assert_allclose(batch[3], control(policy, z[3]))


def test_policy_construction_errors(make_params):
    params = make_params(5, d=3, m=1, delta_range=(10.0, 30.0))
    with pytest.raises(ValueError, match="HJB solution"):
        ControlPolicy("optimal", "unconstrained", params)
    with pytest.raises(ValueError, match="constrained solution"):
        ControlPolicy("optimal", "neutral", params, solve_hjb(params, "unconstrained"))
    with pytest.raises(DimensionError):
        control(ControlPolicy("myopic", "unconstrained", params), np.zeros(2))


def test_build_policies_covers_every_kind(make_params):
    params = make_params(6, d=3, m=1, delta_range=(10.0, 30.0))
    policies = build_policies(params, _solutions(params))
    assert tuple(policies) == POLICY_KINDS
    assert all(policies[k].kind == k for k in POLICY_KINDS)


def test_zero_weights_compound_at_the_risk_free_rate():
    n = 252
    dates = pd.bdate_range("2020-01-01", periods=n + 1)
    wealth = wealth_recursion(np.zeros((n, 3)), rng_for(0).normal(0.0, 0.02, (n, 3)), 0.01, DT, dates)

    assert wealth[-1] == pytest.approx((1.0 + 0.01 / 252) ** 252, abs=1e-12)
    np.testing.assert_allclose(cash_path(dates, 0.01, DT).wealth, wealth, rtol=1e-12)


def test_bankruptcy_reports_the_date():
    dates = pd.bdate_range("2020-01-01", periods=3)
    with pytest.raises(BankruptcyError) as exc:
        wealth_recursion(np.array([[10.0], [10.0]]), np.array([[0.01], [-0.2]]), 0.0, DT, dates)
    assert exc.value.date == dates[2].strftime("%Y-%m-%d")


def test_simulate_wealth_alignment(make_params):
    params = make_params(8, d=2, m=1)
    policy = ControlPolicy("myopic", "unconstrained", params)
    with pytest.raises(DimensionError):
        simulate_wealth(policy, np.zeros((5, 2)), np.zeros((4, 2)), 0.01, DT)

    path = simulate_wealth(policy, np.zeros((5, 2)), np.zeros((5, 2)), 0.01, DT)
    assert path.n_periods == 5
    assert path.weights.shape == (5, 2)
    np.testing.assert_allclose(path.cash_weight, 1.0 - path.weights.sum(axis=1))


def test_model_market_wealth_is_reproducible(small_market):
    policy = ControlPolicy("myopic", "unconstrained", small_market)
    first = simulate_model_wealth(policy, small_market, n_steps=252, dt=DT, seed=4)
    again = simulate_wealth(policy, np.zeros((252, 3)), small_market, small_market.r, DT)
    repeat = simulate_model_wealth(policy, small_market, n_steps=252, dt=DT, seed=4)

    np.testing.assert_array_equal(first.wealth, repeat.wealth)
    assert again.n_periods == 252
    assert first.tickers == small_market.tickers


def test_model_market_wealth_threads_seed_and_checks_rate(small_market):
    policy = ControlPolicy("myopic", "unconstrained", small_market)
    start = np.tile(small_market.theta, (252, 1))

    seeded = simulate_wealth(policy, start, small_market, small_market.r, DT, seed=4)
    direct = simulate_model_wealth(policy, small_market, n_steps=252, dt=DT, seed=4)
    other = simulate_wealth(policy, start, small_market, small_market.r, DT, seed=5)

    np.testing.assert_array_equal(seeded.wealth, direct.wealth)
    assert not np.array_equal(seeded.wealth, other.wealth)
    with pytest.raises(ConfigError):
        simulate_wealth(policy, start, small_market, small_market.r + 0.02, DT)


def test_stationary_log_growth_matches_sampled_spreads(small_market):
    p = small_market
    policy = ControlPolicy("myopic", "unconstrained", p)
    delta = p.delta_vector
    # stationary covariance of a diagonal OU vector
    V = p.sigma3 / (delta[:, None] + delta[None, :])
    z = rng_for(8).multivariate_normal(p.theta, V, size=200_000)

    pi = control(policy, z)
    excess = p.mu - z @ p.delta.T
    sampled = p.r + np.mean((pi * excess).sum(axis=1) - 0.5 * np.einsum("ti,ij,tj->t", pi, p.sigma1, pi))

    assert stationary_log_growth(policy) == pytest.approx(sampled, rel=2e-2)


def test_wealth_paths_chain_and_survive_csv(tmp_path):
    d1 = pd.bdate_range("2020-01-01", periods=3)
    first = WealthPath(dates=d1, wealth=np.array([1.0, 1.01, 1.02]), weights=np.array([[0.5], [0.25]]),
                       cash_weight=np.array([0.5, 0.75]), tickers=("A",))
    d2 = pd.bdate_range(d1[-1], periods=3)
    second = WealthPath(dates=d2, wealth=np.array([1.02, 1.0, 1.05]), weights=np.array([[0.1, 0.2], [0.3, 0.4]]),
                        cash_weight=np.array([0.7, 0.3]), tickers=("B", "A"))

    chained = WealthPath.concat([first, second], label="optimal_neutral")
    assert chained.tickers == ("A", "B")
    assert chained.n_periods == 4
    np.testing.assert_allclose(chained.weights, [[0.5, 0.0], [0.25, 0.0], [0.2, 0.1], [0.4, 0.3]])

    path = str(tmp_path / "wealth.csv")
    chained.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["date", "wealth", "cash_weight", "pi_A", "pi_B"]
    assert np.isnan(frame.loc[0, "pi_A"])

    loaded = WealthPath.from_csv(path, "optimal_neutral")
    np.testing.assert_allclose(loaded.wealth, chained.wealth)
    np.testing.assert_allclose(loaded.weights, chained.weights)
