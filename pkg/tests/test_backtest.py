import json
import os
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from schemas.config import BacktestConfig, WindowSpec
from tools.backtest import (
    STATS_COLUMNS, _window_starts, emit_report, performance_stats, run_backtest, run_grid, subperiod_stats,
)
from tools.errors import ConvergenceError, InsufficientDataError
from tools.marketdata import to_returns
from tools.pipeline import report_tool
from tools.policy import POLICY_KINDS, WealthPath, cash_path
from tools.synth import planted_config, simulate, to_panel

DT = 1 / 252


def _panel(n_steps=300, seed=0, benchmark=None):
    config = planted_config(d_universe=8, n_planted=3, m=2, n_steps=n_steps, seed=seed, benchmark=benchmark)
    return to_panel(simulate(config))


def _spec(**overrides):
    fields = dict(train_len=120, test_len=20, m=2, d_max=3, gamma=-70.0)
    fields.update(overrides)
    return WindowSpec(**fields)


def test_stats_of_a_cash_path():
    dates = pd.bdate_range("2020-01-01", periods=253)
    stats = performance_stats(cash_path(dates, 0.01, DT), DT, 0.01)

    assert stats.profit_pct == pytest.approx(100.0 * ((1 + 0.01 / 252) ** 252 - 1.0))
    assert stats.volatility == 0.0
    assert stats.sharpe is None
    assert stats.max_drawdown == 0.0
    assert stats.expected_return_pct == pytest.approx(1.0)


def test_stats_of_a_known_path():
    wealth = np.array([1.0, 1.1, 0.99, 1.2])
    stats = performance_stats(wealth, DT, 0.01)
    rets = wealth[1:] / wealth[:-1] - 1.0

    assert stats.profit_pct == pytest.approx(20.0)
    assert stats.max_drawdown == pytest.approx(0.1)
    assert stats.expected_return_pct == pytest.approx(100.0 / DT * rets.mean())
    assert stats.volatility == pytest.approx(rets.std(ddof=1) / np.sqrt(DT))
    assert stats.sharpe is not None


def test_subperiods_rebase_and_multiply_back():
    dates = pd.bdate_range("2020-01-01", periods=11)
    wealth = np.cumprod(np.r_[1.0, np.linspace(0.99, 1.02, 10)])
    path = WealthPath(dates=dates, wealth=wealth, weights=np.zeros((10, 0)), cash_weight=np.ones(10))

    pieces = subperiod_stats(path, DT, 0.01, n_periods=2)
    assert len(pieces) == 2
    assert pieces[0][1] == pieces[1][0]
    total = np.prod([1.0 + s.profit_pct / 100.0 for _, _, s in pieces])
    assert total == pytest.approx(wealth[-1] / wealth[0])

    by_date = subperiod_stats(path, DT, 0.01, boundaries=[dates[3]])
    assert [p[1] for p in by_date] == [dates[3], dates[10]]


def test_windows_tile_the_test_range():
    spec = _spec(train_len=220, test_len=15)
    assert _window_starts(250, spec) == [(0, 15), (15, 15)]
    assert _window_starts(251, spec) == [(0, 15), (15, 15), (30, 1)]
    assert _window_starts(220, spec) == []


def test_backtest_on_planted_market():
    panel = _panel()
    spec = _spec()
    report = run_backtest(panel, spec)

    n = len(panel.dates) - 1
    assert set(report.wealth_paths) == set(POLICY_KINDS)
    for kind, path in report.wealth_paths.items():
        assert path.wealth[0] == 1.0
        assert len(path.wealth) == n - spec.train_len + 1
        assert path.dates[0] == panel.dates[spec.train_len]
        assert np.isfinite(path.wealth).all()
    assert len(report.window_log) == 9
    traded = [w for w in report.window_log if w["status"] == "traded"]
    assert traded
    assert all(w["tickers"] for w in traded)

    frame = report.stats_frame()
    assert list(frame.columns) == STATS_COLUMNS
    assert list(frame["policy"]) == list(POLICY_KINDS)


def test_window_chaining_carries_wealth():
    report = run_backtest(_panel(), _spec())
    for kind in POLICY_KINDS:
        terminals = [w["terminal_wealth"][kind] for w in report.window_log]
        assert terminals[-1] == pytest.approx(report.wealth_paths[kind].terminal)


@patch("tools.backtest.solve_hjb", side_effect=ConvergenceError("solver blew up", 1.0))
def test_solver_failure_holds_cash(mock_solve):
    panel = _panel()
    spec = _spec()
    report = run_backtest(panel, spec)

    n_traded = len(panel.dates) - 1 - spec.train_len
    for path in report.wealth_paths.values():
        assert path.terminal == pytest.approx((1.0 + spec.r * DT) ** n_traded, rel=1e-12)
    assert all(w["status"] == "cash" for w in report.window_log)
    assert any("ConvergenceError" in w.get("reason", "") for w in report.window_log)


def test_panel_too_short():
    with pytest.raises(InsufficientDataError):
        run_backtest(_panel(n_steps=100), _spec())


@patch("tools.backtest.solve_hjb", side_effect=ConvergenceError("skip", 1.0))
def test_benchmark_row_and_report_files(mock_solve, tmp_path):
    panel = _panel(benchmark="SPY")
    report = run_backtest(panel, _spec())

    assert "SPY" not in report.wealth_paths["myopic_neutral"].tickers
    assert report.survivorship["mode"] == "full"
    frame = report.stats_frame()
    assert list(frame["policy"]) == list(POLICY_KINDS) + ["benchmark"]
    bench = report.benchmark_path
    spy = panel.column("SPY")
    assert bench.terminal == pytest.approx(spy[-1] / spy[_spec().train_len])

    out = str(tmp_path / "run")
    files = emit_report(report, out, subperiods=3)
    names = sorted(os.path.basename(f) for f in files)
    assert names == sorted(
        ["stats.csv", "windows.json", "subperiods.csv", "wealth_benchmark.csv"]
        + [f"wealth_{k}.csv" for k in POLICY_KINDS]
    )
    with open(os.path.join(out, "windows.json")) as f:
        assert len(json.load(f)["windows"]) == len(report.window_log)

    recomputed = report_tool({"run_dir": out, "dt": DT, "r": 0.01})
    by_policy = {row["policy"]: row for row in recomputed["stats"]}
    for kind in POLICY_KINDS:
        assert by_policy[kind]["profit_pct"] == pytest.approx(report.stats[kind].profit_pct, rel=1e-9)
        assert by_policy[kind]["volatility"] == 0.0


@patch("tools.backtest.solve_hjb", side_effect=ConvergenceError("skip", 1.0))
def test_grid_sweep_rows(mock_solve):
    base = BacktestConfig(m=2, d_max=3)
    stats, reports = run_grid(_panel(), base, train_lens=[100, 120], test_lens=[10, 20])

    assert sorted(reports) == [(100, 10), (100, 20), (120, 10), (120, 20)]
    assert len(stats) == 4 * len(POLICY_KINDS)
    assert list(stats.columns) == STATS_COLUMNS
    assert set(stats["train"]) == {100, 120}
    assert (reports[(100, 20)].train_len, reports[(100, 20)].test_len) == (100, 20)


def test_parallel_training_matches_serial():
    panel = _panel(n_steps=220)
    serial = run_backtest(panel, _spec())
    parallel = run_backtest(panel, _spec(), jobs=3)

    for kind in POLICY_KINDS:
        np.testing.assert_array_equal(serial.wealth_paths[kind].wealth, parallel.wealth_paths[kind].wealth)


@pytest.mark.slow
def test_optimal_policy_beats_cash_on_planted_markets():
    spec = _spec(train_len=220, test_len=15, m=2, gamma=-70.0)
    terminals, cash = [], None
    for seed in range(20):
        config = planted_config(d_universe=30, n_planted=5, m=2, n_steps=400, seed=seed)
        report = run_backtest(to_panel(simulate(config)), spec)
        path = report.wealth_paths["optimal_unconstrained"]
        terminals.append(path.terminal)
        cash = cash_path(path.dates, spec.r, spec.dt).terminal

    assert np.median(terminals) > cash


def test_eta1_is_the_benchmark_training_mean():
    panel = _panel(benchmark="SPY")
    spec = _spec()
    report = run_backtest(panel, spec)
    returns = to_returns(panel, DT)
    bench = returns.benchmark_returns()

    traded = 0
    for log, (start, _) in zip(report.window_log, _window_starts(returns.n_periods, spec)):
        if log["status"] != "traded":
            continue
        traded += 1
        assert log["eta1"] == pytest.approx(bench[start:start + spec.train_len].mean() / DT, rel=1e-12)
    assert traded


def test_identical_runs_write_identical_reports(tmp_path):
    dirs = []
    for name in ("first", "second"):
        out = str(tmp_path / name)
        emit_report(run_backtest(_panel(benchmark="SPY"), _spec()), out, subperiods=2)
        dirs.append(out)

    names = sorted(os.listdir(dirs[0]))
    assert names == sorted(os.listdir(dirs[1]))
    for name in names:
        with open(os.path.join(dirs[0], name), "rb") as a, open(os.path.join(dirs[1], name), "rb") as b:
            assert a.read() == b.read(), name


def test_stats_file_matches_statistics_of_written_wealth(tmp_path):
    spec = _spec()
    report = run_backtest(_panel(), spec)
    out = str(tmp_path / "run")
    emit_report(report, out)

    rows = pd.read_csv(os.path.join(out, "stats.csv")).set_index("policy")
    for kind in POLICY_KINDS:
        path = WealthPath.from_csv(os.path.join(out, f"wealth_{kind}.csv"), kind)
        stats = performance_stats(path, spec.dt, spec.r).to_row()
        for name, value in stats.items():
            written = rows.loc[kind, name]
            if value is None:
                assert pd.isna(written)
            else:
                assert written == pytest.approx(value, rel=1e-9, abs=1e-12), (kind, name)


@pytest.mark.slow
def test_neutral_wealth_uncorrelated_with_market_factor():
    config = planted_config(d_universe=10, n_planted=4, m=2, n_steps=2240, seed=7)
    path = simulate(config)
    spec = _spec(train_len=220, test_len=15)
    report = run_backtest(to_panel(path), spec)
    factor = path.factor_returns()[spec.train_len:, 0]

    for kind in ("optimal_neutral", "myopic_neutral"):
        wealth = report.wealth_paths[kind].wealth
        rets = wealth[1:] / wealth[:-1] - 1.0
        assert rets.size == factor.size >= 2000
        assert abs(np.corrcoef(rets, factor)[0, 1]) < 0.3
