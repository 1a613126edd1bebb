import numpy as np
import pandas as pd
import pytest

from tools.errors import (
    DataError, DegenerateRegressionError, EmptyPanelError, InsufficientDataError, ParseError,
)
from tools.factors import build_factors
from tools.marketdata import PricePanel, load_prices, survivorship_adjust, to_returns


def _write(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


PRICES = """date,ticker,adj_close
2020-01-02,BBB,20.0
2020-01-02,AAA,10.0
2020-01-03,AAA,11.0
2020-01-03,BBB,19.0
2020-01-06,AAA,12.1
2020-01-06,BBB,19.0
2020-01-06,CCC,5.0
"""


def test_load_prices_pivots_sorts_and_drops_partial_history(tmp_path):
    panel = load_prices(_write(tmp_path, PRICES))

    assert panel.tickers == ("AAA", "BBB")
    assert list(panel.dates.strftime("%Y-%m-%d")) == ["2020-01-02", "2020-01-03", "2020-01-06"]
    np.testing.assert_allclose(panel.column("AAA"), [10.0, 11.0, 12.1])


def test_load_prices_missing_file_names_the_path(tmp_path):
    path = str(tmp_path / "nope.csv")
    with pytest.raises(DataError) as exc:
        load_prices(path)
    assert path in str(exc.value)


def test_load_prices_missing_column(tmp_path):
    path = _write(tmp_path, "date,ticker\n2020-01-02,AAA\n")
    with pytest.raises(ParseError) as exc:
        load_prices(path)
    assert exc.value.line == 1
    assert "Missing required field: adj_close" in str(exc.value)


def test_load_prices_reports_line_of_unparseable_row(tmp_path):
    text = "date,ticker,adj_close\n2020-01-02,AAA,10\n2020-01-03,AAA,11\n2020-13-01,AAA,12\n"
    with pytest.raises(ParseError) as exc:
        load_prices(_write(tmp_path, text))
    assert exc.value.line == 4


def test_load_prices_rejects_non_positive_price(tmp_path):
    text = "date,ticker,adj_close\n2020-01-02,AAA,10\n2020-01-03,AAA,0\n"
    with pytest.raises(DataError, match="non-positive"):
        load_prices(_write(tmp_path, text))


def test_load_prices_rejects_duplicate_rows(tmp_path):
    text = "date,ticker,adj_close\n2020-01-02,AAA,10\n2020-01-02,AAA,10\n"
    with pytest.raises(ParseError, match="duplicate"):
        load_prices(_write(tmp_path, text))


def test_load_prices_empty_inputs(tmp_path):
    with pytest.raises(EmptyPanelError):
        load_prices(_write(tmp_path, "", "empty.csv"))
    with pytest.raises(EmptyPanelError):
        load_prices(_write(tmp_path, "date,ticker,adj_close\n", "header.csv"))


def test_load_prices_unknown_benchmark(tmp_path):
    with pytest.raises(DataError, match="Benchmark"):
        load_prices(_write(tmp_path, PRICES), benchmark="SPY")


def test_long_csv_export_loads_back(tmp_path):
    panel = PricePanel(
        dates=pd.bdate_range("2021-03-01", periods=4),
        tickers=("X", "Y"),
        prices=[[1.0, 2.0], [1.5, 2.5], [1.25, 3.0], [1.75, 2.75]],
    )
    path = str(tmp_path / "long.csv")
    panel.to_csv(path)
    again = load_prices(path)

    assert again.tickers == panel.tickers
    np.testing.assert_allclose(again.prices, panel.prices, rtol=1e-12)


def test_to_returns_simple_returns():
    panel = PricePanel(dates=pd.bdate_range("2021-01-04", periods=3), tickers=("A",), prices=[[100.0], [110.0], [99.0]])
    returns = to_returns(panel, dt=1 / 252)

    assert returns.n_periods == 2
    np.testing.assert_allclose(returns.returns[:, 0], [0.1, -0.1])
    assert returns.dates[0] == panel.dates[1]


def test_to_returns_needs_two_dates():
    panel = PricePanel(dates=pd.bdate_range("2021-01-04", periods=1), tickers=("A",), prices=[[100.0]])
    with pytest.raises(InsufficientDataError):
        to_returns(panel)


def test_returns_wide_export(tmp_path):
    panel = PricePanel(dates=pd.bdate_range("2021-01-04", periods=3), tickers=("A", "B"),
                       prices=[[1.0, 2.0], [1.1, 2.2], [1.21, 2.2]])
    path = str(tmp_path / "returns.csv")
    to_returns(panel).to_csv(path)
    frame = pd.read_csv(path)

    assert list(frame.columns) == ["date", "A", "B"]
    assert len(frame) == 2


def test_survivorship_adjust_removes_alpha_b_from_stocks_only():
    rng = np.random.Generator(np.random.Philox(3))
    n, dt = 500, 1 / 252
    bench = rng.normal(0.0, 0.01, n)
    factor = 0.08 * dt + 1.2 * bench
    stocks = rng.normal(0.0, 0.02, (n, 2))
    panel = PricePanel(
        dates=pd.bdate_range("2010-01-04", periods=n + 1),
        tickers=("A", "B", "SPY"),
        prices=np.vstack([np.ones((1, 3)), np.cumprod(1.0 + np.column_stack([stocks, bench]), axis=0)]),
        benchmark_ticker="SPY",
    )
    returns = to_returns(panel, dt)

    adjusted, alpha_b, beta_b = survivorship_adjust(returns, factor, bench, dt)

    assert alpha_b == pytest.approx(0.08, abs=1e-8)
    assert beta_b == pytest.approx(1.2, abs=1e-10)
    np.testing.assert_allclose(adjusted.column("A"), returns.column("A") - 0.08 * dt, atol=1e-12)
    np.testing.assert_array_equal(adjusted.column("SPY"), returns.column("SPY"))


def _market_with_benchmark(n=500, seed=5, drift=0.5):
    rng = np.random.Generator(np.random.Philox(seed))
    dt = 1 / 252
    bench = rng.normal(0.0, 0.01, n)
    stocks = drift * dt + bench[:, None] * np.linspace(0.8, 1.2, 4) + rng.normal(0.0, 0.01, (n, 4))
    panel = PricePanel(
        dates=pd.bdate_range("2010-01-04", periods=n + 1),
        tickers=("A", "B", "C", "D", "SPY"),
        prices=np.vstack([np.ones((1, 5)), np.cumprod(1.0 + np.column_stack([stocks, bench]), axis=0)]),
        benchmark_ticker="SPY",
    )
    return to_returns(panel, dt), dt


def test_survivorship_adjust_is_idempotent():
    returns, dt = _market_with_benchmark()
    bench = returns.benchmark_returns()
    principal = build_factors(returns.stocks(), 1).factor_returns[:, 0]
    adjusted, alpha_b, _ = survivorship_adjust(returns, principal, bench, dt)
    assert alpha_b == pytest.approx(0.5, abs=0.3)

    again = build_factors(adjusted.stocks(), 1).factor_returns[:, 0]
    _, alpha_again, _ = survivorship_adjust(adjusted, again, bench, dt)
    assert abs(alpha_again) < 1e-10


def test_survivorship_adjust_without_excess_alpha_is_identity():
    returns, dt = _market_with_benchmark()
    bench = returns.benchmark_returns()

    adjusted, alpha_b, beta_b = survivorship_adjust(returns, 1.1 * bench, bench, dt)

    assert abs(alpha_b) < 1e-10
    assert beta_b == pytest.approx(1.1, abs=1e-12)
    np.testing.assert_allclose(adjusted.returns, returns.returns, rtol=0.0, atol=1e-14)


def test_survivorship_adjust_flat_benchmark():
    panel = PricePanel(dates=pd.bdate_range("2010-01-04", periods=11), tickers=("A",),
                       prices=np.linspace(1.0, 2.0, 11)[:, None])
    returns = to_returns(panel)
    with pytest.raises(DegenerateRegressionError):
        survivorship_adjust(returns, returns.column("A"), np.zeros(10), 1 / 252)
