import numpy as np
import pytest

from tools.marketdata import PricePanel, load_prices, to_returns
from tools.pipeline import screen_tool
from tools.synth import planted_config, simulate, to_panel

DT = 1 / 252


def _drifting_benchmark_prices(tmp_path, drift=0.30):
    config = planted_config(d_universe=12, n_planted=4, m=2, n_steps=1000, seed=2, benchmark="SPY")
    panel = to_panel(simulate(config))
    prices = np.array(panel.prices)
    years = np.arange(len(panel.dates)) * DT
    prices[:, panel.tickers.index("SPY")] *= np.exp(drift * years)
    path = str(tmp_path / "prices.csv")
    PricePanel(dates=panel.dates, tickers=panel.tickers, prices=prices, benchmark_ticker="SPY").to_csv(path)
    return path


def test_screen_takes_eta1_from_the_benchmark(tmp_path):
    path = _drifting_benchmark_prices(tmp_path)

    result = screen_tool({"prices": path, "config": {"m": 2, "d_max": 4, "benchmark": "SPY"}})

    bench = to_returns(load_prices(path, benchmark="SPY"), DT).benchmark_returns()
    assert result["selected"]
    assert "SPY" not in result["selected"]
    assert abs(result["params"]["eta"][0] - bench.mean() / DT) < 1e-6
    assert result["params"]["eta"][1] == pytest.approx(0.01)


def test_screen_reports_cross_attenuation(tmp_path):
    path = _drifting_benchmark_prices(tmp_path)

    shrunk = screen_tool({"prices": path, "config": {"m": 2, "d_max": 4, "benchmark": "SPY"}})
    raw = screen_tool({"prices": path, "config": {
        "m": 2, "d_max": 4, "benchmark": "SPY", "shrinkage": {"attenuate_cross": False},
    }})

    assert any(w.startswith("cross covariance attenuated") for w in shrunk["params"]["warnings"])
    assert not any(w.startswith("cross covariance attenuated") for w in raw["params"]["warnings"])
