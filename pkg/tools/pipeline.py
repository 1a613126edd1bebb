# tools/pipeline.py

import glob
import logging
import os
from typing import Any, Dict, List

import anyio
import numpy as np
import pandas as pd

from schemas.config import BacktestConfig, ScreenConfig, SolveConfig, SynthConfig, parse_config
from .backtest import POLICY_KINDS, emit_report, performance_stats, run_backtest, run_grid, subperiod_stats
from .cointegration import screen_universe, screening_table, select_universe
from .errors import DataError
from .factors import build_factors
from .hjb import solve_hjb
from .marketdata import DATE_FORMAT, load_prices, survivorship_adjust, to_returns
from .model import ModelParams, assemble
from .policy import WealthPath
from .reporting import ensure_out_dir, read_json, write_frame, write_json
from .synth import simulate, to_panel, truth_document

logger = logging.getLogger(__name__)


def _jobs(inputs: Dict[str, Any]) -> int:
    return max(1, int(inputs.get("jobs") or os.getenv("STATARB_JOBS", "1")))


def _require(inputs: Dict[str, Any], *keys: str) -> None:
    for key in keys:
        if not inputs.get(key):
            raise DataError(f"Missing required field: {key}")


def _out(inputs: Dict[str, Any]):
    out = inputs.get("out")
    return ensure_out_dir(out) if out else None


# -------------------------------------------------------------------------------------------------
# 1) screen
# -------------------------------------------------------------------------------------------------
def screen_tool(inputs: dict) -> dict:
    """
    Eigenportfolio factors, cointegration screening and universe selection on a price file.
    Writes screening.csv, factors.csv and (when anything is selected) params.json.
    """
    _require(inputs, "prices")
    config = parse_config(ScreenConfig, inputs.get("config"))
    out = _out(inputs)

    panel = load_prices(inputs["prices"], benchmark=config.benchmark)
    returns = to_returns(panel, config.dt)
    stocks = returns.stocks()
    std = stocks.returns.std(axis=0, ddof=1)
    dropped = [t for t, s in zip(stocks.tickers, std) if not s > 0]
    if dropped:
        logger.warning(f"Dropping zero-variance tickers: {dropped}")
    stocks = stocks.select([t for t in stocks.tickers if t not in dropped])

    alpha_b = None
    bench = returns.benchmark_returns()
    if bench is not None and config.survivorship:
        principal = build_factors(stocks, 1).factor_returns[:, 0]
        stocks, alpha_b, _ = survivorship_adjust(stocks, principal, bench, config.dt)

    factors = build_factors(stocks, config.m)
    fits = screen_universe(stocks, factors.factor_returns, config.max_lag, jobs=_jobs(inputs))
    selection = select_universe(fits, config.d_max, config.p_threshold, (stocks.dates[0], stocks.dates[-1]))
    table = screening_table(fits, selection, config.dt)

    passing = table[table["adf_pvalue"] <= config.p_threshold]
    days = table.loc[table["selected"], "reversion_days"]
    logger.info(f"Screened {len(fits)} tickers: {len(passing)} pass p<={config.p_threshold}, "
                f"{selection.d} selected" + (f", reversion days mean {days.mean():.1f} "
                                             f"[{days.min():.1f}, {days.max():.1f}]" if len(days) else ""))

    result: Dict[str, Any] = {
        "selected": list(selection.tickers),
        "n_screened": len(fits),
        "n_passing": int(len(passing)),
        "alpha_b": alpha_b,
        "table": table.replace({np.nan: None}).to_dict(orient="records"),
        "files": [],
    }

    params = None
    if selection.d:
        # eta_1 tracks the market: the benchmark when loaded, else the principal factor
        if bench is not None:
            eta1 = float(bench.mean()) / config.dt
        else:
            eta1 = float(factors.factor_returns[:, 0].mean()) / config.dt
        params = assemble(selection, factors.factor_returns, stocks.select(selection.tickers).returns,
                          eta1, config.r, config.gamma, config.dt, config.shrinkage)
        result["params"] = params.to_dict()

    if out:
        result["files"].append(write_frame(os.path.join(out, "screening.csv"), table))
        factor_path = os.path.join(out, "factors.csv")
        factors.to_csv(factor_path)
        result["files"].append(factor_path)
        if params is not None:
            result["files"].append(write_json(os.path.join(out, "params.json"), params.to_dict()))
    return result


# -------------------------------------------------------------------------------------------------
# 2) solve
# -------------------------------------------------------------------------------------------------
def solve_tool(inputs: dict) -> dict:
    """Steady-state HJB solution for both variants of a ModelParams document."""
    _require(inputs, "params")
    config = parse_config(SolveConfig, inputs.get("config"))
    out = _out(inputs)

    doc = inputs["params"]
    if isinstance(doc, str):
        doc = read_json(doc)
    doc = dict(doc)
    if config.gamma is not None:
        doc["gamma"] = config.gamma
    params = ModelParams.from_dict(doc)

    result: Dict[str, Any] = {"d": params.d, "m": params.m, "solutions": {}, "files": []}
    for variant in config.variants:
        solution = solve_hjb(params, variant, path_horizon=config.horizon if config.paths else None,
                             path_steps=config.steps)
        result["solutions"][variant] = solution.to_dict()
        if out:
            result["files"].append(write_json(os.path.join(out, f"solution_{variant}.json"), solution.to_dict()))
    return result


# -------------------------------------------------------------------------------------------------
# 3) backtest
# -------------------------------------------------------------------------------------------------
def backtest_tool(inputs: dict) -> dict:
    _require(inputs, "prices")
    config = parse_config(BacktestConfig, inputs.get("config"))
    out = _out(inputs)
    jobs = _jobs(inputs)

    panel = load_prices(inputs["prices"], benchmark=config.benchmark)
    logger.info(f"Backtest train={config.train_len} test={config.test_len} gamma={config.gamma} "
                f"m={config.m} r={config.r} d_max={config.d_max}")

    if inputs.get("sweep"):
        train_lens, test_lens = config.grid()
        stats, reports = run_grid(panel, config, train_lens, test_lens, jobs)
        files = [write_frame(os.path.join(out, "stats.csv"), stats)] if out else []
        return {
            "stats": stats.replace({np.nan: None}).to_dict(orient="records"),
            "combos": [list(k) for k in reports],
            "files": files,
            "windows": [],
        }

    report = run_backtest(panel, config, jobs)
    files = emit_report(report, out, config.subperiods) if out else []
    stats = report.stats_frame()
    return {
        "stats": stats.replace({np.nan: None}).to_dict(orient="records"),
        "terminal_wealth": {k: p.terminal for k, p in report.wealth_paths.items()},
        "windows": report.window_log,
        "files": files,
    }


# -------------------------------------------------------------------------------------------------
# 4) simulate
# -------------------------------------------------------------------------------------------------
def simulate_tool(inputs: dict) -> dict:
    """Simulated market: prices.csv in the ingestion format plus truth.json."""
    config = parse_config(SynthConfig, inputs.get("config"))
    out = _out(inputs)
    path = simulate(config)
    panel = to_panel(path)
    truth = truth_document(path)

    result: Dict[str, Any] = {"truth": truth, "files": [], "n_dates": len(panel.dates), "tickers": list(panel.tickers)}
    if out:
        prices = os.path.join(out, "prices.csv")
        panel.to_csv(prices)
        result["files"] = [prices, write_json(os.path.join(out, "truth.json"), truth)]
    if inputs.get("inline"):
        result["prices_csv"] = panel.to_csv()
    return result


# -------------------------------------------------------------------------------------------------
# 5) report
# -------------------------------------------------------------------------------------------------
def report_tool(inputs: dict) -> dict:
    """Recomputes performance statistics from the wealth CSVs of a backtest output directory."""
    _require(inputs, "run_dir")
    run_dir = inputs["run_dir"]
    dt = float(inputs.get("dt") or 1.0 / 252)
    r = float(inputs.get("r") if inputs.get("r") is not None else 0.01)
    subperiods = int(inputs.get("subperiods") or 0)

    files = sorted(glob.glob(os.path.join(run_dir, "wealth_*.csv")))
    if not files:
        raise DataError(f"No wealth_*.csv files in {run_dir}", {"path": run_dir})

    order = {k: i for i, k in enumerate(POLICY_KINDS)}
    rows: List[Dict[str, Any]] = []
    sub_rows: List[Dict[str, Any]] = []
    for f in sorted(files, key=lambda p: (order.get(_label(p), len(order)), p)):
        label = _label(f)
        path = WealthPath.from_csv(f, label)
        rows.append({"policy": label, **performance_stats(path, dt, r).to_row()})
        if subperiods:
            for start, end, stats in subperiod_stats(path, dt, r, n_periods=subperiods):
                sub_rows.append({"policy": label, "start": start.strftime(DATE_FORMAT),
                                 "end": end.strftime(DATE_FORMAT), **stats.to_row()})

    result: Dict[str, Any] = {"stats": rows, "subperiods": sub_rows, "files": []}
    out = _out(inputs)
    if out:
        result["files"].append(write_frame(os.path.join(out, "report.csv"), pd.DataFrame(rows)))
        if sub_rows:
            result["files"].append(write_frame(os.path.join(out, "report_subperiods.csv"), pd.DataFrame(sub_rows)))
    return result


def _label(path: str) -> str:
    return os.path.basename(path)[len("wealth_"):-len(".csv")]


# -------------------------------------------------------------------------------------------------
# async wrapper for the HTTP routes
# -------------------------------------------------------------------------------------------------
async def run_tool_async(fn, inputs: dict) -> dict:
    return await anyio.to_thread.run_sync(fn, inputs)

