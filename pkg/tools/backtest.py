# tools/backtest.py

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from schemas.config import BacktestConfig, WindowSpec
from .cointegration import screen_universe, select_universe
from .errors import InsufficientDataError, NumericalError, StatArbError
from .factors import build_factors
from .hjb import VARIANTS, solve_hjb
from .marketdata import DATE_FORMAT, PricePanel, ReturnsPanel, survivorship_adjust, to_returns
from .model import assemble
from .policy import POLICY_KINDS, ControlPolicy, WealthPath, build_policies, cash_path, simulate_wealth
from .reporting import ensure_out_dir, write_frame, write_json

logger = logging.getLogger(__name__)

STAT_FIELDS = ["profit_pct", "volatility", "expected_return_pct", "sharpe", "max_drawdown"]
STATS_COLUMNS = ["train", "test", "policy"] + STAT_FIELDS
BENCHMARK_LABEL = "benchmark"
FLAT_TOL = 1e-9


# -------------------------------------------------------------------------------------------------
# 1) performance_stats
# -------------------------------------------------------------------------------------------------
@dataclass(frozen=True)
class PerformanceStats:
    profit_pct: float
    volatility: float
    expected_return_pct: float
    sharpe: Optional[float]
    max_drawdown: float
    return_pct: float
    calendar_days: int

    def to_row(self) -> Dict[str, Any]:
        return {k: getattr(self, k) for k in STAT_FIELDS}


def performance_stats(path, dt: float, r: float, dates=None) -> PerformanceStats:
    """
    Profit 100 (W_T/W_0 - 1); volatility std(dW/W)/sqrt(dt); expected return (100/dt) mean(dW/W);
    Sharpe 0.01 (Return - 100 r)/volatility with Return the profit annualized over calendar days.
    """
    if isinstance(path, WealthPath):
        wealth, dates = path.wealth, path.dates
    else:
        wealth = np.asarray(path, dtype=float)
    if wealth.size < 2:
        raise InsufficientDataError("performance_stats needs at least 2 wealth points")
    dates = pd.DatetimeIndex(dates) if dates is not None else pd.bdate_range("2000-01-03", periods=wealth.size)

    rets = wealth[1:] / wealth[:-1] - 1.0
    mean = float(rets.mean())
    flat = np.ptp(rets) <= FLAT_TOL * max(1.0, abs(mean))
    volatility = 0.0 if flat else float(rets.std(ddof=1 if rets.size > 1 else 0) / math.sqrt(dt))

    profit = 100.0 * (wealth[-1] / wealth[0] - 1.0)
    days = int((dates[-1] - dates[0]).days)
    annual = 100.0 * ((1.0 + profit / 100.0) ** (365.0 / days) - 1.0) if days > 0 else float("nan")
    sharpe = 0.01 * (annual - 100.0 * r) / volatility if volatility > 0 and math.isfinite(annual) else None

    running = np.maximum.accumulate(wealth)
    drawdown = float(np.max((running - wealth) / running))
    return PerformanceStats(
        profit_pct=float(profit),
        volatility=volatility,
        expected_return_pct=100.0 / dt * mean,
        sharpe=sharpe,
        max_drawdown=min(max(drawdown, 0.0), 1.0),
        return_pct=float(annual),
        calendar_days=days,
    )


def subperiod_stats(
    path: WealthPath,
    dt: float,
    r: float,
    boundaries: Optional[Sequence] = None,
    n_periods: Optional[int] = None,
) -> List[Tuple[pd.Timestamp, pd.Timestamp, PerformanceStats]]:
    """Stats of contiguous segments, each rebased to its own starting wealth."""
    n = len(path.wealth)
    if boundaries is not None:
        cuts = sorted({int(path.dates.searchsorted(pd.Timestamp(b))) for b in boundaries})
        cuts = [c for c in cuts if 0 < c < n - 1]
        edges = [0] + cuts + [n - 1]
    elif n_periods:
        edges = sorted({int(round(x)) for x in np.linspace(0, n - 1, n_periods + 1)})
    else:
        edges = [0, n - 1]

    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1:
            continue
        segment = path.wealth[a:b + 1] / path.wealth[a]
        dates = path.dates[a:b + 1]
        out.append((dates[0], dates[-1], performance_stats(segment, dt, r, dates)))
    return out


# -------------------------------------------------------------------------------------------------
# 2) per-window training
# -------------------------------------------------------------------------------------------------
@dataclass
class WindowPlan:
    index: int
    train: ReturnsPanel
    test_dates: pd.DatetimeIndex          # last training date + every traded date
    active: int                           # leading test periods traded by the policies
    policies: Dict[str, ControlPolicy] = field(default_factory=dict)
    z_path: Optional[np.ndarray] = None
    test_returns: Optional[np.ndarray] = None
    log: Dict[str, Any] = field(default_factory=dict)

    @property
    def traded(self) -> bool:
        return bool(self.policies)


def _non_degenerate(panel: ReturnsPanel) -> ReturnsPanel:
    std = panel.returns.std(axis=0, ddof=1) if panel.n_periods > 1 else np.zeros(len(panel.tickers))
    keep = [t for t, s in zip(panel.tickers, std) if s > 0]
    return panel.select(keep)


def _solver_log(solution) -> Dict[str, Any]:
    out = {"growth_rate": solution.growth_rate, "L_bar": solution.L_bar}
    out.update(solution.diagnostics)
    if solution.certificate is not None:
        out["verdict"] = solution.certificate.verdict
    return out


def train_window(
    index: int,
    stocks: ReturnsPanel,
    start: int,
    spec: WindowSpec,
    segment: int,
    benchmark: Optional[np.ndarray] = None,
    window_survivorship: bool = False,
) -> WindowPlan:
    """
    Screens, estimates and solves on stocks[start:start + train_len]; prepares the out-of-sample
    spread continuation over the following `segment` periods with frozen alpha, beta and weights.

    eta_1 is the benchmark's mean training return per year when a benchmark is given, else the
    principal factor's. The per-window survivorship regression runs only with window_survivorship.
    """
    train_stop = start + spec.train_len
    train = stocks.slice(start, train_stop)
    test = stocks.slice(train_stop, train_stop + segment)
    dates = train.dates[-1:].append(test.dates)
    plan = WindowPlan(index=index, train=train, test_dates=dates, active=min(spec.test_len, segment))
    plan.log = {
        "index": index,
        "train_start": train.dates[0].strftime(DATE_FORMAT),
        "train_end": train.dates[-1].strftime(DATE_FORMAT),
        "test_start": test.dates[0].strftime(DATE_FORMAT),
        "test_end": test.dates[-1].strftime(DATE_FORMAT),
        "tickers": [],
        "delta_hat": [],
        "status": "cash",
    }

    try:
        if benchmark is not None and window_survivorship:
            clean = _non_degenerate(train)
            if len(clean.tickers):
                principal = build_factors(clean, 1).factor_returns[:, 0]
                train, alpha_b, _ = survivorship_adjust(train, principal, benchmark[start:train_stop], spec.dt)
                test = test.with_returns(test.returns - alpha_b * spec.dt)
                plan.log["alpha_b"] = alpha_b

        usable = _non_degenerate(train)
        if len(usable.tickers) < spec.m:
            plan.log["reason"] = f"{len(usable.tickers)} non-degenerate stocks for m={spec.m} factors"
            return plan

        factors = build_factors(usable, spec.m)
        fits = screen_universe(usable, factors.factor_returns, spec.max_lag)
        selection = select_universe(fits, spec.d_max, spec.p_threshold, (train.dates[0], train.dates[-1]))
        plan.log["n_screened"] = len(fits)
        plan.log["tickers"] = list(selection.tickers)
        plan.log["delta_hat"] = selection.delta_hat.tolist()
        if selection.d == 0:
            plan.log["reason"] = "no cointegrated stocks"
            return plan

        if benchmark is not None:
            eta1 = float(benchmark[start:train_stop].mean()) / spec.dt
        else:
            eta1 = float(factors.factor_returns[:, 0].mean()) / spec.dt
        plan.log["eta1"] = eta1
        params = assemble(
            selection,
            factors.factor_returns,
            usable.select(selection.tickers).returns,
            eta1,
            spec.r,
            spec.gamma,
            spec.dt,
            spec.shrinkage,
        )
        solutions = {variant: solve_hjb(params, variant) for variant in VARIANTS}
        plan.log["solver"] = {v: _solver_log(s) for v, s in solutions.items()}
        plan.log["warnings"] = list(params.warnings)

        # frozen-weight factor returns and spread continuation over the test period
        test_factor = test.select(usable.tickers).returns @ factors.weights
        test_stock = test.select(selection.tickers).returns
        increments = test_stock - selection.alpha * spec.dt - test_factor @ selection.beta_ols.T
        steps = np.vstack([np.zeros((1, selection.d)), np.cumsum(increments, axis=0)[:-1]])
        plan.z_path = selection.last_z + steps
        plan.test_returns = test_stock
        plan.policies = build_policies(params, solutions)
        plan.log["status"] = "traded"
    except (NumericalError, InsufficientDataError) as e:
        logger.warning(f"window {index + 1}: {type(e).__name__}: {e}; holding cash")
        plan.policies = {}
        plan.log["status"] = "cash"
        plan.log["reason"] = f"{type(e).__name__}: {e}"
        plan.log["error_details"] = e.details
    return plan


# -------------------------------------------------------------------------------------------------
# 3) run_backtest
# -------------------------------------------------------------------------------------------------
@dataclass
class BacktestReport:
    train_len: int
    test_len: int
    wealth_paths: Dict[str, WealthPath] = field(default_factory=dict)
    stats: Dict[str, PerformanceStats] = field(default_factory=dict)
    window_log: List[Dict[str, Any]] = field(default_factory=list)
    benchmark_path: Optional[WealthPath] = None
    benchmark_stats: Optional[PerformanceStats] = None
    survivorship: Dict[str, Any] = field(default_factory=dict)
    dt: float = 1.0 / 252
    r: float = 0.01

    def stats_frame(self) -> pd.DataFrame:
        rows = []
        for kind in POLICY_KINDS:
            if kind in self.stats:
                rows.append({"train": self.train_len, "test": self.test_len, "policy": kind, **self.stats[kind].to_row()})
        if self.benchmark_stats is not None:
            rows.append({"train": self.train_len, "test": self.test_len, "policy": BENCHMARK_LABEL,
                         **self.benchmark_stats.to_row()})
        return pd.DataFrame(rows, columns=STATS_COLUMNS)


def _window_starts(n: int, spec: WindowSpec) -> List[Tuple[int, int]]:
    """(start, traded segment length) of every window; segments tile the test range contiguously."""
    starts = []
    start = 0
    while start + spec.train_len < n:
        segment = min(spec.stride, n - start - spec.train_len)
        starts.append((start, segment))
        start += spec.stride
    return starts


def _trade(plan: WindowPlan, kind: str, w0: float, r: float, dt: float) -> WealthPath:
    dates = plan.test_dates
    if not plan.traded:
        return cash_path(dates, r, dt, w0, label=kind)
    active = plan.active
    path = simulate_wealth(
        plan.policies[kind],
        plan.z_path[:active],
        plan.test_returns[:active],
        r,
        dt,
        dates=dates[:active + 1],
        w0=w0,
    )
    if active < len(dates) - 1:
        tail = cash_path(dates[active:], r, dt, path.terminal, label=kind)
        path = WealthPath.concat([path, tail], label=kind)
    return path


def run_backtest(panel: PricePanel, spec: WindowSpec, jobs: int = 1) -> BacktestReport:
    returns = to_returns(panel, spec.dt)
    stocks = returns.stocks()
    bench = returns.benchmark_returns()
    n = returns.n_periods
    if n < spec.train_len + spec.test_len:
        raise InsufficientDataError(
            f"Panel has {n} return periods, need train_len + test_len = {spec.train_len + spec.test_len}"
        )

    report = BacktestReport(train_len=spec.train_len, test_len=spec.test_len, dt=spec.dt, r=spec.r)
    window_survivorship = False
    if bench is not None and spec.survivorship == "full":
        clean = _non_degenerate(stocks)
        try:
            principal = build_factors(clean, 1).factor_returns[:, 0]
            _, alpha_b, beta_b = survivorship_adjust(clean, principal, bench, spec.dt)
            stocks = stocks.with_returns(stocks.returns - alpha_b * spec.dt)
            report.survivorship = {"mode": "full", "alpha_b": alpha_b, "beta_b": beta_b}
        except (NumericalError, InsufficientDataError) as e:
            logger.warning(f"Survivorship adjustment skipped: {e}")
            report.survivorship = {"mode": "off", "reason": str(e)}
    elif bench is not None and spec.survivorship == "window":
        window_survivorship = True
        report.survivorship = {"mode": "window"}

    windows = _window_starts(n, spec)
    total = len(windows)

    def _train(item):
        k, (start, segment) = item
        return train_window(k, stocks, start, spec, segment, bench, window_survivorship)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            plans = list(pool.map(_train, enumerate(windows)))
    else:
        plans = [_train(item) for item in enumerate(windows)]

    pieces: Dict[str, List[WealthPath]] = {kind: [] for kind in POLICY_KINDS}
    wealth = {kind: 1.0 for kind in POLICY_KINDS}
    for plan in plans:
        logger.info(f"window {plan.index + 1}/{total} train=[{plan.log['train_start']}..{plan.log['train_end']}] "
                    f"selected={len(plan.log['tickers'])} status={plan.log['status']}")
        terminal = {}
        for kind in POLICY_KINDS:
            path = _trade(plan, kind, wealth[kind], spec.r, spec.dt)
            pieces[kind].append(path)
            wealth[kind] = path.terminal
            terminal[kind] = path.terminal
        plan.log["terminal_wealth"] = terminal
        report.window_log.append(plan.log)

    for kind in POLICY_KINDS:
        if pieces[kind]:
            report.wealth_paths[kind] = WealthPath.concat(pieces[kind], label=kind)
            report.stats[kind] = performance_stats(report.wealth_paths[kind], spec.dt, spec.r)

    if bench is not None and windows:
        report.benchmark_path = benchmark_path(returns, spec.train_len)
        report.benchmark_stats = performance_stats(report.benchmark_path, spec.dt, spec.r)
    return report


def benchmark_path(returns: ReturnsPanel, train_len: int) -> WealthPath:
    """Buy and hold of the benchmark over the traded dates, W_0 = 1."""
    bench = returns.benchmark_returns()
    traded = bench[train_len:]
    dates = returns.dates[train_len - 1:]
    wealth = np.concatenate([[1.0], np.cumprod(1.0 + traded)])
    return WealthPath(
        dates=dates,
        wealth=wealth,
        weights=np.ones((traded.size, 1)),
        cash_weight=np.zeros(traded.size),
        tickers=(returns.benchmark_ticker,),
        label=BENCHMARK_LABEL,
    )


# -------------------------------------------------------------------------------------------------
# 4) run_grid
# -------------------------------------------------------------------------------------------------
def run_grid(
    panel: PricePanel,
    base: BacktestConfig,
    train_lens: Sequence[int],
    test_lens: Sequence[int],
    jobs: int = 1,
) -> Tuple[pd.DataFrame, Dict[Tuple[int, int], BacktestReport]]:
    """One backtest per (train, test) pair; stats rows concatenated in grid order."""
    frames, reports = [], {}
    for train_len in train_lens:
        for test_len in test_lens:
            try:
                spec = base.window_spec(train_len, test_len)
                report = run_backtest(panel, spec, jobs)
            except (InsufficientDataError, ValueError) as e:
                logger.warning(f"grid train={train_len} test={test_len} skipped: {e}")
                continue
            reports[(train_len, test_len)] = report
            frames.append(report.stats_frame())
    stats = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=STATS_COLUMNS)
    return stats, reports


# -------------------------------------------------------------------------------------------------
# 5) emit_report
# -------------------------------------------------------------------------------------------------
def emit_report(report: BacktestReport, out_dir: str, subperiods: int = 0) -> List[str]:
    ensure_out_dir(out_dir)
    written = [write_frame(os.path.join(out_dir, "stats.csv"), report.stats_frame())]

    for kind, path in report.wealth_paths.items():
        target = os.path.join(out_dir, f"wealth_{kind}.csv")
        try:
            path.to_csv(target)
        except OSError as e:
            raise StatArbError(f"Cannot write {target}: {e}", {"path": target})
        written.append(target)
    if report.benchmark_path is not None:
        target = os.path.join(out_dir, f"wealth_{BENCHMARK_LABEL}.csv")
        report.benchmark_path.to_csv(target)
        written.append(target)

    written.append(write_json(os.path.join(out_dir, "windows.json"), {
        "train_len": report.train_len,
        "test_len": report.test_len,
        "survivorship": report.survivorship,
        "windows": report.window_log,
    }))

    if subperiods and report.wealth_paths:
        rows = []
        for kind, path in report.wealth_paths.items():
            for start, end, stats in subperiod_stats(path, report.dt, report.r, n_periods=subperiods):
                rows.append({"policy": kind, "start": start.strftime(DATE_FORMAT),
                             "end": end.strftime(DATE_FORMAT), **stats.to_row()})
        written.append(write_frame(os.path.join(out_dir, "subperiods.csv"),
                                   pd.DataFrame(rows, columns=["policy", "start", "end"] + STAT_FIELDS)))
    logger.info(f"Report written to {out_dir} ({len(written)} files)")
    return written
