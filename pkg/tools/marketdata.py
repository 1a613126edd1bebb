# tools/marketdata.py

import logging
import os
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import (
    DataError, DegenerateRegressionError, DimensionError, EmptyPanelError,
    InsufficientDataError, ParseError,
)

logger = logging.getLogger(__name__)

TRADING_DAYS = 252
DEFAULT_DT = 1.0 / TRADING_DAYS
REQUIRED_COLUMNS = ("date", "ticker", "adj_close")
DATE_FORMAT = "%Y-%m-%d"


def _readonly(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise DimensionError(f"Expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_index(dates) -> pd.DatetimeIndex:
    return pd.DatetimeIndex(pd.to_datetime(list(dates)))


@dataclass(frozen=True)
class PricePanel:
    dates: pd.DatetimeIndex
    tickers: Tuple[str, ...]
    prices: np.ndarray
    benchmark_ticker: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_index(self.dates))
        object.__setattr__(self, "tickers", tuple(str(t) for t in self.tickers))
        object.__setattr__(self, "prices", _readonly(self.prices, 2))

        if self.prices.shape != (len(self.dates), len(self.tickers)):
            raise DimensionError(
                f"Price matrix shape {self.prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("Duplicate tickers in panel")
        if len(self.dates) > 1 and not (np.diff(self.dates.asi8) > 0).all():
            raise DataError("Dates must be strictly increasing without duplicates")
        if not np.isfinite(self.prices).all() or (self.prices <= 0).any():
            raise DataError("All prices must be finite and strictly positive")
        if self.benchmark_ticker is not None and self.benchmark_ticker not in self.tickers:
            raise DataError(f"Benchmark {self.benchmark_ticker!r} not in panel")

    @property
    def stock_tickers(self) -> Tuple[str, ...]:
        return tuple(t for t in self.tickers if t != self.benchmark_ticker)

    def column(self, ticker: str) -> np.ndarray:
        return self.prices[:, self.tickers.index(ticker)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.array(self.prices), index=self.dates, columns=list(self.tickers))

    def to_long_frame(self) -> pd.DataFrame:
        """The long `date,ticker,adj_close` ingestion format."""
        frame = self.to_frame()
        frame.index.name = "date"
        long = frame.reset_index().melt(id_vars="date", var_name="ticker", value_name="adj_close")
        long = long.sort_values(["date", "ticker"], kind="mergesort")
        long["date"] = long["date"].dt.strftime(DATE_FORMAT)
        return long

    def to_csv(self, path: Optional[str] = None) -> Optional[str]:
        return self.to_long_frame().to_csv(path, index=False, float_format="%.12g")


@dataclass(frozen=True)
class ReturnsPanel:
    dates: pd.DatetimeIndex
    tickers: Tuple[str, ...]
    returns: np.ndarray
    dt: float = DEFAULT_DT
    benchmark_ticker: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_index(self.dates))
        object.__setattr__(self, "tickers", tuple(str(t) for t in self.tickers))
        object.__setattr__(self, "returns", _readonly(self.returns, 2))
        if not self.dt > 0:
            raise DataError(f"dt must be positive, got {self.dt}")
        if self.returns.shape != (len(self.dates), len(self.tickers)):
            raise DimensionError(
                f"Returns shape {self.returns.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if self.benchmark_ticker is not None and self.benchmark_ticker not in self.tickers:
            object.__setattr__(self, "benchmark_ticker", None)

    @property
    def n_periods(self) -> int:
        return len(self.dates)

    @property
    def stock_tickers(self) -> Tuple[str, ...]:
        return tuple(t for t in self.tickers if t != self.benchmark_ticker)

    def column(self, ticker: str) -> np.ndarray:
        return self.returns[:, self.tickers.index(ticker)]

    def select(self, tickers: Sequence[str]) -> "ReturnsPanel":
        idx = [self.tickers.index(t) for t in tickers]
        return replace(self, tickers=tuple(tickers), returns=self.returns[:, idx])

    def stocks(self) -> "ReturnsPanel":
        return self.select(self.stock_tickers)

    def benchmark_returns(self) -> Optional[np.ndarray]:
        if self.benchmark_ticker is None:
            return None
        return self.column(self.benchmark_ticker)

    def slice(self, start: int, stop: int) -> "ReturnsPanel":
        return replace(self, dates=self.dates[start:stop], returns=self.returns[start:stop])

    def with_returns(self, returns: np.ndarray) -> "ReturnsPanel":
        return replace(self, returns=returns)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.array(self.returns), index=self.dates, columns=list(self.tickers))

    def to_csv(self, path: str) -> None:
        """Wide export: first column `date`, one column per ticker."""
        frame = self.to_frame()
        frame.index = frame.index.strftime(DATE_FORMAT)
        frame.index.name = "date"
        frame.to_csv(path, float_format="%.12g")


# -------------------------------------------------------------------------------------------------
# 1) load_prices
# -------------------------------------------------------------------------------------------------
def _parser_line(message: str) -> int:
    match = re.search(r"line (\d+)", message)
    return int(match.group(1)) if match else 0


def load_prices(path: str, benchmark: Optional[str] = None) -> PricePanel:
    if not os.path.isfile(path):
        raise DataError(f"Price file not found: {path}", {"path": path})

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyPanelError(f"Price file is empty: {path}", {"path": path})
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed row in {path}: {e}", _parser_line(str(e)), {"path": path})

    for col in REQUIRED_COLUMNS:
        if col not in raw.columns:
            raise ParseError(f"Missing required field: {col}", 1, {"path": path})
    if raw.empty:
        raise EmptyPanelError(f"No price rows in {path}", {"path": path})

    raw = raw.fillna("")
    tickers = raw["ticker"].str.strip()
    dates = pd.to_datetime(raw["date"].str.strip(), format=DATE_FORMAT, errors="coerce")
    prices = pd.to_numeric(raw["adj_close"].str.strip(), errors="coerce")

    bad = dates.isna() | prices.isna() | (tickers == "") | ~np.isfinite(prices.fillna(0.0))
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(f"cannot parse row {raw.iloc[i].tolist()}", i + 2, {"path": path})

    non_positive = (prices <= 0).to_numpy()
    if non_positive.any():
        i = int(np.flatnonzero(non_positive)[0])
        raise DataError(
            f"line {i + 2}: non-positive price {prices.iloc[i]} for {tickers.iloc[i]}",
            {"path": path, "line": i + 2, "ticker": tickers.iloc[i]},
        )

    frame = pd.DataFrame({"date": dates, "ticker": tickers, "adj_close": prices})
    dup = frame.duplicated(subset=["date", "ticker"]).to_numpy()
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        raise ParseError(f"duplicate row for {tickers.iloc[i]} on {raw['date'].iloc[i]}", i + 2, {"path": path})

    wide = frame.pivot(index="date", columns="ticker", values="adj_close").sort_index()
    wide = wide.reindex(sorted(wide.columns), axis=1)
    full = wide.columns[wide.notna().all(axis=0)]
    dropped = [t for t in wide.columns if t not in full]
    if dropped:
        logger.warning(f"Dropping {len(dropped)} tickers without full history: {dropped[:10]}")
    wide = wide[full]

    if wide.shape[1] == 0:
        raise EmptyPanelError(f"No ticker in {path} has a full-length history", {"path": path})
    if benchmark is not None and benchmark not in wide.columns:
        raise DataError(f"Benchmark {benchmark!r} missing or incomplete in {path}", {"path": path})

    logger.info(f"Loaded {wide.shape[1]} tickers x {wide.shape[0]} dates from {path}")
    return PricePanel(
        dates=wide.index,
        tickers=tuple(wide.columns),
        prices=wide.to_numpy(dtype=float),
        benchmark_ticker=benchmark,
    )


# -------------------------------------------------------------------------------------------------
# 2) to_returns
# -------------------------------------------------------------------------------------------------
def to_returns(panel: PricePanel, dt: float = DEFAULT_DT) -> ReturnsPanel:
    if len(panel.dates) < 2:
        raise InsufficientDataError(f"Need at least 2 dates to form returns, got {len(panel.dates)}")
    prices = panel.prices
    returns = prices[1:] / prices[:-1] - 1.0
    return ReturnsPanel(
        dates=panel.dates[1:],
        tickers=panel.tickers,
        returns=returns,
        dt=dt,
        benchmark_ticker=panel.benchmark_ticker,
    )


# -------------------------------------------------------------------------------------------------
# 3) survivorship_adjust
# -------------------------------------------------------------------------------------------------
def survivorship_adjust(
    returns: ReturnsPanel,
    principal_factor_returns: np.ndarray,
    benchmark_returns: np.ndarray,
    dt: float,
) -> Tuple[ReturnsPanel, float, float]:
    """
    Regresses the principal eigenportfolio return on [dt, benchmark return] and removes the
    drift alpha_b (per year) from every stock return. The benchmark column, if any, is untouched.
    """
    factor = np.asarray(principal_factor_returns, dtype=float)
    bench = np.asarray(benchmark_returns, dtype=float)
    n = returns.n_periods
    if factor.shape != (n,) or bench.shape != (n,):
        raise DimensionError(
            f"Series lengths {factor.shape}, {bench.shape} do not match {n} return periods"
        )
    if n < 3 or np.ptp(bench) == 0.0:
        raise DegenerateRegressionError("Benchmark returns have zero variance; cannot estimate alpha_b")

    design = np.column_stack([np.full(n, dt), bench])
    coef, *_ = np.linalg.lstsq(design, factor, rcond=None)
    alpha_b, beta_b = float(coef[0]), float(coef[1])

    adjusted = np.array(returns.returns)
    stock_cols = [i for i, t in enumerate(returns.tickers) if t != returns.benchmark_ticker]
    adjusted[:, stock_cols] -= alpha_b * dt
    logger.info(f"Survivorship adjustment: alpha_b={alpha_b:.6g}/yr, beta_b={beta_b:.4f}")
    return returns.with_returns(adjusted), alpha_b, beta_b
