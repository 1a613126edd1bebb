# tools/cointegration.py

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from statsmodels.tsa.adfvalues import mackinnonp
from statsmodels.tsa.stattools import adfuller

from .errors import (
    CollinearityError, DegenerateSeriesError, DimensionError, InsufficientDataError, NumericalError,
)
from .marketdata import ReturnsPanel

logger = logging.getLogger(__name__)

# relative spread of first differences below which a series is treated as a pure drift
DRIFT_TOL = 1e-12


@dataclass(frozen=True)
class FactorRegression:
    alpha: float
    beta_row: np.ndarray
    z_series: np.ndarray
    residuals: np.ndarray
    beta_stderr: np.ndarray
    residual_variance: float


@dataclass(frozen=True)
class AdfResult:
    stat: float
    pvalue: float
    chosen_lag: int


@dataclass(frozen=True)
class OUEstimate:
    theta_hat: float
    delta_hat: Optional[float]
    ratio: float

    @property
    def tradeable(self) -> bool:
        return self.delta_hat is not None and math.isfinite(self.delta_hat) and self.delta_hat > 0


@dataclass(frozen=True)
class CointegrationFit:
    ticker: str
    alpha: float
    beta_row: np.ndarray
    z_series: np.ndarray
    adf_stat: float
    adf_pvalue: float
    adf_lag: int
    theta_hat: float
    delta_hat: float
    residual_variance: float
    ou_defined: bool = True

    @property
    def tradeable(self) -> bool:
        return self.ou_defined and math.isfinite(self.delta_hat) and self.delta_hat > 0

    def reversion_days(self, dt: float) -> Optional[float]:
        if not self.tradeable:
            return None
        return (1.0 / dt) / self.delta_hat


@dataclass(frozen=True)
class UniverseSelection:
    tickers: Tuple[str, ...]
    fits: Tuple[CointegrationFit, ...]
    training_window: Optional[Tuple[pd.Timestamp, pd.Timestamp]] = None

    @property
    def d(self) -> int:
        return len(self.tickers)

    @property
    def alpha(self) -> np.ndarray:
        return np.array([f.alpha for f in self.fits])

    @property
    def beta_ols(self) -> np.ndarray:
        return np.vstack([f.beta_row for f in self.fits]) if self.fits else np.zeros((0, 0))

    @property
    def theta_hat(self) -> np.ndarray:
        return np.array([f.theta_hat for f in self.fits])

    @property
    def delta_hat(self) -> np.ndarray:
        return np.array([f.delta_hat for f in self.fits])

    @property
    def last_z(self) -> np.ndarray:
        return np.array([f.z_series[-1] for f in self.fits])


# -------------------------------------------------------------------------------------------------
# 1) fit_factor_regression
# -------------------------------------------------------------------------------------------------
def fit_factor_regression(stock_returns, factor_returns, dt: float) -> FactorRegression:
    """
    OLS of per-period stock returns on [dt, factor returns]; the coefficient on the dt column
    is alpha in per-year units. z_series[k] is the sum of the first k residuals, z_series[0] = 0.
    """
    y = np.asarray(stock_returns, dtype=float)
    factors = np.asarray(factor_returns, dtype=float)
    if factors.ndim == 1:
        factors = factors[:, None]
    n, m = factors.shape
    if y.shape != (n,):
        raise DimensionError(f"Stock series length {y.shape} does not match factor rows {n}")
    if n < m + 2:
        raise InsufficientDataError(f"Need at least {m + 2} observations for {m} factors, got {n}")

    design = np.column_stack([np.full(n, dt), factors])
    if np.linalg.matrix_rank(design) < m + 1:
        raise CollinearityError("Factor matrix (with intercept) is rank deficient")

    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ coef
    dof = n - (m + 1)
    s2 = float(residuals @ residuals) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(design.T @ design)
    z_series = np.concatenate([[0.0], np.cumsum(residuals)])

    return FactorRegression(
        alpha=float(coef[0]),
        beta_row=coef[1:],
        z_series=z_series,
        residuals=residuals,
        beta_stderr=np.sqrt(np.clip(np.diag(cov)[1:], 0.0, None)),
        residual_variance=float(residuals.var(ddof=1)) if n > 1 else 0.0,
    )


# -------------------------------------------------------------------------------------------------
# 2) adf_test
# -------------------------------------------------------------------------------------------------
def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(z, max_lag: Optional[int] = None) -> AdfResult:
    """Augmented Dickey-Fuller with constant, no trend; lag order picked by AIC over 0..max_lag."""
    z = np.asarray(z, dtype=float)
    n = z.size
    if max_lag is None:
        max_lag = schwert_max_lag(n)
    if max_lag < 0 or n < max_lag + 10:
        raise InsufficientDataError(f"ADF needs at least max_lag + 10 = {max_lag + 10} points, got {n}")
    if np.ptp(z) == 0.0:
        raise DegenerateSeriesError("ADF input is constant")

    diffs = np.diff(z)
    if np.ptp(diffs) <= DRIFT_TOL * max(1.0, float(np.abs(diffs).max())):
        # pure deterministic drift: the lagged level carries no information
        pvalue = float(mackinnonp(0.0, regression="c", N=1))
        return AdfResult(stat=0.0, pvalue=pvalue, chosen_lag=0)

    usable = min(max_lag, n // 2 - 3)
    if usable < max_lag:
        logger.debug(f"ADF max lag clipped from {max_lag} to {usable} for n={n}")
    stat, pvalue, lag, *_ = adfuller(z, maxlag=max(usable, 0), regression="c", autolag="AIC")
    if not np.isfinite(stat):
        raise DegenerateSeriesError("ADF regression is degenerate", {"stat": float(stat)})
    return AdfResult(stat=float(stat), pvalue=float(np.clip(pvalue, 0.0, 1.0)), chosen_lag=int(lag))


# -------------------------------------------------------------------------------------------------
# 3) estimate_ou
# -------------------------------------------------------------------------------------------------
def estimate_ou(z, dt: float) -> OUEstimate:
    z = np.asarray(z, dtype=float)
    if z.size < 3:
        raise InsufficientDataError(f"OU estimation needs at least 3 points, got {z.size}")
    theta = float(z.mean())
    centered = z - theta
    den = float(centered @ centered)
    if not den > 0:
        raise DegenerateSeriesError("OU input has zero centered sum of squares")

    ratio = float(centered[1:] @ centered[:-1]) / den
    if ratio <= 0:
        return OUEstimate(theta_hat=theta, delta_hat=None, ratio=ratio)
    return OUEstimate(theta_hat=theta, delta_hat=-math.log(ratio) / dt, ratio=ratio)


# -------------------------------------------------------------------------------------------------
# 4) per-ticker screening
# -------------------------------------------------------------------------------------------------
def fit_cointegration(
    ticker: str,
    stock_returns,
    factor_returns,
    dt: float,
    max_lag: Optional[int] = None,
) -> CointegrationFit:
    reg = fit_factor_regression(stock_returns, factor_returns, dt)
    try:
        adf = adf_test(reg.z_series, max_lag)
        ou = estimate_ou(reg.z_series, dt)
    except DegenerateSeriesError as e:
        logger.debug(f"{ticker}: degenerate spread ({e})")
        return CointegrationFit(
            ticker=ticker, alpha=reg.alpha, beta_row=reg.beta_row, z_series=reg.z_series,
            adf_stat=0.0, adf_pvalue=1.0, adf_lag=0, theta_hat=float(reg.z_series.mean()),
            delta_hat=0.0, residual_variance=reg.residual_variance, ou_defined=False,
        )

    if ou.delta_hat is None:
        logger.debug(f"{ticker}: negative lag-one autocorrelation ratio {ou.ratio:.3g}, not tradeable")
    return CointegrationFit(
        ticker=ticker,
        alpha=reg.alpha,
        beta_row=reg.beta_row,
        z_series=reg.z_series,
        adf_stat=adf.stat,
        adf_pvalue=adf.pvalue,
        adf_lag=adf.chosen_lag,
        theta_hat=ou.theta_hat,
        delta_hat=ou.delta_hat if ou.delta_hat is not None else 0.0,
        residual_variance=reg.residual_variance,
        ou_defined=ou.delta_hat is not None,
    )


def screen_universe(
    returns: ReturnsPanel,
    factor_returns,
    max_lag: Optional[int] = None,
    jobs: int = 1,
) -> List[CointegrationFit]:
    """Fits every ticker of `returns` against the factors; order follows returns.tickers."""

    def _fit(ticker: str) -> Optional[CointegrationFit]:
        try:
            return fit_cointegration(ticker, returns.column(ticker), factor_returns, returns.dt, max_lag)
        except (NumericalError, InsufficientDataError) as e:
            logger.warning(f"{ticker}: screening failed ({e})")
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fits = list(pool.map(_fit, returns.tickers))
    else:
        fits = [_fit(t) for t in returns.tickers]
    return [f for f in fits if f is not None]


# -------------------------------------------------------------------------------------------------
# 5) select_universe
# -------------------------------------------------------------------------------------------------
def select_universe(
    fits: Sequence[CointegrationFit],
    d_max: int,
    p_threshold: float,
    training_window: Optional[Tuple[pd.Timestamp, pd.Timestamp]] = None,
) -> UniverseSelection:
    passing = [f for f in fits if f.adf_pvalue <= p_threshold and f.tradeable]
    passing.sort(key=lambda f: (-f.delta_hat, f.ticker))
    chosen = passing[:d_max]
    return UniverseSelection(
        tickers=tuple(f.ticker for f in chosen),
        fits=tuple(chosen),
        training_window=training_window,
    )


def screening_table(
    fits: Sequence[CointegrationFit],
    selection: UniverseSelection,
    dt: float,
) -> pd.DataFrame:
    """Screening report, one row per fitted ticker."""
    m = max((f.beta_row.size for f in fits), default=0)
    rows = []
    for f in fits:
        row = {"ticker": f.ticker, "alpha": f.alpha}
        for j in range(m):
            row[f"beta_{j + 1}"] = float(f.beta_row[j])
        row.update({
            "adf_stat": f.adf_stat,
            "adf_pvalue": f.adf_pvalue,
            "theta_hat": f.theta_hat,
            "delta_hat": f.delta_hat if f.ou_defined else np.nan,
            "reversion_days": f.reversion_days(dt) if f.tradeable else np.nan,
            "tradeable": f.tradeable,
            "selected": f.ticker in selection.tickers,
        })
        rows.append(row)
    columns = (["ticker", "alpha"] + [f"beta_{j + 1}" for j in range(m)]
               + ["adf_stat", "adf_pvalue", "theta_hat", "delta_hat", "reversion_days", "tradeable", "selected"])
    return pd.DataFrame(rows, columns=columns)
