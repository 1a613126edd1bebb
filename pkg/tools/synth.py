# tools/synth.py

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from schemas.config import SynthConfig, default_loadings
from .errors import ConfigError, DimensionError, NumericError
from .marketdata import DATE_FORMAT, PricePanel
from .model import ModelParams

logger = logging.getLogger(__name__)

INITIAL_LEVEL = 100.0


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based generator; each seed is an independent reproducible stream."""
    return np.random.Generator(np.random.Philox(seed))


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root, tiny negative eigenvalues clipped to zero."""
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class SynthPath:
    dates: pd.DatetimeIndex
    tickers: Tuple[str, ...]
    factor_levels: np.ndarray    # [n+1 x m]
    stock_levels: np.ndarray     # [n+1 x d]
    spreads: np.ndarray          # [n+1 x d]
    shocks: np.ndarray           # [n x (m+d)] standard normal draws
    beta: np.ndarray
    config: SynthConfig

    @property
    def n_steps(self) -> int:
        return self.shocks.shape[0]

    def stock_returns(self) -> np.ndarray:
        return self.stock_levels[1:] / self.stock_levels[:-1] - 1.0

    def factor_returns(self) -> np.ndarray:
        return self.factor_levels[1:] / self.factor_levels[:-1] - 1.0


# -------------------------------------------------------------------------------------------------
# 1) simulate
# -------------------------------------------------------------------------------------------------
def implied_beta(config: SynthConfig) -> np.ndarray:
    sigma0 = np.asarray(config.sigma0, dtype=float)
    cross = np.asarray(config.cross, dtype=float)
    return cross @ np.linalg.pinv(sigma0)


def simulate(config: SynthConfig) -> SynthPath:
    """
    Euler scheme of the factor, stock and spread SDEs driven by one (m+d)-dimensional Brownian
    motion. Diffusion rows come from the symmetric square root of the joint covariance.
    """
    d, m, n, dt = config.d, config.m, config.n_steps, config.dt
    joint = config.joint_covariance()
    if np.linalg.eigvalsh(joint).min() < -1e-10 * max(1.0, np.abs(joint).max()):
        raise ConfigError("Joint covariance is not positive semi-definite")
    psi = psd_sqrt(joint)
    psi0, psi1 = psi[:m], psi[m:]
    beta = implied_beta(config)

    eta = np.asarray(config.eta, dtype=float)
    mu_raw = np.asarray(config.mu, dtype=float)
    delta = np.asarray(config.delta, dtype=float)
    theta = np.asarray(config.theta, dtype=float)

    shocks = rng_for(config.seed).standard_normal((n, m + d))
    dB = shocks * np.sqrt(dt)
    noise_f = dB @ psi0.T
    noise_s = dB @ psi1.T

    spreads = np.empty((n + 1, d))
    spreads[0] = np.asarray(config.z0, dtype=float)
    decay = delta * dt
    spread_noise = noise_s - noise_f @ beta.T
    for t in range(n):
        spreads[t + 1] = spreads[t] + decay * (theta - spreads[t]) + spread_noise[t]

    factor_ret = eta * dt + noise_f
    stock_ret = (mu_raw - delta * spreads[:-1]) * dt + noise_s
    if (factor_ret <= -1.0).any() or (stock_ret <= -1.0).any():
        raise NumericError("Simulated return below -100%; reduce volatility or dt")

    ones = np.full((1, m), INITIAL_LEVEL)
    factor_levels = np.vstack([ones, INITIAL_LEVEL * np.cumprod(1.0 + factor_ret, axis=0)])
    stock_levels = np.vstack([np.full((1, d), INITIAL_LEVEL), INITIAL_LEVEL * np.cumprod(1.0 + stock_ret, axis=0)])

    dates = pd.bdate_range(config.start_date, periods=n + 1)
    logger.debug(f"Simulated d={d}, m={m}, n={n} with seed {config.seed}")
    return SynthPath(
        dates=dates,
        tickers=tuple(config.ticker_names()),
        factor_levels=factor_levels,
        stock_levels=stock_levels,
        spreads=spreads,
        shocks=shocks,
        beta=beta,
        config=config,
    )


# -------------------------------------------------------------------------------------------------
# 2) to_panel
# -------------------------------------------------------------------------------------------------
def to_panel(path: SynthPath, tickers: Optional[Sequence[str]] = None, benchmark: Optional[str] = None) -> PricePanel:
    """Stock levels as a PricePanel; `benchmark` appends the first factor's levels under that name."""
    tickers = tuple(tickers) if tickers is not None else path.tickers
    if len(tickers) != path.stock_levels.shape[1]:
        raise DimensionError(f"{len(tickers)} names for {path.stock_levels.shape[1]} simulated stocks")
    benchmark = benchmark if benchmark is not None else path.config.benchmark
    prices = path.stock_levels
    if benchmark is not None:
        tickers = tickers + (benchmark,)
        prices = np.column_stack([prices, path.factor_levels[:, 0]])
    return PricePanel(dates=path.dates, tickers=tickers, prices=prices, benchmark_ticker=benchmark)


def truth_document(path: SynthPath) -> Dict[str, Any]:
    """Ground truth written next to a simulated panel."""
    config = path.config
    sigma0 = np.asarray(config.sigma0, dtype=float)
    sigma1 = np.asarray(config.sigma1, dtype=float)
    cross = np.asarray(config.cross, dtype=float)
    beta = path.beta
    sigma3 = sigma1 - cross @ beta.T - beta @ cross.T + beta @ sigma0 @ beta.T
    alpha = np.asarray(config.mu) - beta @ np.asarray(config.eta) - np.asarray(config.delta) * np.asarray(config.theta)
    return {
        "config": config.model_dump(),
        "tickers": list(path.tickers),
        "beta": beta.tolist(),
        "alpha": alpha.tolist(),
        "sigma3": sigma3.tolist(),
        "reversion_days": ((1.0 / config.dt) / np.asarray(config.delta)).tolist(),
        "start": path.dates[0].strftime(DATE_FORMAT),
        "end": path.dates[-1].strftime(DATE_FORMAT),
    }


# -------------------------------------------------------------------------------------------------
# 3) builders
# -------------------------------------------------------------------------------------------------
def config_from_params(
    params: ModelParams,
    n_steps: int,
    dt: float,
    seed: int = 0,
    z0=None,
) -> SynthConfig:
    """Market whose true parameters are `params` (mu converted back to the raw drift)."""
    tickers = list(params.tickers) if len(params.tickers) == params.d else None
    return SynthConfig(
        d=params.d,
        m=params.m,
        eta=params.eta.tolist(),
        mu=(params.mu + params.r).tolist(),
        delta=params.delta_vector.tolist(),
        theta=params.theta.tolist(),
        sigma0=params.sigma0.tolist(),
        sigma1=params.sigma1.tolist(),
        cross=params.cross.tolist(),
        z0=(np.asarray(z0, dtype=float) if z0 is not None else params.theta).tolist(),
        r=params.r,
        dt=dt,
        n_steps=n_steps,
        seed=seed,
        tickers=tickers,
    )


def planted_config(
    d_universe: int = 30,
    n_planted: int = 5,
    m: int = 2,
    n_steps: int = 2520,
    seed: int = 0,
    planted_delta: Tuple[float, float] = (40.0, 80.0),
    background_delta: float = 0.5,
    planted_vol: float = 0.3,
    background_vol: float = 0.1,
    r: float = 0.01,
    dt: float = 1.0 / 252,
    benchmark: Optional[str] = None,
) -> SynthConfig:
    """
    Universe in which the first `n_planted` tickers (P01, P02, ...) have fast mean-reverting
    spreads and the remaining ones (N01, ...) have slow, low-volatility spreads.
    """
    if not 0 <= n_planted <= d_universe:
        raise ConfigError(f"n_planted must lie in [0, {d_universe}], got {n_planted}")
    lo, hi = planted_delta
    delta = np.full(d_universe, background_delta)
    delta[:n_planted] = rng_for(seed + 10_000).uniform(lo, hi, n_planted)
    idio = np.full(d_universe, background_vol ** 2)
    idio[:n_planted] = planted_vol ** 2

    loadings = default_loadings(d_universe, m)
    sigma0 = np.diag(np.linspace(0.04, 0.0225, m))
    eta = np.array([0.06] + [r] * (m - 1))
    tickers = [f"P{i + 1:02d}" for i in range(n_planted)] + [f"N{i + 1:02d}" for i in range(d_universe - n_planted)]
    return SynthConfig(
        d=d_universe,
        m=m,
        eta=eta.tolist(),
        mu=(loadings @ eta).tolist(),
        delta=delta.tolist(),
        theta=[0.0] * d_universe,
        sigma0=sigma0.tolist(),
        sigma1=(loadings @ sigma0 @ loadings.T + np.diag(idio)).tolist(),
        cross=(loadings @ sigma0).tolist(),
        r=r,
        dt=dt,
        n_steps=n_steps,
        seed=seed,
        tickers=tickers,
        benchmark=benchmark,
    )
