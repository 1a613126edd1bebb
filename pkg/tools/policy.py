# tools/policy.py

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from .errors import BankruptcyError, ConfigError, DataError, DimensionError
from .hjb import HJBSolution
from .marketdata import DATE_FORMAT
from .model import ModelParams

logger = logging.getLogger(__name__)

STRATEGIES = ("optimal", "myopic")
CONSTRAINTS = ("unconstrained", "neutral")
POLICY_KINDS = tuple(f"{s}_{c}" for s in STRATEGIES for c in CONSTRAINTS)

# neutral controls use the constrained HJB variant
HJB_VARIANT = {"unconstrained": "unconstrained", "neutral": "constrained"}


def _neutral_projector(params: ModelParams) -> np.ndarray:
    """I - S1^-1 beta (beta' S1^-1 beta)^+ beta'; identity on the range of sigma1^-1 - sigma_c."""
    s1_inv_beta = params.sigma1_inv @ params.beta
    gram = params.beta.T @ s1_inv_beta
    return np.eye(params.d) - s1_inv_beta @ np.linalg.pinv(gram) @ params.beta.T


@dataclass(frozen=True)
class ControlPolicy:
    """
    Steady-state feedback control pi(z) = intercept + slope z.
    optimal: M (mu + S2 b + (-delta + 2 S2 C) z) / (1 - gamma)
    myopic:  M (mu - delta z) / (1 - gamma)
    M = sigma1^-1 (unconstrained) or sigma1^-1 - sigma_c (neutral).
    """
    strategy: str
    constraint: str
    params: ModelParams
    solution: Optional[HJBSolution] = None
    intercept: np.ndarray = field(init=False, repr=False)
    slope: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES or self.constraint not in CONSTRAINTS:
            raise ValueError(f"Unknown policy kind: {self.strategy}_{self.constraint}")
        p = self.params
        M = p.precision(HJB_VARIANT[self.constraint])
        scale = 1.0 / (1.0 - p.gamma)

        if self.strategy == "optimal":
            if self.solution is None:
                raise ValueError("Optimal policies need an HJB solution")
            if self.solution.variant != HJB_VARIANT[self.constraint]:
                raise ValueError(
                    f"{self.kind} needs the {HJB_VARIANT[self.constraint]} solution, got {self.solution.variant}"
                )
            intercept = scale * M @ (p.mu + p.sigma2 @ self.solution.b_bar)
            slope = scale * M @ (-p.delta + 2.0 * p.sigma2 @ self.solution.C_bar)
        else:
            intercept = scale * M @ p.mu
            slope = -scale * M @ p.delta

        if self.constraint == "neutral":
            proj = _neutral_projector(p)
            intercept, slope = proj @ intercept, proj @ slope
        object.__setattr__(self, "intercept", intercept)
        object.__setattr__(self, "slope", slope)

    @property
    def kind(self) -> str:
        return f"{self.strategy}_{self.constraint}"

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @classmethod
    def from_kind(cls, kind: str, params: ModelParams, solutions: Dict[str, HJBSolution]) -> "ControlPolicy":
        strategy, constraint = kind.split("_", 1)
        solution = solutions.get(HJB_VARIANT[constraint]) if strategy == "optimal" else None
        return cls(strategy=strategy, constraint=constraint, params=params, solution=solution)


def build_policies(params: ModelParams, solutions: Dict[str, HJBSolution]) -> Dict[str, ControlPolicy]:
    return {kind: ControlPolicy.from_kind(kind, params, solutions) for kind in POLICY_KINDS}


# -------------------------------------------------------------------------------------------------
# 1) control
# -------------------------------------------------------------------------------------------------
def control(policy: ControlPolicy, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != policy.params.d:
        raise DimensionError(f"z has {z.shape[-1]} entries, policy trades {policy.params.d} stocks")
    return policy.intercept + z @ policy.slope.T


# -------------------------------------------------------------------------------------------------
# 2) WealthPath
# -------------------------------------------------------------------------------------------------
@dataclass(frozen=True)
class WealthPath:
    """
    wealth[0] is the starting wealth at dates[0]; weights[k] were held over (dates[k], dates[k + 1]].
    """
    dates: pd.DatetimeIndex
    wealth: np.ndarray
    weights: np.ndarray
    cash_weight: np.ndarray
    tickers: Tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dates", pd.DatetimeIndex(self.dates))
        n = len(self.wealth) - 1
        if len(self.dates) != n + 1:
            raise DimensionError(f"{len(self.dates)} dates for {n + 1} wealth points")
        if self.weights.shape != (n, len(self.tickers)):
            raise DimensionError(f"weights {self.weights.shape} do not match ({n}, {len(self.tickers)})")

    @property
    def terminal(self) -> float:
        return float(self.wealth[-1])

    @property
    def n_periods(self) -> int:
        return len(self.wealth) - 1

    def log_growth(self, dt: float) -> float:
        """Realized annualized log growth of wealth."""
        return float(np.log(self.wealth[-1] / self.wealth[0]) / (self.n_periods * dt))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"date": self.dates.strftime(DATE_FORMAT), "wealth": self.wealth})
        cash = np.concatenate([[np.nan], self.cash_weight])
        frame["cash_weight"] = cash
        for i, t in enumerate(self.tickers):
            frame[f"pi_{t}"] = np.concatenate([[np.nan], self.weights[:, i]])
        return frame

    def to_csv(self, path: str) -> None:
        # 17 significant digits so statistics recomputed from the file match the in-memory path
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path: str, label: str = "") -> "WealthPath":
        frame = pd.read_csv(path)
        for col in ("date", "wealth", "cash_weight"):
            if col not in frame.columns:
                raise DataError(f"Missing required field: {col}", {"path": path})
        pi_cols = [c for c in frame.columns if c.startswith("pi_")]
        return cls(
            dates=pd.to_datetime(frame["date"], format=DATE_FORMAT),
            wealth=frame["wealth"].to_numpy(dtype=float),
            weights=frame[pi_cols].to_numpy(dtype=float)[1:].reshape(len(frame) - 1, len(pi_cols)),
            cash_weight=frame["cash_weight"].to_numpy(dtype=float)[1:],
            tickers=tuple(c[3:] for c in pi_cols),
            label=label,
        )

    @classmethod
    def concat(cls, paths: Sequence["WealthPath"], label: str = "") -> "WealthPath":
        """Chains consecutive window paths; each later path must start at the previous terminal point."""
        paths = [p for p in paths if p is not None]
        if not paths:
            raise ValueError("Nothing to concatenate")
        tickers: List[str] = []
        for p in paths:
            tickers.extend(t for t in p.tickers if t not in tickers)
        col = {t: i for i, t in enumerate(tickers)}

        dates = [paths[0].dates[:1]]
        wealth = [paths[0].wealth[:1]]
        weights, cash = [], []
        for p in paths:
            block = np.zeros((p.n_periods, len(tickers)))
            for i, t in enumerate(p.tickers):
                block[:, col[t]] = p.weights[:, i]
            dates.append(p.dates[1:])
            wealth.append(p.wealth[1:])
            weights.append(block)
            cash.append(p.cash_weight)
        return cls(
            dates=dates[0].append(dates[1:]),
            wealth=np.concatenate(wealth),
            weights=np.vstack(weights) if weights else np.zeros((0, len(tickers))),
            cash_weight=np.concatenate(cash),
            tickers=tuple(tickers),
            label=label or paths[0].label,
        )


# -------------------------------------------------------------------------------------------------
# 3) simulate_wealth
# -------------------------------------------------------------------------------------------------
def _period_dates(dates, n: int) -> pd.DatetimeIndex:
    if dates is None:
        return pd.DatetimeIndex(pd.bdate_range("2000-01-03", periods=n + 1))
    dates = pd.DatetimeIndex(dates)
    if len(dates) != n + 1:
        raise DimensionError(f"Expected {n + 1} dates (start + one per period), got {len(dates)}")
    return dates


def wealth_recursion(
    weights: np.ndarray,
    returns: np.ndarray,
    r: float,
    dt: float,
    dates: pd.DatetimeIndex,
    w0: float = 1.0,
) -> np.ndarray:
    """W[t+1] = W[t] (1 + pi_t . ret_t + r (1 - sum pi_t) dt)."""
    growth = 1.0 + (weights * returns).sum(axis=1) + r * (1.0 - weights.sum(axis=1)) * dt
    wealth = np.empty(len(growth) + 1)
    wealth[0] = w0
    for t, g in enumerate(growth):
        wealth[t + 1] = wealth[t] * g
        if not wealth[t + 1] > 0:
            date = dates[t + 1].strftime(DATE_FORMAT)
            raise BankruptcyError(f"Wealth hit {wealth[t + 1]:.6g} on {date}", date, {"period": t + 1})
    return wealth


def simulate_wealth(
    policy: ControlPolicy,
    z_path,
    returns,
    r: float,
    dt: float,
    dates=None,
    w0: float = 1.0,
    seed: int = 0,
) -> WealthPath:
    """
    Trades `policy` over realized returns. z_path[t] is the spread vector observed before the
    return of period t. Passing a ModelParams market instead of returns simulates it from
    z_path[0] with `seed`; its risk-free rate must then equal `r`.
    """
    if isinstance(returns, ModelParams):
        if not np.isclose(r, returns.r, rtol=0.0, atol=1e-12):
            raise ConfigError(f"r={r} does not match the simulated market's r={returns.r}",
                              {"r": r, "params_r": returns.r})
        return simulate_model_wealth(policy, returns, n_steps=len(z_path), dt=dt, seed=seed, z0=np.asarray(z_path)[0])

    z = np.atleast_2d(np.asarray(z_path, dtype=float))
    ret = np.atleast_2d(np.asarray(returns, dtype=float))
    if z.shape != ret.shape:
        raise DimensionError(f"z_path {z.shape} does not align with returns {ret.shape}")
    dates = _period_dates(dates, ret.shape[0])

    weights = control(policy, z)
    wealth = wealth_recursion(weights, ret, r, dt, dates, w0)
    return WealthPath(
        dates=dates,
        wealth=wealth,
        weights=weights,
        cash_weight=1.0 - weights.sum(axis=1),
        tickers=policy.params.tickers or tuple(f"s{i}" for i in range(policy.params.d)),
        label=policy.kind,
    )


def cash_path(dates, r: float, dt: float, w0: float = 1.0, label: str = "") -> WealthPath:
    """All wealth in the risk-free asset."""
    dates = pd.DatetimeIndex(dates)
    n = len(dates) - 1
    wealth = w0 * (1.0 + r * dt) ** np.arange(n + 1)
    return WealthPath(
        dates=dates, wealth=wealth, weights=np.zeros((n, 0)), cash_weight=np.ones(n), tickers=(), label=label,
    )


def simulate_model_wealth(
    policy: ControlPolicy,
    params: ModelParams,
    n_steps: int,
    dt: float,
    seed: int = 0,
    z0=None,
) -> WealthPath:
    """Draws a market from `params` and trades the policy on its true spreads."""
    from .synth import config_from_params, simulate

    config = config_from_params(params, n_steps=n_steps, dt=dt, seed=seed, z0=z0)
    path = simulate(config)
    returns = path.stock_returns()
    return simulate_wealth(policy, path.spreads[:-1], returns, params.r, dt, dates=path.dates)


def stationary_log_growth(policy: ControlPolicy) -> float:
    """
    Expected log-wealth growth per year of `policy` with z at its stationary law N(theta, V),
    delta V + V delta' = sigma3. For pi = a + S z and excess drift e(z) = mu - delta z:
    r + pi(theta).e(theta) - tr(S' delta V) - (pi(theta)' S1 pi(theta) + tr(S' S1 S V)) / 2.
    For gamma < 0 an optimal policy's value is at least its certainty-equivalent rate -L/gamma.
    """
    p = policy.params
    V = linalg.solve_continuous_lyapunov(p.delta, p.sigma3)
    S = policy.slope
    pi_bar = policy.intercept + S @ p.theta
    drift_bar = p.mu - p.delta @ p.theta
    mean_excess = float(pi_bar @ drift_bar) - float(np.trace(S.T @ p.delta @ V))
    mean_variance = float(pi_bar @ p.sigma1 @ pi_bar) + float(np.trace(S.T @ p.sigma1 @ S @ V))
    return p.r + mean_excess - 0.5 * mean_variance
