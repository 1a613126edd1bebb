# schemas/config.py

import json
import os
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from tools.errors import ConfigError

TRADING_DAYS = 252
DEFAULT_TRAIN_GRID = list(range(190, 251, 10))
DEFAULT_TEST_GRID = list(range(10, 17))

ConfigT = TypeVar("ConfigT", bound=BaseModel)


class ShrinkageConfig(BaseModel):
    sigma0: bool = Field(default=True, description="Ledoit-Wolf shrinkage of the factor covariance")
    sigma1: bool = Field(default=True, description="Ledoit-Wolf shrinkage of the stock covariance")
    attenuate_cross: bool = Field(default=True, description="Scale the cross covariance to keep the joint matrix PSD")

    class Config:
        extra = "forbid"


class ScreenConfig(BaseModel):
    m: int = Field(default=6, ge=1, description="Number of eigenportfolio factors")
    d_max: int = Field(default=15, ge=1, description="Maximum number of selected stocks")
    p_threshold: float = Field(default=0.01, gt=0, le=1, description="ADF p-value threshold")
    dt: float = Field(default=1.0 / TRADING_DAYS, gt=0, description="Period length in years")
    r: float = Field(default=0.01, description="Risk-free rate per year")
    max_lag: Optional[int] = Field(default=None, ge=0, description="ADF max lag (Schwert rule when omitted)")
    benchmark: Optional[str] = Field(default=None, description="Benchmark ticker in the price file")
    survivorship: bool = Field(default=True, description="Remove alpha_b when a benchmark is given")
    gamma: float = Field(default=-70.0, description="Risk aversion of the emitted parameter file, must be negative")
    shrinkage: ShrinkageConfig = Field(default_factory=ShrinkageConfig)

    class Config:
        extra = "forbid"

    @field_validator("gamma")
    @classmethod
    def _gamma_negative(cls, v: float) -> float:
        if not v < 0:
            raise ValueError("gamma must be negative")
        return v


class WindowSpec(BaseModel):
    train_len: int = Field(default=220, description="Training window in trading days")
    test_len: int = Field(default=15, description="Testing window in trading days")
    stride: Optional[int] = Field(default=None, description="Window advance in days (defaults to test_len)")
    d_max: int = Field(default=15, ge=1, description="Maximum number of selected stocks")
    m: int = Field(default=6, description="Number of eigenportfolio factors")
    gamma: float = Field(default=-70.0, description="Risk aversion, must be negative")
    r: float = Field(default=0.01, description="Risk-free rate per year")
    p_threshold: float = Field(default=0.01, gt=0, le=1, description="ADF p-value threshold")
    dt: float = Field(default=1.0 / TRADING_DAYS, gt=0, description="Period length in years")
    max_lag: Optional[int] = Field(default=None, ge=0, description="ADF max lag (Schwert rule when omitted)")
    shrinkage: ShrinkageConfig = Field(default_factory=ShrinkageConfig)
    survivorship: Literal["full", "window", "off"] = Field(
        default="full", description="alpha_b regression on the full sample, per training window, or disabled"
    )

    class Config:
        extra = "forbid"

    @field_validator("gamma")
    @classmethod
    def _gamma_negative(cls, v: float) -> float:
        if not v < 0:
            raise ValueError("gamma must be negative")
        return v

    @field_validator("m")
    @classmethod
    def _m_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("m must be >= 1")
        return v

    @model_validator(mode="after")
    def _window_lengths(self):
        if not self.train_len > self.test_len > 0:
            raise ValueError(f"train_len > test_len > 0 required, got {self.train_len} / {self.test_len}")
        if self.stride is None:
            self.stride = self.test_len
        elif self.stride < 1:
            raise ValueError("stride must be >= 1")
        return self


class BacktestConfig(WindowSpec):
    seed: int = Field(default=0, description="Seed recorded with the run")
    benchmark: Optional[str] = Field(default=None, description="Benchmark ticker in the price file")
    subperiods: int = Field(default=0, ge=0, description="Equal sub-periods for subperiods.csv (0 = off)")
    train_grid: Optional[List[int]] = Field(default=None, description="Train lengths for --sweep")
    test_grid: Optional[List[int]] = Field(default=None, description="Test lengths for --sweep")

    def window_spec(self, train_len: Optional[int] = None, test_len: Optional[int] = None) -> WindowSpec:
        fields = {k: getattr(self, k) for k in WindowSpec.model_fields}
        if train_len is not None or test_len is not None:
            fields["train_len"] = train_len if train_len is not None else self.train_len
            fields["test_len"] = test_len if test_len is not None else self.test_len
            fields["stride"] = None
        return WindowSpec(**fields)

    def grid(self):
        return (self.train_grid or DEFAULT_TRAIN_GRID, self.test_grid or DEFAULT_TEST_GRID)


class SolveConfig(BaseModel):
    variants: List[Literal["unconstrained", "constrained"]] = Field(
        default_factory=lambda: ["unconstrained", "constrained"]
    )
    gamma: Optional[float] = Field(default=None, description="Overrides gamma of the parameter file")
    paths: bool = Field(default=False, description="Emit finite-horizon (a, b) paths")
    horizon: float = Field(default=1.0, gt=0, description="Horizon of the emitted paths in years")
    steps: Optional[int] = Field(default=None, ge=1, description="RK4 steps for the emitted paths")

    class Config:
        extra = "forbid"

    @field_validator("gamma")
    @classmethod
    def _gamma_negative(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v < 0:
            raise ValueError("gamma must be negative")
        return v


def default_loadings(d: int, m: int) -> np.ndarray:
    i = np.arange(d)[:, None]
    j = np.arange(m)[None, :]
    loadings = 0.5 * np.cos(np.pi * (i + 1) * j / (d + 1))
    loadings[:, 0] = np.linspace(0.8, 1.2, d) if d > 1 else 1.0
    return loadings


class SynthConfig(BaseModel):
    """
    Ground truth of a simulated market. Omitted matrices are filled with a default market whose
    stocks load on the factors and carry 30% idiosyncratic volatility.
    mu is the raw stock drift (not in excess of r).
    """
    d: int = Field(default=5, ge=1)
    m: int = Field(default=2, ge=1)
    eta: Optional[List[float]] = None
    mu: Optional[List[float]] = None
    delta: Optional[List[float]] = None
    theta: Optional[List[float]] = None
    sigma0: Optional[List[List[float]]] = None
    sigma1: Optional[List[List[float]]] = None
    cross: Optional[List[List[float]]] = None
    z0: Optional[List[float]] = None
    r: float = 0.01
    dt: float = Field(default=1.0 / TRADING_DAYS, gt=0)
    n_steps: int = Field(default=2520, ge=1)
    seed: int = 0
    start_date: str = "2000-01-03"
    tickers: Optional[List[str]] = None
    benchmark: Optional[str] = Field(default=None, description="Append the first factor as this benchmark column")

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def _fill_and_check(self):
        d, m = self.d, self.m
        loadings = default_loadings(d, m)
        if self.sigma0 is None:
            self.sigma0 = np.diag(np.linspace(0.04, 0.01, m)).tolist()
        sigma0 = np.asarray(self.sigma0, dtype=float)
        if self.cross is None:
            self.cross = (loadings @ sigma0).tolist()
        if self.sigma1 is None:
            self.sigma1 = (loadings @ sigma0 @ loadings.T + 0.09 * np.eye(d)).tolist()
        if self.eta is None:
            self.eta = [0.06] + [self.r] * (m - 1)
        if self.delta is None:
            self.delta = np.linspace(20.0, 60.0, d).tolist() if d > 1 else [30.0]
        if self.theta is None:
            self.theta = [0.0] * d
        if self.mu is None:
            cross = np.asarray(self.cross, dtype=float)
            beta = np.linalg.lstsq(sigma0, cross.T, rcond=None)[0].T
            self.mu = (beta @ np.asarray(self.eta) + np.asarray(self.delta) * np.asarray(self.theta)).tolist()
        if self.z0 is None:
            self.z0 = list(self.theta)

        problems = []
        shapes = {
            "eta": (np.asarray(self.eta).shape, (m,)),
            "mu": (np.asarray(self.mu).shape, (d,)),
            "delta": (np.asarray(self.delta).shape, (d,)),
            "theta": (np.asarray(self.theta).shape, (d,)),
            "z0": (np.asarray(self.z0).shape, (d,)),
            "sigma0": (np.asarray(self.sigma0).shape, (m, m)),
            "sigma1": (np.asarray(self.sigma1).shape, (d, d)),
            "cross": (np.asarray(self.cross).shape, (d, m)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                problems.append(f"{name} has shape {got}, expected {want}")
        if self.tickers is not None and len(self.tickers) != d:
            problems.append(f"tickers has {len(self.tickers)} names, expected {d}")
        if problems:
            raise ValueError("; ".join(problems))

        if (np.asarray(self.delta) <= 0).any():
            raise ValueError("delta entries must be > 0")
        joint = self.joint_covariance()
        if np.abs(joint - joint.T).max() > 1e-12 * max(1.0, np.abs(joint).max()):
            raise ValueError("sigma0 and sigma1 must be symmetric")
        eig = np.linalg.eigvalsh(joint)
        if eig.min() < -1e-10 * max(1.0, np.abs(eig).max()):
            raise ValueError(
                f"joint covariance [[sigma0, cross'], [cross, sigma1]] is not positive semi-definite: "
                f"min eigenvalue {eig.min():.6g}, eigenvalues {np.round(eig, 8).tolist()}"
            )
        return self

    def joint_covariance(self) -> np.ndarray:
        sigma0 = np.asarray(self.sigma0, dtype=float)
        sigma1 = np.asarray(self.sigma1, dtype=float)
        cross = np.asarray(self.cross, dtype=float)
        return np.block([[sigma0, cross.T], [cross, sigma1]])

    def ticker_names(self) -> List[str]:
        width = max(2, len(str(self.d)))
        return list(self.tickers) if self.tickers else [f"S{i + 1:0{width}d}" for i in range(self.d)]


# -------------------------------------------------------------------------------------------------
# loading helpers
# -------------------------------------------------------------------------------------------------
def format_validation_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err.get("loc", ())) or "config"
        parts.append(f"{loc}: {err.get('msg')}")
    return "; ".join(parts)


def parse_config(model: Type[ConfigT], data: Optional[Dict[str, Any]]) -> ConfigT:
    """Validates every field at once; all problems end up in a single ConfigError."""
    try:
        return model(**(data or {}))
    except ValidationError as e:
        raise ConfigError(f"Invalid {model.__name__}: {format_validation_error(e)}", {"errors": format_validation_error(e).split("; ")})


def load_config(model: Type[ConfigT], path: Optional[str]) -> ConfigT:
    if path is None:
        return parse_config(model, {})
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}", {"path": path})
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}", {"path": path})
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object", {"path": path})
    return parse_config(model, data)
