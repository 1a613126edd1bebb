# tools/factors.py

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DegenerateSeriesError, DimensionError, InsufficientDataError, NormalizationError
from .marketdata import ReturnsPanel

logger = logging.getLogger(__name__)

NORMALIZER_TOL = 1e-12


@dataclass(frozen=True)
class EigenFactorSet:
    """
    Eigenportfolios of a stock universe.
    weights[:, j] = sigma^-1 v_j / c_j, so every column sums to one.
    factor_returns is None until factor_return_series has been applied.
    """
    tickers: Tuple[str, ...]
    weights: np.ndarray
    eigenvalues: np.ndarray
    normalizers: np.ndarray
    factor_returns: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    def to_frame(self) -> pd.DataFrame:
        cols = [f"w_{j + 1}" for j in range(self.m)]
        frame = pd.DataFrame(self.weights, index=list(self.tickers), columns=cols)
        frame.index.name = "ticker"
        return frame

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, float_format="%.12g")


# -------------------------------------------------------------------------------------------------
# 1) correlation_matrix
# -------------------------------------------------------------------------------------------------
def correlation_matrix(returns: ReturnsPanel) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(returns.returns, dtype=float)
    if data.shape[0] < 2:
        raise InsufficientDataError(f"Need at least 2 observations, got {data.shape[0]}")

    std = data.std(axis=0, ddof=1)
    flat = np.flatnonzero(~(std > 0))
    if flat.size:
        ticker = returns.tickers[int(flat[0])]
        raise DegenerateSeriesError(f"Zero-variance return column: {ticker}", {"ticker": ticker})

    if data.shape[1] == 1:
        rho = np.ones((1, 1))
    else:
        rho = np.corrcoef(data, rowvar=False)
        rho = 0.5 * (rho + rho.T)
        np.fill_diagonal(rho, 1.0)
        rho = np.clip(rho, -1.0, 1.0)
    return rho, np.diag(std)


# -------------------------------------------------------------------------------------------------
# 2) eigenportfolios
# -------------------------------------------------------------------------------------------------
def eigenportfolios(
    rho: np.ndarray,
    sigma: np.ndarray,
    m: int,
    tickers: Optional[Sequence[str]] = None,
) -> EigenFactorSet:
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    d = rho.shape[0]
    if rho.shape != (d, d) or sigma.shape != (d, d):
        raise DimensionError(f"rho {rho.shape} and sigma {sigma.shape} must both be {d}x{d}")
    if not 1 <= m <= d:
        raise DimensionError(f"Factor count m={m} must lie in [1, {d}]")

    values, vectors = np.linalg.eigh(0.5 * (rho + rho.T))
    # descending eigenvalue, ties broken by the first component
    order = np.lexsort((vectors[0, :], -values))
    values = values[order][:m]
    vectors = vectors[:, order][:, :m]

    if vectors[:, 0].sum() < 0:
        vectors[:, 0] = -vectors[:, 0]

    scaled = vectors / np.diag(sigma)[:, None]
    normalizers = scaled.sum(axis=0)
    for j in range(m):
        if abs(normalizers[j]) <= NORMALIZER_TOL * np.linalg.norm(scaled[:, j]):
            raise NormalizationError(
                f"Eigenportfolio {j + 1} cannot be normalized (c_j = {normalizers[j]:.3g})",
                {"factor": j + 1, "eigenvalue": float(values[j])},
            )
    if values[-1] <= 0:
        logger.warning(f"Non-positive eigenvalue {values[-1]:.3g} among the first {m} factors")

    weights = scaled / normalizers
    if tickers is None:
        tickers = tuple(f"s{i}" for i in range(d))
    return EigenFactorSet(
        tickers=tuple(tickers),
        weights=weights,
        eigenvalues=values,
        normalizers=normalizers,
    )


# -------------------------------------------------------------------------------------------------
# 3) factor_return_series
# -------------------------------------------------------------------------------------------------
def factor_return_series(weights: np.ndarray, returns: ReturnsPanel) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.ndim == 1:
        weights = weights[:, None]
    if weights.shape[0] != returns.returns.shape[1]:
        raise DimensionError(
            f"Weight rows ({weights.shape[0]}) differ from universe size ({returns.returns.shape[1]})"
        )
    return returns.returns @ weights


def build_factors(returns: ReturnsPanel, m: int) -> EigenFactorSet:
    """Correlation, eigen-decomposition and in-sample factor returns for one training window."""
    rho, sigma = correlation_matrix(returns)
    factors = eigenportfolios(rho, sigma, m, tickers=returns.tickers)
    return replace(factors, factor_returns=factor_return_series(factors.weights, returns))
