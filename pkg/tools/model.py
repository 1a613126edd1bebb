# tools/model.py

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from sklearn.covariance import ledoit_wolf_shrinkage

from schemas.config import ShrinkageConfig
from .cointegration import UniverseSelection
from .errors import (
    ConditioningError, DataError, DimensionError, InsufficientDataError, ShapeError,
    UnsupportedRegimeError,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10
RANK_TOL = 1e-10


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """
    Parameter set of the cointegrated market, all rates per year.
    mu is the excess drift (raw drift minus r). sigma2 is generally not symmetric.
    neutral_precision is sigma1^-1 - sigma_c, the market-neutral counterpart of sigma1^-1.
    """
    mu: np.ndarray
    theta: np.ndarray
    delta: np.ndarray
    beta: np.ndarray
    sigma0: np.ndarray
    cross: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray
    sigma_c: np.ndarray
    sigma1_inv: np.ndarray
    neutral_precision: np.ndarray
    r: float
    gamma: float
    eta: np.ndarray
    tickers: Tuple[str, ...] = ()
    sigma_c_rank: int = 0
    warnings: Tuple[str, ...] = ()
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def m(self) -> int:
        return self.eta.size

    @property
    def delta_vector(self) -> np.ndarray:
        return np.diag(self.delta).copy()

    def precision(self, variant: str) -> np.ndarray:
        """M in the control and Riccati formulas: sigma1^-1, or sigma1^-1 - sigma_c for the neutral case."""
        if variant == "unconstrained":
            return self.sigma1_inv
        if variant == "constrained":
            return self.neutral_precision
        raise ValueError(f"Unknown variant: {variant}")

    # ---- construction ----

    @classmethod
    def from_covariances(
        cls,
        mu,
        theta,
        delta,
        sigma0,
        sigma1,
        cross,
        r: float,
        gamma: float,
        eta=None,
        tickers: Sequence[str] = (),
        warnings: Sequence[str] = (),
        diagnostics: Optional[Dict[str, Any]] = None,
    ) -> "ModelParams":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        delta = np.asarray(delta, dtype=float)
        if delta.ndim <= 1:
            delta = np.diag(np.atleast_1d(delta))
        sigma0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
        sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
        d, m = mu.size, sigma0.shape[0]
        cross = np.asarray(cross, dtype=float).reshape(d, m)
        eta = np.full(m, r, dtype=float) if eta is None else np.atleast_1d(np.asarray(eta, dtype=float))

        _validate_shapes(mu, theta, delta, sigma0, sigma1, cross, eta)
        if not (gamma < 1 and gamma != 0):
            raise UnsupportedRegimeError(f"gamma must satisfy gamma < 1 and gamma != 0, got {gamma}")
        if not np.allclose(delta, np.diag(np.diag(delta)), rtol=0, atol=0) or (np.diag(delta) <= 0).any():
            raise DataError("delta must be diagonal with strictly positive entries", {"delta": np.diag(delta).tolist()})
        for name, mat in (("sigma0", sigma0), ("sigma1", sigma1)):
            if np.abs(mat - mat.T).max() > SYMMETRY_TOL * max(1.0, np.abs(mat).max()):
                raise ShapeError(f"{name} must be symmetric")

        sigma0, sigma1 = _sym(sigma0), _sym(sigma1)
        chol0 = _cholesky(sigma0, "sigma0")
        chol1 = _cholesky(sigma1, "sigma1")

        beta = linalg.cho_solve((chol0, True), cross.T).T
        sigma2 = sigma1 - cross @ beta.T
        sigma3 = _sym(sigma1 - cross @ beta.T - beta @ cross.T + beta @ sigma0 @ beta.T)
        min_eig3 = float(np.linalg.eigvalsh(sigma3).min())
        if min_eig3 < -PSD_TOL * max(1.0, np.abs(sigma1).max()):
            raise ConditioningError(
                f"sigma3 is not positive semi-definite (min eigenvalue {min_eig3:.3g})",
                {"min_eigenvalue": min_eig3},
            )

        sigma1_inv = _sym(linalg.cho_solve((chol1, True), np.eye(d)))
        sigma_c, neutral_precision, rank = _neutral_split(chol1, beta)

        return cls(
            mu=_readonly(mu), theta=_readonly(theta), delta=_readonly(delta), beta=_readonly(beta),
            sigma0=_readonly(sigma0), cross=_readonly(cross), sigma1=_readonly(sigma1),
            sigma2=_readonly(sigma2), sigma3=_readonly(sigma3), sigma_c=_readonly(sigma_c),
            sigma1_inv=_readonly(sigma1_inv), neutral_precision=_readonly(neutral_precision),
            r=float(r), gamma=float(gamma), eta=_readonly(eta), tickers=tuple(tickers),
            sigma_c_rank=rank, warnings=tuple(warnings), diagnostics=dict(diagnostics or {}),
        )

    # ---- serialization ----

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "m": self.m,
            "tickers": list(self.tickers),
            "mu": self.mu.tolist(),
            "theta": self.theta.tolist(),
            "delta": self.delta_vector.tolist(),
            "eta": self.eta.tolist(),
            "sigma0": self.sigma0.tolist(),
            "sigma1": self.sigma1.tolist(),
            "cross": self.cross.tolist(),
            "beta": self.beta.tolist(),
            "sigma2": self.sigma2.tolist(),
            "sigma3": self.sigma3.tolist(),
            "sigma_c": self.sigma_c.tolist(),
            "sigma_c_rank": self.sigma_c_rank,
            "r": self.r,
            "gamma": self.gamma,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ModelParams":
        """Rebuilds from the primitive fields; derived matrices are recomputed so identities hold exactly."""
        for key in ("mu", "theta", "delta", "sigma0", "sigma1", "cross", "r", "gamma"):
            if key not in doc:
                raise DataError(f"Missing required field: {key}")
        return cls.from_covariances(
            mu=doc["mu"], theta=doc["theta"], delta=doc["delta"],
            sigma0=doc["sigma0"], sigma1=doc["sigma1"], cross=doc["cross"],
            r=doc["r"], gamma=doc["gamma"], eta=doc.get("eta"),
            tickers=doc.get("tickers") or (), warnings=doc.get("warnings") or (),
        )


def _validate_shapes(mu, theta, delta, sigma0, sigma1, cross, eta) -> None:
    d, m = mu.size, sigma0.shape[0]
    problems = []
    if theta.shape != (d,):
        problems.append(f"theta {theta.shape} != ({d},)")
    if delta.shape != (d, d):
        problems.append(f"delta {delta.shape} != ({d}, {d})")
    if sigma0.shape != (m, m):
        problems.append(f"sigma0 {sigma0.shape} is not square")
    if sigma1.shape != (d, d):
        problems.append(f"sigma1 {sigma1.shape} != ({d}, {d})")
    if cross.shape != (d, m):
        problems.append(f"cross {cross.shape} != ({d}, {m})")
    if eta.shape != (m,):
        problems.append(f"eta {eta.shape} != ({m},)")
    if problems:
        raise DimensionError("Inconsistent parameter dimensions: " + "; ".join(problems))
    arrays = (mu, theta, delta, sigma0, sigma1, cross, eta)
    if not all(np.isfinite(a).all() for a in arrays):
        raise DataError("Parameters contain non-finite entries")


def _cholesky(mat: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(mat)
        raise ConditioningError(
            f"{name} is not positive definite (eigenvalues in [{eig.min():.3g}, {eig.max():.3g}])",
            {"matrix": name, "min_eigenvalue": float(eig.min()), "max_eigenvalue": float(eig.max())},
        )


def _neutral_split(chol1: np.ndarray, beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Sigma_c = S1^-1 beta (beta' S1^-1 beta)^-1 beta' S1^-1 written as L^-T U U' L^-1, with U an
    orthonormal basis of range(L^-1 beta). A rank-deficient beta projects on its column space;
    beta = 0 gives Sigma_c = 0.
    """
    d = chol1.shape[0]
    whitened = linalg.solve_triangular(chol1, beta, lower=True)
    u, s, _ = np.linalg.svd(whitened, full_matrices=False)
    rank = int((s > RANK_TOL * max(1.0, s.max(initial=0.0))).sum()) if s.size else 0
    basis = u[:, :rank]
    inv_chol = linalg.solve_triangular(chol1, np.eye(d), lower=True)
    w = inv_chol.T @ basis
    sigma_c = _sym(w @ w.T)
    complement = np.eye(d) - basis @ basis.T
    neutral = _sym(inv_chol.T @ complement @ inv_chol)
    return sigma_c, neutral, rank


# -------------------------------------------------------------------------------------------------
# 1) ledoit_wolf_shrink
# -------------------------------------------------------------------------------------------------
def ledoit_wolf_intensity(sample_cov, n_obs: int, observations=None) -> float:
    """
    Optimal intensity toward nu*I. With raw observations the data-driven estimate is used;
    otherwise the fourth-moment term is taken under Gaussian returns: (tr(S)^2 + ||S||_F^2) / n.
    """
    s = np.atleast_2d(np.asarray(sample_cov, dtype=float))
    d = s.shape[0]
    if s.shape != (d, d) or np.abs(s - s.T).max() > SYMMETRY_TOL * max(1.0, np.abs(s).max()):
        raise ShapeError("Sample covariance must be a symmetric square matrix")
    if n_obs < 2:
        raise InsufficientDataError(f"Shrinkage needs n_obs >= 2, got {n_obs}")
    if d == 1:
        return 0.0
    if observations is not None:
        return float(np.clip(ledoit_wolf_shrinkage(np.asarray(observations, dtype=float)), 0.0, 1.0))

    nu = np.trace(s) / d
    dist2 = float(np.sum((s - nu * np.eye(d)) ** 2))
    if dist2 <= 0:
        return 0.0
    spread2 = (np.trace(s) ** 2 + float(np.sum(s ** 2))) / n_obs
    return float(min(spread2, dist2) / dist2)


def ledoit_wolf_shrink(sample_cov, n_obs: int, observations=None) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sample_cov, dtype=float))
    intensity = ledoit_wolf_intensity(s, n_obs, observations)
    nu = np.trace(s) / s.shape[0]
    return _sym((1.0 - intensity) * s + intensity * nu * np.eye(s.shape[0]))


# -------------------------------------------------------------------------------------------------
# 2) assemble
# -------------------------------------------------------------------------------------------------
def assemble(
    selection: UniverseSelection,
    factor_returns,
    stock_returns,
    eta1_estimate: float,
    r: float,
    gamma: float,
    dt: float,
    shrinkage: Optional[ShrinkageConfig] = None,
) -> ModelParams:
    if gamma >= 0:
        raise UnsupportedRegimeError(f"gamma must be negative, got {gamma}", {"gamma": gamma})
    if selection.d == 0:
        raise DimensionError("Cannot assemble a model from an empty selection")
    shrinkage = shrinkage or ShrinkageConfig()

    factors = np.asarray(factor_returns, dtype=float)
    if factors.ndim == 1:
        factors = factors[:, None]
    stocks = np.asarray(stock_returns, dtype=float)
    if stocks.ndim == 1:
        stocks = stocks[:, None]
    n, m = factors.shape
    d = selection.d
    if stocks.shape != (n, d):
        raise DimensionError(f"Stock returns {stocks.shape} do not match ({n}, {d})")
    if n < 2:
        raise InsufficientDataError("Need at least 2 observations to estimate covariances")

    joint = np.atleast_2d(np.cov(np.column_stack([factors, stocks]), rowvar=False, ddof=1))
    s00, s11, s10 = joint[:m, :m], joint[m:, m:], joint[m:, :m]

    rho0 = ledoit_wolf_intensity(s00, n, factors) if shrinkage.sigma0 else 0.0
    rho1 = ledoit_wolf_intensity(s11, n, stocks) if shrinkage.sigma1 else 0.0
    sigma0 = (1.0 - rho0) * s00 + rho0 * np.trace(s00) / m * np.eye(m)
    sigma1 = (1.0 - rho1) * s11 + rho1 * np.trace(s11) / d * np.eye(d)
    cross = s10
    attenuation = 1.0
    if shrinkage.attenuate_cross:
        # keeps the joint (factor, stock) covariance positive semi-definite after shrinkage
        attenuation = float(np.sqrt((1.0 - rho0) * (1.0 - rho1)))
        cross = attenuation * s10

    eta = np.full(m, r, dtype=float)
    eta[0] = eta1_estimate

    sigma0, sigma1, cross = sigma0 / dt, sigma1 / dt, cross / dt
    beta = linalg.solve(_sym(sigma0), cross.T, assume_a="pos").T
    mu_raw = selection.delta_hat * selection.theta_hat + selection.alpha + beta @ eta

    warnings: List[str] = []
    if attenuation < 1.0:
        warnings.append(f"cross covariance attenuated by {attenuation:.4f} "
                        f"(shrinkage rho0={rho0:.3f}, rho1={rho1:.3f})")
    if d < m:
        msg = f"constrained-infeasible: d={d} < m={m}, neutral portfolio restricted"
        warnings.append(msg)
        logger.warning(msg)

    deviation = float(np.linalg.norm(selection.beta_ols - beta)) if selection.beta_ols.size else 0.0
    logger.info(f"Assembled model d={d} m={m}: shrinkage rho0={rho0:.3f} rho1={rho1:.3f}, "
                f"|beta_ols - beta_model|={deviation:.3g}")

    return ModelParams.from_covariances(
        mu=mu_raw - r,
        theta=selection.theta_hat,
        delta=selection.delta_hat,
        sigma0=sigma0,
        sigma1=sigma1,
        cross=cross,
        r=r,
        gamma=gamma,
        eta=eta,
        tickers=selection.tickers,
        warnings=warnings,
        diagnostics={
            "shrinkage_sigma0": rho0,
            "shrinkage_sigma1": rho1,
            "beta_deviation": deviation,
            "n_obs": n,
        },
    )


# -------------------------------------------------------------------------------------------------
# 3) validate_stability_preconditions
# -------------------------------------------------------------------------------------------------
@dataclass(frozen=True)
class StabilityPreReport:
    d: int
    m: int
    beta_rank: int
    projector_rank: int
    restricted_rank: int
    delta_proportional_to_identity: bool
    sigma1_eig_min: float
    sigma1_eig_max: float
    sigma3_eig_min: float
    sigma3_eig_max: float

    @property
    def beta_full_rank(self) -> bool:
        return self.beta_rank == self.m

    @property
    def projection_condition(self) -> bool:
        """(I - P) delta beta has no null vector, P the orthogonal projector on range(beta)."""
        return self.restricted_rank == self.m

    @property
    def conditions_hold(self) -> bool:
        return self.beta_full_rank and self.projection_condition and not self.delta_proportional_to_identity

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d, "m": self.m, "beta_rank": self.beta_rank,
            "projector_rank": self.projector_rank, "restricted_rank": self.restricted_rank,
            "delta_proportional_to_identity": self.delta_proportional_to_identity,
            "sigma1_eig": [self.sigma1_eig_min, self.sigma1_eig_max],
            "sigma3_eig": [self.sigma3_eig_min, self.sigma3_eig_max],
            "conditions_hold": self.conditions_hold,
        }


def _rank(mat: np.ndarray) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    return int((s > RANK_TOL * max(1.0, s.max())).sum())


def validate_stability_preconditions(params: ModelParams) -> StabilityPreReport:
    """
    rank((I - P) delta) is at most d - m since I - P has that rank, so full rank d never holds for
    m >= 1; the check used is rank((I - P) delta beta) = m, i.e. delta maps no factor direction back
    into range(beta), together with delta not proportional to I. projector_rank is kept for the log.
    """
    beta, delta = params.beta, params.delta
    d, m = params.d, params.m
    btb = beta.T @ beta
    beta_rank = _rank(btb)

    projector = beta @ np.linalg.pinv(btb) @ beta.T
    residual = delta - projector @ delta
    diag = params.delta_vector
    proportional = bool(np.allclose(diag, diag[0], rtol=1e-12, atol=0.0))

    eig1 = np.linalg.eigvalsh(params.sigma1)
    eig3 = np.linalg.eigvalsh(params.sigma3)
    report = StabilityPreReport(
        d=d,
        m=m,
        beta_rank=beta_rank,
        projector_rank=_rank(residual),
        restricted_rank=_rank(residual @ beta),
        delta_proportional_to_identity=proportional,
        sigma1_eig_min=float(eig1.min()),
        sigma1_eig_max=float(eig1.max()),
        sigma3_eig_min=float(eig3.min()),
        sigma3_eig_max=float(eig3.max()),
    )
    if not report.conditions_hold:
        logger.warning(f"Neutral steady state not guaranteed: {report.to_dict()}")
    return report
