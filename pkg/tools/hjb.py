# tools/hjb.py

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy import linalg

from .errors import (
    ConvergenceError, DegenerateSteadyStateError, DivergenceError, NumericError,
    UnsupportedRegimeError,
)
from .model import ModelParams, StabilityPreReport, validate_stability_preconditions

logger = logging.getLogger(__name__)

VARIANTS = ("unconstrained", "constrained")

CARE_TOL = 1e-10
CARE_ACCEPT_TOL = 1e-8
CARE_MAX_ITER = 100
STEPS_PER_REVERSION = 50
SEED_REVERSION_MULTIPLE = 20.0
MAX_SEED_HORIZON = 50.0
DIVERGENCE_BOUND = 1e12
EIG_CLIP = 1e-12


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class RiccatiCoefficients:
    """dC/dt = -(A'C + CA + CQC + P), C(T) = 0. `delta` only informs default step sizes."""
    Q: np.ndarray
    A: np.ndarray
    P: np.ndarray
    variant: str = "unconstrained"
    delta: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    def rates(self) -> tuple:
        """(slowest, fastest) mean-reversion rates per year used to size integration steps."""
        if self.delta is not None and self.delta.size:
            return float(self.delta.min()), float(self.delta.max())
        eig = np.linalg.eigvals(self.A)
        mags = np.abs(eig)
        slow = max(float(np.abs(eig.real).min()), 1e-3)
        return slow, max(float(mags.max()), 1.0)


@dataclass(frozen=True)
class RiccatiPath:
    tau: np.ndarray          # time to maturity T - t of each sample
    C: np.ndarray            # samples [k x d x d]
    C_final: np.ndarray
    max_eigenvalue: float


@dataclass(frozen=True)
class CareResult:
    C_bar: np.ndarray
    iterations: int
    residual: float
    seed_residual: float


@dataclass(frozen=True)
class ValuePaths:
    tau: np.ndarray
    C: np.ndarray
    b: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class CertificateReport:
    variant: str
    q_eig_min: float
    q_eig_max: float
    minus_p_eig_min: float
    minus_p_eig_max: float
    controllability_rank: int
    d: int
    stabilisable: bool
    preconditions: Optional[StabilityPreReport] = None

    @property
    def q_positive_definite(self) -> bool:
        return self.q_eig_min > 0

    @property
    def minus_p_psd(self) -> bool:
        return self.minus_p_eig_min >= -EIG_CLIP * max(1.0, abs(self.minus_p_eig_max))

    @property
    def observable(self) -> bool:
        return self.controllability_rank == self.d

    @property
    def guaranteed(self) -> bool:
        ok = self.q_positive_definite and self.minus_p_psd and self.observable and self.stabilisable
        if self.variant == "constrained" and self.preconditions is not None:
            ok = ok and self.preconditions.conditions_hold
        return ok

    @property
    def verdict(self) -> str:
        return "steady state guaranteed" if self.guaranteed else "steady state not guaranteed"

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "variant": self.variant,
            "q_eig": [self.q_eig_min, self.q_eig_max],
            "minus_p_eig": [self.minus_p_eig_min, self.minus_p_eig_max],
            "controllability_rank": self.controllability_rank,
            "d": self.d,
            "observable": self.observable,
            "stabilisable": self.stabilisable,
            "verdict": self.verdict,
        }
        if self.preconditions is not None:
            out["preconditions"] = self.preconditions.to_dict()
        return out


@dataclass(frozen=True)
class HJBSolution:
    variant: str
    C_bar: np.ndarray
    b_bar: np.ndarray
    L_bar: float
    growth_rate: float
    R_eigenvalues: np.ndarray
    certificate: Optional[CertificateReport] = None
    paths: Optional[ValuePaths] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "variant": self.variant,
            "C_bar": self.C_bar.tolist(),
            "b_bar": self.b_bar.tolist(),
            "L_bar": self.L_bar,
            "growth_rate": self.growth_rate,
            "R_eigenvalues_real": np.real(self.R_eigenvalues).tolist(),
            "diagnostics": self.diagnostics,
        }
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_dict()
        if self.paths is not None:
            out["paths"] = {
                "tau": self.paths.tau.tolist(),
                "a": self.paths.a.tolist(),
                "b": self.paths.b.tolist(),
            }
        return out


# -------------------------------------------------------------------------------------------------
# 1) build_coefficients
# -------------------------------------------------------------------------------------------------
def build_coefficients(params: ModelParams, variant: str = "unconstrained") -> RiccatiCoefficients:
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant: {variant}")
    if params.gamma >= 0:
        raise UnsupportedRegimeError(f"gamma must be negative, got {params.gamma}")

    k = params.gamma / (1.0 - params.gamma)
    M = params.precision(variant)
    s2, s3, delta = params.sigma2, params.sigma3, params.delta

    Q = _sym(2.0 * k * s2.T @ M @ s2 + 2.0 * s3)
    A = -k * s2.T @ M @ delta - delta
    P = _sym(0.5 * k * delta @ M @ delta)
    if not (np.isfinite(Q).all() and np.isfinite(A).all() and np.isfinite(P).all()):
        raise NumericError(f"Non-finite Riccati coefficients ({variant})")
    return RiccatiCoefficients(Q=Q, A=A, P=P, variant=variant, delta=params.delta_vector)


def riccati_rhs(coef: RiccatiCoefficients, C: np.ndarray) -> np.ndarray:
    """A'C + CA + CQC + P; zero at a steady state and dC/d(T - t) along the backward flow."""
    return coef.A.T @ C + C @ coef.A + C @ coef.Q @ C + coef.P


def riccati_residual(coef: RiccatiCoefficients, C: np.ndarray) -> float:
    return float(np.linalg.norm(riccati_rhs(coef, C)))


def default_steps(coef: RiccatiCoefficients, horizon: float) -> int:
    """Step no larger than 1/50 of the fastest mean-reversion time."""
    _, fast = coef.rates()
    return max(1, int(math.ceil(horizon * STEPS_PER_REVERSION * fast)))


# -------------------------------------------------------------------------------------------------
# 2) integrate_riccati
# -------------------------------------------------------------------------------------------------
def integrate_riccati(
    coef: RiccatiCoefficients,
    horizon: float,
    steps: Optional[int] = None,
    sample_every: Optional[int] = None,
) -> RiccatiPath:
    """Classical RK4 backward from C(T) = 0, symmetrized every step."""
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    steps = steps or default_steps(coef, horizon)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    sample_every = sample_every or max(1, steps // 100)

    h = horizon / steps
    C = np.zeros_like(coef.Q)
    taus, samples = [0.0], [C.copy()]
    worst = 0.0
    bound = DIVERGENCE_BOUND * (1.0 + np.linalg.norm(coef.P))

    for step in range(1, steps + 1):
        k1 = riccati_rhs(coef, C)
        k2 = riccati_rhs(coef, C + 0.5 * h * k1)
        k3 = riccati_rhs(coef, C + 0.5 * h * k2)
        k4 = riccati_rhs(coef, C + h * k3)
        C = _sym(C + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))

        if not np.isfinite(C).all() or np.abs(C).max() > bound:
            raise DivergenceError(
                f"Riccati integration diverged at step {step} of {steps} (is Q positive definite?)",
                step,
                {"variant": coef.variant, "h": h},
            )
        if step % sample_every == 0 or step == steps:
            worst = max(worst, float(np.linalg.eigvalsh(C).max()))
            taus.append(step * h)
            samples.append(C.copy())

    return RiccatiPath(tau=np.array(taus), C=np.array(samples), C_final=C, max_eigenvalue=worst)


# -------------------------------------------------------------------------------------------------
# 3) care_steady_state
# -------------------------------------------------------------------------------------------------
def _seed(coef: RiccatiCoefficients, horizon: Optional[float], steps: Optional[int]) -> np.ndarray:
    if horizon is None:
        slow, _ = coef.rates()
        horizon = min(MAX_SEED_HORIZON, SEED_REVERSION_MULTIPLE / slow)
    try:
        return integrate_riccati(coef, horizon, steps).C_final
    except DivergenceError as e:
        # -C solves the standard CARE A'X + XA - XQX + (-P) = 0
        logger.warning(f"Integration seed failed ({e}); seeding from the Schur CARE solution")
        r_inv = np.linalg.inv(coef.Q)
        return -_sym(linalg.solve_continuous_are(coef.A, np.eye(coef.d), -coef.P, r_inv))


def care_steady_state(
    coef: RiccatiCoefficients,
    seed: Optional[np.ndarray] = None,
    horizon: Optional[float] = None,
    steps: Optional[int] = None,
    tol: float = CARE_TOL,
    max_iter: int = CARE_MAX_ITER,
) -> CareResult:
    """
    Newton-Kleinman on A'C + CA + CQC + P = 0. Each step solves the Lyapunov equation
    (A + QC_k)' X + X (A + QC_k) = C_k Q C_k - P (Bartels-Stewart via scipy).
    """
    scale = 1.0 + np.linalg.norm(coef.P)
    C = _sym(seed) if seed is not None else _seed(coef, horizon, steps)
    seed_residual = riccati_residual(coef, C)
    best_C, best = C, seed_residual
    if best <= tol * scale:
        return CareResult(C_bar=C, iterations=0, residual=best, seed_residual=seed_residual)

    stalled = 0
    for it in range(1, max_iter + 1):
        closed = coef.A + coef.Q @ C
        rhs = C @ coef.Q @ C - coef.P
        C = _sym(linalg.solve_continuous_lyapunov(closed.T, rhs))
        if not np.isfinite(C).all():
            break
        res = riccati_residual(coef, C)
        if res < best:
            best_C, best = C, res
            stalled = 0
        else:
            stalled += 1
        if best <= tol * scale:
            return CareResult(C_bar=best_C, iterations=it, residual=best, seed_residual=seed_residual)
        if stalled >= 3:
            break

    if best <= CARE_ACCEPT_TOL * scale:
        logger.debug(f"Newton-Kleinman stopped at residual {best:.3g} (target {tol * scale:.3g})")
        return CareResult(C_bar=best_C, iterations=it, residual=best, seed_residual=seed_residual)
    raise ConvergenceError(
        f"Newton-Kleinman did not converge ({coef.variant}); best residual {best:.3g}",
        best,
        {"variant": coef.variant, "seed_residual": seed_residual},
    )


# -------------------------------------------------------------------------------------------------
# 4) solve_b_steady
# -------------------------------------------------------------------------------------------------
def _b_terms(params: ModelParams, variant: str, coef: RiccatiCoefficients, C: np.ndarray):
    """R(C) and forcing f(C) of db/dt = R b + f."""
    k = params.gamma / (1.0 - params.gamma)
    M = params.precision(variant)
    s2, delta = params.sigma2, params.delta
    R = -C @ coef.Q + k * delta @ M @ s2 + delta
    forcing = -C @ (2.0 * k * s2.T @ M @ params.mu + 2.0 * delta @ params.theta) + k * delta @ M @ params.mu
    return R, forcing


def solve_b_steady(params: ModelParams, variant: str, C_bar: np.ndarray, coef: Optional[RiccatiCoefficients] = None):
    """Returns (b_bar, R_bar eigenvalues)."""
    coef = coef or build_coefficients(params, variant)
    R, forcing = _b_terms(params, variant, coef, C_bar)
    eig = np.linalg.eigvals(R)
    if np.min(np.abs(eig)) <= 1e-12 * max(1.0, np.abs(eig).max()):
        raise DegenerateSteadyStateError(f"Steady-state b matrix is singular ({variant})", {"eigenvalues": np.real(eig).tolist()})
    b_bar = -np.linalg.solve(R, forcing)
    if (eig.real <= 0).any():
        logger.warning(f"R_bar has eigenvalues with non-positive real part ({variant}): {eig.real.min():.3g}")
    return b_bar, eig


# -------------------------------------------------------------------------------------------------
# 5) growth_constant
# -------------------------------------------------------------------------------------------------
def _L(params: ModelParams, variant: str, C: np.ndarray, b: np.ndarray) -> float:
    g = params.gamma
    h = g / (2.0 * (1.0 - g))
    M = params.precision(variant)
    s2, s3, mu = params.sigma2, params.sigma3, params.mu
    value = (
        -b @ (h * s2.T @ M @ s2 + 0.5 * s3) @ b
        - h * b @ s2.T @ M @ mu
        - h * mu @ M @ s2 @ b
        - params.theta @ params.delta @ b
        - h * mu @ M @ mu
        - np.trace(s3 @ C)
        - params.r * g
    )
    return float(value)


def growth_constant(params: ModelParams, C_bar: np.ndarray, b_bar: np.ndarray, variant: str = "unconstrained"):
    """(L_bar, growth_rate = -L_bar / gamma)."""
    L_bar = _L(params, variant, C_bar, np.asarray(b_bar, dtype=float))
    return L_bar, -L_bar / params.gamma


# -------------------------------------------------------------------------------------------------
# 6) finite-horizon (C, b, a) paths
# -------------------------------------------------------------------------------------------------
def integrate_value_paths(
    params: ModelParams,
    variant: str,
    horizon: float,
    steps: Optional[int] = None,
    sample_every: Optional[int] = None,
) -> ValuePaths:
    """Joint RK4 of C, b, a backward from zero terminal values; tau = T - t."""
    coef = build_coefficients(params, variant)
    steps = steps or default_steps(coef, horizon)
    sample_every = sample_every or max(1, steps // 200)
    h = horizon / steps
    d = params.d

    def rhs(C, b):
        R, forcing = _b_terms(params, variant, coef, C)
        return riccati_rhs(coef, C), -(R @ b + forcing), -_L(params, variant, C, b)

    C, b, a = np.zeros((d, d)), np.zeros(d), 0.0
    taus, Cs, bs, as_ = [0.0], [C.copy()], [b.copy()], [a]
    for step in range(1, steps + 1):
        c1, b1, a1 = rhs(C, b)
        c2, b2, a2 = rhs(C + 0.5 * h * c1, b + 0.5 * h * b1)
        c3, b3, a3 = rhs(C + 0.5 * h * c2, b + 0.5 * h * b2)
        c4, b4, a4 = rhs(C + h * c3, b + h * b3)
        C = _sym(C + (h / 6.0) * (c1 + 2 * c2 + 2 * c3 + c4))
        b = b + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
        a = a + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        if not (np.isfinite(C).all() and np.isfinite(b).all() and math.isfinite(a)):
            raise DivergenceError(f"Value-function integration diverged at step {step}", step)
        if step % sample_every == 0 or step == steps:
            taus.append(step * h)
            Cs.append(C.copy())
            bs.append(b.copy())
            as_.append(a)
    return ValuePaths(tau=np.array(taus), C=np.array(Cs), b=np.array(bs), a=np.array(as_))


# -------------------------------------------------------------------------------------------------
# 7) stability_certificate
# -------------------------------------------------------------------------------------------------
def _sqrt_factor(minus_p: np.ndarray) -> np.ndarray:
    """E with E'E = -P; eigenvalues below the clip level are zeroed."""
    w, v = np.linalg.eigh(_sym(minus_p))
    w = np.where(w < EIG_CLIP * max(1.0, np.abs(w).max()), 0.0, w)
    return np.diag(np.sqrt(w)) @ v.T


def _rank(mat: np.ndarray) -> int:
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s.max() == 0:
        return 0
    return int((s > 1e-10 * s.max()).sum())


def controllability_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[b, ab, ..., a^{d-1} b] with `a` scaled to unit norm (same column space)."""
    d = a.shape[0]
    norm = np.linalg.norm(a, 2)
    a = a / norm if norm > 0 else a
    blocks, block = [b], b
    for _ in range(d - 1):
        block = a @ block
        blocks.append(block)
    return np.hstack(blocks)


def _stabilisable(A: np.ndarray, Q: np.ndarray) -> bool:
    """Hautus test with B a square-root factor of Q."""
    B = _sqrt_factor(Q).T
    d = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= 0 and _rank(np.hstack([A - lam * np.eye(d), B])) < d:
            return False
    return True


def stability_certificate(coef: RiccatiCoefficients, params: Optional[ModelParams] = None) -> CertificateReport:
    q_eig = np.linalg.eigvalsh(coef.Q)
    mp_eig = np.linalg.eigvalsh(-coef.P)
    E = _sqrt_factor(-coef.P)
    rank = _rank(controllability_matrix(coef.A.T, E.T)) if np.abs(E).max(initial=0.0) > 0 else 0
    pre = None
    if coef.variant == "constrained" and params is not None:
        pre = validate_stability_preconditions(params)
    return CertificateReport(
        variant=coef.variant,
        q_eig_min=float(q_eig.min()),
        q_eig_max=float(q_eig.max()),
        minus_p_eig_min=float(mp_eig.min()),
        minus_p_eig_max=float(mp_eig.max()),
        controllability_rank=rank,
        d=coef.d,
        stabilisable=_stabilisable(coef.A, coef.Q),
        preconditions=pre,
    )


# -------------------------------------------------------------------------------------------------
# 8) solve_hjb: coefficients -> C_bar -> b_bar -> L_bar
# -------------------------------------------------------------------------------------------------
def solve_hjb(
    params: ModelParams,
    variant: str = "unconstrained",
    path_horizon: Optional[float] = None,
    path_steps: Optional[int] = None,
) -> HJBSolution:
    coef = build_coefficients(params, variant)
    certificate = stability_certificate(coef, params)
    if not certificate.guaranteed:
        logger.warning(f"{variant}: {certificate.verdict}")

    care = care_steady_state(coef)
    b_bar, eig = solve_b_steady(params, variant, care.C_bar, coef)
    L_bar, growth = growth_constant(params, care.C_bar, b_bar, variant)
    paths = None
    if path_horizon:
        paths = integrate_value_paths(params, variant, path_horizon, path_steps)

    logger.info(f"HJB {variant}: d={params.d}, growth rate {growth:.4f}/yr, "
                f"Newton iterations {care.iterations}, residual {care.residual:.2e}")
    return HJBSolution(
        variant=variant,
        C_bar=care.C_bar,
        b_bar=b_bar,
        L_bar=L_bar,
        growth_rate=growth,
        R_eigenvalues=eig,
        certificate=certificate,
        paths=paths,
        diagnostics={
            "newton_iterations": care.iterations,
            "care_residual": care.residual,
            "seed_residual": care.seed_residual,
            "c_bar_max_eigenvalue": float(np.linalg.eigvalsh(care.C_bar).max()),
            "r_bar_min_real": float(np.real(eig).min()),
        },
    )
