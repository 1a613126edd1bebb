# tests/conftest.py

import numpy as np
import pytest

from schemas.config import SynthConfig
from tools.model import ModelParams
from tools.synth import rng_for


def random_params(seed, d=None, m=None, gamma=-70.0, delta_range=(5.0, 60.0), delta=None, r=0.01):
    """Random market whose cross covariance is L sigma0, so beta = L and sigma3 is the idiosyncratic diagonal."""
    rng = rng_for(seed)
    d = d or int(rng.integers(2, 7))
    m = m or int(rng.integers(1, d))
    sigma0 = np.diag(rng.uniform(0.01, 0.05, m))
    loadings = rng.normal(0.0, 0.5, (d, m))
    loadings[:, 0] += 1.0
    idio = rng.uniform(0.04, 0.16, d)
    sigma1 = loadings @ sigma0 @ loadings.T + np.diag(idio)
    if delta is None:
        delta = rng.uniform(*delta_range, d)
    delta = np.asarray(delta, dtype=float)
    theta = rng.normal(0.0, 0.01, d)
    eta = np.concatenate([[0.06], np.full(m - 1, r)])
    return ModelParams.from_covariances(
        mu=loadings @ eta + delta * theta - r,
        theta=theta,
        delta=delta,
        sigma0=sigma0,
        sigma1=0.5 * (sigma1 + sigma1.T),
        cross=loadings @ sigma0,
        r=r,
        gamma=gamma,
        eta=eta,
        tickers=[f"S{i + 1:02d}" for i in range(d)],
    )


def params_from_synth(config: SynthConfig, gamma: float) -> ModelParams:
    return ModelParams.from_covariances(
        mu=np.asarray(config.mu) - config.r,
        theta=config.theta,
        delta=config.delta,
        sigma0=config.sigma0,
        sigma1=config.sigma1,
        cross=config.cross,
        r=config.r,
        gamma=gamma,
        eta=config.eta,
        tickers=config.ticker_names(),
    )


@pytest.fixture
def make_params():
    return random_params


@pytest.fixture
def synth_params():
    return params_from_synth


@pytest.fixture
def small_market():
    """d=3, m=2 market with moderate mean reversion."""
    return params_from_synth(SynthConfig(d=3, m=2, delta=[10.0, 15.0, 20.0]), gamma=-5.0)
