import numpy as np
import pytest

from models import ModelSpec, RegimeSpace


def constant_model(m0=1, Q=None, drift=None, a=0.0, s=0.0, name='fixture'):
    """One-dimensional model with b = a x (or a custom drift), sigma = s and constant rates"""
    Q = np.zeros((m0, m0)) if Q is None else np.asarray(Q, dtype=float)
    top = float((Q - np.diag(np.diag(Q))).max()) if m0 > 1 else 0.0
    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(m0),
        drift=drift or (lambda x, i: a * x),
        diffusion=lambda x, i: np.array([[s]]),
        rates=lambda x: Q,
        rate_bound=max(1.0, 1.5 * top),
        drift_jac=lambda x, i: np.array([[a]]),
        diffusion_jac=lambda x, i: np.zeros((1, 1, 1)),
        rate_jac=lambda x: np.zeros((m0, m0, 1)),
        holder_exponent=1.0,
        name=name
    )


@pytest.fixture
def make_model():
    return constant_model


@pytest.fixture
def frozen_two_regime():
    """Nothing moves: zero drift, zero noise, zero rates, two regimes"""
    return constant_model(m0=2)


@pytest.fixture
def uniform_three_regime():
    """Every off-diagonal rate equal to 1, so the holding rate is m0 - 1"""
    Q = np.ones((3, 3)) - 3.0 * np.eye(3)
    return constant_model(m0=3, Q=Q, a=-0.5, s=0.3)
