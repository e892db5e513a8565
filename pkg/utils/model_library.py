"""
Built-in test models, selectable by name from the command line and config files
"""
import inspect
import logging
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from models import ModelSpec, RegimeSpace
from utils.counterexample import cx_as_model
from utils.errors import ConfigError
from utils.lotka import default_lv_spec, lv_as_model, lv_spec_from_section
from utils.rate_families import constant_rates, parse_table, rate_bound_for, table_rates

logger = logging.getLogger(__name__)


def markovian_linear(mu: Tuple[float, ...] = (1.0, -1.0), a: Tuple[float, ...] = (1.0, 2.0),
                     s: Tuple[float, ...] = (0.5, 0.3), q12: float = 0.8, q21: float = 0.6) -> ModelSpec:
    """b(x, i) = mu_i - a_i x, sigma(x, i) = s_i (1 + sin(x) / 2), constant Q"""
    mu, a, s = np.asarray(mu, dtype=float), np.asarray(a, dtype=float), np.asarray(s, dtype=float)
    Q = np.array([[-q12, q12], [q21, -q21]])
    rates, rate_jac, top = constant_rates(Q, 1)
    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(2),
        drift=lambda x, i: mu[i - 1] - a[i - 1] * x,
        diffusion=lambda x, i: np.array([[s[i - 1] * (1.0 + 0.5 * np.sin(x[0]))]]),
        rates=rates, rate_bound=rate_bound_for(top),
        drift_jac=lambda x, i: np.array([[-a[i - 1]]]),
        diffusion_jac=lambda x, i: np.array([[[0.5 * s[i - 1] * np.cos(x[0])]]]),
        rate_jac=rate_jac, holder_exponent=1.0, name='markovian-linear'
    )


def holder_rate(c: float = 1.0, lam: float = 0.5, center: float = 0.0, eps: float = 0.1,
                q21: float = 0.5) -> ModelSpec:
    """
    Frozen state, q_12(x) = c min(|x - center|^lam, 1) + eps: the regime
    rates are only lam-Hölder at the center
    """
    def rates(x):
        q12 = c * min(abs(float(x[0]) - center) ** lam, 1.0) + eps
        return np.array([[-q12, q12], [q21, -q21]])

    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(2),
        drift=lambda x, i: np.zeros(1),
        diffusion=lambda x, i: np.zeros((1, 1)),
        rates=rates, rate_bound=rate_bound_for(max(c + eps, q21)),
        drift_jac=lambda x, i: np.zeros((1, 1)),
        diffusion_jac=lambda x, i: np.zeros((1, 1, 1)),
        holder_exponent=lam, name='holder-rate'
    )


def _tanh_rates(base: float, amp: float):
    def rates(x):
        t = np.tanh(x[0])
        q12, q21 = base + amp * t, base - amp * t
        return np.array([[-q12, q12], [q21, -q21]])

    def rate_jac(x):
        g = amp / np.cosh(x[0]) ** 2
        # d q_21 / dx = -g
        return np.array([[-g, g], [-g, g]]).reshape(2, 2, 1)

    return rates, rate_jac, base + abs(amp)


def smooth_rate(mu: Tuple[float, ...] = (0.5, -0.5), a: float = 1.0, s: float = 0.3,
                base: float = 1.0, amp: float = 0.5) -> ModelSpec:
    """q_12 = base + amp tanh(x), q_21 = base - amp tanh(x), linear drift, additive noise"""
    mu = np.asarray(mu, dtype=float)
    rates, rate_jac, top = _tanh_rates(base, amp)
    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(2),
        drift=lambda x, i: mu[i - 1] - a * x,
        diffusion=lambda x, i: np.array([[s]]),
        rates=rates, rate_bound=rate_bound_for(top),
        drift_jac=lambda x, i: np.array([[-a]]),
        diffusion_jac=lambda x, i: np.zeros((1, 1, 1)),
        rate_jac=rate_jac, holder_exponent=1.0, name='smooth-rate'
    )


def geometric(a: float = 0.1, s: float = 0.2) -> ModelSpec:
    """Single-regime geometric Brownian motion"""
    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(1),
        drift=lambda x, i: a * x,
        diffusion=lambda x, i: np.array([[s * x[0]]]),
        rates=lambda x: np.zeros((1, 1)), rate_bound=1.0,
        drift_jac=lambda x, i: np.array([[a]]),
        diffusion_jac=lambda x, i: np.array([[[s]]]),
        rate_jac=lambda x: np.zeros((1, 1, 1)), holder_exponent=1.0, name='geometric'
    )


def local_lipschitz(mu: Tuple[float, ...] = (0.0, 0.5), s: float = 0.5, base: float = 1.0,
                    amp: float = 0.5) -> ModelSpec:
    """Cubic drift x - x^3 + mu_i: locally but not globally Lipschitz"""
    mu = np.asarray(mu, dtype=float)
    rates, rate_jac, top = _tanh_rates(base, amp)
    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(2),
        drift=lambda x, i: x - x ** 3 + mu[i - 1],
        diffusion=lambda x, i: np.array([[s]]),
        rates=rates, rate_bound=rate_bound_for(top),
        drift_jac=lambda x, i: np.array([[1.0 - 3.0 * x[0] ** 2]]),
        diffusion_jac=lambda x, i: np.zeros((1, 1, 1)),
        rate_jac=rate_jac, holder_exponent=1.0, name='local-lipschitz'
    )


def counterexample(delta: float = 0.0) -> ModelSpec:
    return cx_as_model(delta if delta > 0 else None)


def lotka(sections: Optional[Mapping[str, Mapping[str, str]]] = None) -> ModelSpec:
    section = (sections or {}).get('lotka')
    spec = lv_spec_from_section(section) if section else default_lv_spec()
    return lv_as_model(spec)


def user_table(mu: Tuple[float, ...] = (0.0,), a: float = 1.0, s: float = 0.5,
               sections: Optional[Mapping[str, Mapping[str, str]]] = None) -> ModelSpec:
    """
    One-dimensional diffusion b = mu_i - a x, sigma = s, with rates interpolated
    from the [rates] table (knots in |x|, one m0 x m0 matrix per knot)
    """
    section = (sections or {}).get('rates')
    if not section:
        raise ConfigError("user-table needs a [rates] section with 'knots' and 'table'", key='rates')
    for key in section:
        if key not in ('knots', 'table', 'm0'):
            raise ConfigError(f"unknown key '{key}' in [rates]", key=key)
    try:
        knots = [float(v) for v in section['knots'].split(',')]
        values = [float(v) for v in section['table'].replace(';', ',').split(',') if v.strip()]
    except KeyError as e:
        raise ConfigError(f"[rates] is missing {e}", key=str(e).strip("'"))
    except ValueError:
        raise ConfigError("[rates] knots and table must be comma-separated numbers", key='table')
    m0 = int(section.get('m0') or round((len(values) / len(knots)) ** 0.5))
    tables = parse_table(knots, values, m0)
    rates, rate_jac, top = table_rates(knots, tables)

    mu = np.resize(np.asarray(mu, dtype=float), m0)
    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(m0),
        drift=lambda x, i: mu[i - 1] - a * x,
        diffusion=lambda x, i: np.array([[s]]),
        rates=rates, rate_bound=rate_bound_for(top),
        drift_jac=lambda x, i: np.array([[-a]]),
        diffusion_jac=lambda x, i: np.zeros((1, 1, 1)),
        rate_jac=rate_jac, name='user-table'
    )


MODELS: Dict[str, Callable[..., ModelSpec]] = {
    'markovian-linear': markovian_linear,
    'holder-rate': holder_rate,
    'smooth-rate': smooth_rate,
    'geometric': geometric,
    'local-lipschitz': local_lipschitz,
    'counterexample': counterexample,
    'lotka': lotka,
    'user-table': user_table,
}


def _coerce(value: str, default, key: str):
    try:
        if isinstance(default, tuple):
            return tuple(float(v) for v in str(value).split(',') if v.strip())
        if isinstance(default, int) and not isinstance(default, bool):
            return int(value)
        return float(value)
    except ValueError:
        raise ConfigError(f"model parameter '{key}' has an invalid value '{value}'", key=key)


def get_model(name: str, params: Optional[Mapping[str, str]] = None,
              sections: Optional[Mapping[str, Mapping[str, str]]] = None) -> ModelSpec:
    """Build a catalogue model, converting string parameters against the factory defaults"""
    if name not in MODELS:
        raise ConfigError(f"unknown model '{name}' (choose from {', '.join(sorted(MODELS))})", key='model')
    factory = MODELS[name]
    signature = inspect.signature(factory)
    kwargs = {}
    for key, value in (params or {}).items():
        if key not in signature.parameters or key == 'sections':
            raise ConfigError(f"model '{name}' has no parameter '{key}'", key=key)
        kwargs[key] = _coerce(value, signature.parameters[key].default, key)
    if 'sections' in signature.parameters:
        kwargs['sections'] = sections
    model = factory(**kwargs)
    logger.debug(f"Built model {model.name} with {kwargs}")
    return model
