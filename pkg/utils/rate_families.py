"""
Built-in families of state-dependent rate matrices Q(x)

Each family returns (rates, rate_jac, max_rate): callables x -> (m0, m0) and
x -> (m0, m0, r), and the largest off-diagonal rate the family can produce.
"""
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)


def _with_diagonal(off: np.ndarray) -> np.ndarray:
    off = off - np.diag(np.diag(off))
    return off - np.diag(off.sum(axis=1))


def as_square(values, m0: int, key: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size != m0 * m0:
        raise ConfigError(f"{key} needs {m0 * m0} entries (row-major {m0}x{m0}), got {arr.size}", key=key)
    return arr.reshape(m0, m0)


def rate_bound_for(max_rate: float) -> float:
    """A uniform bound strictly above every rate of a family"""
    return max(1.0, 1.5 * max_rate)


def constant_rates(Q, r: int) -> Tuple[Callable, Callable, float]:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionError(f"rate matrix must be square, got shape {Q.shape}")
    m0 = Q.shape[0]
    zeros = np.zeros((m0, m0, r))
    off = Q - np.diag(np.diag(Q))
    return (lambda x: Q), (lambda x: zeros), float(off.max()) if m0 > 1 else 0.0


def logistic_rates(q_low, q_high, steepness: float, midpoint: float, r: int) -> Tuple[Callable, Callable, float]:
    """q_ij(x) = low_ij + (high_ij - low_ij) / (1 + exp(-steepness (|x| - midpoint)))"""
    low = np.asarray(q_low, dtype=float)
    high = np.asarray(q_high, dtype=float)
    if low.shape != high.shape or low.ndim != 2:
        raise DimensionError("logistic rate family needs two square matrices of equal shape")
    m0 = low.shape[0]

    def weight(x):
        return 1.0 / (1.0 + np.exp(-steepness * (np.linalg.norm(x) - midpoint)))

    def rates(x):
        return _with_diagonal(low + (high - low) * weight(x))

    def rate_jac(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = np.linalg.norm(x)
        if n == 0.0:
            return np.zeros((m0, m0, r))
        s = weight(x)
        grad = steepness * s * (1.0 - s) * x / n
        return np.einsum('ij,b->ijb', _with_diagonal(high - low), grad)

    off = np.maximum(low, high) - np.diag(np.diag(np.maximum(low, high)))
    return rates, rate_jac, float(off.max()) if m0 > 1 else 0.0


def table_rates(knots: Sequence[float], tables: np.ndarray) -> Tuple[Callable, Optional[Callable], float]:
    """
    Linear interpolation in |x| between full matrices given at the knots,
    constant beyond the first and last knot. Tables are used as given so a
    defective table shows up in validation.
    """
    knots = np.asarray(knots, dtype=float)
    tables = np.asarray(tables, dtype=float)
    if tables.ndim != 3 or tables.shape[0] != knots.size or tables.shape[1] != tables.shape[2]:
        raise DimensionError(f"rate table must have shape (knots, m0, m0), got {tables.shape}")
    if knots.size > 1 and np.any(np.diff(knots) <= 0):
        raise ConfigError("rate table knots must be strictly increasing", key='knots')
    m0 = tables.shape[1]
    flat = tables.reshape(knots.size, m0 * m0)

    def rates(x):
        n = float(np.linalg.norm(x))
        if knots.size == 1:
            return tables[0]
        return np.array([np.interp(n, knots, flat[:, e]) for e in range(m0 * m0)]).reshape(m0, m0)

    off = tables - np.einsum('kii->ki', tables)[:, :, None] * np.eye(m0)[None]
    return rates, None, float(off.max()) if m0 > 1 else 0.0


def parse_table(knots: Sequence[float], values: Sequence[float], m0: int) -> np.ndarray:
    expected = len(knots) * m0 * m0
    if len(values) != expected:
        raise ConfigError(f"rate table needs {expected} values ({len(knots)} knots of {m0}x{m0}), "
                          f"got {len(values)}", key='table')
    return np.asarray(values, dtype=float).reshape(len(knots), m0, m0)
