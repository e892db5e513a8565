"""
The two-regime drift model whose difference quotients are not Cauchy in L^1

dX = b(alpha) dt with b(1) = 0, b(2) = 1; alpha leaves regime 1 at rate f(X)
with f(x) = x on [1, 2] and never returns. Started at (1 + x, 1) the path is
X(T) = 1 + x + T - T ^ tau^{1+x}, where the switching clocks of the starts
1, 1 + 1/n, 1 + 2/n are built from three independent exponentials.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import roots_legendre

from config import Config
from models import ModelSpec, RegimeSpace, smoothstep, smoothstep_slope
from utils.errors import DomainError, OracleError
from utils.mc import McEstimate, mc_estimate
from utils.paths import NoiseStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CxDraw:
    """Competing clocks Y0 ~ Exp(1), Y1, Y2 ~ Exp(1/n)"""
    y0: float
    y1: float
    y2: float

    def __post_init__(self):
        if min(self.y0, self.y1, self.y2) < 0:
            raise DomainError("exponential clocks must be nonnegative")

    @property
    def tau_1(self) -> float:
        return self.y0

    @property
    def tau_1n(self) -> float:
        """Switching time from 1 + 1/n"""
        return min(self.y0, self.y1)

    @property
    def tau_2n(self) -> float:
        """Switching time from 1 + 2/n"""
        return min(self.y0, self.y1, self.y2)


def _check_n(n):
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")


def cx_sample(n: int, stream: NoiseStream) -> CxDraw:
    _check_n(n)
    y0 = float(stream.exponential(1.0))
    y1 = float(stream.exponential(float(n)))
    y2 = float(stream.exponential(float(n)))
    return CxDraw(y0=y0, y1=y1, y2=y2)


def cx_quotients(draw: CxDraw, n: int, T: float) -> Tuple[float, float]:
    """(Z^{1+1/n}, Z^{1+2/n}) with Z^{1+x} = 1 + (T ^ tau^1 - T ^ tau^{1+x}) / x"""
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")
    base = min(T, draw.tau_1)
    z1 = 1.0 + (base - min(T, draw.tau_1n)) * n
    z2 = 1.0 + (base - min(T, draw.tau_2n)) * n / 2.0
    return z1, z2


def cx_exact_paths(draw: CxDraw, n: int, T: float) -> Dict[str, float]:
    """X^{1+x,1}(T) for x = 0, 1/n, 2/n"""
    return {
        'x=0': 1.0 + T - min(T, draw.tau_1),
        'x=1/n': 1.0 + 1.0 / n + T - min(T, draw.tau_1n),
        'x=2/n': 1.0 + 2.0 / n + T - min(T, draw.tau_2n),
    }


def cx_gap_estimate(n: int, T: float, n_paths: int, seed: int, threads: Optional[int] = None) -> McEstimate:
    """Monte Carlo of E|Z^{1+2/n} - Z^{1+1/n}| with the exact sampler"""
    _check_n(n)
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")

    def per_path(stream):
        draw = cx_sample(n, stream)
        # nested mark intervals order the clocks on every draw
        assert draw.tau_2n <= draw.tau_1n <= draw.tau_1
        z1, z2 = cx_quotients(draw, n, T)
        return abs(z2 - z1)

    estimate = mc_estimate(per_path, n_paths, seed, threads)
    logger.info(f"Counterexample gap n={n} T={T}: {estimate.mean:.6g} ± {estimate.stderr:.2g}")
    return estimate


def cx_lower_bound(n: int, T: float) -> float:
    """(T/6) (1 - exp(-(1 + 2/n) T/3)) (exp(-2T/3) - exp(-T))"""
    _check_n(n)
    return (T / 6.0) * (1.0 - math.exp(-(1.0 + 2.0 / n) * T / 3.0)) * (math.exp(-2.0 * T / 3.0) - math.exp(-T))


def cx_lower_bound_limit(T: float) -> float:
    """The n -> infinity limit of cx_lower_bound"""
    return (T / 6.0) * (1.0 - math.exp(-T / 3.0)) * (math.exp(-2.0 * T / 3.0) - math.exp(-T))


def _y2_expectation(c, m, lam):
    """
    E |c - min(m, Y)/2| for Y ~ Exp(lam), in closed form.

    The part Y < m integrates (c - y/2) lam e^{-lam y} with antiderivative
    F(y) = e^{-lam y} (1/(2 lam) - c + y/2), split where the sign flips.
    """
    def F(y):
        return np.exp(-lam * y) * (0.5 / lam - c + 0.5 * y)

    y_star = np.clip(2.0 * c, 0.0, m)
    body = 2.0 * F(y_star) - F(0.0) - F(m)
    tail = np.exp(-lam * m) * np.abs(c - 0.5 * m)
    return body + tail


def _gap_quadrature(n: int, T: float, nodes: int) -> float:
    lam = 1.0 / n
    t, w = roots_legendre(nodes)

    def mapped(lo, hi):
        # Gauss-Legendre nodes and weights on [lo, hi], broadcast over lo/hi
        half = 0.5 * (hi - lo)
        return lo + half * (t + 1.0), half * w

    def inner(a0):
        """E over (Y1, Y2) of |D| / n given T ^ Y0 = a0"""
        a0 = np.asarray(a0, dtype=float)[:, None]
        total = np.exp(-lam * a0[:, 0]) * _y2_expectation(0.5 * a0[:, 0], a0[:, 0], lam)
        for lo, hi in ((0.0 * a0, 0.5 * a0), (0.5 * a0, a0)):
            y1, wy = mapped(lo, hi)
            integrand = _y2_expectation(y1 - 0.5 * a0, y1, lam) * lam * np.exp(-lam * y1)
            total = total + (integrand * wy).sum(axis=1)
        return total

    y0, wy0 = mapped(0.0, T)
    body = float((inner(y0) * np.exp(-y0) * wy0).sum())
    tail = math.exp(-T) * float(inner(np.array([T]))[0])
    return n * (body + tail)


def cx_gap_oracle(n: int, T: float, rtol: float = Config.ORACLE_RTOL, max_nodes: int = 512) -> float:
    """
    Deterministic E|Z^{1+2/n} - Z^{1+1/n}|.

    Y2 is integrated in closed form; (Y0, Y1) by tensor-product Gauss-Legendre
    split at the kinks, with the mass beyond T carried exactly. Nodes double
    until two successive results agree to rtol.
    """
    _check_n(n)
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")

    nodes = 8
    previous = _gap_quadrature(n, T, nodes)
    while nodes < max_nodes:
        nodes *= 2
        current = _gap_quadrature(n, T, nodes)
        if abs(current - previous) <= rtol * abs(current):
            return current
        previous = current
    raise OracleError(f"gap quadrature for n={n}, T={T} did not converge to rtol={rtol} with {max_nodes} nodes")


def cx_decoupling_probability(delta: float, T: float) -> float:
    """P(tau^Delta <= T) for the coupled starts (1, 1 + delta)"""
    return delta / (1.0 + delta) * (1.0 - math.exp(-(1.0 + delta) * T))


def _bump(x: float) -> float:
    """f(x) = x on [1, 2], C^2 down to 0 on [0.5, 1] and [2, 2.5], 0 outside"""
    if x <= 0.5 or x >= 2.5:
        return 0.0
    if x < 1.0:
        return x * float(smoothstep((x - 0.5) / 0.5))
    if x > 2.0:
        return x * float(smoothstep((2.5 - x) / 0.5))
    return x


def _bump_slope(x: float) -> float:
    if x <= 0.5 or x >= 2.5:
        return 0.0
    if x < 1.0:
        s = (x - 0.5) / 0.5
        return float(smoothstep(s)) + x * smoothstep_slope(s) / 0.5
    if x > 2.0:
        s = (2.5 - x) / 0.5
        return float(smoothstep(s)) - x * smoothstep_slope(s) / 0.5
    return 1.0


def cx_as_model(delta: Optional[float] = None) -> ModelSpec:
    """The counterexample as a generic ModelSpec, for cross-checking the path engine"""
    if delta is not None and not 0 < delta <= 1:
        raise DomainError(f"perturbation must lie in (0, 1] so that 1 + delta stays in [1, 2], got {delta}")

    def drift(x, i):
        return np.array([0.0 if i == 1 else 1.0])

    def diffusion(x, i):
        return np.zeros((1, 1))

    def rates(x):
        f = _bump(float(x[0]))
        return np.array([[-f, f], [0.0, 0.0]])

    def rate_jac(x):
        s = _bump_slope(float(x[0]))
        return np.array([[-s, s], [0.0, 0.0]]).reshape(2, 2, 1)

    return ModelSpec(
        r=1, d=1, regimes=RegimeSpace(2),
        drift=drift, diffusion=diffusion, rates=rates, rate_bound=3.0,
        drift_jac=lambda x, i: np.zeros((1, 1)),
        diffusion_jac=lambda x, i: np.zeros((1, 1, 1)),
        rate_jac=rate_jac,
        holder_exponent=1.0,
        name='counterexample'
    )
