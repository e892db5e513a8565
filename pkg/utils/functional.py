"""
Change-of-measure representation of u(T, x, i) = E phi(X(T), alpha(T)) and its
x-derivative.

Paths are drawn under the auxiliary uniform chain chi (holding rate m0 - 1,
uniform jumps) and reweighted by the likelihood ratio of the state-dependent
chain. Regime labels are 1-based; phi(x, j) and phi_x(x, j) take the state
vector and a label.
"""
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import stats

from config import Config
from models import ModelSpec, holding_rates
from utils.errors import CapabilityError, DomainError
from utils.mc import McEstimate, mc_estimate, mc_map, summarize
from utils.reporting import write_csv
from utils.paths import (ChainPath, NoiseStream, PathSample, TangentPath, TimeGrid, simulate_aux_chain,
                         simulate_path, simulate_tangent, simulate_z_path)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightedPath:
    """A Z path under the auxiliary chain together with its likelihood ratio"""
    zpath: PathSample
    chain: ChainPath
    weight: float
    eta: Optional[TangentPath] = None
    jump_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    transition_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    holding_integral: float = 0.0
    prefactor: float = 1.0


@dataclass
class GradientEstimate:
    value: McEstimate
    gradient: List[McEstimate]
    n_max: int
    truncated_mass: float
    directions: List[List[float]] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _direction(model: ModelSpec, direction) -> np.ndarray:
    if direction is None:
        e = np.zeros(model.r)
        e[0] = 1.0
        return e
    e = np.atleast_1d(np.asarray(direction, dtype=float))
    if e.shape != (model.r,):
        raise DomainError(f"direction must have length {model.r}, got {e.shape}")
    norm = np.linalg.norm(e)
    if norm == 0.0:
        raise DomainError("direction must be nonzero")
    return e / norm


def _holding_integral(model: ModelSpec, zpath: PathSample) -> float:
    """Trapezoid rule for int_0^T q_chi(s)(Z(s)) ds, regime taken from the left of each step"""
    rates = np.array([holding_rates(model, x) for x in zpath.states])
    left = zpath.regimes[:-1] - 1
    k = np.arange(len(zpath.steps))
    return float((0.5 * (rates[k, left] + rates[k + 1, left]) * zpath.steps).sum())


def _transition_rates(model: ModelSpec, zpath: PathSample, chain: ChainPath, jump_indices: np.ndarray) -> np.ndarray:
    values = []
    for k, idx in enumerate(jump_indices):
        Qz = model.Q(zpath.states[idx])
        values.append(Qz[chain.regimes[k] - 1, chain.regimes[k + 1] - 1])
    return np.asarray(values, dtype=float)


def _jump_indices(zpath: PathSample, chain: ChainPath) -> np.ndarray:
    # the union grid holds every jump time exactly
    return np.searchsorted(zpath.times, chain.jump_times).astype(int)


def path_weight(model: ModelSpec, zpath: PathSample, chain: ChainPath, T: float) -> float:
    """
    exp((m0 - 1) T) exp(-int q_chi(Z)) prod_k q_{i_k i_{k+1}}(Z(theta_{k+1})).
    A forbidden transition on the chain path gives weight 0.
    """
    idx = _jump_indices(zpath, chain)
    trans = _transition_rates(model, zpath, chain, idx)
    if np.any(trans <= 0.0):
        return 0.0
    log_weight = (model.m0 - 1) * T - _holding_integral(model, zpath) + float(np.log(trans).sum())
    return math.exp(log_weight)


def build_weighted_path(model: ModelSpec, x, i: int, grid: TimeGrid, stream: NoiseStream,
                        with_tangent: bool = False) -> WeightedPath:
    """Chain first, then the Z path on the union grid, then eta replaying the Z increments"""
    chain = simulate_aux_chain(model.regimes, i, grid.T, stream)
    zpath = simulate_z_path(model, x, chain, grid, stream)
    idx = _jump_indices(zpath, chain)
    trans = _transition_rates(model, zpath, chain, idx)
    integral = _holding_integral(model, zpath)
    prefactor = math.exp((model.m0 - 1) * grid.T)
    if np.any(trans <= 0.0):
        weight = 0.0
    else:
        weight = prefactor * math.exp(-integral) * float(np.prod(trans))
    eta = simulate_tangent(model, zpath) if with_tangent else None
    return WeightedPath(zpath=zpath, chain=chain, weight=weight, eta=eta, jump_indices=idx,
                        transition_rates=trans, holding_integral=integral, prefactor=prefactor)


def functional_value_cm(model: ModelSpec, phi: Callable, x, i: int, T: float, grid: TimeGrid,
                        n_paths: int, seed: int, threads: Optional[int] = None) -> McEstimate:
    """E[phi(Z_T, chi_T) * weight]"""
    if abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"grid horizon {grid.T} does not match T = {T}")

    def per_path(stream):
        wp = build_weighted_path(model, x, i, grid, stream)
        if wp.weight == 0.0:
            return 0.0
        return float(phi(wp.zpath.final_state, wp.chain.regimes[-1])) * wp.weight

    return mc_estimate(per_path, n_paths, seed, threads)


def direct_value(model: ModelSpec, phi: Callable, x, i: int, grid: TimeGrid, n_paths: int, seed: int,
                 threads: Optional[int] = None) -> McEstimate:
    """Plain Monte Carlo of E phi(X_T, alpha_T) with the thinning simulator"""
    def per_path(stream):
        path = simulate_path(model, x, i, grid, stream)
        return float(phi(path.final_state, path.final_regime))

    return mc_estimate(per_path, n_paths, seed, threads)


def _rate_gradient_integral(model: ModelSpec, wp: WeightedPath, eta_e: np.ndarray) -> float:
    """Trapezoid rule for int eta(s) e . grad q_chi(s)(Z(s)) ds on the union grid"""
    zpath = wp.zpath
    total = 0.0
    grads = [model.Q_x(x) for x in zpath.states]
    for k, h in enumerate(zpath.steps):
        r = int(zpath.regimes[k]) - 1

        def g(idx):
            row = grads[idx][r]
            return float((row.sum(axis=0) - row[r]) @ eta_e[idx])

        total += 0.5 * (g(k) + g(k + 1)) * h
    return total


def zeta_hat_terms(model: ModelSpec, phi: Callable, phi_x: Callable, wp: WeightedPath,
                   direction=None) -> np.ndarray:
    """
    The three parts of zeta_hat for the path's realized jump count: the
    pathwise term, the transition-rate derivative terms and the holding-rate
    derivative term
    """
    if model.rate_jac is None:
        raise CapabilityError(f"model {model.name} has no rate derivatives; zeta_hat unavailable")
    e = _direction(model, direction)
    eta = wp.eta if wp.eta is not None else simulate_tangent(model, wp.zpath)
    eta_e = eta.values @ e

    zpath, chain = wp.zpath, wp.chain
    z_T, i_n = zpath.final_state, chain.regimes[-1]
    phi_T = float(phi(z_T, i_n))
    grad_phi = np.asarray(phi_x(z_T, i_n), dtype=float).reshape(model.r)
    base = wp.prefactor * math.exp(-wp.holding_integral)

    pathwise = float(grad_phi @ eta_e[-1]) * wp.weight

    transitions = 0.0
    for j, idx in enumerate(wp.jump_indices):
        dq = model.Q_x(zpath.states[idx])[chain.regimes[j] - 1, chain.regimes[j + 1] - 1]
        others = float(np.prod(np.delete(wp.transition_rates, j)))
        transitions += phi_T * base * others * float(dq @ eta_e[idx])

    holding = 0.0
    if wp.weight != 0.0:
        holding = -phi_T * wp.weight * _rate_gradient_integral(model, wp, eta_e)

    return np.array([pathwise, transitions, holding])


def zeta_hat(model: ModelSpec, phi: Callable, phi_x: Callable, wp: WeightedPath, T: float,
             direction=None) -> float:
    if abs(wp.chain.T - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"weighted path horizon {wp.chain.T} does not match T = {T}")
    return float(zeta_hat_terms(model, phi, phi_x, wp, direction).sum())


def default_n_max(m0: int, T: float, tail: float = Config.TRUNCATION_TAIL) -> int:
    """Smallest n with P(Poisson((m0 - 1) T) >= n) < tail"""
    mu = (m0 - 1) * T
    n = 0
    while stats.poisson.sf(n - 1, mu) >= tail:
        n += 1
    return n


def gradient_cm(model: ModelSpec, phi: Callable, phi_x: Callable, x, i: int, T: float, grid: TimeGrid,
                n_paths: int, seed: int, directions: Optional[Sequence] = None, n_max: Optional[int] = None,
                threads: Optional[int] = None) -> GradientEstimate:
    """Value and zeta_hat gradient estimates from the same weighted paths"""
    if abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"grid horizon {grid.T} does not match T = {T}")
    if model.rate_jac is None:
        raise CapabilityError(f"model {model.name} has no rate derivatives; gradient unavailable")
    dirs = [_direction(model, d) for d in (directions or [None])]
    n_max = default_n_max(model.m0, T) if n_max is None else int(n_max)

    def per_path(stream):
        wp = build_weighted_path(model, x, i, grid, stream, with_tangent=True)
        value = float(phi(wp.zpath.final_state, wp.chain.regimes[-1])) * wp.weight
        if wp.chain.n_jumps >= n_max:
            return value, [0.0] * len(dirs), True
        grads = [float(zeta_hat_terms(model, phi, phi_x, wp, e).sum()) for e in dirs]
        return value, grads, False

    results = mc_map(per_path, n_paths, seed, threads)
    value = summarize([r[0] if r is not None else None for r in results])
    gradient = [summarize([r[1][c] if r is not None else None for r in results]) for c in range(len(dirs))]
    kept = [r for r in results if r is not None]
    truncated = sum(1 for r in kept if r[2]) / len(kept)
    if truncated > 0:
        logger.warning(f"{truncated:.3%} of paths reached the series depth n_max={n_max}")
    return GradientEstimate(value=value, gradient=gradient, n_max=n_max, truncated_mass=truncated,
                            directions=[d.tolist() for d in dirs])


def fd_gradient_oracle(model: ModelSpec, phi: Callable, x, i: int, T: float, h: float, n_paths: int, seed: int,
                       direction=None, grid: Optional[TimeGrid] = None,
                       threads: Optional[int] = None) -> McEstimate:
    """Central difference of direct simulation at x +- h e under common random numbers"""
    if not h > 0:
        raise DomainError(f"finite-difference step must be positive, got {h}")
    grid = grid or TimeGrid(T, Config.DEFAULT_N_STEPS)
    e = _direction(model, direction)
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def per_path(stream):
        up = simulate_path(model, x + h * e, i, grid, stream)
        down = simulate_path(model, x - h * e, i, grid, NoiseStream(stream.seed, stream.path_index))
        return (float(phi(up.final_state, up.final_regime)) - float(phi(down.final_state, down.final_regime))) / (2 * h)

    return mc_estimate(per_path, n_paths, seed, threads)


def write_gradient_csv(estimate: GradientEstimate, target: Optional[str], comments: Sequence[str] = (),
                       stream=None) -> str:
    header = ['component', 'value', 'stderr', 'n', 'n_max', 'truncated_mass']
    rows = [['u', estimate.value.mean, estimate.value.stderr, estimate.value.n, estimate.n_max,
             estimate.truncated_mass]]
    for c, g in enumerate(estimate.gradient):
        rows.append([f"du/dx[e{c + 1}]", g.mean, g.stderr, g.n, estimate.n_max, estimate.truncated_mass])
    return write_csv(target, header, rows, comments, stream=stream)
