"""
Time discretization and trajectory generation

Euler-Maruyama for the continuous component, Poisson-mark thinning for the
regime. Rates are frozen at the step-start state and at most one regime
change is accepted per step. Per step a stream yields, in this order: the d
Brownian increments, the Poisson mark count, then (time, z) mark pairs.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from models import (ModelSpec, RegimeSpace, build_partition, coupled_rates_from_matrices, eval_h)
from utils.errors import CapabilityError, DivergenceError, DomainError, RateBoundError
from utils.reporting import write_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of [0, T]"""
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"horizon must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @classmethod
    def from_dt(cls, T: float, dt: float) -> 'TimeGrid':
        return cls(T=T, n_steps=max(1, int(round(T / dt))))


class NoiseStream:
    """
    Random source owned by one path.

    The draws are a pure function of (seed, path_index): the pair is mixed by
    numpy's SeedSequence hash into an independent PCG64 stream.
    """

    def __init__(self, seed: int, path_index: int):
        self.seed = int(seed)
        self.path_index = int(path_index)
        self.counter = 0
        self._rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.path_index,)))
        )

    def brownian(self, d: int, dt: float) -> np.ndarray:
        self.counter += 1
        return np.sqrt(dt) * self._rng.standard_normal(d)

    def normal(self, size=None):
        self.counter += 1
        return self._rng.standard_normal(size)

    def poisson(self, lam: float) -> int:
        self.counter += 1
        return int(self._rng.poisson(lam))

    def marks(self, count: int) -> np.ndarray:
        """count (time fraction, mark fraction) pairs, uniform on [0, 1)^2"""
        self.counter += 1
        return self._rng.random((count, 2))

    def uniform(self, size=None):
        self.counter += 1
        return self._rng.random(size)

    def exponential(self, scale: float, size=None):
        self.counter += 1
        return self._rng.exponential(scale, size)

    def integers(self, high: int) -> int:
        self.counter += 1
        return int(self._rng.integers(high))


@dataclass
class PathSample:
    """A discretized trajectory of (X, alpha)"""
    times: np.ndarray
    states: np.ndarray  # (n + 1, r)
    regimes: np.ndarray  # (n + 1,)
    switch_times: List[Tuple[float, int, int]]
    increments: np.ndarray  # (n, d) Brownian increments consumed
    steps: np.ndarray  # (n,) step sizes
    grid: Optional[TimeGrid] = None
    path_index: Optional[int] = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_regime(self) -> int:
        return int(self.regimes[-1])

    def first_switch_time(self) -> Optional[float]:
        return self.switch_times[0][0] if self.switch_times else None


@dataclass
class CoupledPathSample:
    """Two trajectories under shared Brownian noise and the basic coupling of regimes"""
    times: np.ndarray
    states: np.ndarray
    regimes: np.ndarray
    states2: np.ndarray
    regimes2: np.ndarray
    increments: np.ndarray
    steps: np.ndarray
    tau_delta: Optional[float] = None
    decouple_step: Optional[int] = None
    switch_times: List[Tuple[float, int, int]] = field(default_factory=list)
    switch_times2: List[Tuple[float, int, int]] = field(default_factory=list)
    grid: Optional[TimeGrid] = None
    path_index: Optional[int] = None

    def decoupled_by(self, T: float) -> bool:
        return self.tau_delta is not None and self.tau_delta <= T

    def coupled_slice(self) -> slice:
        """Grid indices up to the start of the decoupling step"""
        if self.decouple_step is None:
            return slice(0, len(self.times))
        return slice(0, self.decouple_step + 1)


@dataclass
class TangentPath:
    """First-variation matrices xi_k along a base path; xi_0 = identity"""
    times: np.ndarray
    values: np.ndarray  # (n + 1, r, r)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


@dataclass
class ChainPath:
    """Exact trajectory of the constant-rate auxiliary chain"""
    jump_times: np.ndarray
    regimes: List[int]
    T: float

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def regime_at(self, t) -> np.ndarray:
        """Right-continuous regime at time(s) t"""
        idx = np.searchsorted(self.jump_times, t, side='right')
        return np.asarray(self.regimes)[idx]


def _check_state(x: np.ndarray, step: int, stream: NoiseStream, bound: float):
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > bound:
        raise DivergenceError(
            f"path {stream.path_index} diverged at step {step}",
            step=step, path_index=stream.path_index
        )


def _check_rate_bound(Qx: np.ndarray, M: float):
    off = Qx - np.diag(np.diag(Qx))
    if np.any(off >= M):
        i, j = np.unravel_index(np.argmax(off), off.shape)
        raise RateBoundError(f"q_{i + 1}{j + 1}(x) = {off[i, j]:.6g} reaches the rate bound M = {M}",
                             i=int(i) + 1, j=int(j) + 1, rate=float(off[i, j]))


def simulate_path(model: ModelSpec, x0, i0: int, grid: TimeGrid, stream: NoiseStream,
                  divergence_bound: float = Config.DIVERGENCE_BOUND) -> PathSample:
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x.shape != (model.r,) or not np.all(np.isfinite(x)):
        raise DomainError(f"initial state must be a finite vector of length {model.r}")
    if not model.regimes.contains(i0):
        raise DomainError(f"initial regime {i0} outside 1..{model.m0}")

    n, dt, times = grid.n_steps, grid.dt, grid.times
    m0 = model.m0
    mark_bound = m0 * m0 * model.rate_bound
    lam = mark_bound * dt

    states = np.empty((n + 1, model.r))
    regimes = np.empty(n + 1, dtype=int)
    increments = np.empty((n, model.d))
    switch_times = []
    states[0], regimes[0] = x, i0
    i = i0

    for k in range(n):
        dW = stream.brownian(model.d, dt)
        count = stream.poisson(lam)
        new_i = i
        if count:
            marks = stream.marks(count)
            if m0 > 1:
                partition = build_partition(model, x)
                for u, v in marks[np.argsort(marks[:, 0], kind='stable')]:
                    jump = eval_h(partition, i, v * mark_bound)
                    if jump:
                        new_i = i + jump
                        switch_times.append((float(times[k] + u * dt), i, new_i))
                        break
        x = x + model.b(x, i) * dt + model.sigma(x, i) @ dW
        _check_state(x, k + 1, stream, divergence_bound)
        i = new_i
        states[k + 1], regimes[k + 1], increments[k] = x, i, dW

    return PathSample(times=times, states=states, regimes=regimes, switch_times=switch_times,
                      increments=increments, steps=np.full(n, dt), grid=grid, path_index=stream.path_index)


def simulate_coupled(model: ModelSpec, x0, x_tilde0, i0: int, grid: TimeGrid, stream: NoiseStream,
                     divergence_bound: float = Config.DIVERGENCE_BOUND) -> CoupledPathSample:
    """
    Both components share every Brownian increment; the regime pair jumps
    according to the basic-coupling rates at the step-start states, thinned
    against 3 m0^2 M. Moves are laid out consecutively from 0 in target order.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    xt = np.atleast_1d(np.asarray(x_tilde0, dtype=float)).copy()
    if x.shape != (model.r,) or xt.shape != (model.r,):
        raise DomainError(f"initial states must be vectors of length {model.r}")
    if not model.regimes.contains(i0):
        raise DomainError(f"initial regime {i0} outside 1..{model.m0}")

    n, dt, times = grid.n_steps, grid.dt, grid.times
    m0, M = model.m0, model.rate_bound
    bound = 3 * m0 * m0 * M
    lam = bound * dt

    states = np.empty((n + 1, model.r))
    states2 = np.empty((n + 1, model.r))
    regimes = np.empty(n + 1, dtype=int)
    regimes2 = np.empty(n + 1, dtype=int)
    increments = np.empty((n, model.d))
    switches, switches2 = [], []
    tau_delta, decouple_step = None, None
    states[0], states2[0], regimes[0], regimes2[0] = x, xt, i0, i0
    k_reg, l_reg = i0, i0

    for k in range(n):
        dW = stream.brownian(model.d, dt)
        count = stream.poisson(lam)
        new_k, new_l = k_reg, l_reg
        if count:
            marks = stream.marks(count)
            if m0 > 1:
                Qx, Qt = model.Q(x), model.Q(xt)
                _check_rate_bound(Qx, M)
                _check_rate_bound(Qt, M)
                moves = coupled_rates_from_matrices(Qx, Qt, k_reg, l_reg)
                if moves:
                    edges = np.cumsum([rate for _, rate in moves])
                    for u, v in marks[np.argsort(marks[:, 0], kind='stable')]:
                        idx = int(np.searchsorted(edges, v * bound, side='right'))
                        if idx < len(moves):
                            new_k, new_l = moves[idx][0]
                            t_jump = float(times[k] + u * dt)
                            if new_k != k_reg:
                                switches.append((t_jump, k_reg, new_k))
                            if new_l != l_reg:
                                switches2.append((t_jump, l_reg, new_l))
                            if tau_delta is None and new_k != new_l:
                                tau_delta, decouple_step = t_jump, k
                            break
        x_next = x + model.b(x, k_reg) * dt + model.sigma(x, k_reg) @ dW
        xt_next = xt + model.b(xt, l_reg) * dt + model.sigma(xt, l_reg) @ dW
        _check_state(x_next, k + 1, stream, divergence_bound)
        _check_state(xt_next, k + 1, stream, divergence_bound)
        x, xt = x_next, xt_next
        k_reg, l_reg = new_k, new_l
        states[k + 1], states2[k + 1] = x, xt
        regimes[k + 1], regimes2[k + 1] = k_reg, l_reg
        increments[k] = dW

    return CoupledPathSample(times=times, states=states, regimes=regimes, states2=states2, regimes2=regimes2,
                             increments=increments, steps=np.full(n, dt), tau_delta=tau_delta,
                             decouple_step=decouple_step, switch_times=switches, switch_times2=switches2,
                             grid=grid, path_index=stream.path_index)


def first_marginal(coupled: CoupledPathSample) -> PathSample:
    return PathSample(times=coupled.times, states=coupled.states, regimes=coupled.regimes,
                      switch_times=list(coupled.switch_times), increments=coupled.increments,
                      steps=coupled.steps, grid=coupled.grid, path_index=coupled.path_index)


def simulate_tangent(model: ModelSpec, base: PathSample) -> TangentPath:
    """
    xi_{k+1} = xi_k + b_x xi_k h_k + sum_c sigma_x^(c) xi_k dW_k^(c), replaying
    the Brownian increments recorded on the base path
    """
    if not model.has_jacobians:
        raise CapabilityError(f"model {model.name} has no drift/diffusion Jacobians; tangent process unavailable")

    r = model.r
    n = base.n_steps
    values = np.empty((n + 1, r, r))
    xi = np.eye(r)
    values[0] = xi
    for k in range(n):
        x, i = base.states[k], int(base.regimes[k])
        h, dW = base.steps[k], base.increments[k]
        sx = model.sigma_x(x, i)
        step = model.b_x(x, i) @ xi * h
        for c in range(model.d):
            step = step + sx[:, :, c] @ xi * dW[c]
        xi = xi + step
        if not np.all(np.isfinite(xi)):
            raise DivergenceError(f"tangent process of path {base.path_index} diverged at step {k + 1}",
                                  step=k + 1, path_index=base.path_index)
        values[k + 1] = xi
    return TangentPath(times=base.times, values=values)


def simulate_aux_chain(regimes: RegimeSpace, i0: int, T: float, stream: NoiseStream) -> ChainPath:
    """Uniform chain: holding times Exp(m0 - 1), next regime uniform over the others"""
    labels = [i0]
    jump_times = []
    m0 = regimes.m0
    if m0 >= 2:
        t = 0.0
        while True:
            t += float(stream.exponential(1.0 / (m0 - 1)))
            if t > T:
                break
            others = [j for j in regimes.labels if j != labels[-1]]
            jump_times.append(t)
            labels.append(others[stream.integers(m0 - 1)])
    return ChainPath(jump_times=np.asarray(jump_times, dtype=float), regimes=labels, T=T)


def simulate_z_path(model: ModelSpec, x0, chain: ChainPath, grid: TimeGrid, stream: NoiseStream,
                    divergence_bound: float = Config.DIVERGENCE_BOUND) -> PathSample:
    """
    The diffusion driven by the auxiliary chain, on the union of the grid
    and the chain's jump times so every jump time is a grid point
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    times = np.union1d(grid.times, chain.jump_times)
    steps = np.diff(times)
    regimes = chain.regime_at(times).astype(int)
    n = len(steps)

    states = np.empty((n + 1, model.r))
    increments = np.empty((n, model.d))
    states[0] = x
    for k in range(n):
        i = int(regimes[k])
        dW = stream.brownian(model.d, steps[k])
        x = x + model.b(x, i) * steps[k] + model.sigma(x, i) @ dW
        _check_state(x, k + 1, stream, divergence_bound)
        states[k + 1], increments[k] = x, dW

    switch_times = [(float(t), int(a), int(b))
                    for t, a, b in zip(chain.jump_times, chain.regimes[:-1], chain.regimes[1:])]
    return PathSample(times=times, states=states, regimes=regimes, switch_times=switch_times,
                      increments=increments, steps=steps, grid=grid, path_index=stream.path_index)


def write_path_csv(sample: PathSample, target: Optional[str], comments: Sequence[str] = (), stream=None) -> str:
    r = sample.states.shape[1]
    header = ['t'] + [f"x_{a + 1}" for a in range(r)] + ['alpha']
    rows = ([float(t)] + [float(v) for v in x] + [int(i)]
            for t, x, i in zip(sample.times, sample.states, sample.regimes))
    return write_csv(target, header, rows, comments, stream=stream)


def write_coupled_csv(sample: CoupledPathSample, target: Optional[str], comments: Sequence[str] = (),
                      stream=None) -> str:
    r = sample.states.shape[1]
    header = (['t'] + [f"x_{a + 1}" for a in range(r)] + ['alpha']
              + [f"x̃_{a + 1}" for a in range(r)] + ['alpha2', 'decoupled'])
    rows = []
    for k, t in enumerate(sample.times):
        decoupled = sample.decouple_step is not None and k > sample.decouple_step
        rows.append([float(t)] + [float(v) for v in sample.states[k]] + [int(sample.regimes[k])]
                    + [float(v) for v in sample.states2[k]] + [int(sample.regimes2[k]), decoupled])
    return write_csv(target, header, rows, comments, stream=stream)
