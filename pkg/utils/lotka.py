"""
Competitive Lotka-Volterra dynamics with regime switching

dX_i = X_i (b_i(alpha) - sum_j a_ij(alpha) X_j) dt + sigma_i(alpha) X_i dW_i

Paths are simulated for y = log x, where the Ito correction is exact, and
mapped back with exp so every reported coordinate is positive.
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, List, Mapping, Optional, Sequence

import numpy as np

from config import Config
from models import ModelSpec, RegimeSpace, validate_rate_matrix
from utils.errors import ConfigError, DivergenceError, DomainError, EstimationFailedError
from utils.mc import McEstimate, PowerLawFit, loglog_fit, mc_map, summarize
from utils.paths import NoiseStream, PathSample, TimeGrid, simulate_coupled, simulate_path
from utils.rate_families import (as_square, constant_rates, logistic_rates, parse_table, rate_bound_for,
                                 table_rates)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LVSpec:
    """
    Per-regime growth b (m0, r), interactions A (m0, r, r), noise sigma (m0, r)
    and a rate family Q(x) evaluated in the original coordinates
    """
    r: int
    b: np.ndarray
    A: np.ndarray
    sigma: np.ndarray
    rates: Callable
    rate_bound: float
    rate_jac: Optional[Callable] = None
    family: str = 'constant'
    require_competition: bool = True

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 2:
            A = A[None]
        m0 = b.shape[0]
        if b.shape != (m0, self.r) or sigma.shape != (m0, self.r) or A.shape != (m0, self.r, self.r):
            raise DomainError(f"LV coefficients need shapes b ({m0}, {self.r}), A ({m0}, {self.r}, {self.r}), "
                              f"sigma ({m0}, {self.r}); got {b.shape}, {A.shape}, {sigma.shape}")
        diag = np.einsum('kii->ki', A)
        if self.require_competition and np.any(diag <= 0):
            raise DomainError("self-competition a_ii(k) must be positive")
        if np.any(A - diag[:, :, None] * np.eye(self.r)[None] < 0) or np.any(diag < 0):
            raise DomainError("interaction coefficients a_ij(k) must be nonnegative")
        report = validate_rate_matrix(np.asarray(self.rates(np.ones(self.r)), dtype=float).reshape(m0, m0))
        if not report.ok:
            raise DomainError(f"LV rates are not a valid generator: {'; '.join(report.messages())}")
        object.__setattr__(self, 'b', b)
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'sigma', sigma)

    @property
    def m0(self) -> int:
        return self.b.shape[0]


def lv_as_model(spec: LVSpec) -> ModelSpec:
    """The LV system in log coordinates as a generic switching diffusion"""
    r, m0 = spec.r, spec.m0

    def drift(y, k):
        return spec.b[k - 1] - 0.5 * spec.sigma[k - 1] ** 2 - spec.A[k - 1] @ np.exp(y)

    def diffusion(y, k):
        return np.diag(spec.sigma[k - 1])

    def drift_jac(y, k):
        return -spec.A[k - 1] * np.exp(y)[None, :]

    def diffusion_jac(y, k):
        return np.zeros((r, r, r))

    def rates(y):
        return spec.rates(np.exp(y))

    rate_jac = None
    if spec.rate_jac is not None:
        def rate_jac(y):
            x = np.exp(y)
            return np.asarray(spec.rate_jac(x), dtype=float).reshape(m0, m0, r) * x[None, None, :]

    return ModelSpec(
        r=r, d=r, regimes=RegimeSpace(m0),
        drift=drift, diffusion=diffusion, rates=rates, rate_bound=spec.rate_bound,
        drift_jac=drift_jac, diffusion_jac=diffusion_jac, rate_jac=rate_jac,
        holder_exponent=1.0, name='lotka'
    )


def _positive_start(x0, r: int) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (r,):
        raise DomainError(f"initial population must have length {r}, got {x0.shape}")
    if np.any(x0 <= 0) or not np.all(np.isfinite(x0)):
        raise DomainError(f"initial population must lie in the open positive orthant, got {x0.tolist()}")
    return x0


def _to_original(states: np.ndarray, stream: NoiseStream) -> np.ndarray:
    x = np.exp(states)
    bad = ~np.all(np.isfinite(x) & (x > 0), axis=1)
    if np.any(bad):
        step = int(np.argmax(bad))
        raise DivergenceError(f"log-coordinate path {stream.path_index} left the representable range at step {step}",
                              step=step, path_index=stream.path_index)
    return x


def lv_simulate(spec: LVSpec, x0, i0: int, grid: TimeGrid, stream: NoiseStream,
                model: Optional[ModelSpec] = None) -> PathSample:
    x0 = _positive_start(x0, spec.r)
    model = model or lv_as_model(spec)
    path = simulate_path(model, np.log(x0), i0, grid, stream)
    path.states = _to_original(path.states, stream)
    return path


@dataclass
class MomentReport:
    """E|X(t)|^m on a time grid, with the no-blow-up flag"""
    m: float
    rows: List[tuple]
    sup_first: float
    sup_doubled: float
    constant: float
    bounded: bool
    aborted: int = 0

    def to_dict(self):
        return asdict(self)


def lv_moment_check(spec: LVSpec, x0, m: float, t_grid: Sequence[float], n_paths: int, seed: int,
                    dt: float = 0.01, i0: int = 1, growth_slack: float = 0.3,
                    threads: Optional[int] = None) -> MomentReport:
    """
    Estimates E|X(t)|^m (l1 norm) at the requested times and over a doubled
    horizon. The run is flagged bounded when the supremum over the doubled
    horizon stays within (1 + growth_slack) K (1 + |x0|^m), K fitted on the
    first horizon.
    """
    if not m > 0:
        raise DomainError(f"moment order must be positive, got {m}")
    x0 = _positive_start(x0, spec.r)
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid or t_grid[0] < 0:
        raise DomainError("moment check needs nonnegative times")
    T = t_grid[-1]
    grid = TimeGrid.from_dt(2.0 * T, dt)
    model = lv_as_model(spec)

    def per_path(stream):
        path = lv_simulate(spec, x0, i0, grid, stream, model=model)
        return np.abs(path.states).sum(axis=1) ** m

    results = mc_map(per_path, n_paths, seed, threads)
    kept = [v for v in results if v is not None]
    aborted = len(results) - len(kept)
    if aborted:
        logger.warning(f"Moment check: {aborted} of {n_paths} paths aborted")

    if not kept:
        raise EstimationFailedError(f"all {n_paths} moment paths aborted")
    samples = np.stack(kept)
    values = samples.mean(axis=0)
    errors = samples.std(axis=0, ddof=1) / np.sqrt(len(kept)) if len(kept) > 1 else np.zeros_like(values)

    times = grid.times
    rows = []
    for t in t_grid:
        k = int(np.argmin(np.abs(times - t)))
        rows.append((float(times[k]), McEstimate(n=len(kept), mean=float(values[k]), stderr=float(errors[k]),
                                                 aborted=aborted)))

    first = times <= T + 1e-12
    sup_first = float(values[first].max())
    sup_doubled = float(values.max())
    constant = sup_first / (1.0 + float(np.abs(x0).sum()) ** m)
    bounded = aborted == 0 and np.isfinite(sup_doubled) and sup_doubled <= (1.0 + growth_slack) * sup_first
    logger.info(f"Moment check m={m}: sup over [0,{T:g}] = {sup_first:.6g}, over [0,{2 * T:g}] = {sup_doubled:.6g}")
    return MomentReport(m=m, rows=rows, sup_first=sup_first, sup_doubled=sup_doubled, constant=constant,
                        bounded=bool(bounded), aborted=aborted)


@dataclass
class CoupledDistanceReport:
    rows: List[tuple]  # (|x0 - y0|_1, McEstimate)
    fit: Optional[PowerLawFit] = None
    R: Optional[float] = None
    notes: List[str] = field(default_factory=list)


def lv_coupled_distance(spec: LVSpec, x0, y0s: Sequence, T: float, n_paths: int, seed: int,
                        n_steps: int = Config.DEFAULT_N_STEPS, i0: int = 1, R: Optional[float] = None,
                        threads: Optional[int] = None) -> CoupledDistanceReport:
    """
    E sup_{t <= T ^ tau} |X(t) - Y(t)|^2 for each start y0, sharing noise and
    coupling the regimes; tau is the first time the regimes differ
    """
    x0 = _positive_start(x0, spec.r)
    starts = [_positive_start(y, spec.r) for y in y0s]
    if R is not None:
        for z in [x0] + starts:
            if np.abs(z).sum() > R:
                raise DomainError(f"start {z.tolist()} has l1 norm above R = {R}")
    grid = TimeGrid(T, n_steps)
    model = lv_as_model(spec)
    report = CoupledDistanceReport(rows=[], R=R)

    for y0 in starts:
        distance = float(np.abs(y0 - x0).sum())

        def per_path(stream):
            coupled = simulate_coupled(model, np.log(x0), np.log(y0), i0, grid, stream)
            window = coupled.coupled_slice()
            X = _to_original(coupled.states[window], stream)
            Y = _to_original(coupled.states2[window], stream)
            return float((np.abs(X - Y).sum(axis=1) ** 2).max())

        estimate = summarize(mc_map(per_path, n_paths, seed, threads))
        logger.info(f"Coupled distance |x0-y0|={distance:.3g}: {estimate.mean:.6g} ± {estimate.stderr:.2g}")
        report.rows.append((distance, estimate))

    pairs = [(d, e.mean) for d, e in report.rows if d > 0 and e.mean > 0]
    if len(pairs) >= 2:
        report.fit = loglog_fit(pairs)
    else:
        report.notes.append("fewer than two positive distances; fit skipped")
    return report


_LOTKA_KEYS = {'r', 'm0', 'b', 'a', 'sigma', 'rates', 'q', 'q_low', 'q_high', 'steepness', 'midpoint',
               'knots', 'table'}


def _floats(section: Mapping[str, str], key: str) -> List[float]:
    try:
        return [float(v) for v in section[key].replace(';', ',').split(',') if v.strip()]
    except KeyError:
        raise ConfigError(f"[lotka] is missing '{key}'", key=key)
    except ValueError:
        raise ConfigError(f"[lotka] {key} must be a comma-separated list of numbers", key=key)


def lv_spec_from_section(section: Mapping[str, str]) -> LVSpec:
    """
    Build an LVSpec from the [lotka] section: r, m0, b (m0 * r), A (m0 * r * r,
    row-major), sigma (m0 * r) and a rate family (constant | logistic | table)
    """
    section = {k.lower(): v for k, v in section.items()}
    for key in section:
        if key not in _LOTKA_KEYS:
            raise ConfigError(f"unknown key '{key}' in [lotka]", key=key)
    try:
        r = int(section.get('r', '1'))
        m0 = int(section.get('m0', '1'))
    except ValueError as e:
        raise ConfigError(f"[lotka] r and m0 must be integers: {e}", key='r')

    def shaped(key, shape):
        values = _floats(section, key)
        if len(values) != int(np.prod(shape)):
            raise ConfigError(f"[lotka] {key} needs {int(np.prod(shape))} values, got {len(values)}", key=key)
        return np.asarray(values).reshape(shape)

    b = shaped('b', (m0, r))
    A = shaped('a', (m0, r, r))
    sigma = shaped('sigma', (m0, r))

    family = section.get('rates', 'constant').strip()
    if family == 'constant':
        Q = as_square(_floats(section, 'q'), m0, 'q') if m0 > 1 else np.zeros((1, 1))
        rates, rate_jac, top = constant_rates(Q, r)
    elif family == 'logistic':
        rates, rate_jac, top = logistic_rates(
            as_square(_floats(section, 'q_low'), m0, 'q_low'),
            as_square(_floats(section, 'q_high'), m0, 'q_high'),
            float(section.get('steepness', '1.0')), float(section.get('midpoint', '0.0')), r)
    elif family == 'table':
        knots = _floats(section, 'knots')
        rates, rate_jac, top = table_rates(knots, parse_table(knots, _floats(section, 'table'), m0))
    else:
        raise ConfigError(f"unknown rate family '{family}' (constant, logistic, table)", key='rates')

    return LVSpec(r=r, b=b, A=A, sigma=sigma, rates=rates, rate_bound=rate_bound_for(top),
                  rate_jac=rate_jac, family=family)


def default_lv_spec() -> LVSpec:
    """Two species, two regimes, switching faster when the total population is large"""
    rates, rate_jac, top = logistic_rates(
        q_low=np.array([[-0.5, 0.5], [0.5, -0.5]]),
        q_high=np.array([[-1.5, 1.5], [1.0, -1.0]]),
        steepness=2.0, midpoint=1.0, r=2)
    return LVSpec(
        r=2,
        b=np.array([[1.0, 0.8], [0.6, 1.0]]),
        A=np.array([[[1.0, 0.2], [0.3, 1.0]], [[1.2, 0.1], [0.2, 0.9]]]),
        sigma=np.array([[0.3, 0.2], [0.2, 0.3]]),
        rates=rates, rate_bound=rate_bound_for(top), rate_jac=rate_jac, family='logistic'
    )
