"""
Sensitivity experiments on coupled paths

Every study runs each delta (or dt, or start point) with the same seed, so
path k of one level shares its noise stream with path k of every other level.
"""
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from models import HybridState, ModelSpec, apply_generator, truncate_model
from utils.errors import CapabilityError, DomainError
from utils.mc import McEstimate, PowerLawFit, binomial_estimate, loglog_fit, mc_map, summarize
from utils.paths import TimeGrid, first_marginal, simulate_coupled, simulate_path, simulate_tangent
from utils.reporting import estimate_row, fit_comment, write_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StudyConfig:
    T: float = Config.DEFAULT_T
    n_steps: int = Config.DEFAULT_N_STEPS
    n_paths: int = Config.DEFAULT_N_PATHS
    deltas: Tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    p: float = 2.0
    direction: Optional[Tuple[float, ...]] = None
    seed: int = Config.DEFAULT_SEED
    threads: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        deltas = tuple(float(d) for d in self.deltas)
        if not deltas:
            raise DomainError("a study needs at least one delta")
        if any(d <= 0 for d in deltas):
            raise DomainError(f"deltas must be positive, got {deltas}")
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise DomainError(f"deltas must be strictly decreasing, got {deltas}")
        if not self.p > 0:
            raise DomainError(f"moment order p must be positive, got {self.p}")
        if self.n_paths < 100:
            raise DomainError(f"a study needs at least 100 paths, got {self.n_paths}")
        object.__setattr__(self, 'deltas', deltas)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.n_steps)

    def unit_direction(self, r: int) -> np.ndarray:
        if self.direction is None:
            e = np.zeros(r)
            e[0] = 1.0
            return e
        e = np.asarray(self.direction, dtype=float)
        if e.shape != (r,) or np.linalg.norm(e) == 0:
            raise DomainError(f"direction must be a nonzero vector of length {r}")
        return e / np.linalg.norm(e)

    def echo(self) -> List[str]:
        return [f"{k}={v}" for k, v in asdict(self).items() if k != 'threads']


@dataclass
class StudyRow:
    key: float
    estimate: McEstimate
    extra: Dict[str, object] = field(default_factory=dict)


@dataclass
class StudyReport:
    """Per-level estimates, an optional log-log fit, and everything needed to rerun"""
    key: str
    rows: List[StudyRow]
    fit: Optional[PowerLawFit] = None
    metadata: Dict[str, object] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def estimates(self) -> List[McEstimate]:
        return [row.estimate for row in self.rows]

    def write_csv(self, target: Optional[str], comments: Sequence[str] = (), stream=None) -> str:
        extra_keys = list(self.rows[0].extra) if self.rows else []
        header = [self.key, 'n', 'mean', 'stderr', 'aborted'] + extra_keys
        rows = [estimate_row(row.key, row.estimate) + [row.extra[k] for k in extra_keys] for row in self.rows]
        trailer = ([fit_comment(self.fit)] if self.fit else []) + list(self.notes)
        return write_csv(target, header, rows, comments, trailer, stream=stream)


def _metadata(model: ModelSpec, cfg: StudyConfig, x, i) -> Dict[str, object]:
    return {'model': model.name, 'x': np.atleast_1d(x).tolist(), 'i': i, 'config': cfg.echo()}


def _fit_positive(rows: Sequence[StudyRow], report: StudyReport):
    pairs = [(row.key, row.estimate.mean) for row in rows if row.estimate.mean > 0]
    if len(pairs) >= 2:
        report.fit = loglog_fit(pairs)
    else:
        report.notes.append("fewer than two positive estimates; fit skipped")


def lp_error_study(model: ModelSpec, x, i: int, cfg: StudyConfig) -> StudyReport:
    """
    E|Z^delta(T) - xi(T) e|^p per delta, with Z^delta the difference quotient of
    coupled paths from x and x + delta e and xi the tangent along the first path.
    The p/2 moment of the same samples is recorded and checked against the
    power-mean inequality.
    """
    if not model.has_jacobians:
        raise CapabilityError(f"model {model.name} has no Jacobians; the L^p study needs the tangent process")
    if model.holder_exponent is not None and cfg.p >= model.holder_exponent:
        logger.warning(f"p={cfg.p} is not below the Hölder exponent {model.holder_exponent} of {model.name}; "
                       "difference quotients need not converge in this moment")

    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = cfg.unit_direction(model.r)
    grid = cfg.grid
    p, p_half = cfg.p, cfg.p / 2.0
    report = StudyReport(key='delta', rows=[], metadata=_metadata(model, cfg, x, i))

    for delta in cfg.deltas:
        logger.info(f"L^p study {model.name}: delta={delta:g}")

        def per_path(stream):
            coupled = simulate_coupled(model, x, x + delta * e, i, grid, stream)
            tangent = simulate_tangent(model, first_marginal(coupled))
            quotient = (coupled.states2[-1] - coupled.states[-1]) / delta
            return float(np.linalg.norm(quotient - tangent.final @ e))

        errors = mc_map(per_path, cfg.n_paths, cfg.seed, cfg.threads)
        estimate = summarize([v ** p if v is not None else None for v in errors])
        lower = summarize([v ** p_half if v is not None else None for v in errors])
        power_mean_ok = lower.mean <= estimate.mean ** (p_half / p) * (1 + 1e-12)
        if not power_mean_ok:
            logger.error(f"power-mean inequality violated at delta={delta:g}")
        report.rows.append(StudyRow(delta, estimate, {'half_moment': lower.mean, 'power_mean_ok': power_mean_ok}))

    _fit_positive(report.rows, report)
    return report


def decoupling_probability_study(model: ModelSpec, x, i: int, cfg: StudyConfig,
                                 min_events: int = Config.MIN_DECOUPLING_EVENTS) -> StudyReport:
    """
    Frequency of tau^delta <= T per delta and the fitted exponent. Only deltas
    with at least min_events observed decouplings enter the fit.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = cfg.unit_direction(model.r)
    grid = cfg.grid
    report = StudyReport(key='delta', rows=[], metadata=_metadata(model, cfg, x, i))
    report.metadata['min_events'] = min_events

    for delta in cfg.deltas:
        logger.info(f"Decoupling study {model.name}: delta={delta:g}")

        def per_path(stream):
            return simulate_coupled(model, x, x + delta * e, i, grid, stream).decoupled_by(cfg.T)

        estimate = binomial_estimate(mc_map(per_path, cfg.n_paths, cfg.seed, cfg.threads))
        events = int(round(estimate.mean * estimate.n))
        report.rows.append(StudyRow(delta, estimate, {'events': events, 'in_fit': events >= min_events}))

    if all(row.extra['events'] == 0 for row in report.rows):
        report.notes.append("Markovian: no decoupling")
        return report

    excluded = [row.key for row in report.rows if not row.extra['in_fit']]
    if excluded:
        report.notes.append(f"excluded from fit (fewer than {min_events} events): "
                            + ",".join(f"{d:g}" for d in excluded))
    pairs = [(row.key, row.estimate.mean) for row in report.rows if row.extra['in_fit']]
    if len(pairs) >= 2:
        report.fit = loglog_fit(pairs)
        lam = model.holder_exponent
        if lam is not None and report.fit.slope < lam - 0.15:
            logger.warning(f"fitted exponent {report.fit.slope:.3f} is well below the Hölder exponent {lam}")
    else:
        report.notes.append("fewer than two deltas with enough events; fit skipped")
    return report


def sup_distance_study(model: ModelSpec, x, i: int, cfg: StudyConfig) -> StudyReport:
    """E sup_t |X^{x + delta e}(t) - X^x(t)| over the whole horizon, per delta"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = cfg.unit_direction(model.r)
    grid = cfg.grid
    report = StudyReport(key='delta', rows=[], metadata=_metadata(model, cfg, x, i))

    for delta in cfg.deltas:
        logger.info(f"Sup-distance study {model.name}: delta={delta:g}")

        def per_path(stream):
            coupled = simulate_coupled(model, x, x + delta * e, i, grid, stream)
            return float(np.linalg.norm(coupled.states2 - coupled.states, axis=1).max())

        report.rows.append(StudyRow(delta, summarize(mc_map(per_path, cfg.n_paths, cfg.seed, cfg.threads))))

    _fit_positive(report.rows, report)
    return report


def dynkin_residual(model: ModelSpec, f: Callable, fgrad: Callable, fhess: Callable, x, i: int, T: float,
                    dt_list: Sequence[float], n_paths: int, seed: int,
                    threads: Optional[int] = None) -> StudyReport:
    """
    f(X_T, alpha_T) - f(x, i) - sum_k (Lf)(X_k, alpha_k) dt per path, averaged.
    The residual column is the absolute mean.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f0 = float(f(x, i))
    report = StudyReport(key='dt', rows=[], metadata={'model': model.name, 'x': x.tolist(), 'i': i, 'T': T,
                                                      'n_paths': n_paths, 'seed': seed})

    for dt in dt_list:
        grid = TimeGrid.from_dt(T, dt)
        logger.info(f"Dynkin residual {model.name}: dt={grid.dt:g}")

        def per_path(stream):
            path = simulate_path(model, x, i, grid, stream)
            integral = sum(apply_generator(model, f, fgrad, fhess, HybridState(path.states[k], int(path.regimes[k])))
                           for k in range(grid.n_steps)) * grid.dt
            return float(f(path.final_state, path.final_regime)) - f0 - integral

        estimate = summarize(mc_map(per_path, n_paths, seed, threads))
        report.rows.append(StudyRow(grid.dt, estimate, {'residual': abs(estimate.mean)}))
    return report


def richardson_ratio(rows: Sequence[Tuple[float, float]], exact: float = 0.0) -> List[float]:
    """
    bias(dt) / bias(dt / 2) for consecutive (dt, value) rows whose step halves;
    close to 2 for a weak-order-one scheme
    """
    ratios = []
    ordered = sorted(rows, key=lambda row: -row[0])
    for (dt, value), (dt2, value2) in zip(ordered, ordered[1:]):
        if not math.isclose(dt2, dt / 2.0, rel_tol=1e-9):
            continue
        bias, bias2 = abs(value - exact), abs(value2 - exact)
        ratios.append(bias / bias2 if bias2 > 0 else math.inf)
    return ratios


def weak_order_failures(rows: Sequence[StudyRow], band: Tuple[float, float] = (1.5, 3.0),
                        k: float = 3.0) -> List[str]:
    """
    Halved-step pairs of Dynkin rows whose residual ratio falls outside band.
    A pair is skipped when either residual is within k standard errors of zero.
    """
    failures = []
    ordered = sorted(rows, key=lambda row: -row.key)
    for row, row2 in zip(ordered, ordered[1:]):
        if not math.isclose(row2.key, row.key / 2.0, rel_tol=1e-9):
            continue
        residual, residual2 = row.extra['residual'], row2.extra['residual']
        if residual <= k * row.estimate.stderr or residual2 <= k * row2.estimate.stderr:
            logger.info(f"dt={row.key:g}/{row2.key:g}: residual within noise, ratio not checked")
            continue
        ratio = residual / residual2
        if not band[0] <= ratio <= band[1]:
            failures.append(f"dt={row.key:g} -> {row2.key:g}: residual ratio {ratio:.3g} "
                            f"outside [{band[0]:g}, {band[1]:g}]")
    return failures


def _terminal_values(model: ModelSpec, f: Callable, x, i: int, grid: TimeGrid, n_paths: int, seed: int,
                     threads: Optional[int]) -> List[Optional[float]]:
    def per_path(stream):
        path = simulate_path(model, x, i, grid, stream)
        value = float(f(path.final_state, path.final_regime))
        if abs(value) > 1.0 + 1e-12:
            raise DomainError(f"test function must satisfy |f| <= 1, got {value}")
        return value

    return mc_map(per_path, n_paths, seed, threads)


def feller_gap(model: ModelSpec, f: Callable, x, i: int, xs: Sequence, t: float, n_paths: int, seed: int,
               n_steps: int = Config.DEFAULT_N_STEPS, threads: Optional[int] = None) -> StudyReport:
    """
    |E f(X^{x_n}(t)) - E f(X^x(t))| for each x_n under common random numbers,
    against the combined standard error of the two means. The run passes when
    the two starts closest to x have gaps within 3 combined stderr.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grid = TimeGrid(t, n_steps)
    base = summarize(_terminal_values(model, f, x, i, grid, n_paths, seed, threads))
    report = StudyReport(key='distance', rows=[], metadata={'model': model.name, 'x': x.tolist(), 'i': i, 't': t,
                                                            'n_paths': n_paths, 'seed': seed})

    for xn in xs:
        xn = np.atleast_1d(np.asarray(xn, dtype=float))
        distance = float(np.linalg.norm(xn - x))
        estimate = summarize(_terminal_values(model, f, xn, i, grid, n_paths, seed, threads))
        gap = abs(estimate.mean - base.mean)
        combined = math.sqrt(estimate.stderr ** 2 + base.stderr ** 2)
        report.rows.append(StudyRow(distance, estimate, {'gap': gap, 'combined_stderr': combined,
                                                         'within': gap <= 3.0 * combined}))

    closest = sorted(report.rows, key=lambda row: row.key)[:2]
    report.metadata['base'] = base.to_dict()
    report.metadata['feller_ok'] = all(row.extra['within'] for row in closest)
    return report


def escape_probability(model: ModelSpec, x, i: int, H: float, t: float, n_paths: int, seed: int,
                       n_steps: int = Config.DEFAULT_N_STEPS, threads: Optional[int] = None) -> McEstimate:
    """P(sup_{s <= t} |X(s)| >= H) on the grid"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grid = TimeGrid(t, n_steps)

    def per_path(stream):
        path = simulate_path(model, x, i, grid, stream)
        return bool(np.linalg.norm(path.states, axis=1).max() >= H)

    return binomial_estimate(mc_map(per_path, n_paths, seed, threads))


@dataclass
class TruncationCheck:
    raw: StudyReport
    truncated: StudyReport
    escape: McEstimate
    agree: bool
    tolerances: List[float]


def feller_truncation_check(model: ModelSpec, f: Callable, x, i: int, xs: Sequence, t: float, H: float, w: float,
                            n_paths: int, seed: int, n_steps: int = Config.DEFAULT_N_STEPS,
                            threads: Optional[int] = None) -> TruncationCheck:
    """
    Feller gaps of the raw model and of its cutoff at radius H. Under shared
    noise the two paths agree until the first exit from the ball of radius H,
    so the gaps may differ by 3 combined stderr plus twice the escape
    probabilities of both starts (bounded here by four times the upper
    escape estimate from x).
    """
    truncated_model = truncate_model(model, H, w)
    raw = feller_gap(model, f, x, i, xs, t, n_paths, seed, n_steps, threads)
    truncated = feller_gap(truncated_model, f, x, i, xs, t, n_paths, seed, n_steps, threads)
    escape = escape_probability(model, x, i, H, t, n_paths, seed, n_steps, threads)
    escape_bound = 4.0 * (escape.mean + 3.0 * escape.stderr)

    tolerances, agree = [], True
    for a, b in zip(raw.rows, truncated.rows):
        tol = 3.0 * math.sqrt(a.extra['combined_stderr'] ** 2 + b.extra['combined_stderr'] ** 2) + escape_bound
        tolerances.append(tol)
        agree = agree and abs(a.extra['gap'] - b.extra['gap']) <= tol
    if not agree:
        logger.warning(f"truncated and raw Feller gaps disagree beyond tolerance for {model.name}")
    return TruncationCheck(raw=raw, truncated=truncated, escape=escape, agree=agree, tolerances=tolerances)
