"""
Domain types and pure algebra for switching-diffusion models

A model is a pair (X, alpha): X solves an SDE whose drift and diffusion depend
on the regime alpha in {1, ..., m0}, and alpha jumps with rates q_ij(X(t)).
Regime labels are 1-based everywhere in the public API; rate matrices are
numpy arrays indexed with label - 1.
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from utils.errors import DimensionError, RateBoundError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegimeSpace:
    """The finite regime set {1, ..., m0}"""
    m0: int

    def __post_init__(self):
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise DomainError(f"m0 must be a positive integer, got {self.m0}")

    @property
    def labels(self) -> range:
        return range(1, self.m0 + 1)

    def contains(self, i: int) -> bool:
        return 1 <= i <= self.m0


@dataclass(frozen=True)
class HybridState:
    """A point (x, i) of the hybrid state space"""
    x: np.ndarray
    i: int

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise DomainError(f"state has non-finite coordinates: {x}")
        if self.i < 1:
            raise DomainError(f"regime labels start at 1, got {self.i}")
        object.__setattr__(self, 'x', x)


@dataclass(frozen=True)
class ModelSpec:
    """
    Full switching-diffusion definition.

    drift(x, i) -> (r,), diffusion(x, i) -> (r, d), rates(x) -> (m0, m0).
    drift_jac(x, i) -> (r, r) with [a, b] = d b_a / d x_b.
    diffusion_jac(x, i) -> (r, r, d) with [a, b, c] = d sigma_ac / d x_b.
    rate_jac(x) -> (m0, m0, r) with [i, j, b] = d q_ij / d x_b.
    """
    r: int
    d: int
    regimes: RegimeSpace
    drift: Callable
    diffusion: Callable
    rates: Callable
    rate_bound: float
    drift_jac: Optional[Callable] = None
    diffusion_jac: Optional[Callable] = None
    rate_jac: Optional[Callable] = None
    holder_exponent: Optional[float] = None
    name: str = 'custom'

    def __post_init__(self):
        if self.r < 1 or self.d < 1:
            raise DimensionError(f"state and noise dimensions must be positive (r={self.r}, d={self.d})")
        if not self.rate_bound > 0:
            raise DomainError(f"rate bound must be positive, got {self.rate_bound}")
        if self.holder_exponent is not None and not 0 < self.holder_exponent <= 1:
            raise DomainError(f"Hölder exponent must lie in (0, 1], got {self.holder_exponent}")

    @property
    def m0(self) -> int:
        return self.regimes.m0

    @property
    def has_jacobians(self) -> bool:
        return self.drift_jac is not None and self.diffusion_jac is not None

    def b(self, x: np.ndarray, i: int) -> np.ndarray:
        return np.asarray(self.drift(x, i), dtype=float).reshape(self.r)

    def sigma(self, x: np.ndarray, i: int) -> np.ndarray:
        return np.asarray(self.diffusion(x, i), dtype=float).reshape(self.r, self.d)

    def Q(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.rates(x), dtype=float).reshape(self.m0, self.m0)

    def b_x(self, x: np.ndarray, i: int) -> np.ndarray:
        return np.asarray(self.drift_jac(x, i), dtype=float).reshape(self.r, self.r)

    def sigma_x(self, x: np.ndarray, i: int) -> np.ndarray:
        return np.asarray(self.diffusion_jac(x, i), dtype=float).reshape(self.r, self.r, self.d)

    def Q_x(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.rate_jac(x), dtype=float).reshape(self.m0, self.m0, self.r)


@dataclass
class ValidationReport:
    """Outcome of a validation: ok, or a list of named violations"""
    ok: bool
    violations: List[Dict] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def messages(self) -> List[str]:
        return [v['message'] for v in self.violations]


@dataclass(frozen=True)
class MarkPartition:
    """The intervals Delta_ij(x) = [lo, hi) for i != j, built at x"""
    entries: Dict[Tuple[int, int], Tuple[float, float]]
    x: np.ndarray
    m0: int
    rate_bound: float

    @property
    def mark_bound(self) -> float:
        """Upper end of the mark space [0, m0^2 M)"""
        return self.m0 * self.m0 * self.rate_bound

    def length(self, i: int, j: int) -> float:
        lo, hi = self.entries[(i, j)]
        return hi - lo


def validate_rate_matrix(Qx, tol: float = Config.RATE_TOLERANCE) -> ValidationReport:
    """
    Check that Qx is a conservative rate matrix: nonnegative off-diagonal
    entries and zero row sums, both up to tol
    """
    Qx = np.asarray(Qx, dtype=float)
    if Qx.ndim != 2 or Qx.shape[0] != Qx.shape[1]:
        raise DimensionError(f"rate matrix must be square, got shape {Qx.shape}")
    if not np.all(np.isfinite(Qx)):
        raise DomainError("rate matrix has non-finite entries")

    violations = []
    m0 = Qx.shape[0]
    for i in range(m0):
        for j in range(m0):
            if i != j and Qx[i, j] < -tol:
                violations.append({
                    'kind': 'negative_rate',
                    'row': i + 1,
                    'col': j + 1,
                    'value': float(Qx[i, j]),
                    'message': f"q_{i + 1}{j + 1} = {Qx[i, j]:.6g} is negative"
                })
        row_sum = float(Qx[i].sum())
        if abs(row_sum) > tol:
            violations.append({
                'kind': 'row_sum',
                'row': i + 1,
                'col': None,
                'value': row_sum,
                'message': f"row {i + 1} sums to {row_sum:.6g}"
            })
    return ValidationReport(ok=not violations, violations=violations)


def holding_rates(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    """q_i(x) = sum over j != i of q_ij(x), for every regime"""
    Qx = model.Q(x)
    return Qx.sum(axis=1) - np.diag(Qx)


def build_partition(model: ModelSpec, x) -> MarkPartition:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _partition_from_matrix(model.Q(x), model.rate_bound, x)


def _partition_from_matrix(Qx: np.ndarray, M: float, x: np.ndarray) -> MarkPartition:
    m0 = Qx.shape[0]
    entries = {}
    for i in range(1, m0 + 1):
        for j in range(1, m0 + 1):
            if i == j:
                continue
            q = Qx[i - 1, j - 1]
            if q >= M:
                raise RateBoundError(
                    f"q_{i}{j}(x) = {q:.6g} reaches the rate bound M = {M}; thinning would be incorrect",
                    i=i, j=j, rate=float(q)
                )
            lo = ((i - 1) * m0 + j) * M
            entries[(i, j)] = (lo, lo + max(q, 0.0))
    return MarkPartition(entries=entries, x=x, m0=m0, rate_bound=M)


def eval_h(partition: MarkPartition, i: int, z: float) -> int:
    """Regime displacement j - i when the mark z falls in Delta_ij(x), else 0"""
    for j in range(1, partition.m0 + 1):
        if j == i:
            continue
        lo, hi = partition.entries[(i, j)]
        if lo <= z < hi:
            return j - i
    return 0


def rho(model: ModelSpec, x, x_tilde, k: int) -> float:
    """Total decoupling rate sum_{j != k} |q_kj(x) - q_kj(x~)|"""
    Qx = model.Q(np.atleast_1d(np.asarray(x, dtype=float)))
    Qt = model.Q(np.atleast_1d(np.asarray(x_tilde, dtype=float)))
    diff = np.abs(Qx[k - 1] - Qt[k - 1])
    diff[k - 1] = 0.0
    return float(diff.sum())


def coupled_rates(model: ModelSpec, x, x_tilde, k: int, l: int) -> List[Tuple[Tuple[int, int], float]]:
    Qx = model.Q(np.atleast_1d(np.asarray(x, dtype=float)))
    Qt = model.Q(np.atleast_1d(np.asarray(x_tilde, dtype=float)))
    return coupled_rates_from_matrices(Qx, Qt, k, l)


def coupled_rates_from_matrices(Qx: np.ndarray, Qt: np.ndarray, k: int, l: int) -> List[Tuple[Tuple[int, int], float]]:
    """
    Basic-coupling moves out of (k, l) with their rates.

    Sums the three jump-operator terms over every j (diagonal entries
    included) and nets the contributions per target pair; the no-move pair
    (k, l) and zero rates are dropped. Moves come back sorted by target.
    """
    m0 = Qx.shape[0]
    totals: Dict[Tuple[int, int], float] = {}

    def add(target, rate):
        if target != (k, l):
            totals[target] = totals.get(target, 0.0) + rate

    for j in range(1, m0 + 1):
        a = Qx[k - 1, j - 1]
        c = Qt[l - 1, j - 1]
        add((j, l), max(a - c, 0.0))
        add((k, j), max(c - a, 0.0))
        add((j, j), min(a, c))

    return [(target, rate) for target, rate in sorted(totals.items()) if rate > 0.0]


def apply_generator(model: ModelSpec, f: Callable, fgrad: Callable, fhess: Callable, s: HybridState) -> float:
    """(L f)(x, i) = grad f . b + 1/2 tr(Hess f . sigma sigma') + sum_j q_ij(x) f(x, j)"""
    x, i = s.x, s.i
    b = model.b(x, i)
    sig = model.sigma(x, i)
    grad = np.asarray(fgrad(x, i), dtype=float).reshape(model.r)
    hess = np.asarray(fhess(x, i), dtype=float).reshape(model.r, model.r)

    value = float(grad @ b) + 0.5 * float(np.trace(hess @ (sig @ sig.T)))
    q_row = model.Q(x)[i - 1]
    for j in model.regimes.labels:
        if q_row[j - 1] != 0.0:
            value += q_row[j - 1] * float(f(x, j))
    return value


def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def smoothstep_slope(s):
    if s <= 0.0 or s >= 1.0:
        return 0.0
    return 30.0 * s * s * (1.0 - s) * (1.0 - s)


def cutoff(x, H: float, w: float) -> float:
    """psi(x): 1 on |x| <= H, 0 on |x| >= H + w, quintic smoothstep in between"""
    n = float(np.linalg.norm(x))
    return float(1.0 - smoothstep((n - H) / w))


def cutoff_grad(x, H: float, w: float) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = float(np.linalg.norm(x))
    if n == 0.0:
        return np.zeros_like(x)
    return -smoothstep_slope((n - H) / w) / w * x / n


def truncate_model(model: ModelSpec, H: float, w: float) -> ModelSpec:
    """Multiply drift and diffusion by the cutoff psi; rates are unchanged"""
    if not H > 0 or not w > 0:
        raise DomainError(f"truncation radius and width must be positive (H={H}, w={w})")

    def drift(x, i):
        return cutoff(x, H, w) * model.b(x, i)

    def diffusion(x, i):
        return cutoff(x, H, w) * model.sigma(x, i)

    drift_jac = None
    diffusion_jac = None
    if model.drift_jac is not None:
        def drift_jac(x, i):
            return cutoff(x, H, w) * model.b_x(x, i) + np.outer(model.b(x, i), cutoff_grad(x, H, w))
    if model.diffusion_jac is not None:
        def diffusion_jac(x, i):
            psi = cutoff(x, H, w)
            grad = cutoff_grad(x, H, w)
            sig = model.sigma(x, i)
            out = psi * model.sigma_x(x, i)
            for c in range(model.d):
                out[:, :, c] += np.outer(sig[:, c], grad)
            return out

    return ModelSpec(
        r=model.r,
        d=model.d,
        regimes=model.regimes,
        drift=drift,
        diffusion=diffusion,
        rates=model.rates,
        rate_bound=model.rate_bound,
        drift_jac=drift_jac,
        diffusion_jac=diffusion_jac,
        rate_jac=model.rate_jac,
        holder_exponent=model.holder_exponent,
        name=f"{model.name}|truncated(H={H:g},w={w:g})"
    )


def check_model(model: ModelSpec, xs: Sequence, tol: float = Config.RATE_TOLERANCE) -> ValidationReport:
    """Validate Q(x) and the rate bound at every sample point"""
    violations = []
    for x in xs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        Qx = model.Q(x)
        report = validate_rate_matrix(Qx, tol)
        for v in report.violations:
            v = dict(v, x=x.tolist())
            violations.append(v)
        off = Qx - np.diag(np.diag(Qx))
        if np.any(np.abs(off) >= model.rate_bound):
            i, j = np.unravel_index(np.argmax(np.abs(off)), off.shape)
            violations.append({
                'kind': 'rate_bound',
                'row': int(i) + 1,
                'col': int(j) + 1,
                'value': float(off[i, j]),
                'x': x.tolist(),
                'message': f"|q_{i + 1}{j + 1}(x)| = {abs(off[i, j]):.6g} is not below M = {model.rate_bound}"
            })
    if violations:
        logger.warning(f"Model {model.name} failed validation with {len(violations)} violation(s)")
    return ValidationReport(ok=not violations, violations=violations)


def _central_difference(func: Callable, x: np.ndarray, step: float) -> np.ndarray:
    """Stack d func / d x_b along a trailing axis"""
    columns = []
    for b in range(x.size):
        e = np.zeros_like(x)
        e[b] = step
        columns.append((np.asarray(func(x + e), dtype=float) - np.asarray(func(x - e), dtype=float)) / (2 * step))
    return np.stack(columns, axis=-1)


def check_jacobians(model: ModelSpec, xs: Sequence, step: float = Config.JACOBIAN_STEP,
                    tol: float = Config.JACOBIAN_TOLERANCE) -> ValidationReport:
    """Compare every supplied derivative with central finite differences"""
    violations = []

    def compare(name, analytic, numeric, scale, x, i=None):
        err = float(np.max(np.abs(analytic - numeric))) if analytic.size else 0.0
        if err > tol * (1.0 + scale):
            violations.append({
                'kind': name,
                'row': i,
                'col': None,
                'value': err,
                'x': x.tolist(),
                'message': f"{name} differs from finite differences by {err:.3g} at x={x.tolist()}"
                           + (f", regime {i}" if i is not None else "")
            })

    for x in xs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        for i in model.regimes.labels:
            if model.drift_jac is not None:
                numeric = _central_difference(lambda y: model.b(y, i), x, step)
                compare('drift_jac', model.b_x(x, i), numeric, float(np.max(np.abs(model.b(x, i)))), x, i)
            if model.diffusion_jac is not None:
                # numeric has axes (a, c, b); the analytic layout is (a, b, c)
                numeric = _central_difference(lambda y: model.sigma(y, i), x, step).transpose(0, 2, 1)
                compare('diffusion_jac', model.sigma_x(x, i), numeric,
                        float(np.max(np.abs(model.sigma(x, i)))), x, i)
        if model.rate_jac is not None:
            numeric = _central_difference(model.Q, x, step)
            compare('rate_jac', model.Q_x(x), numeric, float(np.max(np.abs(model.Q(x)))), x)
    return ValidationReport(ok=not violations, violations=violations)
