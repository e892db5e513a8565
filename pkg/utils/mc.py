"""
Reproducible parallel Monte Carlo and exponent fitting
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config import Config
from utils.errors import DivergenceError, DomainError, EstimationFailedError
from utils.paths import NoiseStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean over the non-aborted paths"""
    n: int
    mean: float
    stderr: float
    aborted: int = 0

    def to_dict(self):
        return asdict(self)

    def within(self, value: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr + slack

    @property
    def abort_fraction(self) -> float:
        total = self.n + self.aborted
        return self.aborted / total if total else 0.0


@dataclass(frozen=True)
class PowerLawFit:
    """Least squares line through (log delta, log value)"""
    slope: float
    intercept: float
    r2: float
    points: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)

    def to_dict(self):
        return asdict(self)


def distribute_range(total: int, num_workers: int) -> List[Tuple[int, int]]:
    """Split indices 0..total-1 into contiguous inclusive ranges, one per worker"""
    if num_workers <= 0:
        raise ValueError("Number of workers must be positive")

    per_worker = total // num_workers
    remainder = total % num_workers

    ranges = []
    start = 0
    for w in range(num_workers):
        # the first 'remainder' workers take one extra index
        count = per_worker + (1 if w < remainder else 0)
        if count == 0:
            continue
        ranges.append((start, start + count - 1))
        start += count
    return ranges


def mc_map(per_path: Callable[[NoiseStream], object], n: int, seed: int,
           threads: Optional[int] = None) -> List[Optional[object]]:
    """
    Evaluate per_path on the stream of every index 0..n-1.

    Results come back in index order; an index whose path raised
    DivergenceError holds None. The output does not depend on threads.
    """
    if n < 1:
        raise DomainError(f"sample count must be at least 1, got {n}")
    threads = threads or Config.THREADS
    results: List[Optional[object]] = [None] * n

    def run_range(bounds):
        start, end = bounds
        for index in range(start, end + 1):
            try:
                results[index] = per_path(NoiseStream(seed, index))
            except DivergenceError as e:
                logger.warning(f"Path {index} aborted: {e}")
                results[index] = None

    ranges = distribute_range(n, min(threads, n))
    if len(ranges) == 1:
        run_range(ranges[0])
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as executor:
            # consume the iterator so worker exceptions propagate
            list(executor.map(run_range, ranges))
    return results


def summarize(values: Sequence[Optional[float]]) -> McEstimate:
    """Mean and standard error of the non-None values, reduced in index order"""
    kept = np.array([v for v in values if v is not None], dtype=float)
    aborted = len(values) - kept.size
    if kept.size == 0:
        raise EstimationFailedError(f"all {len(values)} paths aborted")
    mean = float(kept.mean())
    stderr = float(kept.std(ddof=1) / math.sqrt(kept.size)) if kept.size > 1 else 0.0
    return McEstimate(n=int(kept.size), mean=mean, stderr=stderr, aborted=aborted)


def binomial_estimate(outcomes: Sequence[Optional[bool]]) -> McEstimate:
    """Frequency with binomial standard error sqrt(p (1 - p) / n)"""
    kept = [bool(v) for v in outcomes if v is not None]
    aborted = len(outcomes) - len(kept)
    if not kept:
        raise EstimationFailedError(f"all {len(outcomes)} paths aborted")
    n = len(kept)
    p = sum(kept) / n
    return McEstimate(n=n, mean=p, stderr=math.sqrt(p * (1.0 - p) / n), aborted=aborted)


def mc_estimate(per_path: Callable[[NoiseStream], Optional[float]], n: int, seed: int,
                threads: Optional[int] = None) -> McEstimate:
    return summarize(mc_map(per_path, n, seed, threads))


def loglog_fit(pairs: Sequence[Tuple[float, float]]) -> PowerLawFit:
    if len(pairs) < 2:
        raise DomainError(f"a power-law fit needs at least 2 points, got {len(pairs)}")
    for delta, value in pairs:
        if not (delta > 0 and value > 0):
            raise DomainError(f"log-log fit needs positive entries, got ({delta}, {value})")

    points = tuple((math.log(d), math.log(v)) for d, v in pairs)
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    if np.ptp(xs) == 0:
        raise DomainError("log-log fit needs at least two distinct deltas")
    result = stats.linregress(xs, ys)
    r2 = float(result.rvalue) ** 2 if np.ptp(ys) > 0 else 1.0
    return PowerLawFit(slope=float(result.slope), intercept=float(result.intercept),
                       r2=min(max(r2, 0.0), 1.0), points=points)
