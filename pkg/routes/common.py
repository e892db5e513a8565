"""
Flags, model construction and exit-code helpers shared by every subcommand
"""
import argparse
import logging
import sys
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from config import Config
from models import ModelSpec
from utils.errors import ConfigError
from utils.mc import McEstimate
from utils.model_library import get_model
from utils.reporting import provenance_comments
from utils.run_config import RunConfig, parse_floats

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3


def add_run_arguments(parser: argparse.ArgumentParser, model: bool = True):
    """Flags every subcommand accepts; each maps onto a [run] key"""
    parser.add_argument('--config', '-c', help='INI experiment file')
    if model:
        parser.add_argument('--model', help='built-in model name')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--threads', type=int)
    parser.add_argument('--output', '-o', help="CSV destination, '-' for standard output")
    parser.add_argument('--T', dest='T', type=float, help='time horizon')
    parser.add_argument('--n-steps', dest='n_steps', type=int)
    parser.add_argument('--paths', dest='n_paths', type=int)
    parser.add_argument('--x', type=parse_floats, help='initial state, comma-separated')
    parser.add_argument('--i', type=int, help='initial regime (1-based)')
    parser.add_argument('--check', action='store_true', help='apply the acceptance thresholds')


def add_delta_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--deltas', type=parse_floats)
    parser.add_argument('--direction', type=parse_floats)


def build_model(cfg: RunConfig) -> ModelSpec:
    return get_model(cfg.get('model', 'markovian-linear'), cfg.model_params, cfg.sections)


def start_point(cfg: RunConfig, model: ModelSpec, default: Optional[List[float]] = None) -> np.ndarray:
    x = cfg.get('x', default if default is not None else [0.0] * model.r)
    return np.asarray(x, dtype=float)


def comments(cfg: RunConfig) -> List[str]:
    return provenance_comments(cfg.command, cfg.echo(), cfg.seed)


def exceeds_abort_limit(estimates: Iterable[McEstimate]) -> bool:
    for estimate in estimates:
        if estimate.abort_fraction > Config.ABORT_FRACTION_LIMIT:
            logger.error(f"{estimate.aborted} of {estimate.n + estimate.aborted} paths aborted "
                         f"(limit {Config.ABORT_FRACTION_LIMIT:.0%})")
            return True
    return False


def finish(estimates: Iterable[McEstimate], cfg: RunConfig, failures: List[str]) -> int:
    """Exit code after output has been written: divergence first, then the acceptance check"""
    if exceeds_abort_limit(estimates):
        return EXIT_DIVERGENCE
    if cfg.check and failures:
        for message in failures:
            print(f"check failed: {message}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


@dataclass(frozen=True)
class Observable:
    f: Callable
    grad: Callable
    hess: Callable


def _basis(x) -> np.ndarray:
    e = np.zeros(len(x))
    e[0] = 1.0
    return e


OBSERVABLES: Dict[str, Observable] = {
    'square': Observable(
        f=lambda x, i: float(np.dot(x, x)),
        grad=lambda x, i: 2.0 * np.asarray(x, dtype=float),
        hess=lambda x, i: 2.0 * np.eye(len(x))),
    'indicator2': Observable(
        f=lambda x, i: 1.0 if i == 2 else 0.0,
        grad=lambda x, i: np.zeros(len(x)),
        hess=lambda x, i: np.zeros((len(x), len(x)))),
    'clamp': Observable(
        f=lambda x, i: float(np.clip(x[0], -1.0, 1.0)),
        grad=lambda x, i: _basis(x) * (1.0 if abs(x[0]) < 1.0 else 0.0),
        hess=lambda x, i: np.zeros((len(x), len(x)))),
    'tanh': Observable(
        f=lambda x, i: float(np.tanh(x[0])),
        grad=lambda x, i: _basis(x) / np.cosh(x[0]) ** 2,
        hess=lambda x, i: np.outer(_basis(x), _basis(x)) * (-2.0 * np.tanh(x[0]) / np.cosh(x[0]) ** 2)),
}


def observable_for(cfg: RunConfig, default: str) -> Observable:
    name = cfg.get('test_function', default)
    if name not in OBSERVABLES:
        raise ConfigError(f"unknown observable '{name}' (choose from {', '.join(sorted(OBSERVABLES))})",
                          key='test_function')
    return OBSERVABLES[name]
