"""
grad-cm: value and gradient of u(T, x, i) = E phi(X_T, alpha_T) by change of measure
"""
import logging
import math
import sys

from config import Config
from routes.common import add_run_arguments, build_model, comments, finish, observable_for, start_point
from utils.functional import direct_value, fd_gradient_oracle, gradient_cm, write_gradient_csv
from utils.paths import TimeGrid
from utils.run_config import parse_floats

logger = logging.getLogger(__name__)


def _agree(a, b) -> bool:
    return abs(a.mean - b.mean) <= 3.0 * math.sqrt(a.stderr ** 2 + b.stderr ** 2)


def grad_cm(cfg) -> int:
    model = build_model(cfg)
    observable = observable_for(cfg, 'tanh')
    x = start_point(cfg, model)
    i = cfg.get('i', 1)
    T = cfg.get('T', Config.DEFAULT_T)
    grid = TimeGrid(T, cfg.get('n_steps', Config.DEFAULT_N_STEPS))
    n_paths = cfg.get('n_paths', Config.DEFAULT_N_PATHS)
    directions = [cfg.get('direction')] if cfg.get('direction') is not None else None

    estimate = gradient_cm(model, observable.f, observable.grad, x, i, T, grid, n_paths, cfg.seed,
                           directions=directions, threads=cfg.threads)
    estimates = [estimate.value] + estimate.gradient
    trailer = []
    failures = []
    if cfg.check:
        direct = direct_value(model, observable.f, x, i, grid, n_paths, cfg.seed, cfg.threads)
        oracle = fd_gradient_oracle(model, observable.f, x, i, T, cfg.get('h', 1e-3), n_paths, cfg.seed,
                                    direction=cfg.get('direction'), grid=grid, threads=cfg.threads)
        trailer = [f"direct_value={direct.mean!r}", f"direct_stderr={direct.stderr!r}",
                   f"fd_gradient={oracle.mean!r}", f"fd_stderr={oracle.stderr!r}"]
        estimates += [direct, oracle]
        if not _agree(estimate.value, direct):
            failures.append(f"change-of-measure value {estimate.value.mean:.5g} vs direct {direct.mean:.5g}")
        if not _agree(estimate.gradient[0], oracle):
            failures.append(f"zeta_hat gradient {estimate.gradient[0].mean:.5g} vs finite difference {oracle.mean:.5g}")

    write_gradient_csv(estimate, cfg.output, comments(cfg) + trailer, stream=sys.stdout)
    return finish(estimates, cfg, failures)


def register(subparsers):
    parser = subparsers.add_parser('grad-cm', help='value and x-derivative of E phi by change of measure')
    add_run_arguments(parser)
    parser.add_argument('--direction', type=parse_floats)
    parser.add_argument('--h', type=float, help='finite-difference step of the --check oracle')
    parser.add_argument('--test-function', dest='test_function')
    parser.set_defaults(handler=grad_cm)
