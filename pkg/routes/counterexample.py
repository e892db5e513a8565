"""
counterexample: the non-Cauchy difference-quotient gap with its lower bounds and quadrature oracle
"""
import logging
import sys

from config import Config
from routes.common import add_run_arguments, comments, finish
from utils.counterexample import cx_gap_estimate, cx_gap_oracle, cx_lower_bound, cx_lower_bound_limit
from utils.errors import OracleError
from utils.reporting import write_csv
from utils.run_config import parse_ints

logger = logging.getLogger(__name__)


def counterexample(cfg) -> int:
    T = cfg.get('T', Config.DEFAULT_T)
    n_paths = cfg.get('n_paths', Config.DEFAULT_N_PATHS)
    limit = cx_lower_bound_limit(T)

    rows, estimates, failures = [], [], []
    for n in cfg.get('n', [10]):
        estimate = cx_gap_estimate(n, T, n_paths, cfg.seed, cfg.threads)
        bound = cx_lower_bound(n, T)
        try:
            oracle = cx_gap_oracle(n, T)
        except OracleError as e:
            logger.warning(str(e))
            oracle = None
        estimates.append(estimate)
        rows.append([n, T, estimate.mean, estimate.stderr, bound, oracle, estimate.n, estimate.aborted, limit])

        low = estimate.mean - 3.0 * estimate.stderr
        if low < bound:
            failures.append(f"n={n}: estimate - 3 stderr = {low:.5g} below the lower bound {bound:.5g}")
        if low < limit:
            failures.append(f"n={n}: estimate - 3 stderr = {low:.5g} below the limiting bound {limit:.5g}")
        if oracle is None:
            failures.append(f"n={n}: quadrature oracle did not converge")
        elif not estimate.within(oracle, 3.0):
            failures.append(f"n={n}: estimate {estimate.mean:.5g} differs from quadrature {oracle:.5g}")

    header = ['n', 'T', 'estimate', 'stderr', 'lower_bound', 'oracle', 'paths', 'aborted', 'limit_bound']
    write_csv(cfg.output, header, rows, comments(cfg), stream=sys.stdout)
    return finish(estimates, cfg, failures)


def register(subparsers):
    parser = subparsers.add_parser('counterexample', help='E|Z^{1+2/n} - Z^{1+1/n}| by exact sampling')
    add_run_arguments(parser, model=False)
    parser.add_argument('--n', type=parse_ints, help='comma-separated values of n')
    parser.set_defaults(handler=counterexample)
