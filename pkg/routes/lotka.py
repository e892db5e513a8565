"""
lotka-moments and lotka-coupled
"""
import logging
import sys

from config import Config
from routes.common import add_run_arguments, comments, finish
from utils.lotka import default_lv_spec, lv_coupled_distance, lv_moment_check, lv_spec_from_section
from utils.reporting import estimate_row, fit_comment, write_csv
from utils.run_config import parse_floats, parse_vectors

logger = logging.getLogger(__name__)


def _spec(cfg):
    section = cfg.sections.get('lotka')
    return lv_spec_from_section(section) if section else default_lv_spec()


def _start(cfg, spec):
    return cfg.get('x', [1.0] * spec.r)


def lotka_moments(cfg) -> int:
    spec = _spec(cfg)
    T = cfg.get('T', Config.DEFAULT_T)
    t_grid = cfg.get('t_grid', [T * k / 4.0 for k in range(1, 5)])
    report = lv_moment_check(spec, _start(cfg, spec), cfg.get('m', 2.0), t_grid,
                             cfg.get('n_paths', Config.DEFAULT_N_PATHS), cfg.seed, dt=cfg.get('dt', 0.01),
                             i0=cfg.get('i', 1), threads=cfg.threads)
    trailer = [f"sup_first={report.sup_first!r}", f"sup_doubled={report.sup_doubled!r}",
               f"constant={report.constant!r}", f"bounded={int(report.bounded)}"]
    write_csv(cfg.output, ['t', 'n', 'mean', 'stderr', 'aborted'],
              [estimate_row(t, e) for t, e in report.rows], comments(cfg), trailer, stream=sys.stdout)

    failures = [] if report.bounded else ["moments grow across the doubled horizon"]
    return finish([e for _, e in report.rows], cfg, failures)


def lotka_coupled(cfg) -> int:
    spec = _spec(cfg)
    x0 = _start(cfg, spec)
    y0s = cfg.get('y0')
    if y0s is None:
        y0s = [[v * (1.0 + 2.0 ** -k) for v in x0] for k in range(2, 7)]
    report = lv_coupled_distance(spec, x0, y0s, cfg.get('T', Config.DEFAULT_T),
                                 cfg.get('n_paths', Config.DEFAULT_N_PATHS), cfg.seed,
                                 n_steps=cfg.get('n_steps', Config.DEFAULT_N_STEPS), i0=cfg.get('i', 1),
                                 R=cfg.get('R'), threads=cfg.threads)
    trailer = ([fit_comment(report.fit)] if report.fit else []) + report.notes
    write_csv(cfg.output, ['distance', 'n', 'mean', 'stderr', 'aborted'],
              [estimate_row(d, e) for d, e in report.rows], comments(cfg), trailer, stream=sys.stdout)

    failures = []
    if report.fit is None:
        failures.append("no fit")
    elif not 1.8 <= report.fit.slope <= 2.2:
        failures.append(f"coupled-distance slope {report.fit.slope:.3f} outside [1.8, 2.2]")
    return finish([e for _, e in report.rows], cfg, failures)


def register(subparsers):
    parser = subparsers.add_parser('lotka-moments', help='E|X(t)|^m of the switching Lotka-Volterra system')
    add_run_arguments(parser, model=False)
    parser.add_argument('--m', type=float, help='moment order')
    parser.add_argument('--t-grid', dest='t_grid', type=parse_floats)
    parser.add_argument('--dt', type=float)
    parser.set_defaults(handler=lotka_moments)

    parser = subparsers.add_parser('lotka-coupled', help='stopped sup distance of coupled Lotka-Volterra paths')
    add_run_arguments(parser, model=False)
    parser.add_argument('--y0', type=parse_vectors, help="second starts, ';'-separated vectors")
    parser.add_argument('--R', dest='R', type=float, help='declared bound on the l1 norm of the starts')
    parser.set_defaults(handler=lotka_coupled)
