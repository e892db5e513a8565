"""
lp-study, decouple, supdist, dynkin and feller
"""
import logging
import sys

import numpy as np

from config import Config
from models import ModelSpec
from routes.common import (add_delta_arguments, add_run_arguments, build_model, comments, finish,
                           observable_for, start_point)
from utils.counterexample import cx_decoupling_probability
from utils.run_config import parse_floats, parse_vectors
from utils.sensitivity import (StudyConfig, decoupling_probability_study, dynkin_residual, feller_gap,
                               feller_truncation_check, lp_error_study, richardson_ratio, sup_distance_study,
                               weak_order_failures)

logger = logging.getLogger(__name__)


def study_config(cfg) -> StudyConfig:
    kwargs = {'T': cfg.get('T', Config.DEFAULT_T), 'n_steps': cfg.get('n_steps', Config.DEFAULT_N_STEPS),
              'n_paths': cfg.get('n_paths', Config.DEFAULT_N_PATHS), 'p': cfg.get('p', 2.0),
              'seed': cfg.seed, 'threads': cfg.threads}
    if cfg.get('deltas') is not None:
        kwargs['deltas'] = tuple(cfg.get('deltas'))
    if cfg.get('direction') is not None:
        kwargs['direction'] = tuple(cfg.get('direction'))
    return StudyConfig(**kwargs)


def has_constant_rates(model: ModelSpec, x: np.ndarray) -> bool:
    """Q(x) identical at x and at unit offsets along every axis"""
    base = model.Q(x)
    return all(np.array_equal(base, model.Q(x + o * np.eye(model.r)[a]))
               for a in range(model.r) for o in (-1.0, 1.0))


def lp_study(cfg) -> int:
    model = build_model(cfg)
    x = start_point(cfg, model)
    report = lp_error_study(model, x, cfg.get('i', 1), study_config(cfg))
    report.write_csv(cfg.output, comments(cfg), stream=sys.stdout)

    failures = []
    means = [e.mean for e in report.estimates()]
    if any(b >= a for a, b in zip(means, means[1:])):
        failures.append(f"L^p errors are not strictly decreasing: {means}")
    if has_constant_rates(model, x) and means and means[-1] > 0.1 * means[0]:
        failures.append(f"final error {means[-1]:.3g} exceeds a tenth of the first {means[0]:.3g}")
    if not all(row.extra['power_mean_ok'] for row in report.rows):
        failures.append("power-mean inequality violated")
    return finish(report.estimates(), cfg, failures)


def decouple(cfg) -> int:
    model = build_model(cfg)
    x = start_point(cfg, model, [1.0] if model.name == 'counterexample' else None)
    study = study_config(cfg)
    report = decoupling_probability_study(model, x, cfg.get('i', 1), study)
    report.write_csv(cfg.output, comments(cfg), stream=sys.stdout)

    failures = []
    lam = model.holder_exponent
    if report.fit is not None and lam is not None:
        upper = lam + (0.1 if model.name == 'counterexample' else 0.25)
        lower = lam - (0.1 if model.name == 'counterexample' else 0.15)
        if not lower <= report.fit.slope <= upper:
            failures.append(f"fitted exponent {report.fit.slope:.3f} outside [{lower:.2f}, {upper:.2f}]")
    if model.name == 'counterexample':
        for row in report.rows:
            exact = cx_decoupling_probability(row.key, study.T)
            if not row.estimate.within(exact, 3.0):
                failures.append(f"delta={row.key:g}: frequency {row.estimate.mean:.5f} vs exact {exact:.5f}")
    return finish(report.estimates(), cfg, failures)


def supdist(cfg) -> int:
    model = build_model(cfg)
    x = start_point(cfg, model)
    report = sup_distance_study(model, x, cfg.get('i', 1), study_config(cfg))
    report.write_csv(cfg.output, comments(cfg), stream=sys.stdout)

    failures = []
    lam = model.holder_exponent if model.holder_exponent is not None else 1.0
    floor = 0.85 if lam == 1.0 else lam - 0.15
    if report.fit is None:
        failures.append("no fit")
    elif report.fit.slope < floor:
        failures.append(f"sup-distance slope {report.fit.slope:.3f} below {floor:.2f}")
    return finish(report.estimates(), cfg, failures)


def dynkin(cfg) -> int:
    model = build_model(cfg)
    observable = observable_for(cfg, 'square')
    dt_list = cfg.get('dt_list', [1e-2, 5e-3])
    report = dynkin_residual(model, observable.f, observable.grad, observable.hess, start_point(cfg, model),
                             cfg.get('i', 1), cfg.get('T', Config.DEFAULT_T), dt_list,
                             cfg.get('n_paths', Config.DEFAULT_N_PATHS), cfg.seed, cfg.threads)
    ratios = richardson_ratio([(row.key, row.estimate.mean) for row in report.rows])
    report.notes.extend(f"richardson_ratio={r!r}" for r in ratios)
    report.write_csv(cfg.output, comments(cfg), stream=sys.stdout)

    failures = []
    for row in report.rows:
        if row.extra['residual'] > 3.0 * row.estimate.stderr + 2.0 * row.key:
            failures.append(f"dt={row.key:g}: residual {row.extra['residual']:.3g} exceeds 3 stderr + 2 dt")
    failures.extend(weak_order_failures(report.rows))
    return finish(report.estimates(), cfg, failures)


def feller(cfg) -> int:
    model = build_model(cfg)
    observable = observable_for(cfg, 'clamp')
    x = start_point(cfg, model)
    xs = cfg.get('xs')
    if xs is None:
        xs = [x + 2.0 ** -n * np.ones(model.r) for n in range(1, 9)]
    T = cfg.get('T', Config.DEFAULT_T)
    n_paths = cfg.get('n_paths', Config.DEFAULT_N_PATHS)
    n_steps = cfg.get('n_steps', Config.DEFAULT_N_STEPS)
    i = cfg.get('i', 1)

    failures = []
    H = cfg.get('H')
    if H is not None:
        check = feller_truncation_check(model, observable.f, x, i, xs, T, H, cfg.get('w', 1.0), n_paths, cfg.seed,
                                        n_steps, cfg.threads)
        report = check.raw
        for row, tol, trunc in zip(report.rows, check.tolerances, check.truncated.rows):
            row.extra['truncated_gap'] = trunc.extra['gap']
            row.extra['tolerance'] = tol
        report.notes.append(f"escape_probability={check.escape.mean!r}")
        if not check.agree:
            failures.append("raw and truncated gaps disagree")
        estimates = report.estimates() + check.truncated.estimates() + [check.escape]
    else:
        report = feller_gap(model, observable.f, x, i, xs, T, n_paths, cfg.seed, n_steps, cfg.threads)
        estimates = report.estimates()
    report.write_csv(cfg.output, comments(cfg), stream=sys.stdout)

    if not report.metadata['feller_ok']:
        failures.append("gaps at the two closest starts exceed 3 combined stderr")
    return finish(estimates, cfg, failures)


def register(subparsers):
    parser = subparsers.add_parser('lp-study', help='L^p error of difference quotients against the tangent')
    add_run_arguments(parser)
    add_delta_arguments(parser)
    parser.add_argument('--p', type=float)
    parser.set_defaults(handler=lp_study)

    parser = subparsers.add_parser('decouple', help='probability that coupled regimes split before T')
    add_run_arguments(parser)
    add_delta_arguments(parser)
    parser.set_defaults(handler=decouple)

    parser = subparsers.add_parser('supdist', help='sup distance of coupled paths against delta')
    add_run_arguments(parser)
    add_delta_arguments(parser)
    parser.set_defaults(handler=supdist)

    parser = subparsers.add_parser('dynkin', help="residual of Dynkin's formula per step size")
    add_run_arguments(parser)
    parser.add_argument('--dt-list', dest='dt_list', type=parse_floats)
    parser.add_argument('--test-function', dest='test_function')
    parser.set_defaults(handler=dynkin)

    parser = subparsers.add_parser('feller', help='gaps E f(X^{x_n}) - E f(X^x) as x_n approaches x')
    add_run_arguments(parser)
    parser.add_argument('--xs', type=parse_vectors, help="start points, ';'-separated vectors")
    parser.add_argument('--H', dest='H', type=float, help='also compare with the model cut off at radius H')
    parser.add_argument('--w', type=float, help='cutoff width')
    parser.add_argument('--test-function', dest='test_function')
    parser.set_defaults(handler=feller)
