"""
validate, simulate and coupled: model checks and single-trajectory dumps
"""
import itertools
import logging
import sys

import numpy as np

from config import Config
from models import check_jacobians, check_model
from routes.common import (EXIT_OK, EXIT_USAGE, add_run_arguments, build_model, comments, start_point)
from utils.paths import (NoiseStream, TimeGrid, simulate_coupled, simulate_path, write_coupled_csv,
                         write_path_csv)
from utils.reporting import write_csv
from utils.run_config import parse_floats

logger = logging.getLogger(__name__)


def _sample_points(x: np.ndarray):
    offsets = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
    if x.size == 1:
        return [x + o for o in offsets]
    # axis-aligned sample points keep the count linear in the dimension
    return [x] + [x + o * np.eye(x.size)[a] for a, o in itertools.product(range(x.size), offsets) if o != 0.0]


def validate(cfg) -> int:
    model = build_model(cfg)
    x = start_point(cfg, model, [1.0] * model.r if model.name == 'lotka' else None)
    points = _sample_points(x)
    rates = check_model(model, points)
    jacobians = check_jacobians(model, points)

    rows = [['rates'] + [v.get(k) for k in ('kind', 'row', 'col', 'value', 'message')] for v in rates.violations]
    rows += [['jacobians'] + [v.get(k) for k in ('kind', 'row', 'col', 'value', 'message')]
             for v in jacobians.violations]
    if not rows:
        rows = [['model', 'ok', None, None, None, f"{model.name} passed at {len(points)} points"]]
    write_csv(cfg.output, ['check', 'kind', 'row', 'col', 'value', 'message'], rows, comments(cfg),
              stream=sys.stdout)

    if not (rates.ok and jacobians.ok):
        for message in rates.messages() + jacobians.messages():
            print(f"invalid model: {message}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def simulate(cfg) -> int:
    model = build_model(cfg)
    grid = TimeGrid(cfg.get('T', Config.DEFAULT_T), cfg.get('n_steps', Config.DEFAULT_N_STEPS))
    stream = NoiseStream(cfg.seed, cfg.get('index', 0))
    path = simulate_path(model, start_point(cfg, model), cfg.get('i', 1), grid, stream)
    logger.info(f"Simulated {model.name}: {len(path.switch_times)} regime switch(es)")
    write_path_csv(path, cfg.output, comments(cfg), stream=sys.stdout)
    return EXIT_OK


def coupled(cfg) -> int:
    model = build_model(cfg)
    grid = TimeGrid(cfg.get('T', Config.DEFAULT_T), cfg.get('n_steps', Config.DEFAULT_N_STEPS))
    x = start_point(cfg, model)
    e = np.zeros(model.r)
    e[0] = 1.0
    if cfg.get('direction') is not None:
        e = np.asarray(cfg.get('direction'), dtype=float)
    stream = NoiseStream(cfg.seed, cfg.get('index', 0))
    sample = simulate_coupled(model, x, x + cfg.get('delta', 0.1) * e, cfg.get('i', 1), grid, stream)
    if sample.tau_delta is not None:
        logger.info(f"Regimes decoupled at t={sample.tau_delta:.6g}")
    write_coupled_csv(sample, cfg.output, comments(cfg), stream=sys.stdout)
    return EXIT_OK


def register(subparsers):
    parser = subparsers.add_parser('validate', help='check rates, the rate bound and Jacobians of a model')
    add_run_arguments(parser)
    parser.set_defaults(handler=validate)

    parser = subparsers.add_parser('simulate', help='write one trajectory as CSV')
    add_run_arguments(parser)
    parser.add_argument('--index', type=int, help='path index of the noise stream')
    parser.set_defaults(handler=simulate)

    parser = subparsers.add_parser('coupled', help='write one coupled trajectory pair as CSV')
    add_run_arguments(parser)
    parser.add_argument('--delta', type=float)
    parser.add_argument('--direction', type=parse_floats)
    parser.add_argument('--index', type=int)
    parser.set_defaults(handler=coupled)
