import math

import numpy as np
import pytest

from models import check_jacobians, check_model
from utils.counterexample import (CxDraw, cx_as_model, cx_decoupling_probability, cx_exact_paths, cx_gap_estimate,
                                  cx_gap_oracle, cx_lower_bound, cx_lower_bound_limit, cx_quotients, cx_sample)
from utils.errors import DomainError
from utils.paths import NoiseStream


def test_clocks_are_nested():
    for index in range(50):
        draw = cx_sample(10, NoiseStream(3, index))
        assert draw.tau_2n <= draw.tau_1n <= draw.tau_1


def test_quotients_of_a_known_draw():
    draw = CxDraw(y0=0.5, y1=0.3, y2=0.1)
    z1, z2 = cx_quotients(draw, 10, 1.0)
    assert z1 == pytest.approx(1.0 + (0.5 - 0.3) * 10)
    assert z2 == pytest.approx(1.0 + (0.5 - 0.1) * 5)


def test_quotients_after_the_horizon():
    draw = CxDraw(y0=3.0, y1=2.0, y2=1.5)
    assert cx_quotients(draw, 4, 1.0) == (1.0, 1.0)


def test_exact_paths_match_quotients():
    draw = CxDraw(y0=0.8, y1=0.6, y2=2.0)
    n, T = 5, 1.0
    paths = cx_exact_paths(draw, n, T)
    z1, z2 = cx_quotients(draw, n, T)
    assert (paths['x=1/n'] - paths['x=0']) * n == pytest.approx(z1)
    assert (paths['x=2/n'] - paths['x=0']) * n / 2 == pytest.approx(z2)


def test_invalid_arguments():
    with pytest.raises(DomainError):
        cx_lower_bound(0, 1.0)
    with pytest.raises(DomainError):
        cx_gap_estimate(2.5, 1.0, 10, 0)
    with pytest.raises(DomainError):
        cx_quotients(CxDraw(1.0, 1.0, 1.0), 1, 0.0)
    with pytest.raises(DomainError):
        CxDraw(-1.0, 1.0, 1.0)


def test_lower_bounds():
    assert cx_lower_bound(10, 1.0) == pytest.approx(7.997e-3, rel=1e-3)
    assert cx_lower_bound_limit(1.0) == pytest.approx(6.876e-3, rel=1e-3)
    bounds = [cx_lower_bound(n, 1.0) for n in (1, 10, 100, 1000)]
    assert all(a > b for a, b in zip(bounds, bounds[1:]))
    assert bounds[-1] > cx_lower_bound_limit(1.0)


def test_oracle_exceeds_lower_bounds():
    for n in (1, 10, 100):
        value = cx_gap_oracle(n, 1.0)
        assert value > cx_lower_bound(n, 1.0)
        assert value > cx_lower_bound_limit(1.0)


def test_oracle_matches_monte_carlo():
    n, T = 10, 1.0
    estimate = cx_gap_estimate(n, T, 20000, 17, threads=2)
    assert estimate.aborted == 0
    assert estimate.within(cx_gap_oracle(n, T), 4.0)


def test_gap_estimate_does_not_depend_on_threads():
    assert cx_gap_estimate(10, 1.0, 300, 5, threads=1) == cx_gap_estimate(10, 1.0, 300, 5, threads=4)


def test_decoupling_probability():
    assert cx_decoupling_probability(0.1, 1.0) == pytest.approx(0.1 / 1.1 * (1.0 - math.exp(-1.1)))
    assert cx_decoupling_probability(0.1, 1.0) == pytest.approx(0.060648, rel=1e-4)


def test_model_form_is_valid():
    model = cx_as_model(0.1)
    points = [np.array([v]) for v in (0.3, 0.7, 1.0, 1.5, 2.2, 2.7)]
    assert check_model(model, points).ok
    assert check_jacobians(model, points).ok
    assert np.allclose(model.Q(np.array([1.5])), [[-1.5, 1.5], [0.0, 0.0]])
    assert np.allclose(model.b(np.array([1.0]), 2), [1.0])
    with pytest.raises(DomainError):
        cx_as_model(1.5)
