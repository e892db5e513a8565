import io
import math

import numpy as np
import pytest
from scipy import stats

from utils.errors import CapabilityError, DomainError
from utils.functional import (build_weighted_path, default_n_max, direct_value, fd_gradient_oracle,
                              functional_value_cm, gradient_cm, path_weight, write_gradient_csv, zeta_hat,
                              zeta_hat_terms)
from utils.model_library import geometric, holder_rate, markovian_linear, smooth_rate
from utils.paths import NoiseStream, TimeGrid


def mixed(x, j):
    return float(np.tanh(x[0])) + (1.0 if j == 2 else 0.0)


def mixed_grad(x, j):
    return np.array([1.0 / np.cosh(x[0]) ** 2])


def test_single_regime_weight_is_one():
    model = geometric()
    grid = TimeGrid(1.0, 20)
    for index in range(5):
        wp = build_weighted_path(model, [1.0], 1, grid, NoiseStream(0, index))
        assert wp.weight == 1.0
        assert wp.chain.n_jumps == 0


def test_uniform_rates_give_unit_weight(uniform_three_regime):
    grid = TimeGrid(1.5, 30)
    for index in range(10):
        wp = build_weighted_path(uniform_three_regime, [0.2], 1, grid, NoiseStream(3, index))
        assert wp.weight == pytest.approx(1.0, rel=1e-9)
        assert path_weight(uniform_three_regime, wp.zpath, wp.chain, 1.5) == pytest.approx(wp.weight)


def test_forbidden_transitions_zero_the_weight(frozen_two_regime):
    grid = TimeGrid(1.0, 10)
    for index in range(20):
        wp = build_weighted_path(frozen_two_regime, [0.0], 1, grid, NoiseStream(1, index))
        if wp.chain.n_jumps:
            assert wp.weight == 0.0
        else:
            assert wp.weight == pytest.approx(math.e)


def test_weights_have_unit_mean():
    model = smooth_rate()
    grid = TimeGrid(1.0, 20)
    estimate = functional_value_cm(model, lambda x, j: 1.0, [0.3], 1, 1.0, grid, 2000, 5, threads=2)
    assert estimate.within(1.0, 4.0)


def test_frozen_regime_is_recovered(frozen_two_regime):
    grid = TimeGrid(1.0, 10)
    estimate = functional_value_cm(frozen_two_regime, lambda x, j: 1.0 if j == 1 else 0.0, [0.0], 1, 1.0,
                                   grid, 2000, 7, threads=2)
    assert estimate.within(1.0, 4.0)


def test_change_of_measure_agrees_with_direct_simulation():
    model = smooth_rate()
    grid = TimeGrid(1.0, 50)
    cm = functional_value_cm(model, mixed, [0.2], 1, 1.0, grid, 2000, 11, threads=2)
    direct = direct_value(model, mixed, [0.2], 1, grid, 2000, 12, threads=2)
    combined = math.sqrt(cm.stderr ** 2 + direct.stderr ** 2)
    assert abs(cm.mean - direct.mean) <= 4.0 * combined + 0.01


def test_two_state_chain_occupation(make_model):
    model = make_model(m0=2, Q=[[-1.0, 1.0], [1.0, -1.0]])
    grid = TimeGrid(1.0, 50)
    indicator = lambda x, j: 1.0 if j == 2 else 0.0
    exact = (1.0 - math.exp(-2.0)) / 2.0
    direct = direct_value(model, indicator, [0.0], 1, grid, 3000, 2, threads=2)
    assert direct.within(exact, 4.0, slack=grid.dt)
    cm = functional_value_cm(model, indicator, [0.0], 1, 1.0, grid, 3000, 3, threads=2)
    # constant rates with q_i = m0 - 1: the weights are all one
    assert cm.within(exact, 4.0)


def test_horizon_mismatch_is_rejected():
    with pytest.raises(DomainError):
        functional_value_cm(smooth_rate(), mixed, [0.0], 1, 2.0, TimeGrid(1.0, 10), 10, 0, threads=1)


def test_zeta_hat_of_the_identity(make_model):
    model = make_model()
    grid = TimeGrid(1.0, 10)
    wp = build_weighted_path(model, [0.4], 1, grid, NoiseStream(0, 0), with_tangent=True)
    assert zeta_hat(model, lambda x, j: float(x[0]), lambda x, j: np.ones(1), wp, 1.0) == pytest.approx(1.0)


def test_constant_rates_leave_only_the_pathwise_term():
    model = markovian_linear()
    grid = TimeGrid(1.0, 20)
    for index in range(10):
        wp = build_weighted_path(model, [0.1], 1, grid, NoiseStream(2, index), with_tangent=True)
        pathwise, transitions, holding = zeta_hat_terms(model, mixed, mixed_grad, wp)
        assert transitions == 0.0
        assert holding == 0.0
        assert pathwise == pytest.approx(float(mixed_grad(wp.zpath.final_state, 1)[0] * wp.eta.final[0, 0])
                                         * wp.weight)


def test_zeta_hat_needs_rate_derivatives():
    model = holder_rate()
    grid = TimeGrid(1.0, 10)
    wp = build_weighted_path(model, [0.3], 1, grid, NoiseStream(0, 0), with_tangent=True)
    with pytest.raises(CapabilityError):
        zeta_hat_terms(model, mixed, mixed_grad, wp)
    with pytest.raises(CapabilityError):
        gradient_cm(model, mixed, mixed_grad, [0.3], 1, 1.0, grid, 10, 0, threads=1)


@pytest.mark.parametrize("m0,T", [(2, 1.0), (3, 2.0), (4, 0.5)])
def test_default_series_depth(m0, T):
    n = default_n_max(m0, T)
    mu = (m0 - 1) * T
    assert stats.poisson.sf(n - 1, mu) < 1e-6
    assert stats.poisson.sf(n - 2, mu) >= 1e-6


def test_default_series_depth_single_regime():
    assert default_n_max(1, 5.0) == 1


def test_gradient_of_a_frozen_state(make_model):
    model = make_model()
    grid = TimeGrid(1.0, 10)
    estimate = gradient_cm(model, lambda x, j: float(x[0] ** 2), lambda x, j: 2 * x, [0.7], 1, 1.0, grid, 50, 0,
                           threads=2)
    assert estimate.value.mean == pytest.approx(0.49)
    assert estimate.gradient[0].mean == pytest.approx(1.4)
    assert estimate.truncated_mass == 0.0
    assert estimate.n_max == 1


def test_deep_paths_are_truncated(uniform_three_regime):
    grid = TimeGrid(1.0, 10)
    estimate = gradient_cm(uniform_three_regime, mixed, mixed_grad, [0.0], 1, 1.0, grid, 200, 3, n_max=1,
                           threads=2)
    # P(no jump of a rate-2 chain before 1) = e^-2
    assert estimate.truncated_mass == pytest.approx(1.0 - math.exp(-2.0), abs=0.15)


def test_finite_difference_oracle_is_exact_without_noise(make_model):
    model = make_model()
    oracle = fd_gradient_oracle(model, lambda x, j: float(x[0] ** 2), [0.7], 1, 1.0, 1e-3, 20, 0, threads=1)
    assert oracle.mean == pytest.approx(1.4, rel=1e-9)
    oracle = fd_gradient_oracle(model, lambda x, j: float(x[0]), [0.7], 1, 1.0, 1e-3, 20, 0, threads=1)
    assert oracle.mean == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(DomainError):
        fd_gradient_oracle(model, mixed, [0.7], 1, 1.0, 0.0, 20, 0, threads=1)


@pytest.mark.slow
def test_zeta_hat_matches_finite_differences():
    model = smooth_rate()
    grid = TimeGrid(1.0, 50)
    estimate = gradient_cm(model, mixed, mixed_grad, [0.2], 1, 1.0, grid, 20000, 21)
    oracle = fd_gradient_oracle(model, mixed, [0.2], 1, 1.0, 0.05, 20000, 22, grid=grid)
    g = estimate.gradient[0]
    assert abs(g.mean - oracle.mean) <= 4.0 * math.sqrt(g.stderr ** 2 + oracle.stderr ** 2) + 0.02


def test_gradient_csv():
    model = smooth_rate()
    grid = TimeGrid(1.0, 10)
    estimate = gradient_cm(model, mixed, mixed_grad, [0.0], 1, 1.0, grid, 50, 0, threads=1)
    out = io.StringIO()
    write_gradient_csv(estimate, '-', stream=out)
    lines = out.getvalue().splitlines()
    assert lines[0] == 'component,value,stderr,n,n_max,truncated_mass'
    assert lines[1].startswith('u,')
    assert lines[2].startswith('du/dx[e1],')
