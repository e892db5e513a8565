import numpy as np
import pytest

from models import check_jacobians
from utils.errors import ConfigError, DomainError
from utils.lotka import (LVSpec, default_lv_spec, lv_as_model, lv_coupled_distance, lv_moment_check, lv_simulate,
                         lv_spec_from_section)
from utils.paths import NoiseStream, TimeGrid, simulate_path
from utils.rate_families import constant_rates


def single_species(b=1.0, a=1.0, sigma=0.0, require_competition=True):
    rates, rate_jac, _ = constant_rates(np.zeros((1, 1)), 1)
    return LVSpec(r=1, b=[[b]], A=[[[a]]], sigma=[[sigma]], rates=rates, rate_bound=1.0, rate_jac=rate_jac,
                  require_competition=require_competition)


def test_spec_invariants():
    with pytest.raises(DomainError):
        single_species(a=0.0)
    with pytest.raises(DomainError):
        single_species(a=-1.0, require_competition=False)
    rates, _, _ = constant_rates(np.zeros((1, 1)), 2)
    with pytest.raises(DomainError):
        LVSpec(r=2, b=[[1.0, 1.0]], A=[[[1.0, -0.1], [0.0, 1.0]]], sigma=[[0.1, 0.1]], rates=rates, rate_bound=1.0)
    with pytest.raises(DomainError):
        LVSpec(r=2, b=[[1.0]], A=[[[1.0]]], sigma=[[0.1]], rates=rates, rate_bound=1.0)


def test_invalid_rates_are_rejected():
    bad, _, _ = constant_rates(np.array([[-0.5, 0.2], [0.3, -0.3]]), 1)
    with pytest.raises(DomainError):
        LVSpec(r=1, b=[[1.0], [1.0]], A=[[[1.0]], [[1.0]]], sigma=[[0.0], [0.0]], rates=bad, rate_bound=1.0)


def test_pure_growth_is_exponential():
    spec = single_species(b=0.7, a=0.0, require_competition=False)
    grid = TimeGrid(2.0, 40)
    path = lv_simulate(spec, [0.5], 1, grid, NoiseStream(0, 0))
    assert np.allclose(path.states[:, 0], 0.5 * np.exp(0.7 * grid.times), rtol=1e-12)


def test_logistic_growth_approaches_capacity():
    spec = single_species(b=1.0, a=1.0)
    path = lv_simulate(spec, [0.5], 1, TimeGrid(2.0, 200), NoiseStream(0, 0))
    exact = 1.0 / (1.0 + np.exp(-2.0))
    assert path.final_state[0] == pytest.approx(exact, rel=1e-2)


def test_paths_stay_positive():
    spec = default_lv_spec()
    for index in range(5):
        path = lv_simulate(spec, [0.05, 3.0], 1, TimeGrid(3.0, 100), NoiseStream(1, index))
        assert np.all(path.states > 0)
        assert set(path.regimes.tolist()) <= {1, 2}


def test_start_must_be_positive():
    with pytest.raises(DomainError):
        lv_simulate(default_lv_spec(), [0.0, 1.0], 1, TimeGrid(1.0, 10), NoiseStream(0, 0))


def test_log_model_matches_simulation():
    spec = default_lv_spec()
    model = lv_as_model(spec)
    grid = TimeGrid(1.0, 50)
    path = lv_simulate(spec, [0.8, 1.2], 2, grid, NoiseStream(4, 2))
    log_path = simulate_path(model, np.log([0.8, 1.2]), 2, grid, NoiseStream(4, 2))
    assert np.array_equal(path.states, np.exp(log_path.states))
    assert np.array_equal(path.regimes, log_path.regimes)


def test_log_model_jacobians():
    model = lv_as_model(default_lv_spec())
    points = [np.log([0.5, 2.0]), np.zeros(2), np.log([1.5, 0.3])]
    report = check_jacobians(model, points)
    assert report.ok, report.messages()


def test_moment_check_of_deterministic_logistic():
    spec = single_species(b=1.0, a=1.0)
    report = lv_moment_check(spec, [0.5], 1.0, [0.5, 1.0, 2.0], 2, 0, dt=0.01, threads=1)
    assert report.bounded
    assert report.aborted == 0
    assert [t for t, _ in report.rows] == pytest.approx([0.5, 1.0, 2.0])
    assert report.sup_doubled <= 1.0 + 1e-9
    means = [e.mean for _, e in report.rows]
    assert means[0] < means[1] < means[2]


def test_moment_check_rejects_bad_order():
    with pytest.raises(DomainError):
        lv_moment_check(default_lv_spec(), [1.0, 1.0], 0.0, [1.0], 10, 0)


def test_coupled_distance_from_the_same_start_is_zero():
    report = lv_coupled_distance(default_lv_spec(), [1.0, 1.0], [[1.0, 1.0]], 1.0, 20, 0, n_steps=20, threads=2)
    distance, estimate = report.rows[0]
    assert distance == 0.0
    assert estimate.mean == 0.0
    assert report.fit is None


def test_coupled_distance_respects_the_declared_radius():
    with pytest.raises(DomainError):
        lv_coupled_distance(default_lv_spec(), [1.0, 1.0], [[2.0, 1.5]], 1.0, 20, 0, R=3.0)


@pytest.mark.slow
def test_coupled_distance_scales_quadratically():
    x0 = [1.0, 1.0]
    y0s = [[1.0 + 2.0 ** -k, 1.0 + 2.0 ** -k] for k in range(2, 7)]
    report = lv_coupled_distance(default_lv_spec(), x0, y0s, 1.0, 500, 3, n_steps=100)
    assert 1.8 <= report.fit.slope <= 2.2


def test_section_parsing():
    section = {
        'r': '2', 'm0': '2',
        'b': '1.0, 0.8, 0.6, 1.0',
        'a': '1,0.2,0.3,1, 1.2,0.1,0.2,0.9',
        'sigma': '0.3,0.2,0.2,0.3',
        'rates': 'constant',
        'q': '-0.5,0.5,0.4,-0.4',
    }
    spec = lv_spec_from_section(section)
    assert spec.m0 == 2 and spec.r == 2
    assert spec.A.shape == (2, 2, 2)
    assert np.allclose(spec.rates(np.ones(2)), [[-0.5, 0.5], [0.4, -0.4]])


def test_section_with_logistic_rates():
    section = {'r': '1', 'm0': '2', 'b': '1,0.5', 'a': '1,1', 'sigma': '0.1,0.1', 'rates': 'logistic',
               'q_low': '-0.2,0.2,0.2,-0.2', 'q_high': '-1,1,1,-1', 'steepness': '3', 'midpoint': '1'}
    spec = lv_spec_from_section(section)
    assert spec.family == 'logistic'
    assert spec.rates(np.array([100.0]))[0, 1] == pytest.approx(1.0)
    assert check_jacobians(lv_as_model(spec), [np.array([0.1]), np.array([-0.5])]).ok


@pytest.mark.parametrize("section,key", [
    ({'r': '1', 'b': '1', 'a': '1', 'sigma': '0', 'colour': 'red'}, 'colour'),
    ({'r': '1', 'b': '1,2', 'a': '1', 'sigma': '0'}, 'b'),
    ({'r': '1', 'a': '1', 'sigma': '0'}, 'b'),
    ({'r': '1', 'b': '1', 'a': '1', 'sigma': '0', 'rates': 'cubic'}, 'rates'),
])
def test_section_errors_name_the_key(section, key):
    with pytest.raises(ConfigError) as info:
        lv_spec_from_section(section)
    assert info.value.key == key
