import numpy as np
import pytest

from utils.errors import ConfigError
from utils.model_library import MODELS, get_model
from utils.rate_families import logistic_rates, parse_table, table_rates
from utils.run_config import load_run_config, parse_floats, parse_vectors, read_config_file


def write_ini(tmp_path, text):
    path = tmp_path / 'experiment.ini'
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_parsers():
    assert parse_floats('0.1, 0.01,0.001') == [0.1, 0.01, 0.001]
    assert parse_vectors('1,2; 1.5,2') == [[1.0, 2.0], [1.5, 2.0]]
    with pytest.raises(ConfigError):
        parse_floats('0.1,abc')


def test_file_values_and_overrides(tmp_path):
    path = write_ini(tmp_path, "[run]\nmodel = smooth-rate\nseed = 5\ndeltas = 0.2, 0.1\nthreads = 3\n"
                               "[model]\namp = 0.25\n")
    cfg = load_run_config('lp-study', path, {'seed': 9, 'n_paths': None})
    assert cfg.get('model') == 'smooth-rate'
    assert cfg.seed == 9
    assert cfg.threads == 3
    assert cfg.get('deltas') == [0.2, 0.1]
    assert cfg.model_params == {'amp': '0.25'}
    assert cfg.output == '-'


def test_echo_leaves_out_threads_and_output(tmp_path):
    path = write_ini(tmp_path, "[run]\nseed = 5\nthreads = 3\noutput = out.csv\nT = 2.0\n")
    echo = load_run_config('supdist', path).echo()
    assert 'seed=5' in echo
    assert 'T=2.0' in echo
    assert not any(line.startswith(('threads', 'output')) for line in echo)


def test_unknown_run_key(tmp_path):
    path = write_ini(tmp_path, "[run]\nseed = 5\nnpaths = 100\n")
    with pytest.raises(ConfigError) as info:
        load_run_config('decouple', path)
    assert info.value.key == 'npaths'


def test_bad_value_names_the_key(tmp_path):
    path = write_ini(tmp_path, "[run]\nn_steps = many\n")
    with pytest.raises(ConfigError) as info:
        load_run_config('decouple', path)
    assert info.value.key == 'n_steps'


def test_unknown_section(tmp_path):
    path = write_ini(tmp_path, "[run]\nseed = 1\n[plot]\ncolour = red\n")
    with pytest.raises(ConfigError) as info:
        read_config_file(path)
    assert info.value.key == 'plot'


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(str(tmp_path / 'absent.ini'))


def test_every_catalogue_model_builds():
    for name in MODELS:
        if name == 'user-table':
            continue
        model = get_model(name)
        assert model.m0 >= 1
        assert model.Q(np.ones(model.r)).shape == (model.m0, model.m0)


def test_model_parameters_are_coerced():
    model = get_model('smooth-rate', {'amp': '0.25', 'mu': '0.1,-0.1'})
    assert np.allclose(model.Q(np.array([100.0])), [[-1.25, 1.25], [0.75, -0.75]])
    with pytest.raises(ConfigError) as info:
        get_model('smooth-rate', {'colour': 'red'})
    assert info.value.key == 'colour'
    with pytest.raises(ConfigError):
        get_model('smooth-rate', {'amp': 'big'})
    with pytest.raises(ConfigError) as info:
        get_model('brownian-bridge')
    assert info.value.key == 'model'


def test_user_table_model():
    sections = {'rates': {'knots': '0, 2', 'table': '-1,1,1,-1; -2,2,0.5,-0.5'}}
    model = get_model('user-table', sections=sections)
    assert model.m0 == 2
    assert np.allclose(model.Q(np.array([1.0])), [[-1.5, 1.5], [0.75, -0.75]])
    assert np.allclose(model.Q(np.array([5.0])), [[-2.0, 2.0], [0.5, -0.5]])
    with pytest.raises(ConfigError):
        get_model('user-table')


def test_table_rates_validation():
    with pytest.raises(ConfigError):
        parse_table([0.0, 1.0], [1.0, 2.0, 3.0], 2)
    with pytest.raises(ConfigError):
        table_rates([1.0, 0.5], np.zeros((2, 2, 2)))


def test_logistic_rates_are_generators():
    rates, rate_jac, top = logistic_rates([[-0.5, 0.5], [0.1, -0.1]], [[-2.0, 2.0], [1.0, -1.0]], 2.0, 1.0, 1)
    for x in (0.0, 0.9, 3.0):
        Q = rates(np.array([x]))
        assert np.allclose(Q.sum(axis=1), 0.0)
        assert np.all(Q - np.diag(np.diag(Q)) >= 0)
    assert top == 2.0
    assert rate_jac(np.array([0.0])).shape == (2, 2, 1)
