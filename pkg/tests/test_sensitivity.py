import io
import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from utils.counterexample import cx_as_model, cx_decoupling_probability
from utils.errors import CapabilityError, DomainError
from utils.mc import McEstimate
from utils.model_library import geometric, holder_rate, local_lipschitz, markovian_linear, smooth_rate
from utils.sensitivity import (StudyConfig, StudyRow, decoupling_probability_study, dynkin_residual,
                               escape_probability, feller_gap, feller_truncation_check, lp_error_study,
                               richardson_ratio, sup_distance_study, weak_order_failures)


def clamp(x, i):
    return float(np.clip(x[0], -1.0, 1.0))


def test_study_config_validation():
    with pytest.raises(DomainError):
        StudyConfig(deltas=(0.01, 0.1))
    with pytest.raises(DomainError):
        StudyConfig(deltas=(0.1, -0.01))
    with pytest.raises(DomainError):
        StudyConfig(p=0.0)
    with pytest.raises(DomainError):
        StudyConfig(n_paths=50)
    cfg = StudyConfig(deltas=[0.5, 0.25], threads=7)
    assert cfg.deltas == (0.5, 0.25)
    assert not any(line.startswith('threads=') for line in cfg.echo())
    assert cfg == StudyConfig(deltas=(0.5, 0.25), threads=1)


@pytest.mark.parametrize("s", [0.0, 0.4])
def test_linear_models_have_exact_quotients(s):
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=100, deltas=(0.1, 0.01, 0.001), seed=3, threads=2)
    report = lp_error_study(geometric(a=-0.5, s=s), [1.5], 1, cfg)
    assert [row.key for row in report.rows] == [0.1, 0.01, 0.001]
    for row in report.rows:
        assert row.estimate.mean < 1e-18
        assert row.extra['power_mean_ok']


def test_lp_error_decreases_for_markovian_switching():
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=100, deltas=(0.1, 0.01, 0.001), seed=5, threads=2)
    report = lp_error_study(markovian_linear(), [0.5], 1, cfg)
    means = [e.mean for e in report.estimates()]
    assert means[0] > means[1] > means[2]
    assert means[2] <= 0.1 * means[0]
    assert report.fit is not None and report.fit.slope > 1.0


@pytest.mark.slow
def test_lp_error_decreases_for_state_dependent_rates():
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=5000, deltas=(0.1, 0.01, 0.001), p=0.5, seed=19)
    report = lp_error_study(smooth_rate(), [0.2], 1, cfg)
    means = [e.mean for e in report.estimates()]
    assert means[0] > means[1] > means[2]


def test_lp_study_needs_jacobians():
    model = holder_rate()
    with pytest.raises(CapabilityError):
        lp_error_study(replace(model, diffusion_jac=None), [0.0], 1, StudyConfig(n_paths=100))


def test_lp_study_warns_when_p_reaches_the_exponent(caplog):
    cfg = StudyConfig(T=0.5, n_steps=5, n_paths=100, deltas=(0.1, 0.05), p=0.75, seed=1, threads=1)
    with caplog.at_level(logging.WARNING):
        lp_error_study(holder_rate(lam=0.5), [0.3], 1, cfg)
    assert any('Hölder exponent' in r.message for r in caplog.records)


def test_markovian_models_never_decouple():
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=200, deltas=(0.1, 0.01), seed=2, threads=2)
    report = decoupling_probability_study(markovian_linear(), [0.0], 1, cfg)
    assert all(row.estimate.mean == 0.0 for row in report.rows)
    assert report.fit is None
    assert "Markovian: no decoupling" in report.notes


def test_counterexample_decoupling_matches_closed_form():
    cfg = StudyConfig(T=1.0, n_steps=50, n_paths=2000, deltas=(0.4, 0.2), seed=13, threads=2)
    report = decoupling_probability_study(cx_as_model(), [1.0], 1, cfg, min_events=25)
    for row in report.rows:
        assert row.estimate.within(cx_decoupling_probability(row.key, 1.0), 4.0)
        assert row.extra['in_fit']
    assert report.fit is not None


@pytest.mark.slow
def test_holder_exponent_is_recovered():
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=10000, deltas=(1e-1, 1e-2, 1e-3), seed=23)
    report = decoupling_probability_study(holder_rate(lam=0.5), [0.0], 1, cfg)
    assert all(row.extra['in_fit'] for row in report.rows)
    assert 0.35 <= report.fit.slope <= 0.75


def test_decoupling_rows_below_event_floor_are_excluded():
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=100, deltas=(0.4, 0.001), seed=13, threads=2)
    report = decoupling_probability_study(cx_as_model(), [1.0], 1, cfg, min_events=5)
    assert not report.rows[1].extra['in_fit']
    assert any(note.startswith('excluded from fit') for note in report.notes)


def test_sup_distance_of_frozen_paths_is_delta():
    cfg = StudyConfig(T=1.0, n_steps=10, n_paths=100, deltas=(0.1, 0.01, 0.001), seed=0, threads=1)
    report = sup_distance_study(geometric(a=0.0, s=0.0), [1.0], 1, cfg)
    for row in report.rows:
        assert row.estimate.mean == pytest.approx(row.key, rel=1e-9)
        assert row.estimate.stderr == pytest.approx(0.0, abs=1e-15)
    assert report.fit.slope == pytest.approx(1.0, abs=1e-6)


def test_sup_distance_slope_under_contracting_drift(uniform_three_regime):
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=100, deltas=(0.1, 0.01, 0.001), seed=6, threads=2)
    report = sup_distance_study(uniform_three_regime, [0.0], 1, cfg)
    assert abs(report.fit.slope - 1.0) <= 0.1


@pytest.mark.slow
def test_sup_distance_slope_with_lipschitz_rates():
    cfg = StudyConfig(T=1.0, n_steps=20, n_paths=5000, deltas=(0.1, 0.01, 0.001), seed=29)
    report = sup_distance_study(smooth_rate(), [0.2], 1, cfg)
    assert report.fit.slope >= 0.85


def test_study_csv_has_fit_trailer():
    cfg = StudyConfig(T=1.0, n_steps=10, n_paths=100, deltas=(0.1, 0.01), seed=0, threads=1)
    report = sup_distance_study(geometric(a=0.0, s=0.0), [1.0], 1, cfg)
    out = io.StringIO()
    report.write_csv('-', ['seed=0'], stream=out)
    lines = out.getvalue().splitlines()
    assert lines[1] == 'delta,n,mean,stderr,aborted'
    assert lines[-1].startswith('# slope=')


def test_dynkin_residual_of_deterministic_decay(make_model):
    model = make_model(a=-1.0)
    x, T = 1.5, 1.0
    report = dynkin_residual(model, lambda x, i: float(x[0] ** 2), lambda x, i: 2 * x,
                             lambda x, i: np.array([[2.0]]), [x], 1, T, [0.02, 0.01, 0.005], 2, 0, threads=1)
    for row in report.rows:
        dt = row.key
        n = int(round(T / dt))
        r = (1.0 - dt) ** 2
        assert row.extra['residual'] == pytest.approx(x * x * (1 - r ** n) * dt / (2 - dt), rel=1e-9)
    ratios = richardson_ratio([(row.key, row.estimate.mean) for row in report.rows])
    assert len(ratios) == 2
    assert all(1.9 < ratio < 2.1 for ratio in ratios)


def test_dynkin_residual_of_the_regime_indicator(make_model):
    model = make_model(m0=2, Q=[[-1.0, 1.0], [1.0, -1.0]])

    def indicator(x, i):
        return 1.0 if i == 2 else 0.0

    report = dynkin_residual(model, indicator, lambda x, i: np.zeros(1), lambda x, i: np.zeros((1, 1)),
                             [0.0], 1, 1.0, [0.02], 2000, 17, threads=2)
    row = report.rows[0]
    assert row.extra['residual'] <= 4.0 * row.estimate.stderr + 2.0 * row.key


def test_dynkin_residual_of_brownian_square(make_model):
    # E X_T^2 - x^2 = T exactly when b = 0 and sigma = 1
    model = make_model(a=0.0, s=1.0)
    report = dynkin_residual(model, lambda x, i: float(x[0] ** 2), lambda x, i: 2 * x,
                             lambda x, i: np.array([[2.0]]), [0.5], 1, 1.0, [0.01, 0.005], 2000, 3, threads=2)
    for row in report.rows:
        assert row.extra['residual'] <= 3.0 * row.estimate.stderr + 2.0 * row.key


def dynkin_row(dt, mean, stderr):
    return StudyRow(dt, McEstimate(n=100, mean=mean, stderr=stderr), {'residual': abs(mean)})


def test_weak_order_band():
    assert weak_order_failures([dynkin_row(0.02, 0.04, 0.0), dynkin_row(0.01, 0.02, 0.0)]) == []
    failures = weak_order_failures([dynkin_row(0.02, 0.04, 0.0), dynkin_row(0.01, 0.01, 0.0)])
    assert len(failures) == 1
    assert 'outside [1.5, 3]' in failures[0]
    # a residual inside the noise band is not compared
    assert weak_order_failures([dynkin_row(0.02, 0.04, 0.001), dynkin_row(0.01, 0.001, 0.001)]) == []
    # unhalved steps are not compared
    assert weak_order_failures([dynkin_row(0.03, 0.09, 0.0), dynkin_row(0.01, 0.01, 0.0)]) == []


def test_deterministic_decay_meets_the_weak_order_band(make_model):
    model = make_model(a=-1.0)
    report = dynkin_residual(model, lambda x, i: float(x[0] ** 2), lambda x, i: 2 * x,
                             lambda x, i: np.array([[2.0]]), [1.5], 1, 1.0, [0.02, 0.01, 0.005], 2, 0, threads=1)
    assert weak_order_failures(report.rows) == []


def test_richardson_ratio_skips_unhalved_steps():
    assert richardson_ratio([(0.1, 0.4), (0.05, 0.2), (0.01, 0.03)]) == [pytest.approx(2.0)]
    assert richardson_ratio([(0.1, 0.4), (0.05, 0.0)]) == [math.inf]


def test_feller_gap_is_zero_at_the_same_start():
    report = feller_gap(local_lipschitz(), clamp, [0.2], 1, [[0.2], [0.2]], 1.0, 200, 4, n_steps=20, threads=2)
    for row in report.rows:
        assert row.key == 0.0
        assert row.extra['gap'] == 0.0
    assert report.metadata['feller_ok']


def test_feller_gap_shrinks_with_distance(make_model):
    model = make_model(a=-1.0, s=0.5)
    xs = [[0.3 + 2.0 ** -n] for n in range(1, 6)]
    report = feller_gap(model, clamp, [0.3], 1, xs, 1.0, 300, 9, n_steps=20, threads=2)
    for row in report.rows:
        # the flow is a contraction and clamp is 1-Lipschitz
        assert row.extra['gap'] <= row.key + 1e-12
    assert report.metadata['feller_ok']


def test_feller_rejects_unbounded_observable(make_model):
    model = make_model(a=0.0, s=0.0)
    with pytest.raises(DomainError):
        feller_gap(model, lambda x, i: 5.0, [0.0], 1, [[0.1]], 1.0, 10, 0, n_steps=5, threads=1)


def test_escape_probability_extremes(make_model):
    model = make_model(a=0.0, s=0.0)
    assert escape_probability(model, [1.0], 1, 0.5, 1.0, 20, 0, n_steps=5, threads=1).mean == 1.0
    assert escape_probability(model, [1.0], 1, 2.0, 1.0, 20, 0, n_steps=5, threads=1).mean == 0.0


def test_truncation_check_agrees_far_from_the_cutoff():
    check = feller_truncation_check(local_lipschitz(), clamp, [0.0], 1, [[0.25], [0.125]], 1.0, 3.0, 1.0,
                                    300, 31, n_steps=50, threads=2)
    assert check.escape.mean == 0.0
    assert check.agree
    for raw, truncated in zip(check.raw.rows, check.truncated.rows):
        assert raw.extra['gap'] == pytest.approx(truncated.extra['gap'])
