import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from cqedtrap.detection import ProtocolConfig, TrialRecord, TriggerCause
from cqedtrap.harness import (
    CurvePoint,
    ExperimentConfig,
    FitError,
    SurvivalCurve,
    binomial_point,
    curve_from_records,
    default_transit_conditions,
    detected_duration,
    fit_exponential,
    phantom_fraction,
    run_transit_survey,
    run_trials,
    subtract_background,
    trial_rng,
)

DELAYS = np.array([20e-3, 30e-3, 40e-3, 50e-3, 60e-3, 70e-3, 80e-3, 90e-3])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(5e-3, 200e-3))
def test_fit_recovers_noiseless_curve(amp, tau):
    p = amp * np.exp(-DELAYS / tau)
    fit = fit_exponential(DELAYS, p, 0.01 * p)
    assert fit.tau == pytest.approx(tau, rel=1e-3)
    assert fit.amplitude == pytest.approx(amp, rel=1e-3)
    assert fit.chi2 < 1e-12


def test_fit_with_offset():
    p = 0.3 * np.exp(-DELAYS / 25e-3) + 0.02
    fit = fit_exponential(DELAYS, p, np.full(p.size, 0.01), offset=True)
    assert fit.tau == pytest.approx(25e-3, rel=1e-3)
    assert fit.offset == pytest.approx(0.02, abs=1e-5)
    assert fit.dof == p.size - 3


def test_fit_matches_scipy_curve_fit(rng):
    trials = 200
    p = rng.binomial(trials, 0.4 * np.exp(-DELAYS / 30e-3)) / trials
    s = np.sqrt(np.maximum(p * (1 - p), 1e-4) / trials)
    fit = fit_exponential(DELAYS, p, s)
    popt, pcov = curve_fit(lambda t, a, tau: a * np.exp(-t / tau), DELAYS, p, p0=[0.4, 30e-3], sigma=s,
                           absolute_sigma=True)
    assert fit.amplitude == pytest.approx(popt[0], rel=1e-5)
    assert fit.tau == pytest.approx(popt[1], rel=1e-5)
    assert fit.tau_stderr == pytest.approx(math.sqrt(pcov[1, 1]), rel=1e-4)


def test_fit_needs_three_points():
    with pytest.raises(FitError):
        fit_exponential([20e-3], [0.1], [0.01])
    with pytest.raises(FitError):
        fit_exponential([20e-3, 40e-3, 60e-3], [0.1, 0.0, 0.0], [0.01, 0.01, 0.01])


def test_fit_reports_non_convergence():
    p = 0.3 * np.exp(-DELAYS / 30e-3)
    with pytest.raises(FitError, match="no convergence"):
        fit_exponential(DELAYS, p * (1 + 0.3 * np.sin(DELAYS * 300)), 0.01 * p, max_iter=1, tol=0.0)


@pytest.mark.slow
def test_stderr_coverage(rng):
    trials, tau, hits = 400, 30e-3, 0
    reps = 100
    for _ in range(reps):
        k = rng.binomial(trials, 0.4 * np.exp(-DELAYS / tau))
        pts = [binomial_point(d, int(n), trials) for d, n in zip(DELAYS, k)]
        fit = fit_exponential(DELAYS, [q.p_trap for q in pts], [q.stderr for q in pts], trials=[trials] * 8)
        hits += abs(fit.tau - tau) <= fit.tau_stderr
    assert 0.58 <= hits / reps <= 0.78


def test_stderr_scales_as_inverse_root_n():
    p = 0.4 * np.exp(-DELAYS / 30e-3)
    errs = []
    for n in (100, 400, 1600):
        s = np.sqrt(p * (1 - p) / n)
        errs.append(fit_exponential(DELAYS, p, s).tau_stderr)
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=1e-6)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=1e-6)


def test_binomial_point():
    pt = binomial_point(0.02, 30, 120)
    assert pt.p_trap == 0.25
    assert pt.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 120))
    empty = binomial_point(0.02, 0, 0)
    assert math.isnan(empty.p_trap) and empty.flag == "no_triggers"


def _curve(sig, bg, err=0.01):
    pts = tuple(CurvePoint(d, s, err, 100) for d, s in zip(DELAYS, sig))
    bgs = tuple(CurvePoint(d, b, err, 100) for d, b in zip(DELAYS, bg))
    return SurvivalCurve(pts, bgs)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=8, max_size=8), st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_subtraction_adds_back(sig, bg):
    out = subtract_background(_curve(sig, bg))
    for o, s, b in zip(out.points, sig, bg):
        if s >= b:
            assert o.p_trap + b == pytest.approx(s)
        else:
            assert o.p_trap == 0.0 and "clipped" in o.flag
        assert o.stderr == pytest.approx(math.sqrt(2) * 0.01)


def test_subtraction_zero_background_is_identity():
    sig = 0.3 * np.exp(-DELAYS / 30e-3)
    out = subtract_background(_curve(sig, np.zeros(8)))
    assert np.allclose(out.p_trap, sig)
    assert all(p.flag == "" for p in out.points)


def test_subtraction_flags_low_confidence():
    out = subtract_background(_curve([0.5] + [0.11] * 7, [0.0] + [0.105] * 7))
    assert out.points[0].flag == ""
    assert all("low_confidence" in p.flag for p in out.points[1:])


def test_subtraction_rejects_mismatched_grids():
    c = _curve(np.ones(8) * 0.2, np.zeros(8))
    bad = SurvivalCurve(c.points, c.background_points[:-1])
    with pytest.raises(ValueError):
        subtract_background(bad)
    shifted = SurvivalCurve(c.points, tuple(replace(p, hold_delay=p.hold_delay + 1e-3) for p in c.background_points))
    with pytest.raises(ValueError):
        subtract_background(shifted)


def _record(triggered=True, redetected=False, cause=None, seed=0):
    return TrialRecord(seed=seed, hold_delay=0.02, triggered=triggered, redetected=redetected, trigger_cause=cause)


def test_curve_counts_only_triggered_trials():
    recs = [_record(redetected=True), _record(), _record(triggered=False), _record(redetected=True)]
    (pt,) = curve_from_records([0.02], [recs])
    assert pt.n_trials == 3 and pt.p_trap == pytest.approx(2 / 3)
    (short,) = curve_from_records([2e-3], [recs])
    assert short.flag == "short_delay"


def test_phantom_fraction_counts_trapping_triggers():
    recs = [_record(cause=TriggerCause.PHANTOM), _record(cause=TriggerCause.REAL_ATOM),
            _record(cause=TriggerCause.REAL_ATOM), _record(), _record(triggered=False)]
    assert phantom_fraction(recs) == pytest.approx(1 / 3)
    assert math.isnan(phantom_fraction([_record()]))


def test_trial_streams_are_distinct_and_stable():
    a = trial_rng(1, 0, 0).random(4)
    assert np.array_equal(a, trial_rng(1, 0, 0).random(4))
    assert not np.array_equal(a, trial_rng(1, 0, 1).random(4))
    assert not np.array_equal(a, trial_rng(1, 1, 0).random(4))


def test_experiment_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(trials_per_delay=10)
    with pytest.raises(ValueError):
        ExperimentConfig(delays=(0.0, 1e-3))


def test_results_independent_of_worker_count():
    cfg = ProtocolConfig(noise_enabled=False)
    one = run_trials(cfg, (2e-3, 4e-3), 6, master_seed=11, workers=1)
    two = run_trials(cfg, (2e-3, 4e-3), 6, master_seed=11, workers=2)
    assert [[r.as_dict() for r in d] for d in one] == [[r.as_dict() for r in d] for d in two]


@pytest.mark.slow
def test_plateau_without_heating_or_collisions():
    cfg = ProtocolConfig(noise_enabled=False, collision_lifetime=0)
    recs = run_trials(cfg, (30e-3, 80e-3), 150, master_seed=5)
    # without heating only marginally bound atoms leave their local well, so escapes are rare
    trapped = [r for d in recs for r in d if r.n_trapped]
    assert sum(r.escape_time is not None for r in trapped) < 0.1 * len(trapped)
    a, b = curve_from_records((30e-3, 80e-3), recs)
    assert abs(a.p_trap - b.p_trap) <= 3 * math.hypot(a.stderr, b.stderr)


def test_detected_duration():
    y = np.ones(100)
    y[10:30] = 0.2
    y[50:55] = 0.1
    assert detected_duration(y, 1e-6, 0.05) == pytest.approx(20e-6)
    assert detected_duration(np.ones(10), 1e-6, 0.05) == 0.0


def test_slower_atoms_give_longer_transits():
    stats = run_transit_survey(default_transit_conditions(), 60, seed=3)
    med = [s.median_duration for s in stats]
    assert med[0] < med[1] < med[2]
    crossing = [s.median_crossing for s in stats]
    assert crossing[0] < crossing[1] < crossing[2]
