import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cqedtrap.cavity import ProbeConfig
from cqedtrap.detection import (
    ArrivalModel,
    DetectionChain,
    Phase,
    ProtocolConfig,
    ProtocolState,
    TimingSequence,
    detect_trigger,
    detected_rate,
    filter_signal,
    photocurrent,
    run_protocol,
    schedule_violations,
    shot_noise_rms,
)
from cqedtrap.dynamics import AtomState, Status
from cqedtrap.physics import CavityQedParams, central_antinode


def test_detected_rate(params):
    rate = detected_rate(1.0, ProbeConfig(), DetectionChain(), params)
    assert rate == pytest.approx(0.47 * 2 * 2 * math.pi * 4e6 * 0.1, rel=1e-12)
    assert rate == pytest.approx(2.362e6, rel=1e-3)


def test_dark_cavity_gives_no_counts(params, rng):
    counts = photocurrent(np.zeros(10_000), ProbeConfig(), DetectionChain(), params, rng)
    assert counts.sum() == 0


def test_counts_are_poisson(params, rng):
    counts = photocurrent(np.ones(10_000), ProbeConfig(), DetectionChain(), params, rng)
    mean = counts.mean()
    assert mean == pytest.approx(2.362, rel=0.03)
    # dispersion index: (n - 1) s^2 / mean is chi-square with n - 1 dof
    d = (counts.size - 1) * counts.var(ddof=1) / mean
    p = stats.chi2.sf(d, counts.size - 1)
    assert 0.001 < p < 0.999


def test_bin_width_guard(params, rng):
    with pytest.raises(ValueError):
        photocurrent(np.ones(10), ProbeConfig(), DetectionChain(), params, rng, dt=1e-5)
    with pytest.raises(ValueError):
        DetectionChain(bin_dt=5e-6)


def test_filter_steady_state_and_step():
    chain = DetectionChain()
    assert filter_signal(np.full(2000, 3.0), chain, 3.0)[-1] == pytest.approx(1.0)
    x = np.concatenate([np.full(100, 1.0), np.zeros(100)])
    y = filter_signal(x, chain, 1.0)
    t = (np.arange(200) - 99) * chain.bin_dt
    t_e = np.interp(-1 / math.e, -y[99:], t[99:])
    assert t_e == pytest.approx(1 / (2 * math.pi * 30e3), rel=0.03)
    assert chain.time_constant == pytest.approx(5.305e-6, rel=1e-3)


def test_filtered_shot_noise_rms(params, rng):
    chain = DetectionChain()
    ref = float(detected_rate(1.0, ProbeConfig(), chain, params)) * chain.bin_dt
    counts = rng.poisson(ref, 400_000)
    y = filter_signal(counts, chain, ref)
    assert y[1000:].std() == pytest.approx(shot_noise_rms(chain, ref), rel=0.03)
    raw = (counts / ref).std()
    # bandwidth reduction relative to the 500 kHz Nyquist band of the bins
    assert y[1000:].std() / raw == pytest.approx(math.sqrt(chain.smoothing() / (2 - chain.smoothing())), rel=0.03)


def _times(n, dt=1e-6):
    return np.arange(n) * dt


def test_clean_dip_fires_at_onset():
    chain = DetectionChain(threshold_fraction=0.7)
    x = np.ones(400)
    x[200:] = 0.3
    y = filter_signal(x, chain, 1.0)
    ev = detect_trigger(y, _times(400), chain)
    assert ev is not None
    delay = ev.crossing_time - 200e-6
    # crossing of 0.7 on the way to 0.3: tau * ln(0.7 / 0.4)
    assert 0 <= delay <= chain.time_constant * math.log(0.7 / 0.4) + 2e-6
    assert ev.time - ev.crossing_time == pytest.approx((chain.sustain_bins - 1) * 1e-6)


def test_short_dip_ignored():
    chain = DetectionChain()
    y = np.ones(300)
    y[100:100 + chain.sustain_bins - 1] = 0.0
    assert detect_trigger(y, _times(300), chain) is None
    y[100:100 + chain.sustain_bins] = 0.0
    assert detect_trigger(y, _times(300), chain) is not None


def test_failed_dip_keeps_detector_armed():
    chain = DetectionChain(threshold_fraction=0.5, hysteresis_fraction=0.2)
    y = np.ones(300)
    y[50:52] = 0.4  # too short to count
    y[52:100] = 0.55  # recovers only partway
    y[100:150] = 0.1
    assert detect_trigger(y, _times(300), chain).crossing_time == pytest.approx(100e-6)


def test_dark_start_needs_recovery_above_hysteresis():
    chain = DetectionChain(threshold_fraction=0.5, hysteresis_fraction=0.2)
    y = np.full(300, 0.1)
    y[50:100] = 0.65  # above threshold but below the arming level
    assert detect_trigger(y, _times(300), chain, initially_armed=False) is None
    y[50:100] = 0.75
    assert detect_trigger(y, _times(300), chain, initially_armed=False).crossing_time == pytest.approx(100e-6)


def test_initially_disarmed_needs_rise_first():
    chain = DetectionChain()
    y = np.zeros(200)
    assert detect_trigger(y, _times(200), chain, initially_armed=False) is None
    y[50:100] = 1.0
    ev = detect_trigger(y, _times(200), chain, initially_armed=False)
    assert ev.crossing_time == pytest.approx(100e-6)


def test_window_respected():
    chain = DetectionChain()
    y = np.ones(500)
    y[100:150] = 0.0
    t = _times(500)
    assert detect_trigger(y, t, chain, window=(200e-6, 400e-6)) is None
    ev = detect_trigger(y, t, chain, window=(0.0, 400e-6))
    assert 0.0 <= ev.time <= 400e-6


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=20, max_size=300))
def test_trigger_agrees_with_reference_loop(levels):
    chain = DetectionChain(threshold_fraction=0.5, hysteresis_fraction=0.1)
    y = np.array(levels)
    t = _times(y.size)
    for armed0 in (True, False):
        # sample-by-sample reference state machine
        armed, run, expected = armed0, -1, None
        for i, v in enumerate(y):
            if not armed:
                armed = v > 0.6
                continue
            if v < 0.5:
                run = i if run < 0 else run
                if i - run + 1 >= chain.sustain_bins:
                    expected = t[i]
                    break
            else:
                run = -1
        ev = detect_trigger(y, t, chain, initially_armed=armed0)
        assert (ev is None and expected is None) or (ev is not None and ev.time == expected)


def false_trigger_probability(chain, params, windows, seed):
    probe = ProbeConfig()
    ref = float(detected_rate(1.0, probe, chain, params)) * chain.bin_dt
    rng = np.random.default_rng(seed)
    n = int(round(3e-3 / chain.bin_dt))
    t = _times(n, chain.bin_dt)
    fired = 0
    for _ in range(windows):
        y = filter_signal(rng.poisson(ref, n), chain, ref)
        fired += detect_trigger(y, t, chain) is not None
    return fired / windows


@pytest.mark.slow
def test_false_trigger_rate_below_one_percent(params):
    p = false_trigger_probability(DetectionChain(), params, 4000, 99)
    assert p < 0.01


def test_protocol_state_flags():
    for phase in Phase:
        s = ProtocolState(phase)
        assert not (s.fort_on and s.cooling_on)
        assert not (s.fort_on and s.probe_on)
    assert ProtocolState(Phase.ARMED).probe_on
    assert ProtocolState(Phase.FORT_HOLD).fort_on
    assert ProtocolState(Phase.COOLING).cooling_on


def test_timing_validation():
    with pytest.raises(ValueError):
        TimingSequence(t2_cool_rampdown_start=36e-3)
    with pytest.raises(ValueError):
        TimingSequence(hold_delay=-1e-3)
    with pytest.raises(ValueError):
        TimingSequence(asynchronous_offset=5e-3)


def _quiet_cfg(**kw):
    base = ProtocolConfig(arrivals=ArrivalModel(mean_atoms_in_mode=0.0), noise_enabled=False,
                          params=CavityQedParams(delta_ac_jitter=0.0), record_events=True)
    return replace(base, **kw)


def _central_atom(params, t_closest, speed=0.02):
    # passes the mode centre at t_closest moving slowly upwards along z
    return AtomState([central_antinode(params), 0.0, 0.0], [0.0, 0.0, speed], t_closest, Status.FALLING)


def test_no_atoms_no_trigger():
    rec = run_protocol(_quiet_cfg(), np.random.default_rng(1))
    assert not rec.triggered and not rec.redetected and rec.n_atoms == 0


def test_central_atom_zero_hold_is_redetected(params):
    t3 = TimingSequence().t3_cool_end_probe_on
    atom = _central_atom(params, t3 + 1.8e-3)
    cfg = _quiet_cfg(arrivals=ArrivalModel(mean_atoms_in_mode=0.0, extra_atoms=(atom,)))
    rec = run_protocol(cfg, np.random.default_rng(2), hold_delay=0.0)
    assert rec.triggered and rec.n_trapped == 1
    assert rec.trigger_cause.value == "real_atom"
    assert rec.survived_truth and rec.redetected


def test_trapped_atom_survives_quiet_hold(params):
    t3 = TimingSequence().t3_cool_end_probe_on
    atom = _central_atom(params, t3 + 1.8e-3)
    cfg = _quiet_cfg(arrivals=ArrivalModel(mean_atoms_in_mode=0.0, extra_atoms=(atom,)), collision_lifetime=0)
    rec = run_protocol(cfg, np.random.default_rng(3), hold_delay=2e-3)
    assert rec.n_trapped == 1 and rec.survived_truth and rec.escape_time is None


def test_event_log_follows_schedule(params):
    t3 = TimingSequence().t3_cool_end_probe_on
    atom = _central_atom(params, t3 + 1.8e-3)
    cfg = _quiet_cfg(arrivals=ArrivalModel(mean_atoms_in_mode=0.0, extra_atoms=(atom,)))
    rec = run_protocol(cfg, np.random.default_rng(4), hold_delay=5e-3)
    assert rec.triggered
    assert schedule_violations(rec, cfg.timing) == []
    # a tampered log is caught
    bad = replace(rec, events=[(t, ph, pr, True, co, lv) if ph == "detect" else (t, ph, pr, fo, co, lv)
                               for t, ph, pr, fo, co, lv in rec.events])
    assert schedule_violations(bad, cfg.timing)


def test_untriggered_log_follows_schedule():
    cfg = _quiet_cfg()
    rec = run_protocol(cfg, np.random.default_rng(8))
    assert not rec.triggered
    assert schedule_violations(rec, cfg.timing) == []


def test_trigger_inside_armed_window():
    cfg = ProtocolConfig(noise_enabled=False)
    t3 = cfg.timing.t3_cool_end_probe_on
    for i in range(40):
        rec = run_protocol(cfg, np.random.default_rng([5, i]), hold_delay=0.0)
        if rec.triggered:
            assert t3 < rec.trigger_time <= t3 + cfg.timing.trigger_window


def test_bitwise_reproducible():
    cfg = ProtocolConfig(noise_enabled=True)
    a = run_protocol(replace(cfg, record_events=True), np.random.default_rng([9, 1]), hold_delay=3e-3)
    b = run_protocol(replace(cfg, record_events=True), np.random.default_rng([9, 1]), hold_delay=3e-3)
    assert a.as_dict() == b.as_dict()
    assert a.events == b.events


def test_asynchronous_variant_gates_without_trigger():
    timing = TimingSequence(asynchronous_offset=0.5e-3)
    cfg = _quiet_cfg(timing=timing)
    rec = run_protocol(cfg, np.random.default_rng(6), hold_delay=1e-3)
    assert rec.triggered
    assert rec.trigger_time == pytest.approx(timing.t3_cool_end_probe_on + 0.5e-3)
    assert rec.trigger_cause is None


def test_fort_off_control_traps_nothing(params):
    t3 = TimingSequence().t3_cool_end_probe_on
    atom = _central_atom(params, t3 + 1.8e-3)
    cfg = _quiet_cfg(arrivals=ArrivalModel(mean_atoms_in_mode=0.0, extra_atoms=(atom,)), fort_enabled=False)
    rec = run_protocol(cfg, np.random.default_rng(7), hold_delay=30e-3)
    assert rec.triggered and rec.n_trapped == 0 and not rec.redetected


def test_scaling_knobs_validated():
    with pytest.raises(ValueError):
        ProtocolConfig(trap_scale=1.5)
