"""Photodetection of the cavity probe, trigger discrimination and the trial timing sequence.

One trial runs through the phases of the loading cycle:

    pre_release -> falling (t0) -> cooling (t1..t3) -> armed (t3..t4)
        -> fort_hold (t4..t5) -> detect (t5..t6) -> done

The probe is on while armed and while detecting, the FORT only during the
hold, the cooling light only between t1 and t3.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .cavity import ProbeConfig, transmission
from .dynamics import (
    CESIUM,
    AtomSpecies,
    AtomState,
    InitialDistribution,
    Status,
    ballistic_positions,
    integrate_trapped_raw,
    sample_initial_state,
)
from .noise import synthesize_noise
from .physics import TWO_PI, CavityQedParams, FortConfig, coupling_g, fort_potential, trap_frequencies


class Phase(str, enum.Enum):
    PRE_RELEASE = "pre_release"
    FALLING = "falling"
    COOLING = "cooling"
    ARMED = "armed"
    FORT_HOLD = "fort_hold"
    DETECT = "detect"
    DONE = "done"


class TriggerCause(str, enum.Enum):
    REAL_ATOM = "real_atom"
    PHANTOM = "phantom"


_FLAGS = {
    # phase: (probe_on, fort_on, cooling_on)
    Phase.PRE_RELEASE: (False, False, False),
    Phase.FALLING: (False, False, False),
    Phase.COOLING: (False, False, True),
    Phase.ARMED: (True, False, False),
    Phase.FORT_HOLD: (False, True, False),
    Phase.DETECT: (True, False, False),
    Phase.DONE: (False, False, False),
}


@dataclass(frozen=True)
class ProtocolState:
    phase: Phase = Phase.PRE_RELEASE

    @property
    def probe_on(self) -> bool:
        return _FLAGS[self.phase][0]

    @property
    def fort_on(self) -> bool:
        return _FLAGS[self.phase][1]

    @property
    def cooling_on(self) -> bool:
        return _FLAGS[self.phase][2]


@dataclass(frozen=True)
class DetectionChain:
    efficiency: float = 0.47
    bandwidth: float = 30e3
    bin_dt: float = 1e-6
    threshold_fraction: float = 0.5
    hysteresis_fraction: float = 0.1
    sustain_time_constants: float = 2.0
    blanking_time_constants: float = 4.0

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not 0 < self.threshold_fraction < 1:
            raise ValueError("threshold_fraction must lie in (0, 1)")
        if self.hysteresis_fraction < 0:
            raise ValueError("hysteresis_fraction must be non-negative")
        if self.sustain_time_constants < 2:
            raise ValueError("the sustain requirement is at least 2 filter time constants")
        if self.bin_dt > 1 / (10 * self.bandwidth):
            raise ValueError(f"bin_dt must be <= 1/(10 bandwidth) = {1 / (10 * self.bandwidth):.3e} s")

    @property
    def time_constant(self) -> float:
        return 1.0 / (TWO_PI * self.bandwidth)

    @property
    def blanking_time(self) -> float:
        """Settling interval after the probe switches on, ignored by redetection."""
        return self.blanking_time_constants * self.time_constant

    @property
    def sustain_bins(self) -> int:
        return int(math.ceil(self.sustain_time_constants * self.time_constant / self.bin_dt - 1e-9))

    def smoothing(self, dt: float | None = None) -> float:
        dt = self.bin_dt if dt is None else dt
        return 1.0 - math.exp(-dt / self.time_constant)


@dataclass(frozen=True)
class TimingSequence:
    """Event schedule of one loading cycle (seconds after MOT release).

    ``hold_delay`` is t5 - t4; the detection window ends the cycle at
    t6 = t5 + ``detect_window``.
    """

    t0_release: float = 0.0
    t1_cool_on_fort_off: float = 34e-3
    t2_cool_rampdown_start: float = 35e-3
    t3_cool_end_probe_on: float = 35.5e-3
    trigger_window: float = 3e-3
    hold_delay: float = 10e-3
    detect_window: float = 1e-3
    asynchronous_offset: float | None = None

    def __post_init__(self):
        times = (self.t0_release, self.t1_cool_on_fort_off, self.t2_cool_rampdown_start, self.t3_cool_end_probe_on)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("t0 < t1 < t2 < t3 must hold")
        if self.trigger_window <= 0 or self.detect_window <= 0 or self.hold_delay < 0:
            raise ValueError("windows must be positive and the hold delay non-negative")
        if self.asynchronous_offset is not None and not 0 <= self.asynchronous_offset <= self.trigger_window:
            raise ValueError("asynchronous FORT turn-on must fall inside the trigger window")

    @property
    def window_end(self) -> float:
        return self.t3_cool_end_probe_on + self.trigger_window

    def schedule(self, t4: float | None) -> list[tuple[float, Phase]]:
        """Phase boundaries for a trial triggered at ``t4`` (None: no trigger)."""
        out = [
            (-math.inf, Phase.PRE_RELEASE),
            (self.t0_release, Phase.FALLING),
            (self.t1_cool_on_fort_off, Phase.COOLING),
            (self.t3_cool_end_probe_on, Phase.ARMED),
        ]
        if t4 is None:
            out.append((self.window_end, Phase.DONE))
        else:
            t5 = t4 + self.hold_delay
            out += [(t4, Phase.FORT_HOLD), (t5, Phase.DETECT), (t5 + self.detect_window, Phase.DONE)]
        return out


@dataclass(frozen=True)
class TriggerEvent:
    time: float
    filtered_level: float
    crossing_time: float
    cause: TriggerCause | None = None


@dataclass(frozen=True)
class ArrivalModel:
    """Cold atoms crossing the cavity mode around the trigger window.

    Closest-approach times follow a Poisson process whose rate is flat for
    ``lead_time`` before t3 and then decays as exp(-(t - t3)/decay_time).
    The flat rate is set so that ``mean_atoms_in_mode`` atoms lie within
    one waist of the axis on average. ``extra_atoms`` are injected verbatim
    (states at their closest approach).
    """

    mean_atoms_in_mode: float = 0.5
    distribution: InitialDistribution = field(default_factory=InitialDistribution)
    lead_time: float = 3e-3
    decay_time: float = 2.5e-3
    horizon: float = 40e-3
    extra_atoms: tuple = ()

    def mean_dwell_time(self, params: CavityQedParams, species: AtomSpecies = CESIUM) -> float:
        """Average time one arriving atom spends within rho < w0."""
        w0 = params.waist_w0
        r0 = self.distribution.offset_radius
        chord = math.pi * w0**2 / (2 * r0) if r0 >= w0 else _mean_chord_inside(w0, r0)
        return chord * _mean_inverse_speed(self.distribution, species)

    def rate(self, params: CavityQedParams, species: AtomSpecies = CESIUM) -> float:
        return self.mean_atoms_in_mode / self.mean_dwell_time(params, species)


def _mean_chord_inside(w0, r0):
    b = np.linspace(-r0, r0, 2001)
    from scipy.integrate import trapezoid

    return float(trapezoid(2 * np.sqrt(np.clip(w0**2 - b**2, 0, None)), b) / (2 * r0))


@functools.lru_cache(maxsize=64)
def _mean_inverse_speed(dist: InitialDistribution, species: AtomSpecies) -> float:
    if not dist.cooled:
        return 1.0 / math.sqrt(2 * species.g_acc * dist.drop_height)
    from scipy import integrate, stats

    lo = min_speed(dist)
    pdf = stats.norm(dist.post_cooling_speed_mean, max(dist.speed_spread, 1e-12)).pdf
    # speed = |N(mean, spread)| redrawn below ``lo``
    dens = lambda v: pdf(v) + pdf(-v)  # noqa: E731
    norm = integrate.quad(dens, lo, np.inf)[0]
    return integrate.quad(lambda v: dens(v) / v, lo, np.inf)[0] / norm


def min_speed(dist: InitialDistribution) -> float:
    return 0.2 * dist.post_cooling_speed_mean


@dataclass
class TrialRecord:
    seed: int | tuple
    hold_delay: float
    triggered: bool
    trigger_cause: TriggerCause | None = None
    survived_truth: bool = False
    redetected: bool = False
    escape_time: float | None = None
    trigger_time: float | None = None
    n_atoms: int = 0
    n_trapped: int = 0
    fort_enabled: bool = True
    events: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "seed": list(self.seed) if isinstance(self.seed, tuple) else self.seed,
            "hold_delay_s": self.hold_delay,
            "triggered": self.triggered,
            "trigger_cause": None if self.trigger_cause is None else self.trigger_cause.value,
            "survived_truth": self.survived_truth,
            "redetected": self.redetected,
            "escape_time_s": self.escape_time,
            "trigger_time_s": self.trigger_time,
            "n_atoms": self.n_atoms,
            "n_trapped": self.n_trapped,
            "fort_enabled": self.fort_enabled,
        }


# ---------------------------------------------------------------------------
# signal chain


def detected_rate(abs2, probe: ProbeConfig, chain: DetectionChain, params: CavityQedParams):
    """Mean detected photon rate (1/s): efficiency * 2 kappa * nbar * |t|^2."""
    return chain.efficiency * 2 * params.kappa * probe.nbar_empty * np.asarray(abs2)


def photocurrent(abs2, probe: ProbeConfig, chain: DetectionChain, params: CavityQedParams,
                 rng: np.random.Generator, dt: float | None = None) -> np.ndarray:
    """Poisson photon counts per bin for the transmitted-intensity samples ``abs2``."""
    dt = chain.bin_dt if dt is None else dt
    if dt > 1 / (10 * chain.bandwidth) * (1 + 1e-9):
        raise ValueError("bin width must be <= 1/(10 bandwidth)")
    lam = detected_rate(abs2, probe, chain, params) * dt
    return rng.poisson(lam)


def filter_signal(counts, chain: DetectionChain, reference: float, initial: float = 1.0,
                  dt: float | None = None) -> np.ndarray:
    """Single-pole low-pass at ``chain.bandwidth`` of counts normalised by ``reference``.

    ``reference`` is the expected count per bin for the empty cavity; the
    output therefore settles at 1 without an atom. ``initial`` is the filter
    state before the first sample (0 for a probe that has just switched on).
    """
    if not reference > 0:
        raise ValueError("reference count per bin must be positive")
    a = chain.smoothing(dt)
    x = np.asarray(counts, dtype=float) / reference
    y, _ = signal.lfilter([a], [1.0, -(1.0 - a)], x, zi=[(1.0 - a) * initial])
    return y


def shot_noise_rms(chain: DetectionChain, reference: float, dt: float | None = None) -> float:
    """Stationary rms of the normalised filtered level for Poisson counts of mean ``reference``."""
    a = chain.smoothing(dt)
    return math.sqrt(a / (2 - a) / reference)


def detect_trigger(levels, times, chain: DetectionChain, window: tuple[float, float] | None = None,
                   initially_armed: bool = True) -> TriggerEvent | None:
    """Falling-edge discriminator with sustain and hysteresis.

    Fires once the level has stayed below ``threshold_fraction`` for
    ``sustain_bins`` samples; the event time is when the sustain is met.
    Hysteresis governs arming: a disarmed detector (one that has just fired,
    or ``initially_armed`` False for a filter starting dark) must first see the
    level recover above threshold + hysteresis. Short dips that fail the
    sustain leave an armed detector armed.
    """
    levels = np.asarray(levels, dtype=float)
    times = np.asarray(times, dtype=float)
    thr = chain.threshold_fraction
    need = chain.sustain_bins
    if window is not None:
        sel = (times >= window[0]) & (times <= window[1])
        levels, times = levels[sel], times[sel]
    if not initially_armed:
        high = np.flatnonzero(levels > thr + chain.hysteresis_fraction)
        if high.size == 0:
            return None
        levels, times = levels[high[0]:], times[high[0]:]
    below = levels < thr
    if not below.any():
        return None
    # runs of consecutive sub-threshold samples
    edges = np.diff(np.concatenate([[0], below.astype(np.int8), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    long_runs = np.flatnonzero(stops - starts >= need)
    if long_runs.size == 0:
        return None
    s = starts[long_runs[0]]
    i = s + need - 1
    return TriggerEvent(time=float(times[i]), filtered_level=float(levels[i]), crossing_time=float(times[s]))


# ---------------------------------------------------------------------------
# protocol


@dataclass(frozen=True)
class ProtocolConfig:
    """Bundle of everything one trial needs besides the random stream."""

    params: CavityQedParams = field(default_factory=CavityQedParams)
    fort: FortConfig = field(default_factory=lambda: FortConfig(stark_ground=-50e6, stark_excited=50e6))
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    chain: DetectionChain = field(default_factory=DetectionChain)
    timing: TimingSequence = field(default_factory=TimingSequence)
    arrivals: ArrivalModel = field(default_factory=ArrivalModel)
    species: AtomSpecies = CESIUM
    fort_enabled: bool = True
    noise_enabled: bool = True
    noise_oversampling: float = 10.0
    dt: float | None = None
    collision_lifetime: float = 100.0
    probe_during_hold: bool = False
    record_events: bool = False
    # thinning factors on bound atoms and on released survivors, for matching
    # a smaller capture/detection product than the bare model gives
    trap_scale: float = 1.0
    detect_scale: float = 1.0

    def __post_init__(self):
        if not (0 <= self.trap_scale <= 1 and 0 <= self.detect_scale <= 1):
            raise ValueError("trap_scale and detect_scale must lie in [0, 1]")


def _sample_arrivals(cfg: ProtocolConfig, rng: np.random.Generator) -> list[AtomState]:
    arr = cfg.arrivals
    t3 = cfg.timing.t3_cool_end_probe_on
    rate = arr.rate(cfg.params, cfg.species) if arr.mean_atoms_in_mode > 0 else 0.0
    atoms = []
    if rate > 0:
        n_lead = rng.poisson(rate * arr.lead_time)
        times = list(t3 - arr.lead_time * rng.uniform(size=n_lead))
        expected_tail = rate * arr.decay_time * (1 - math.exp(-arr.horizon / arr.decay_time))
        n_tail = rng.poisson(expected_tail)
        u = rng.uniform(size=n_tail)
        # inverse CDF of the truncated exponential on [0, horizon]
        tail = -arr.decay_time * np.log1p(-u * (1 - math.exp(-arr.horizon / arr.decay_time)))
        times += list(t3 + tail)
        dist = arr.distribution
        floor = min_speed(dist)
        for tc in sorted(times):
            state = sample_initial_state(dist, cfg.params, rng, tc, cfg.species)
            if dist.cooled:
                while np.hypot(state.velocity[1], state.velocity[2]) < floor:
                    state = sample_initial_state(dist, cfg.params, rng, tc, cfg.species)
            atoms.append(state)
    atoms.extend(arr.extra_atoms)
    return atoms


def _positions(atoms, times, g_acc):
    """Ballistic positions of every atom at ``times``: shape (n_atoms, n_times, 3)."""
    if not atoms:
        return np.zeros((0, len(times), 3))
    return np.stack([ballistic_positions(a.position, a.velocity, times - a.time, g_acc) for a in atoms])


def _couplings(pos, params):
    """|g| (rad/s) with atoms outside the mirror gap set to zero."""
    if pos.shape[0] == 0:
        return np.zeros(pos.shape[:2])
    x = pos[..., 0]
    inside = (x >= 0) & (x <= params.cavity_length_l)
    safe = pos.copy()
    safe[..., 0] = np.clip(x, 0, params.cavity_length_l)
    return np.where(inside, np.abs(coupling_g(safe, params)), 0.0)


def _probe_stream(abs2, cfg, rng, initial):
    probe, chain, params = cfg.probe, cfg.chain, cfg.params
    ref_abs2 = float(transmission(probe, params, g=0.0, delta_ac=cfg.params.delta_ac).abs2)
    reference = float(detected_rate(ref_abs2, probe, chain, params)) * chain.bin_dt
    counts = photocurrent(abs2, probe, chain, params, rng)
    return filter_signal(counts, chain, reference, initial=initial), reference


def run_protocol(cfg: ProtocolConfig, rng: np.random.Generator, seed=None,
                 hold_delay: float | None = None) -> TrialRecord:
    """Execute one loading cycle and return its record.

    Streams for arrivals, photon counts and FORT noise are spawned from
    ``rng`` so that each is reproducible on its own.
    """
    timing = cfg.timing if hold_delay is None else replace(cfg.timing, hold_delay=hold_delay)
    params, chain, species = cfg.params, cfg.chain, cfg.species
    g_acc = species.g_acc
    arrival_rng, count_rng, noise_rng, loss_rng, jitter_rng, thin_rng = rng.spawn(6)
    dac = params.delta_ac
    if params.delta_ac_jitter > 0:
        dac += jitter_rng.uniform(-params.delta_ac_jitter, params.delta_ac_jitter)
    trial_params = replace(params, delta_ac=dac)
    tcfg = replace(cfg, params=trial_params, timing=timing)

    atoms = _sample_arrivals(tcfg, arrival_rng)
    record = TrialRecord(seed=seed, hold_delay=timing.hold_delay, triggered=False, n_atoms=len(atoms),
                         fort_enabled=cfg.fort_enabled)
    events = []

    # armed window: probe on, filter starts dark
    t3 = timing.t3_cool_end_probe_on
    n_bins = int(round(timing.trigger_window / chain.bin_dt))
    t_arm = t3 + chain.bin_dt * np.arange(1, n_bins + 1)
    g_arm = _couplings(_positions(atoms, t_arm, g_acc), trial_params)
    g_dom = g_arm.max(axis=0) if atoms else np.zeros(n_bins)
    abs2 = transmission(cfg.probe, trial_params, g=g_dom).abs2
    level_arm, _ = _probe_stream(abs2, tcfg, count_rng, initial=0.0)

    if timing.asynchronous_offset is not None:
        t4 = t3 + timing.asynchronous_offset
        i4 = min(n_bins - 1, max(0, int(round(timing.asynchronous_offset / chain.bin_dt)) - 1))
        trigger = TriggerEvent(time=t4, filtered_level=float(level_arm[i4]), crossing_time=t4)
    else:
        trigger = detect_trigger(level_arm, t_arm, chain, initially_armed=False)

    if cfg.record_events:
        for t, ph in timing.schedule(None if trigger is None else trigger.time):
            if math.isfinite(t):
                st = ProtocolState(ph)
                events.append((t, ph.value, st.probe_on, st.fort_on, st.cooling_on, None))
        # levels are stamped at bin ends; keep those strictly inside the armed phase
        end = timing.window_end if trigger is None else trigger.time
        stop = int(np.searchsorted(t_arm, end - 1e-12, side="left"))
        for t, v in zip(t_arm[:stop], level_arm[:stop]):
            events.append((t, Phase.ARMED.value, True, False, False, float(v)))

    if trigger is None:
        record.events = sorted(events, key=lambda e: e[0])
        return record

    record.triggered = True
    t4 = trigger.time
    record.trigger_time = t4
    t5 = t4 + timing.hold_delay

    # who caused the dip: the most strongly coupled atom when the trigger fires
    states_t4 = []
    trigger_idx = None
    if atoms:
        gc = _couplings(_positions(atoms, np.array([t4]), g_acc), trial_params)[:, 0]
        trigger_idx = int(np.argmax(gc)) if gc.max() > 0 else None
        for a in atoms:
            dtt = t4 - a.time
            pos = ballistic_positions(a.position, a.velocity, np.array([dtt]), g_acc)[0]
            vel = a.velocity.copy()
            vel[2] -= g_acc * dtt
            states_t4.append((pos, vel))

    # FORT on: which atoms are bound
    fort = cfg.fort
    trapped = []
    if cfg.fort_enabled and fort.fort_on:
        for i, (pos, vel) in enumerate(states_t4):
            if not 0 <= pos[0] <= trial_params.cavity_length_l:
                continue
            u = fort_potential(pos, fort, trial_params).energy
            kinetic = 0.5 * species.mass * float(vel @ vel)
            if kinetic + u < 0 and (cfg.trap_scale == 1 or thin_rng.uniform() < cfg.trap_scale):
                trapped.append(i)
    record.n_trapped = len(trapped)
    if trapped:
        # phantom: some atom other than the one that caused the dip is bound
        alone = trapped == [trigger_idx]
        record.trigger_cause = TriggerCause.REAL_ATOM if alone else TriggerCause.PHANTOM

    # hold: integrate bound atoms in the noisy FORT
    survivors = []
    escape_times = []
    if trapped and timing.hold_delay > 0:
        nu_axial = trap_frequencies(fort, trial_params, species)[1]
        eps, eps_rate = np.zeros(0), 1.0
        if cfg.noise_enabled and fort.noise_psd is not None:
            fs = cfg.noise_oversampling * 2 * nu_axial
            series = synthesize_noise(fort.noise_psd, timing.hold_delay * (1 + 1e-6) + 2 / fs, fs, noise_rng,
                                      f_interest=2 * nu_axial)
            eps, eps_rate = series.samples, series.sample_rate
        for i in trapped:
            pos, vel = states_t4[i]
            loss_time = t4 + loss_rng.exponential(cfg.collision_lifetime) if cfg.collision_lifetime else math.inf
            esc, final = integrate_trapped_raw(np.concatenate([pos, vel]), t4, timing.hold_delay, fort, eps,
                                               eps_rate, trial_params, species, dt=cfg.dt, loss_time=loss_time)
            if esc is None:
                survivors.append(AtomState(final[:3], final[3:], t5, Status.TRAPPED))
            else:
                escape_times.append(esc)
    elif trapped:
        survivors = [AtomState(states_t4[i][0], states_t4[i][1], t5, Status.TRAPPED) for i in trapped]
    record.survived_truth = bool(survivors)
    if trapped and not survivors:
        record.escape_time = max(escape_times)

    # detection window: FORT off, probe on; released survivors plus any atom still passing
    n_det = int(round(timing.detect_window / chain.bin_dt))
    t_det = t5 + chain.bin_dt * np.arange(1, n_det + 1)
    late = [a for j, a in enumerate(atoms) if j not in trapped]
    shown = [s for s in survivors if cfg.detect_scale == 1 or thin_rng.uniform() < cfg.detect_scale]
    free = [AtomState(s.position, s.velocity, t5, Status.IN_MODE) for s in shown] + late
    g_det = _couplings(_positions(free, t_det, g_acc), trial_params)
    g_dom = g_det.max(axis=0) if free else np.zeros(n_det)
    abs2 = transmission(cfg.probe, trial_params, g=g_dom).abs2
    level_det, _ = _probe_stream(abs2, tcfg, count_rng, initial=0.0)
    redetect = detect_trigger(level_det, t_det, chain, window=(t5 + chain.blanking_time, math.inf),
                              initially_armed=True)
    record.redetected = redetect is not None

    if cfg.record_events:
        for t, v in zip(t_det[:-1], level_det[:-1]):
            events.append((t, Phase.DETECT.value, True, False, False, float(v)))
    record.events = sorted(events, key=lambda e: (e[0], e[5] is not None))
    return record


def schedule_violations(record: TrialRecord, timing: TimingSequence) -> list[str]:
    """Mismatches between a recorded event log and the loading-cycle schedule.

    The expected flags are written out from the interval definitions: cooling
    on over [t1, t3), probe on over [t3, t4) and [t5, t6), FORT on over
    [t4, t5), nothing after t6. An untriggered trial ends at the close of the
    trigger window. An empty list means the log conforms.
    """
    t1, t3 = timing.t1_cool_on_fort_off, timing.t3_cool_end_probe_on
    if record.triggered:
        t4 = record.trigger_time
        t5 = t4 + record.hold_delay
        t6 = t5 + timing.detect_window
        marks = [timing.t0_release, t1, t3, t4, t5, t6]
        names = ["falling", "cooling", "armed", "fort_hold", "detect", "done"]
    else:
        t4 = t5 = t6 = timing.window_end
        marks = [timing.t0_release, t1, t3, t4]
        names = ["falling", "cooling", "armed", "done"]
    problems = []
    boundaries = [(e[0], e[1]) for e in record.events if e[5] is None]
    if [b[1] for b in boundaries] != names:
        problems.append(f"phase order {[b[1] for b in boundaries]} != {names}")
    elif not np.allclose([b[0] for b in boundaries], marks, rtol=0, atol=1e-12):
        problems.append(f"phase times {[b[0] for b in boundaries]} != {marks}")
    for t, phase, probe, fort, cooling, _ in record.events:
        want = (
            t3 <= t < t4 or t5 <= t < t6,
            t4 <= t < t5 and record.triggered,
            t1 <= t < t3,
        )
        if (probe, fort, cooling) != want:
            problems.append(f"t={t:.9f} {phase}: flags (probe, fort, cooling)={(probe, fort, cooling)}, "
                            f"expected {want}")
        if fort and (probe or cooling):
            problems.append(f"t={t:.9f}: FORT on together with probe or cooling")
    return problems
