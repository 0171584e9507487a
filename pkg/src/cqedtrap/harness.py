"""Monte Carlo ensembles over the loading protocol: survival curves, background
subtraction, exponential fits and transit-duration surveys."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cavity import ProbeConfig, transmission
from .detection import (
    DetectionChain,
    ProtocolConfig,
    TrialRecord,
    TriggerCause,
    detected_rate,
    filter_signal,
    photocurrent,
    run_protocol,
    shot_noise_rms,
)
from .dynamics import CESIUM, InitialDistribution, ballistic_positions, crossing_interval, sample_initial_state
from .physics import CavityQedParams, FortConfig, coupling_g, fort_potential

log = logging.getLogger(__name__)

# delays below this are generated but excluded from lifetime fits
SHORT_DELAY = 10e-3


class FitError(RuntimeError):
    """Raised when the exponential fit cannot be carried out or does not converge."""


@dataclass(frozen=True)
class CurvePoint:
    hold_delay: float
    p_trap: float
    stderr: float
    n_trials: int
    flag: str = ""


@dataclass(frozen=True)
class SurvivalCurve:
    points: tuple
    background_points: tuple = ()

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.hold_delay for p in self.points])

    @property
    def p_trap(self) -> np.ndarray:
        return np.array([p.p_trap for p in self.points])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([p.stderr for p in self.points])

    def rows(self):
        """(delay_s, p_trap, p_err, n_trials, p_background) rows."""
        bg = {p.hold_delay: p.p_trap for p in self.background_points}
        for p in self.points:
            yield p.hold_delay, p.p_trap, p.stderr, p.n_trials, bg.get(p.hold_delay, float("nan"))


@dataclass(frozen=True)
class LifetimeFit:
    amplitude: float
    tau: float
    tau_stderr: float
    amplitude_stderr: float
    offset: float = 0.0
    offset_stderr: float = 0.0
    chi2: float = 0.0
    dof: int = 0
    converged: bool = True
    iterations: int = 0
    background_tau: float | None = None

    @property
    def chi2_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    @property
    def residual_norm(self) -> float:
        return math.sqrt(self.chi2)

    def as_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "amplitude_stderr": self.amplitude_stderr,
            "tau_s": self.tau,
            "tau_stderr_s": self.tau_stderr,
            "offset": self.offset,
            "chi2_dof": self.chi2_dof,
            "dof": self.dof,
            "converged": self.converged,
            "iterations": self.iterations,
            "background_tau_s": self.background_tau,
        }


def binomial_point(hold_delay, successes, trials, flag="") -> CurvePoint:
    if trials <= 0:
        return CurvePoint(hold_delay, float("nan"), float("nan"), 0, flag or "no_triggers")
    p = successes / trials
    return CurvePoint(hold_delay, p, math.sqrt(p * (1 - p) / trials), trials, flag)


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class ExperimentConfig:
    delays: tuple = (2e-3, 5e-3, 8e-3, 15e-3, 20e-3, 30e-3, 40e-3, 50e-3, 60e-3, 70e-3, 80e-3, 90e-3)
    trials_per_delay: int = 200
    master_seed: int = 0
    background_control: bool = True
    fit_min_delay: float = 20e-3
    fit_max_delay: float = 90e-3
    fit_offset: bool = False
    workers: int = 1
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def __post_init__(self):
        if not self.delays or any(d <= 0 for d in self.delays):
            raise ValueError("delays must be positive")
        if self.trials_per_delay < 50:
            raise ValueError("need at least 50 trials per delay")


def trial_rng(master_seed: int, delay_index: int, trial_index: int) -> np.random.Generator:
    """Per-trial stream; identical for the FORT-on run and its FORT-off control."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, delay_index, trial_index]))


def _run_block(args):
    cfg, master_seed, delay_index, delay, start, stop = args
    out = []
    for i in range(start, stop):
        rec = run_protocol(cfg, trial_rng(master_seed, delay_index, i), seed=(master_seed, delay_index, i),
                           hold_delay=delay)
        out.append(rec)
    return out


def run_trials(cfg: ProtocolConfig, delays, trials_per_delay: int, master_seed: int,
               workers: int = 1) -> list[list[TrialRecord]]:
    """Records per delay, ordered by trial index whatever the worker count."""
    jobs = []
    chunk = max(1, trials_per_delay // max(1, workers * 2))
    for j, d in enumerate(delays):
        for s in range(0, trials_per_delay, chunk):
            jobs.append((cfg, master_seed, j, d, s, min(trials_per_delay, s + chunk)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_run_block, jobs))
    else:
        blocks = [_run_block(job) for job in jobs]
    per_delay = [[] for _ in delays]
    for job, block in zip(jobs, blocks):
        per_delay[job[2]].extend(block)
    for recs in per_delay:
        recs.sort(key=lambda r: r.seed)
    return per_delay


def curve_from_records(delays, records, short_delay: float = SHORT_DELAY) -> tuple:
    points = []
    for d, recs in zip(delays, records):
        triggered = [r for r in recs if r.triggered]
        flag = "short_delay" if d < short_delay else ""
        points.append(binomial_point(d, sum(r.redetected for r in triggered), len(triggered), flag))
    return tuple(points)


@dataclass
class LifetimeExperiment:
    curve: SurvivalCurve
    subtracted: SurvivalCurve
    fit: LifetimeFit | None
    background_fit: LifetimeFit | None
    records: list = field(repr=False, default_factory=list)
    background_records: list = field(repr=False, default_factory=list)

    def phantom_fraction(self) -> float:
        return phantom_fraction([r for recs in self.records for r in recs])


def run_lifetime_experiment(exp: ExperimentConfig) -> LifetimeExperiment:
    """Signal and FORT-off control curves, background-subtracted fit and control fit."""
    delays = tuple(exp.delays)
    records = run_trials(exp.protocol, delays, exp.trials_per_delay, exp.master_seed, exp.workers)
    curve_pts = curve_from_records(delays, records)
    bg_records, bg_pts = [], ()
    if exp.background_control:
        control = replace(exp.protocol, fort_enabled=False)
        bg_records = run_trials(control, delays, exp.trials_per_delay, exp.master_seed, exp.workers)
        bg_pts = curve_from_records(delays, bg_records)
    curve = SurvivalCurve(curve_pts, bg_pts)
    subtracted = subtract_background(curve) if bg_pts else SurvivalCurve(curve_pts)

    fit = None
    sel = [p for p in subtracted.points if exp.fit_min_delay - 1e-12 <= p.hold_delay <= exp.fit_max_delay + 1e-12]
    try:
        fit = fit_exponential([p.hold_delay for p in sel], [p.p_trap for p in sel], [p.stderr for p in sel],
                              offset=exp.fit_offset, trials=[p.n_trials for p in sel])
    except FitError as err:
        log.warning("lifetime fit failed: %s", err)
    bg_fit = None
    if bg_pts:
        try:
            bg_fit = fit_background(SurvivalCurve(bg_pts))
        except FitError as err:
            log.warning("background fit failed: %s", err)
    if fit is not None and bg_fit is not None:
        fit = replace(fit, background_tau=bg_fit.tau)
    return LifetimeExperiment(curve, subtracted, fit, bg_fit, records, bg_records)


def fit_background(curve: SurvivalCurve) -> LifetimeFit:
    """Exponential fit to the FORT-off control over all delays with a non-zero rate."""
    pts = [p for p in curve.points if p.n_trials > 0]
    return fit_exponential([p.hold_delay for p in pts], [p.p_trap for p in pts], [p.stderr for p in pts],
                           trials=[p.n_trials for p in pts])


def phantom_fraction(records) -> float:
    """Share of trapping triggers in which an atom other than the trigger atom was bound."""
    causes = [r.trigger_cause for r in records if r.triggered and r.trigger_cause is not None]
    if not causes:
        return float("nan")
    return sum(c == TriggerCause.PHANTOM for c in causes) / len(causes)


def subtract_background(curve: SurvivalCurve, low_confidence_ratio: float = 10.0) -> SurvivalCurve:
    """Pointwise signal minus control, errors in quadrature.

    Negative differences are clipped to 0 and flagged ``clipped``; points
    where the control exceeds ``low_confidence_ratio`` times the difference
    are flagged ``low_confidence``. Delay flags from the signal are kept.
    """
    if len(curve.points) != len(curve.background_points) or any(
        abs(a.hold_delay - b.hold_delay) > 1e-12 for a, b in zip(curve.points, curve.background_points)
    ):
        raise ValueError("signal and background delay grids differ")
    out = []
    for s, b in zip(curve.points, curve.background_points):
        diff = s.p_trap - b.p_trap
        err = math.hypot(s.stderr, b.stderr)
        flags = [s.flag] if s.flag else []
        if diff < 0:
            diff = 0.0
            flags.append("clipped")
        if b.p_trap > 0 and (diff == 0 or b.p_trap / diff > low_confidence_ratio):
            flags.append("low_confidence")
        out.append(CurvePoint(s.hold_delay, diff, err, s.n_trials, ",".join(flags)))
    return SurvivalCurve(tuple(out), curve.background_points)


# ---------------------------------------------------------------------------
# fitting


def fit_exponential(t, p, stderr=None, *, offset: bool = False, max_iter: int = 100, tol: float = 1e-10,
                    trials=None) -> LifetimeFit:
    """Weighted Gauss-Newton fit of A exp(-t / tau) (+ C with ``offset``).

    Starts from a log-linear fit. Points with p <= 0 are dropped (logged).
    Zero standard errors are floored at 1/N when ``trials`` is given, else
    at the smallest positive error.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    s = np.ones_like(p) if stderr is None else np.asarray(stderr, dtype=float).copy()
    if trials is not None:
        s = np.maximum(s, 1.0 / np.maximum(np.asarray(trials, dtype=float), 1))
    keep = np.isfinite(p) & (p > 0)
    if np.any(~keep):
        log.info("excluding %d point(s) with zero or undefined rate from the fit", int(np.sum(~keep)))
    t, p, s = t[keep], p[keep], s[keep]
    n_par = 3 if offset else 2
    if t.size < max(3, n_par + 1):
        raise FitError(f"need at least {max(3, n_par + 1)} points with p > 0, got {t.size}")
    if np.any(s <= 0):
        pos = s[s > 0]
        if pos.size == 0:
            raise FitError("all standard errors are zero")
        s = np.where(s > 0, s, pos.min())
    w = 1.0 / s

    # log-linear start: ln p = ln A - t / tau, weights p / s
    slope, intercept = np.polyfit(t, np.log(p), 1, w=p / s)
    tau0 = -1.0 / slope if slope < 0 else 10 * (t.max() - t.min() + 1e-12)
    theta = np.array([math.exp(intercept), tau0] + ([0.0] if offset else []))

    def model(th):
        e = np.exp(-t / th[1])
        f = th[0] * e + (th[2] if offset else 0.0)
        jac = [e, th[0] * e * t / th[1] ** 2] + ([np.ones_like(t)] if offset else [])
        return f, np.stack(jac, axis=1)

    def cost(th):
        return float(np.sum(((model(th)[0] - p) * w) ** 2))

    chi2 = cost(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f, jac = model(theta)
        r = (p - f) * w
        jw = jac * w[:, None]
        step, *_ = np.linalg.lstsq(jw, r, rcond=None)
        lam = 1.0
        while True:
            trial = theta + lam * step
            if trial[1] > 0 and (new := cost(trial)) <= chi2 * (1 + 1e-12):
                break
            lam /= 2
            if lam < 1e-8:
                trial, new = theta, chi2
                break
        rel = np.max(np.abs(trial - theta) / np.maximum(np.abs(theta), 1e-300))
        theta, old, chi2 = trial, chi2, new
        if rel < tol or (old - chi2) <= tol * max(chi2, 1e-300) and rel < 1e-6:
            converged = True
            break
    if not converged:
        raise FitError(f"no convergence after {max_iter} iterations: A={theta[0]:.4g}, tau={theta[1]:.4g}, "
                       f"chi2={chi2:.4g}")
    _, jac = model(theta)
    jw = jac * w[:, None]
    try:
        cov = np.linalg.inv(jw.T @ jw)
    except np.linalg.LinAlgError as err:
        raise FitError("singular normal matrix") from err
    errs = np.sqrt(np.diag(cov))
    return LifetimeFit(
        amplitude=float(theta[0]),
        tau=float(theta[1]),
        tau_stderr=float(errs[1]),
        amplitude_stderr=float(errs[0]),
        offset=float(theta[2]) if offset else 0.0,
        offset_stderr=float(errs[2]) if offset else 0.0,
        chi2=chi2,
        dof=int(t.size - n_par),
        converged=True,
        iterations=it,
    )


# ---------------------------------------------------------------------------
# transit survey


@dataclass(frozen=True)
class TransitCondition:
    """One row of the transit taxonomy: how atoms arrive and how they are probed."""

    name: str
    cooled: bool = True
    fort_on: bool = False
    delta_probe: float = 0.0
    delta_ac: float = 0.0
    speed: float | None = None
    distribution: InitialDistribution | None = None
    fort: FortConfig | None = None


@dataclass(frozen=True)
class TransitStats:
    condition: str
    durations: np.ndarray
    crossing_intervals: np.ndarray
    detected: int
    trials: int

    @property
    def median_duration(self) -> float:
        return float(np.median(self.durations)) if self.durations.size else float("nan")

    @property
    def median_crossing(self) -> float:
        c = self.crossing_intervals[self.crossing_intervals > 0]
        return float(np.median(c)) if c.size else float("nan")

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "trials": self.trials,
            "detected": self.detected,
            "median_detected_duration_s": self.median_duration,
            "median_crossing_interval_s": self.median_crossing,
        }


def detected_duration(levels, dt: float, noise_rms: float, k: float = 3.0) -> float:
    """Longest contiguous stretch with |level - 1| > k * noise_rms."""
    dev = np.abs(np.asarray(levels) - 1.0) > k * noise_rms
    if not np.any(dev):
        return 0.0
    edges = np.diff(np.concatenate([[0], dev.astype(np.int8), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    return float(np.max(stops - starts) * dt)


def run_transit_survey(conditions, trials: int, seed: int, *, params: CavityQedParams | None = None,
                       chain: DetectionChain | None = None, nbar: float = 0.1,
                       impact_radius: float | None = None, window: float | None = None) -> list[TransitStats]:
    """Detected transit durations for single atoms crossing the mode.

    Each atom follows a straight line through the mode with impact parameter
    uniform within ``impact_radius`` (default w0 / 2), is probed through the
    detection chain, and yields the longest stretch where the filtered level
    departs from 1 by more than three shot-noise rms. FORT-on conditions
    shift the atomic line by the local Stark shift (the motion stays
    ballistic).
    """
    params = params or CavityQedParams()
    chain = chain or DetectionChain()
    impact = params.waist_w0 / 2 if impact_radius is None else impact_radius
    out = []
    for ci, cond in enumerate(conditions):
        rng = np.random.default_rng(np.random.SeedSequence([seed, ci]))
        dist = cond.distribution or InitialDistribution(cooled=cond.cooled, offset_radius=impact)
        probe = ProbeConfig(delta_probe=cond.delta_probe, nbar_empty=nbar)
        p_cond = replace(params, delta_ac=cond.delta_ac)
        ref = float(detected_rate(transmission(probe, p_cond, g=0.0).abs2, probe, chain, p_cond)) * chain.bin_dt
        noise = shot_noise_rms(chain, ref)
        fort = cond.fort if cond.fort is not None else (FortConfig() if cond.fort_on else None)
        durations, crossings, detected = [], [], 0
        for _ in range(trials):
            atom = sample_initial_state(dist, p_cond, rng, 0.0, CESIUM)
            vel = atom.velocity
            if cond.speed is not None:
                vyz = math.hypot(vel[1], vel[2])
                scale = cond.speed / vyz if vyz > 0 else 0.0
                vel = np.array([vel[0], vel[1] * scale, vel[2] * scale])
            speed = max(math.hypot(vel[1], vel[2]), 1e-4)
            span = window if window is not None else 6 * params.waist_w0 / speed
            times = np.arange(-span / 2, span / 2, chain.bin_dt)
            pos = ballistic_positions(atom.position, vel, times, 0.0)
            pos[:, 0] = np.clip(pos[:, 0], 0, params.cavity_length_l)
            g = coupling_g(pos, p_cond)
            shift = fort_potential(pos, fort, p_cond).transition_shift if fort is not None else 0.0
            abs2 = transmission(probe, p_cond, g=g, fort_shift=shift).abs2
            levels = filter_signal(photocurrent(abs2, probe, chain, p_cond, rng), chain, ref, initial=1.0)
            d = detected_duration(levels, chain.bin_dt, noise)
            crossings.append(crossing_interval(times, pos, params))
            if d > 0:
                detected += 1
                durations.append(d)
        out.append(TransitStats(cond.name, np.array(durations), np.array(crossings), detected, trials))
    return out


def default_transit_conditions() -> list[TransitCondition]:
    """Free fall, cooled, and slow cooled atoms (the last two with progressively lower speed)."""
    return [
        TransitCondition("free_fall", cooled=False),
        TransitCondition("cooled", cooled=True),
        TransitCondition("cooled_slow", cooled=True,
                         distribution=InitialDistribution(post_cooling_speed_mean=0.02, speed_spread=0.008,
                                                          offset_radius=10e-6)),
    ]


# ---------------------------------------------------------------------------
# heating oracle


@dataclass(frozen=True)
class HeatingCheck:
    tau_fitted: float
    tau_analytic: float
    times: np.ndarray = field(repr=False)
    mean_energy: np.ndarray = field(repr=False)
    members: int = 0

    @property
    def ratio(self) -> float:
        return self.tau_fitted / self.tau_analytic


def heating_oracle(nu_tr: float, psd, members: int = 200, seed: int = 0, *, span: float = 2.0,
                   oversampling: float = 10.0, batch: int = 50) -> HeatingCheck:
    """Fit the e-folding time of the ensemble-mean energy of noise-driven 1-D oscillators.

    Oscillators at ``nu_tr`` see independent noise rows drawn from ``psd``
    and run for ``span`` analytic e-folding times. The fit is a least-squares
    line through the origin of ln(<E>/E0) against time.
    """
    from .dynamics import oscillator_heating_ensemble
    from .noise import heating_time, synthesize_noise

    tau = heating_time(nu_tr, psd)
    duration = span * tau
    fs = oversampling * 2 * nu_tr
    root = np.random.SeedSequence([seed, 0xC0FFEE])
    total, times = None, None
    for b, ss in enumerate(root.spawn(math.ceil(members / batch))):
        n = min(batch, members - b * batch)
        rows = [synthesize_noise(psd, duration * 1.001 + 2 / fs, fs, child, f_interest=2 * nu_tr)
                for child in ss.spawn(n)]
        times, energies = oscillator_heating_ensemble(nu_tr, rows, duration, record_interval=duration / 100,
                                                      rng=np.random.default_rng(ss.spawn(1)[0]))
        total = energies.sum(axis=0) if total is None else total + energies.sum(axis=0)
    mean = total / members
    y = np.log(mean / mean[0])
    slope = float(np.dot(times, y) / np.dot(times, times))
    return HeatingCheck(1.0 / slope, tau, times, mean, members)
