"""Classical centre-of-mass motion of one atom in gravity plus the noisy FORT.

Integration is velocity Verlet. The FORT intensity noise multiplies the
potential, U -> (1 + eps(t)) U, with eps held constant between noise samples.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .noise import NoiseSeries
from .physics import (
    CESIUM,
    AtomSpecies,
    CavityQedParams,
    DomainError,
    K_B,
    FortConfig,
    nearest_fort_antinode,
    trap_frequencies,
)

COLLISION_LIFETIME = 100.0  # s, background-gas loss at 1e-10 Torr

# kernel exit codes
_RUNNING, _ESCAPED, _LOST = 0, 1, 2


class Status(str, enum.Enum):
    FALLING = "falling"
    IN_MODE = "in_mode"
    TRAPPED = "trapped"
    ESCAPED = "escaped"
    LOST = "lost"


_ALLOWED = {
    Status.FALLING: {Status.FALLING, Status.IN_MODE, Status.TRAPPED, Status.LOST},
    Status.IN_MODE: {Status.IN_MODE, Status.TRAPPED, Status.LOST},
    Status.TRAPPED: {Status.TRAPPED, Status.ESCAPED},
    Status.ESCAPED: {Status.ESCAPED},
    Status.LOST: {Status.LOST},
}


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class AtomState:
    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0
    status: Status = Status.FALLING
    energy_axial: float = 0.0

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(3)
        vel = np.array(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel)) and math.isfinite(self.time)):
            raise ValueError("atom state must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)
        object.__setattr__(self, "status", Status(self.status))

    def advance(self, **changes) -> AtomState:
        new_status = Status(changes.get("status", self.status))
        if new_status not in _ALLOWED[self.status]:
            raise DynamicsError(f"illegal status transition {self.status.value} -> {new_status.value}")
        return replace(self, **changes)


@dataclass(frozen=True)
class InitialDistribution:
    """Phase-space distribution of atoms arriving at the cavity mode.

    Atoms move on straight lines whose closest approach to the mode axis
    lies uniformly within ``offset_radius`` (r0). Cooled atoms move in the
    y-z plane in a random direction; uncooled atoms fall vertically at the
    free-fall speed from ``drop_height``. ``axial_temperature`` sets the
    residual thermal spread along the cavity axis.
    """

    drop_height: float = 5e-3
    post_cooling_speed_mean: float = 0.055
    speed_spread: float = 0.025
    offset_radius: float = 40e-6
    cooled: bool = True
    axial_temperature: float = 2e-6
    axial_margin: float = 2e-6
    waist_limit: float = 20e-6 * 5

    def __post_init__(self):
        if self.post_cooling_speed_mean < 0 or self.speed_spread < 0:
            raise ValueError("speeds must be non-negative")
        if self.offset_radius > self.waist_limit:
            raise ValueError("offset radius exceeds 5 mode waists")
        if self.drop_height < 0 or self.axial_temperature < 0:
            raise ValueError("drop height and temperature must be non-negative")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    final: AtomState
    escape_time: float | None = None
    crossing_interval: float | None = None
    axial_energies: np.ndarray | None = field(default=None, repr=False)
    _w0: float = field(default=20e-6, repr=False)

    @property
    def transit_velocity(self) -> float | None:
        """2 w0 / T, or None when the atom never crossed the mode."""
        return None if not self.crossing_interval else self._w0 * 2 / self.crossing_interval

    def rows(self):
        """(t, x, y, z, vx, vy, vz, status) rows; status is the final one at the last sample."""
        n = self.times.size
        for i in range(n):
            status = self.final.status.value if i == n - 1 else _row_status(self, i)
            yield (self.times[i], *self.positions[i], *self.velocities[i], status)


def _row_status(traj, i):
    if traj.escape_time is not None and traj.times[i] >= traj.escape_time:
        return Status.ESCAPED.value
    if traj.final.status in (Status.TRAPPED, Status.ESCAPED):
        return Status.TRAPPED.value
    return traj.final.status.value if traj.final.status != Status.LOST else Status.IN_MODE.value


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _accel(x, y, z, u, k, inv_w2, mass, g_acc, scale):
    # scale = 1 + eps; u = h * stark_ground (J, negative for a trap)
    s = math.sin(k * x)
    c = math.cos(k * x)
    radial = math.exp(-2.0 * (y * y + z * z) * inv_w2)
    f = -scale * u * radial / mass
    ax = f * 2.0 * k * s * c
    ay = f * s * s * (-4.0 * y * inv_w2)
    az = f * s * s * (-4.0 * z * inv_w2) - g_acc
    return ax, ay, az


@numba.njit(cache=True)
def _potential(x, y, z, u, k, inv_w2):
    s = math.sin(k * x)
    return u * s * s * math.exp(-2.0 * (y * y + z * z) * inv_w2)


@numba.njit(cache=True)
def _integrate(
    state, t0, dt, n_steps, u, k, inv_w2, mass, g_acc,
    eps, eps_rate, check_escape, x_well, half_period, length, rho2_max, loss_time,
    record_every, records,
):
    """Advance ``state`` = [x, y, z, vx, vy, vz] in place.

    Returns (steps taken, exit code). ``records`` receives
    (t, x, y, z, vx, vy, vz, E_axial) every ``record_every`` steps.
    """
    x, y, z, vx, vy, vz = state[0], state[1], state[2], state[3], state[4], state[5]
    n_eps = eps.shape[0]
    scale = 1.0
    if n_eps > 0:
        scale = 1.0 + eps[0]
    ax, ay, az = _accel(x, y, z, u, k, inv_w2, mass, g_acc, scale)
    n_rec = 0
    code = _RUNNING
    taken = 0
    half = 0.5 * dt
    for i in range(n_steps):
        if record_every > 0 and i % record_every == 0 and n_rec < records.shape[0]:
            records[n_rec, 0] = t0 + i * dt
            records[n_rec, 1] = x
            records[n_rec, 2] = y
            records[n_rec, 3] = z
            records[n_rec, 4] = vx
            records[n_rec, 5] = vy
            records[n_rec, 6] = vz
            well = u * math.exp(-2.0 * (y * y + z * z) * inv_w2)
            records[n_rec, 7] = 0.5 * mass * vx * vx + _potential(x, y, z, u, k, inv_w2) - well
            n_rec += 1
        vx += half * ax
        vy += half * ay
        vz += half * az
        x += dt * vx
        y += dt * vy
        z += dt * vz
        if n_eps > 0:
            j = int((i + 1) * dt * eps_rate)
            if j >= n_eps:
                j = n_eps - 1
            scale = 1.0 + eps[j]
        ax, ay, az = _accel(x, y, z, u, k, inv_w2, mass, g_acc, scale)
        vx += half * ax
        vy += half * ay
        vz += half * az
        taken = i + 1
        if check_escape:
            if x < 0.0 or x > length:
                code = _LOST
                break
            if y * y + z * z > rho2_max:
                code = _ESCAPED
                break
            if abs(x - x_well) > half_period:
                code = _ESCAPED
                break
            if 0.5 * mass * vx * vx + _potential(x, y, z, u, k, inv_w2) > 0.0:
                code = _ESCAPED
                break
            if t0 + taken * dt >= loss_time:
                code = _ESCAPED
                break
    state[0], state[1], state[2], state[3], state[4], state[5] = x, y, z, vx, vy, vz
    return taken, code


@numba.njit(cache=True)
def _oscillator_ensemble(omega, dt, n_steps, x0, v0, eps, eps_rate, record_every, energies):
    """1-D oscillators x'' = -omega^2 (1 + eps_m(t)) x; records unperturbed energy / mass."""
    members = x0.shape[0]
    n_eps = eps.shape[1]
    w2 = omega * omega
    half = 0.5 * dt
    for m in range(members):
        x = x0[m]
        v = v0[m]
        a = -w2 * (1.0 + eps[m, 0]) * x
        rec = 0
        for i in range(n_steps + 1):
            if i % record_every == 0 and rec < energies.shape[1]:
                energies[m, rec] = 0.5 * v * v + 0.5 * w2 * x * x
                rec += 1
            if i == n_steps:
                break
            v += half * a
            x += dt * v
            j = int((i + 1) * dt * eps_rate)
            if j >= n_eps:
                j = n_eps - 1
            a = -w2 * (1.0 + eps[m, j]) * x
            v += half * a


# ---------------------------------------------------------------------------
# public API


def default_timestep(fort: FortConfig, params: CavityQedParams, species: AtomSpecies = CESIUM) -> float:
    """1 / (100 nu_axial), the default Verlet step inside the FORT."""
    return 1.0 / (100.0 * trap_frequencies(fort, params, species)[1])


def max_timestep(fort: FortConfig, params: CavityQedParams, species: AtomSpecies = CESIUM) -> float:
    return 1.0 / (50.0 * trap_frequencies(fort, params, species)[1])


def _kernel_constants(fort, params, species, gravity):
    from .physics import H

    u = H * fort.stark_ground if fort.fort_on else 0.0
    return u, params.k_fort, 1.0 / params.waist_w0**2, species.mass, species.g_acc if gravity else 0.0


def axial_energy(state: AtomState, fort: FortConfig, params: CavityQedParams, species: AtomSpecies = CESIUM) -> float:
    """Axial kinetic energy plus potential above the local well bottom (J)."""
    u, k, inv_w2, mass, _ = _kernel_constants(fort, params, species, False)
    x, y, z = state.position
    well = u * math.exp(-2.0 * (y * y + z * z) * inv_w2)
    return 0.5 * mass * state.velocity[0] ** 2 + _potential(x, y, z, u, k, inv_w2) - well


def total_energy(state: AtomState, fort: FortConfig, params: CavityQedParams,
                 species: AtomSpecies = CESIUM, gravity: bool = False) -> float:
    u, k, inv_w2, mass, g_acc = _kernel_constants(fort, params, species, gravity)
    x, y, z = state.position
    kinetic = 0.5 * mass * float(np.dot(state.velocity, state.velocity))
    return kinetic + _potential(x, y, z, u, k, inv_w2) + mass * g_acc * z


def step(
    state: AtomState,
    dt: float,
    fort: FortConfig,
    noise_sample: float,
    params: CavityQedParams,
    species: AtomSpecies = CESIUM,
    gravity: bool = True,
) -> AtomState:
    """One velocity-Verlet step under -grad[(1 + eps) U] - m g z_hat."""
    if not dt > 0:
        raise DynamicsError("dt must be positive")
    if fort.fort_on:
        bound = max_timestep(fort, params, species)
        if dt > bound:
            raise DynamicsError(f"dt={dt:.3e} s exceeds the stability bound 1/(50 nu_axial)={bound:.3e} s")
    u, k, inv_w2, mass, g_acc = _kernel_constants(fort, params, species, gravity)
    buf = np.concatenate([state.position, state.velocity])
    eps = np.array([noise_sample], dtype=float)
    _integrate(buf, state.time, dt, 1, u, k, inv_w2, mass, g_acc, eps, 1.0 / dt, False,
               0.0, 0.0, 0.0, 0.0, math.inf, 0, np.empty((0, 8)))
    new = replace(state, position=buf[:3], velocity=buf[3:], time=state.time + dt)
    if fort.fort_on:
        new = replace(new, energy_axial=axial_energy(new, fort, params, species))
    return new


def simulate_trapped(
    initial: AtomState,
    duration: float,
    fort: FortConfig,
    noise: NoiseSeries | None,
    params: CavityQedParams,
    species: AtomSpecies = CESIUM,
    *,
    dt: float | None = None,
    gravity: bool = True,
    record_every: int | None = None,
    collision_lifetime: float = COLLISION_LIFETIME,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Integrate a trapped atom for ``duration`` seconds or until it escapes.

    Escape: axial energy above the local well depth, a hop of more than
    lambda_FORT / 2 from the starting well, a radial excursion beyond 3 w0,
    or a background-gas collision (exponential with ``collision_lifetime``,
    drawn from ``rng`` when given). ``noise`` may be None for a quiet FORT.
    """
    if initial.status != Status.TRAPPED:
        raise DynamicsError("simulate_trapped needs an atom with status 'trapped'")
    if not fort.fort_on:
        raise DynamicsError("the FORT is off")
    if dt is None:
        dt = default_timestep(fort, params, species)
    elif dt > max_timestep(fort, params, species):
        raise DynamicsError("dt exceeds 1/(50 nu_axial)")
    n_steps = int(math.ceil(duration / dt - 1e-9))
    if noise is not None:
        if noise.duration + 1e-12 < duration:
            raise DynamicsError(
                f"noise series covers {noise.duration:.6g} s, shorter than duration {duration:.6g} s"
            )
        eps, eps_rate = np.ascontiguousarray(noise.samples, dtype=float), float(noise.sample_rate)
    else:
        eps, eps_rate = np.zeros(0), 1.0
    loss_time = math.inf
    if rng is not None and collision_lifetime and math.isfinite(collision_lifetime):
        loss_time = initial.time + rng.exponential(collision_lifetime)

    u, k, inv_w2, mass, g_acc = _kernel_constants(fort, params, species, gravity)
    x_well = nearest_fort_antinode(initial.position[0], params)
    if record_every is None:
        record_every = max(1, n_steps // 2000)
    n_rec = n_steps // record_every + 1 if record_every > 0 else 0
    records = np.zeros((n_rec, 8))
    buf = np.concatenate([initial.position, initial.velocity])
    taken, code = _integrate(
        buf, initial.time, dt, n_steps, u, k, inv_w2, mass, g_acc, eps, eps_rate, True,
        x_well, math.pi / k, params.cavity_length_l, 9.0 * params.waist_w0**2, loss_time,
        record_every, records,
    )
    t_end = initial.time + taken * dt
    status = {_RUNNING: Status.TRAPPED, _ESCAPED: Status.ESCAPED, _LOST: Status.ESCAPED}[code]
    final = initial.advance(position=buf[:3].copy(), velocity=buf[3:].copy(), time=t_end, status=status)
    final = replace(final, energy_axial=axial_energy(final, fort, params, species))
    # rows written at steps 0, k, 2k, ... < taken
    used = min(n_rec, (taken - 1) // record_every + 1) if record_every > 0 and taken > 0 else 0
    rec = records[:used]
    times = np.append(rec[:, 0], t_end)
    positions = np.vstack([rec[:, 1:4], buf[None, :3]])
    velocities = np.vstack([rec[:, 4:7], buf[None, 3:]])
    energies = np.append(rec[:, 7], final.energy_axial)
    return Trajectory(
        times=times,
        positions=positions,
        velocities=velocities,
        final=final,
        escape_time=t_end if status == Status.ESCAPED else None,
        axial_energies=energies,
        _w0=params.waist_w0,
    )


def integrate_trapped_raw(
    state: np.ndarray, t0: float, duration: float, fort: FortConfig, eps: np.ndarray, eps_rate: float,
    params: CavityQedParams, species: AtomSpecies = CESIUM, dt: float | None = None,
    loss_time: float = math.inf, gravity: bool = True,
) -> tuple[float | None, np.ndarray]:
    """Low-overhead trapped integration for ensemble runs.

    Returns (escape time or None, final [x, y, z, vx, vy, vz]).
    """
    if dt is None:
        dt = default_timestep(fort, params, species)
    n_steps = int(math.ceil(duration / dt - 1e-9))
    u, k, inv_w2, mass, g_acc = _kernel_constants(fort, params, species, gravity)
    x_well = nearest_fort_antinode(state[0], params)
    buf = np.array(state, dtype=float)
    taken, code = _integrate(
        buf, t0, dt, n_steps, u, k, inv_w2, mass, g_acc, eps, eps_rate, True,
        float(x_well), math.pi / k, params.cavity_length_l, 9.0 * params.waist_w0**2, loss_time,
        0, np.empty((0, 8)),
    )
    return (None if code == _RUNNING else t0 + taken * dt), buf


def ballistic_positions(position, velocity, times, g_acc: float = 0.0) -> np.ndarray:
    """Closed-form free flight r(t) = r0 + v t - g t^2 / 2 z_hat, shape (len(times), 3)."""
    t = np.asarray(times, dtype=float)[:, None]
    pos = np.asarray(position, dtype=float)[None, :] + np.asarray(velocity, dtype=float)[None, :] * t
    pos[:, 2] -= 0.5 * g_acc * t[:, 0] ** 2
    return pos


def crossing_interval(times, positions, params: CavityQedParams) -> float:
    """Total time the mode intensity envelope exp(-2 rho^2 / w0^2) exceeds e^-2 (rho < w0)."""
    t = np.asarray(times, dtype=float)
    pos = np.asarray(positions, dtype=float)
    inside = pos[:, 1] ** 2 + pos[:, 2] ** 2 < params.waist_w0**2
    if t.size < 2:
        return 0.0
    dt = np.gradient(t)
    return float(np.sum(dt[inside]))


def transit_velocity(crossing_time: float, params: CavityQedParams) -> float:
    """Diagnostic transit velocity 2 w0 / T."""
    if not crossing_time > 0:
        raise DomainError("crossing time must be positive")
    return 2.0 * params.waist_w0 / crossing_time


def simulate_transit(
    initial: AtomState,
    duration: float,
    params: CavityQedParams,
    species: AtomSpecies = CESIUM,
    *,
    fort: FortConfig | None = None,
    sample_dt: float = 1e-6,
    gravity: bool = True,
) -> Trajectory:
    """Flight of one atom through the mode with the FORT optionally on.

    With the FORT off the motion is closed-form; otherwise it is integrated
    and sampled every ``sample_dt``. Atoms leaving the mirror gap are lost.
    """
    if initial.status not in (Status.FALLING, Status.IN_MODE):
        raise DynamicsError("transit needs a falling or in-mode atom")
    n_samples = int(round(duration / sample_dt)) + 1
    times = initial.time + np.arange(n_samples) * sample_dt
    g_acc = species.g_acc if gravity else 0.0
    if fort is None or not fort.fort_on:
        positions = ballistic_positions(initial.position, initial.velocity, times - initial.time, g_acc)
        velocities = np.repeat(initial.velocity[None, :], n_samples, axis=0)
        velocities[:, 2] -= g_acc * (times - initial.time)
    else:
        dt = min(default_timestep(fort, params, species), sample_dt)
        per_sample = max(1, int(round(sample_dt / dt)))
        dt = sample_dt / per_sample
        u, k, inv_w2, mass, g = _kernel_constants(fort, params, species, gravity)
        records = np.zeros((n_samples, 8))
        buf = np.concatenate([initial.position, initial.velocity])
        _integrate(buf, initial.time, dt, (n_samples - 1) * per_sample + 1, u, k, inv_w2, mass, g,
                   np.zeros(0), 1.0, False, 0.0, 0.0, 0.0, 0.0, math.inf, per_sample, records)
        positions, velocities = records[:, 1:4], records[:, 4:7]
    outside = (positions[:, 0] < 0) | (positions[:, 0] > params.cavity_length_l)
    status = Status.IN_MODE
    if np.any(outside):
        cut = int(np.argmax(outside))
        times, positions, velocities = times[:cut + 1], positions[:cut + 1], velocities[:cut + 1]
        status = Status.LOST
    crossing = crossing_interval(times, positions, params)
    final = initial.advance(position=positions[-1], velocity=velocities[-1], time=float(times[-1]),
                            status=status if initial.status == Status.IN_MODE or status == Status.LOST
                            else Status.IN_MODE if crossing > 0 else Status.FALLING)
    return Trajectory(times, positions, velocities, final, None, crossing or None, _w0=params.waist_w0)


def sample_initial_state(dist: InitialDistribution, params: CavityQedParams, rng: np.random.Generator,
                         closest_approach_time: float = 0.0, species: AtomSpecies = CESIUM) -> AtomState:
    """Draw one atom on a line through the mode region, returned at its closest approach.

    Use :func:`ballistic_positions` with negative times to step back along
    the path.
    """
    l = params.cavity_length_l
    x = rng.uniform(dist.axial_margin, l - dist.axial_margin)
    vx = rng.normal(0.0, math.sqrt(K_B * dist.axial_temperature / species.mass)) if dist.axial_temperature else 0.0
    if dist.cooled:
        speed = abs(rng.normal(dist.post_cooling_speed_mean, dist.speed_spread))
        theta = rng.uniform(0, 2 * math.pi)
    else:
        speed = math.sqrt(2 * species.g_acc * dist.drop_height)
        theta = -math.pi / 2
    direction = np.array([math.cos(theta), math.sin(theta)])
    normal = np.array([-direction[1], direction[0]])
    b = rng.uniform(-dist.offset_radius, dist.offset_radius)
    yz = b * normal
    vel = np.array([vx, speed * direction[0], speed * direction[1]])
    pos = np.array([x, yz[0], yz[1]])
    return AtomState(pos, vel, closest_approach_time, Status.FALLING)


def oscillator_heating_ensemble(
    nu_tr: float,
    noise: list[NoiseSeries] | np.ndarray,
    duration: float,
    *,
    sample_rate: float | None = None,
    initial_energy: float = 1.0,
    steps_per_period: int = 50,
    record_interval: float | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Energies of 1-D harmonic oscillators whose spring constant carries (1 + eps).

    Each member starts with ``initial_energy`` (per unit mass) at a random
    phase and is driven by its own noise row. Returns (times, energies) with
    energies shaped (members, records).
    """
    if isinstance(noise, np.ndarray):
        if sample_rate is None:
            raise ValueError("sample_rate needed with a raw noise array")
        eps = np.ascontiguousarray(noise, dtype=float)
    else:
        sample_rate = noise[0].sample_rate
        eps = np.ascontiguousarray(np.stack([n.samples for n in noise]), dtype=float)
    members = eps.shape[0]
    omega = 2 * math.pi * nu_tr
    dt = 1.0 / (steps_per_period * nu_tr)
    n_steps = int(math.ceil(duration / dt))
    if eps.shape[1] / sample_rate + 1e-12 < n_steps * dt:
        raise DynamicsError("noise rows shorter than the integration span")
    if record_interval is None:
        record_interval = duration / 100
    record_every = max(1, int(round(record_interval / dt)))
    n_rec = n_steps // record_every + 1
    rng = rng or np.random.default_rng(0)
    phase = rng.uniform(0, 2 * math.pi, members)
    amp = math.sqrt(2 * initial_energy) / omega
    x0 = amp * np.cos(phase)
    v0 = -amp * omega * np.sin(phase)
    energies = np.zeros((members, n_rec))
    _oscillator_ensemble(omega, dt, n_steps, x0, v0, eps, float(sample_rate), record_every, energies)
    times = np.arange(n_rec) * record_every * dt
    return times, energies
