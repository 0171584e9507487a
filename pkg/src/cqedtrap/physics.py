"""Cavity/atom parameters, standing-wave mode functions and FORT potentials.

Coordinates: x runs along the cavity axis with mirrors at x = 0 and x = l,
z is vertical (gravity along -z). Rates (g0, kappa, gamma_perp) are stored in
rad/s; Stark shifts and detunings are ordinary frequencies in Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import constants

from .psd import NoisePsd

TWO_PI = 2.0 * math.pi
H = constants.h
HBAR = constants.hbar
C = constants.c
K_B = constants.k
G_ACC = constants.g

# Ratio of the quoted 37 /s scattering rate to the bare two-level estimate
# for the default +-45 MHz FORT (approx. 219.5 /s).
DEFAULT_SCATTER_AVERAGING = 0.1686


class DomainError(ValueError):
    """Raised for positions or parameters outside a function's physical domain."""


class Vec3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class AtomSpecies:
    mass: float = 2.2069e-25
    transition: str = "Cs D2 6S1/2 F=4,mF=4 -> 6P3/2 F=5,mF=5"
    g_acc: float = G_ACC

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")


CESIUM = AtomSpecies()


@dataclass(frozen=True)
class CavityQedParams:
    g0: float = TWO_PI * 32e6
    kappa: float = TWO_PI * 4e6
    gamma_perp: float = TWO_PI * 2.6e6
    cavity_length_l: float = 105 * 852.4e-9 / 2
    waist_w0: float = 20e-6
    n_cavity: int = 105
    n_fort: int = 103
    lambda_atom: float = 852.4e-9
    finesse_qed: float = 4.2e5
    finesse_fort: float = 3.5e5
    delta_ac: float = 0.0
    delta_ac_jitter: float = 10e3

    def __post_init__(self):
        for name in ("g0", "kappa", "gamma_perp", "cavity_length_l", "waist_w0", "lambda_atom"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and strictly positive, got {value!r}")
        if int(self.n_cavity) != self.n_cavity or int(self.n_fort) != self.n_fort:
            raise ValueError("mode indices must be integers")
        if self.n_cavity < 1 or self.n_fort < 1:
            raise ValueError("mode indices must be >= 1")
        if abs(self.lambda_cavity / self.lambda_atom - 1) > 5e-3:
            raise ValueError(
                f"mode {self.n_cavity} wavelength {self.lambda_cavity:.6e} m is not within 0.5% "
                f"of lambda_atom {self.lambda_atom:.6e} m"
            )
        if self.delta_ac_jitter < 0:
            raise ValueError("delta_ac_jitter must be non-negative")

    def mode_wavelength(self, n: int) -> float:
        return 2.0 * self.cavity_length_l / n

    @property
    def lambda_cavity(self) -> float:
        return self.mode_wavelength(self.n_cavity)

    @property
    def lambda_fort(self) -> float:
        return self.mode_wavelength(self.n_fort)

    @property
    def k_fort(self) -> float:
        """Axial wavenumber of the FORT standing wave, 2 pi / lambda_fort."""
        return math.pi * self.n_fort / self.cavity_length_l


@dataclass(frozen=True)
class FortConfig:
    """Intracavity dipole trap. Stark shifts are peak values at an antinode, in Hz."""

    stark_ground: float = -45e6
    stark_excited: float = 45e6
    input_power: float = 30e-6
    circulating_power: float = 1.0
    coupling_efficiency: float = 0.2992
    noise_psd: NoisePsd | None = field(default=None, compare=False)
    fort_on: bool = True

    def __post_init__(self):
        if self.fort_on and self.stark_ground == 0:
            raise ValueError("an enabled FORT needs a non-zero ground-state Stark shift")
        if self.input_power < 0 or self.circulating_power < 0 or self.coupling_efficiency < 0:
            raise ValueError("powers and coupling efficiency must be non-negative")

    @property
    def depth(self) -> float:
        """Trap depth U0 = h |stark_ground| in J (zero when the FORT is off)."""
        return H * abs(self.stark_ground) if self.fort_on else 0.0

    @property
    def transition_shift(self) -> float:
        """Peak blue shift of the atomic transition, Delta_e - Delta_g (Hz)."""
        return self.stark_excited - self.stark_ground


class FortShift(NamedTuple):
    energy: np.ndarray
    ground_shift: np.ndarray
    excited_shift: np.ndarray

    @property
    def transition_shift(self):
        return self.excited_shift - self.ground_shift


def _split(r):
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != 3:
        raise ValueError(f"positions need a trailing axis of length 3, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("positions must be finite")
    return r[..., 0], r[..., 1], r[..., 2]


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


def mode_function(r, n: int, params: CavityQedParams):
    """Standing-wave amplitude sin(n pi x / l) exp(-(y^2 + z^2) / w0^2).

    ``r`` is a Vec3 or any array with a trailing axis of length 3.
    """
    x, y, z = _split(r)
    l = params.cavity_length_l
    tol = 1e-12 * l
    if np.any(x < -tol) or np.any(x > l + tol):
        raise DomainError(f"x must lie between the mirrors [0, {l:.6e}] m")
    psi = np.sin(n * math.pi * x / l) * np.exp(-(y * y + z * z) / params.waist_w0**2)
    return _scalar(psi)


def coupling_g(r, params: CavityQedParams):
    """Position-dependent atom-cavity coupling g(r) in rad/s."""
    return params.g0 * mode_function(r, params.n_cavity, params)


def critical_numbers(params: CavityQedParams) -> tuple[float, float]:
    """Critical photon number m0 and critical atom number N0."""
    g2 = params.g0**2
    return params.gamma_perp**2 / (2 * g2), 2 * params.kappa * params.gamma_perp / g2


def fort_potential(r, fort: FortConfig, params: CavityQedParams) -> FortShift:
    """Ground-state FORT potential (J) and local Stark shifts (Hz).

    Both scale with the FORT intensity, psi^2(r, n_fort).
    """
    psi = mode_function(r, params.n_fort, params)
    if not fort.fort_on:
        zero = np.zeros_like(np.asarray(psi, dtype=float))
        return FortShift(_scalar(zero), _scalar(zero), _scalar(zero.copy()))
    intensity = np.square(psi)
    ground = fort.stark_ground * intensity
    return FortShift(_scalar(H * ground), _scalar(ground), _scalar(fort.stark_excited * intensity))


def fort_gradient(r, fort: FortConfig, params: CavityQedParams) -> np.ndarray:
    """Gradient of the ground-state FORT potential, J/m, shape (..., 3)."""
    x, y, z = _split(r)
    if not fort.fort_on:
        return np.zeros(np.shape(x) + (3,))
    k = params.k_fort
    w2 = params.waist_w0**2
    radial = np.exp(-2 * (y * y + z * z) / w2)
    s2 = np.sin(k * x) ** 2
    u = H * fort.stark_ground
    grad = np.stack(
        [u * k * np.sin(2 * k * x) * radial, u * s2 * radial * (-4 * y / w2), u * s2 * radial * (-4 * z / w2)],
        axis=-1,
    )
    return grad


def trap_frequencies(fort: FortConfig, params: CavityQedParams, species: AtomSpecies = CESIUM) -> tuple[float, float]:
    """Harmonic (radial, axial) oscillation frequencies in Hz at a FORT antinode on axis."""
    if not fort.fort_on or fort.stark_ground >= 0:
        raise DomainError("trap frequencies need an enabled FORT with stark_ground < 0")
    u0 = H * abs(fort.stark_ground)
    nu_axial = params.k_fort * math.sqrt(2 * u0 / species.mass) / TWO_PI
    nu_radial = (2 / params.waist_w0) * math.sqrt(u0 / species.mass) / TWO_PI
    return nu_radial, nu_axial


def scattering_rate(
    fort: FortConfig, params: CavityQedParams, averaging: float = DEFAULT_SCATTER_AVERAGING
) -> float:
    """Spontaneous scattering rate (1/s) of a ground-state atom in the FORT.

    ``averaging`` folds in spatial and temporal averaging over the trapped
    atom's motion; 1.0 gives the bare peak two-level estimate.
    """
    if not fort.fort_on:
        raise DomainError("scattering rate needs an enabled FORT")
    detuning = TWO_PI * C * (1 / params.lambda_fort - 1 / params.lambda_atom)
    if detuning == 0:
        raise ZeroDivisionError("FORT wavelength coincides with the atomic transition")
    light_shift = fort.depth / HBAR
    return averaging * 2 * params.gamma_perp * light_shift / abs(detuning)


def free_fall_velocity(drop_height: float, g_acc: float = G_ACC) -> float:
    if drop_height < 0:
        raise DomainError("drop height must be non-negative")
    return math.sqrt(2 * g_acc * drop_height)


def cavity_buildup(input_power: float, finesse: float, coupling_efficiency: float) -> float:
    """Circulating power for ``input_power`` incident on a cavity of the given finesse."""
    if input_power < 0 or finesse < 0 or coupling_efficiency < 0:
        raise DomainError("inputs must be non-negative")
    return coupling_efficiency * finesse / math.pi * input_power


def nearest_fort_antinode(x, params: CavityQedParams):
    """Axial position of the FORT antinode closest to ``x``."""
    k = params.k_fort
    j = np.round(np.asarray(x) * k / math.pi - 0.5)
    return _scalar((j + 0.5) * math.pi / k)


def central_antinode(params: CavityQedParams) -> float:
    """The FORT antinode nearest the cavity centre (coincides with a QED antinode for odd modes)."""
    return nearest_fort_antinode(params.cavity_length_l / 2, params)
