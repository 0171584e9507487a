"""Weak-drive probe transmission and dressed states of one atom in the cavity.

Detuning conventions (all in Hz): ``delta_probe`` = nu_probe - nu_atom and
``delta_ac`` = nu_atom - nu_cavity. The FORT blue-shifts the atomic line by
Delta_FORT(r), so the effective atom-cavity detuning becomes
delta_ac + Delta_FORT(r).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .physics import TWO_PI, CavityQedParams, FortConfig, coupling_g, critical_numbers, fort_potential


@dataclass(frozen=True)
class ProbeConfig:
    delta_probe: float = 0.0
    nbar_empty: float = 0.1
    probe_on: bool = True

    def __post_init__(self):
        if self.nbar_empty < 0:
            raise ValueError("nbar_empty must be non-negative")

    def weak_drive(self, params: CavityQedParams, warn: bool = False) -> bool:
        """True when nbar_empty <= 10 m0; optionally warn otherwise."""
        m0, _ = critical_numbers(params)
        ok = self.nbar_empty <= 10 * m0
        if not ok and warn:
            warnings.warn(
                f"nbar_empty={self.nbar_empty} exceeds 10 m0={10 * m0:.3g}; "
                "linear response may overestimate the atomic dip",
                stacklevel=2,
            )
        return ok


@dataclass(frozen=True)
class ResponsePoint:
    """Transmission amplitude normalised to the empty, resonant cavity."""

    delta_probe: np.ndarray | float
    t: np.ndarray | complex
    g: np.ndarray | float
    atom_detuning: np.ndarray | float
    weak_drive: bool = True

    @property
    def abs2(self):
        return np.abs(self.t) ** 2


@dataclass(frozen=True)
class DressedStates:
    """First-excited-manifold eigenfrequencies (Hz) relative to the empty cavity.

    Widths are the half-widths (Hz) from the imaginary parts of the damped
    two-mode eigenproblem.
    """

    upper: np.ndarray | float
    lower: np.ndarray | float
    upper_width: np.ndarray | float
    lower_width: np.ndarray | float


def _site(r, g, fort, params):
    """Resolve coupling (rad/s) and local FORT transition shift (Hz)."""
    if (r is None) == (g is None):
        raise ValueError("give exactly one of r (position) or g (coupling, rad/s)")
    if r is not None:
        g_val = coupling_g(r, params)
        if fort is not None and fort.fort_on:
            shift = fort_potential(r, fort, params).transition_shift
        else:
            shift = np.zeros_like(np.asarray(g_val, dtype=float))
        return g_val, shift
    return g, None


def transmission(
    probe: ProbeConfig,
    params: CavityQedParams,
    *,
    r=None,
    g=None,
    fort: FortConfig | None = None,
    fort_shift=None,
    delta_ac=None,
) -> ResponsePoint:
    """Linear-response transmission for one atom at position ``r`` or with coupling ``g``.

    With ``g`` given directly, ``fort_shift`` (Hz) sets the local FORT shift
    of the atomic line; it defaults to zero. ``delta_ac`` overrides
    ``params.delta_ac`` (used for per-trial lock jitter). Inputs broadcast.
    """
    if not probe.probe_on:
        raise ValueError("probe is off")
    g_val, shift = _site(r, g, fort, params)
    if shift is None:
        shift = 0.0 if fort_shift is None else fort_shift
    dac = params.delta_ac if delta_ac is None else delta_ac
    dp = np.asarray(probe.delta_probe, dtype=float)
    kappa, gamma = params.kappa, params.gamma_perp
    delta_c = -TWO_PI * (dp + dac)
    delta_a = -TWO_PI * (dp - np.asarray(shift))
    atom = gamma + 1j * delta_a
    t = kappa * atom / ((kappa + 1j * delta_c) * atom + np.square(g_val))
    return ResponsePoint(
        delta_probe=probe.delta_probe,
        t=t if np.ndim(t) else complex(t),
        g=g_val,
        atom_detuning=dac + shift,
        weak_drive=probe.weak_drive(params),
    )


def dressed_eigenvalues(
    params: CavityQedParams, *, r=None, g=None, fort: FortConfig | None = None, fort_shift=None, delta_ac=None
) -> DressedStates:
    g_val, shift = _site(r, g, fort, params)
    if shift is None:
        shift = 0.0 if fort_shift is None else fort_shift
    dac = params.delta_ac if delta_ac is None else delta_ac
    d = np.asarray(dac + np.asarray(shift), dtype=float)
    gh = np.asarray(g_val, dtype=float) / TWO_PI
    root = np.sqrt(gh**2 + d**2 / 4)
    upper, lower = d / 2 + root, d / 2 - root

    # damped eigenproblem [[-i k, g], [g, d - i y]] in Hz for the widths
    k = params.kappa / TWO_PI
    y = params.gamma_perp / TWO_PI
    mean = (d - 1j * (k + y)) / 2
    croot = np.sqrt(gh**2 + ((d - 1j * (y - k)) / 2) ** 2)
    # pick the branch whose real part follows the undamped solution
    flip = np.real(croot) < 0
    croot = np.where(flip, -croot, croot)
    upper_w = -np.imag(mean + croot)
    lower_w = -np.imag(mean - croot)

    def out(a):
        return float(a) if np.ndim(a) == 0 else a

    return DressedStates(out(upper), out(lower), out(upper_w), out(lower_w))


def spectrum_scan(
    detunings,
    probe: ProbeConfig,
    params: CavityQedParams,
    *,
    r=None,
    g=None,
    fort: FortConfig | None = None,
    fort_shift=None,
    delta_ac=None,
) -> ResponsePoint:
    """Transmission over a grid of probe detunings (Hz). Returns array-valued fields."""
    grid = np.asarray(detunings, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("detuning range needs at least two points")
    if not np.all(np.isfinite(grid)):
        raise ValueError("detuning range must be finite")
    if not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
        raise ValueError("detuning grid must be strictly monotone")
    scan_probe = ProbeConfig(grid, probe.nbar_empty, True)
    return transmission(
        scan_probe, params, r=r, g=g, fort=fort, fort_shift=fort_shift, delta_ac=delta_ac
    )


def lorentzian_fwhm_hz(params: CavityQedParams) -> float:
    """Empty-cavity transmission FWHM in probe frequency, kappa/pi."""
    return params.kappa / math.pi
