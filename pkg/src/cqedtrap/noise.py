"""Intensity-noise parametric heating: rate law, noise synthesis and PSD estimation.

All spectra are one-sided: var(eps) = integral_0^inf S_e(f) df.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .physics import CESIUM, AtomSpecies, CavityQedParams, FortConfig, trap_frequencies
from .psd import NoisePsd


@dataclass(frozen=True)
class HeatingEstimate:
    tau_e_radial: float
    tau_e_axial: float
    nu_radial: float
    nu_axial: float
    evaluated_psd_values: tuple = ()

    def as_dict(self) -> dict:
        def finite_or_none(v):
            return None if math.isinf(v) else v

        return {
            "tau_e_radial_s": finite_or_none(self.tau_e_radial),
            "tau_e_axial_s": finite_or_none(self.tau_e_axial),
            "nu_radial_hz": self.nu_radial,
            "nu_axial_hz": self.nu_axial,
            "evaluated_psd_values": [list(p) for p in self.evaluated_psd_values],
        }


@dataclass(frozen=True)
class NoiseSeries:
    """Fractional intensity fluctuation eps(t_i) sampled at ``sample_rate``."""

    sample_rate: float
    samples: np.ndarray
    target_psd: NoisePsd | None = field(default=None, compare=False)
    seed: int | None = None

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def heating_time(nu_tr: float, psd: NoisePsd, extrapolate: bool = False) -> float:
    """Energy e-folding time 1 / (pi^2 nu^2 S_e(2 nu)) for trap frequency ``nu_tr`` (Hz).

    Returns ``math.inf`` when the PSD vanishes at 2 nu.
    """
    if not nu_tr > 0:
        raise ValueError("trap frequency must be positive")
    s = psd(2 * nu_tr, extrapolate=extrapolate)
    rate = math.pi**2 * nu_tr**2 * s
    return math.inf if rate == 0 else 1.0 / rate


def heating_estimate(
    psd: NoisePsd,
    *,
    nu_radial: float | None = None,
    nu_axial: float | None = None,
    fort: FortConfig | None = None,
    params: CavityQedParams | None = None,
    species: AtomSpecies = CESIUM,
) -> HeatingEstimate:
    """Radial and axial heating times.

    Trap frequencies come from the arguments when given, otherwise from the
    harmonic expansion of ``fort`` in the cavity ``params``.
    """
    if nu_radial is None or nu_axial is None:
        if fort is None or params is None:
            raise ValueError("need explicit trap frequencies or a fort/params pair")
        derived = trap_frequencies(fort, params, species)
        nu_radial = derived[0] if nu_radial is None else nu_radial
        nu_axial = derived[1] if nu_axial is None else nu_axial
    values = ((2 * nu_radial, psd(2 * nu_radial)), (2 * nu_axial, psd(2 * nu_axial)))
    return HeatingEstimate(
        tau_e_radial=heating_time(nu_radial, psd),
        tau_e_axial=heating_time(nu_axial, psd),
        nu_radial=nu_radial,
        nu_axial=nu_axial,
        evaluated_psd_values=values,
    )


def synthesize_noise(
    psd: NoisePsd,
    duration: float,
    sample_rate: float,
    seed=None,
    *,
    f_interest: float | None = None,
    extrapolate: bool = False,
) -> NoiseSeries:
    """Zero-mean stationary Gaussian noise with one-sided PSD ``psd``.

    White Gaussian noise is shaped in the frequency domain. ``f_interest``
    is the highest frequency that must be represented faithfully (2 nu_axial
    for trap heating); the sample rate must exceed it tenfold. ``seed`` may be
    an int, a SeedSequence or a Generator.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if f_interest is not None and sample_rate < 10 * f_interest:
        raise ValueError(
            f"sample_rate {sample_rate:.6g} Hz is below 10x the band of interest "
            f"(up to {f_interest:.6g} Hz); need >= {10 * f_interest:.6g} Hz"
        )
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ValueError("duration * sample_rate must give at least 2 samples")
    rng = np.random.default_rng(seed)
    # shape a longer, FFT-friendly record and keep the first n samples
    n_fft = sfft.next_fast_len(n, real=True)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    shape = np.zeros_like(freqs)
    shape[1:] = psd(freqs[1:], extrapolate=extrapolate)
    white = rng.standard_normal(n_fft)
    spectrum = sfft.rfft(white)
    # E|W_k|^2 = n_fft; scale so the one-sided periodogram 2|X_k|^2/(n fs) averages to S(f_k)
    spectrum *= np.sqrt(shape * sample_rate / 2.0)
    samples = sfft.irfft(spectrum, n=n_fft)[:n]
    seed_tag = seed if isinstance(seed, (int, np.integer)) else None
    return NoiseSeries(sample_rate, samples, psd, seed_tag)


def estimate_psd(series: NoiseSeries, segment_count: int = 64) -> NoisePsd:
    """Averaged-periodogram (Welch, Hann window, 50% overlap) one-sided PSD.

    A pure AM tone of fractional depth d integrates to d^2 / 2 over its line.
    """
    x = np.asarray(series.samples, dtype=float)
    if segment_count < 2:
        raise ValueError("need at least 2 segments")
    nperseg = int(2 * x.size // (segment_count + 1))
    if nperseg < 64:
        raise ValueError(
            f"series of {x.size} samples is too short for {segment_count} segments of >= 64 samples"
        )
    f, pxx = signal.welch(
        x, fs=series.sample_rate, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
        detrend=False, scaling="density", return_onesided=True,
    )
    return NoisePsd(f[1:], pxx[1:])


def parametric_heating_rate(nu_tr, psd: NoisePsd, extrapolate: bool = False):
    """Vectorised 1/tau_e in 1/s."""
    nu = np.asarray(nu_tr, dtype=float)
    return math.pi**2 * nu**2 * psd(2 * nu, extrapolate=extrapolate)
