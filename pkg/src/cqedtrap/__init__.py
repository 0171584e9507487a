"""Simulation of single cold atoms trapped inside a strong-coupling optical cavity.

Modules: ``physics`` (parameters, mode functions, FORT potential), ``cavity``
(probe transmission), ``noise`` (parametric heating and noise synthesis),
``dynamics`` (atom motion), ``detection`` (photodetection, trigger and trial
protocol), ``harness`` (ensembles and fits), ``config`` and ``cli``.
"""

__version__ = "0.1.0"

from .cavity import ProbeConfig, dressed_eigenvalues, spectrum_scan, transmission
from .detection import DetectionChain, ProtocolConfig, TimingSequence, run_protocol
from .harness import ExperimentConfig, fit_exponential, run_lifetime_experiment, subtract_background
from .noise import heating_estimate, heating_time, synthesize_noise
from .physics import CavityQedParams, FortConfig, coupling_g, critical_numbers, trap_frequencies
from .psd import NoisePsd

__all__ = [
    "CavityQedParams", "FortConfig", "NoisePsd", "ProbeConfig", "DetectionChain", "TimingSequence",
    "ProtocolConfig", "ExperimentConfig", "coupling_g", "critical_numbers", "trap_frequencies",
    "transmission", "spectrum_scan", "dressed_eigenvalues", "heating_time", "heating_estimate",
    "synthesize_noise", "run_protocol", "run_lifetime_experiment", "subtract_background", "fit_exponential",
]
