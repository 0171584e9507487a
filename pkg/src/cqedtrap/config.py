"""Flat key=value configuration files and the run bundle that ties them together.

Every file is UTF-8 text, one ``key = value`` per line, ``#`` starts a
comment. Unknown keys are errors. Relative file references resolve against
the directory of the file that names them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .cavity import ProbeConfig
from .detection import ArrivalModel, DetectionChain, ProtocolConfig, TimingSequence
from .dynamics import InitialDistribution
from .harness import ExperimentConfig
from .physics import TWO_PI, AtomSpecies, CavityQedParams, FortConfig
from .psd import NoisePsd, read_psd_csv


class ConfigError(ValueError):
    """Malformed, missing or inconsistent configuration."""


def data_path(name: str = "") -> Path:
    """Location of the shipped default configuration files."""
    return Path(str(resources.files("cqedtrap") / "data")) / name


def parse_kv(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{n}: duplicate key {key!r}")
        out[key] = value
    return out


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _bool(v):
    s = v.lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _opt_float(v):
    return None if v.lower() in ("none", "") else float(v)


def _floats(v):
    return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())


def _apply(path, raw: dict, schema: dict) -> dict:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(schema))}")
    out = {}
    for key, value in raw.items():
        conv, target = schema[key]
        try:
            out[target] = conv(value)
        except ValueError as err:
            raise ConfigError(f"{path}: bad value for {key}: {err}") from err
    return out


def _rad(v):
    return TWO_PI * float(v)


PARAMS_KEYS = {
    "g0_over_2pi_hz": (_rad, "g0"),
    "kappa_over_2pi_hz": (_rad, "kappa"),
    "gamma_perp_over_2pi_hz": (_rad, "gamma_perp"),
    "cavity_length_m": (_float, "cavity_length_l"),
    "waist_m": (_float, "waist_w0"),
    "n_cavity": (_int, "n_cavity"),
    "n_fort": (_int, "n_fort"),
    "lambda_atom_m": (_float, "lambda_atom"),
    "finesse_qed": (_float, "finesse_qed"),
    "finesse_fort": (_float, "finesse_fort"),
    "delta_ac_hz": (_float, "delta_ac"),
    "delta_ac_jitter_hz": (_float, "delta_ac_jitter"),
    "atom_mass_kg": (_float, "_mass"),
}

FORT_KEYS = {
    "stark_ground_hz": (_float, "stark_ground"),
    "stark_excited_hz": (_float, "stark_excited"),
    "input_power_w": (_float, "input_power"),
    "circulating_power_w": (_float, "circulating_power"),
    "coupling_efficiency": (_float, "coupling_efficiency"),
    "fort_on": (_bool, "fort_on"),
    "noise_psd_file": (str, "_psd"),
}

TIMING_KEYS = {
    "t0_release_s": (_float, "t0_release"),
    "t1_cool_on_fort_off_s": (_float, "t1_cool_on_fort_off"),
    "t2_cool_rampdown_start_s": (_float, "t2_cool_rampdown_start"),
    "t3_cool_end_probe_on_s": (_float, "t3_cool_end_probe_on"),
    "trigger_window_s": (_float, "trigger_window"),
    "hold_delay_s": (_float, "hold_delay"),
    "detect_window_s": (_float, "detect_window"),
    "asynchronous_offset_s": (_opt_float, "asynchronous_offset"),
}

EXPERIMENT_KEYS = {
    "delays_s": (_floats, "delays"),
    "trials_per_delay": (_int, "trials_per_delay"),
    "fit_min_delay_s": (_float, "fit_min_delay"),
    "fit_max_delay_s": (_float, "fit_max_delay"),
    "fit_offset": (_bool, "fit_offset"),
    "background_control": (_bool, "background_control"),
    "workers": (_int, "workers"),
    "fort_file": (str, "_fort"),
    # probe and detection chain
    "delta_probe_hz": (_float, "probe.delta_probe"),
    "nbar_empty": (_float, "probe.nbar_empty"),
    "efficiency": (_float, "chain.efficiency"),
    "bandwidth_hz": (_float, "chain.bandwidth"),
    "bin_dt_s": (_float, "chain.bin_dt"),
    "threshold_fraction": (_float, "chain.threshold_fraction"),
    "hysteresis_fraction": (_float, "chain.hysteresis_fraction"),
    "sustain_time_constants": (_float, "chain.sustain_time_constants"),
    "blanking_time_constants": (_float, "chain.blanking_time_constants"),
    # atom arrivals
    "mean_atoms_in_mode": (_float, "arrivals.mean_atoms_in_mode"),
    "arrival_lead_time_s": (_float, "arrivals.lead_time"),
    "arrival_decay_time_s": (_float, "arrivals.decay_time"),
    "arrival_horizon_s": (_float, "arrivals.horizon"),
    "drop_height_m": (_float, "dist.drop_height"),
    "post_cooling_speed_mean_m_s": (_float, "dist.post_cooling_speed_mean"),
    "speed_spread_m_s": (_float, "dist.speed_spread"),
    "offset_radius_m": (_float, "dist.offset_radius"),
    "axial_temperature_k": (_float, "dist.axial_temperature"),
    # protocol
    "noise_enabled": (_bool, "protocol.noise_enabled"),
    "noise_oversampling": (_float, "protocol.noise_oversampling"),
    "collision_lifetime_s": (_float, "protocol.collision_lifetime"),
    "trap_scale": (_float, "protocol.trap_scale"),
    "detect_scale": (_float, "protocol.detect_scale"),
}

RUN_KEYS = {
    "params_file": (str, "params_file"),
    "fort_file": (str, "fort_file"),
    "psd_file": (str, "psd_file"),
    "timing_file": (str, "timing_file"),
    "experiment_file": (str, "experiment_file"),
    "master_seed": (_int, "master_seed"),
    "output_dir": (str, "output_dir"),
    "format": (str, "format"),
    "heating_nu_radial_hz": (_opt_float, "heating_nu_radial"),
    "heating_nu_axial_hz": (_opt_float, "heating_nu_axial"),
    "spectrum_min_hz": (_float, "spectrum_min"),
    "spectrum_max_hz": (_float, "spectrum_max"),
    "spectrum_points": (_int, "spectrum_points"),
    "transit_trials": (_int, "transit_trials"),
}


def _resolve(base: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else (base.parent / p)


def _build(cls, path, values):
    try:
        return cls(**values)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err


def load_params(path) -> tuple[CavityQedParams, AtomSpecies]:
    vals = _apply(path, parse_kv(path), PARAMS_KEYS)
    mass = vals.pop("_mass", None)
    species = AtomSpecies() if mass is None else _build(AtomSpecies, path, {"mass": mass})
    return _build(CavityQedParams, path, vals), species


def load_fort(path, psd_override=None) -> FortConfig:
    path = Path(path)
    vals = _apply(path, parse_kv(path), FORT_KEYS)
    ref = vals.pop("_psd", None)
    if psd_override is not None:
        vals["noise_psd"] = psd_override
    elif ref:
        vals["noise_psd"] = load_psd(_resolve(path, ref))
    return _build(FortConfig, path, vals)


def load_psd(path) -> NoisePsd:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"PSD file not found: {path}")
    try:
        return read_psd_csv(path)
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err


def load_timing(path) -> TimingSequence:
    return _build(TimingSequence, path, _apply(path, parse_kv(path), TIMING_KEYS))


def load_experiment(path, params: CavityQedParams, species: AtomSpecies, fort: FortConfig,
                    timing: TimingSequence, psd: NoisePsd | None = None) -> ExperimentConfig:
    """Experiment file: delay grid, statistics and protocol knobs on top of the other files."""
    path = Path(path)
    vals = _apply(path, parse_kv(path), EXPERIMENT_KEYS)
    groups: dict[str, dict] = {"probe": {}, "chain": {}, "arrivals": {}, "dist": {}, "protocol": {}}
    top = {}
    for k, v in vals.items():
        if "." in k:
            g, name = k.split(".", 1)
            groups[g][name] = v
        else:
            top[k] = v
    fort_ref = top.pop("_fort", None)
    if fort_ref:
        fort = load_fort(_resolve(path, fort_ref), psd_override=psd if psd is not None else None)
    dist = _build(InitialDistribution, path, groups["dist"])
    arrivals = _build(ArrivalModel, path, {**groups["arrivals"], "distribution": dist})
    protocol = _build(ProtocolConfig, path, {
        "params": params,
        "fort": fort,
        "probe": _build(ProbeConfig, path, groups["probe"]),
        "chain": _build(DetectionChain, path, groups["chain"]),
        "timing": timing,
        "arrivals": arrivals,
        "species": species,
        **groups["protocol"],
    })
    return _build(ExperimentConfig, path, {**top, "protocol": protocol})


@dataclass
class RunConfig:
    params_file: Path
    fort_file: Path
    psd_file: Path | None
    timing_file: Path
    experiment_file: Path
    master_seed: int = 0
    output_dir: Path = Path("out")
    format: str = "csv"
    heating_nu_radial: float | None = None
    heating_nu_axial: float | None = None
    spectrum_min: float = -100e6
    spectrum_max: float = 100e6
    spectrum_points: int = 2001
    transit_trials: int = 200
    source: Path | None = None
    loaded: dict = field(default_factory=dict, repr=False)

    def files(self) -> list[Path]:
        out = [self.params_file, self.fort_file, self.timing_file, self.experiment_file]
        if self.psd_file is not None:
            out.append(self.psd_file)
        if self.source is not None:
            out.insert(0, self.source)
        # files referenced from inside other files
        for ref_owner, keys in ((self.fort_file, ("noise_psd_file",)), (self.experiment_file, ("fort_file",))):
            raw = parse_kv(ref_owner)
            for key in keys:
                if key in raw:
                    out.append(_resolve(ref_owner, raw[key]))
        seen, unique = set(), []
        for p in out:
            r = Path(p).resolve()
            if r not in seen:
                seen.add(r)
                unique.append(r)
        return unique

    def config_hash(self) -> str:
        """SHA-256 over the bytes of every file the run reads, in a fixed order."""
        h = hashlib.sha256()
        for p in self.files():
            h.update(p.name.encode())
            h.update(b"\0")
            h.update(p.read_bytes())
            h.update(b"\0")
        return h.hexdigest()

    # loaded objects -----------------------------------------------------

    def params(self) -> tuple[CavityQedParams, AtomSpecies]:
        if "params" not in self.loaded:
            self.loaded["params"] = load_params(self.params_file)
        return self.loaded["params"]

    def psd(self) -> NoisePsd | None:
        if "psd" not in self.loaded:
            self.loaded["psd"] = load_psd(self.psd_file) if self.psd_file is not None else None
        return self.loaded["psd"]

    def fort(self) -> FortConfig:
        if "fort" not in self.loaded:
            self.loaded["fort"] = load_fort(self.fort_file, psd_override=self.psd())
        return self.loaded["fort"]

    def timing(self) -> TimingSequence:
        if "timing" not in self.loaded:
            self.loaded["timing"] = load_timing(self.timing_file)
        return self.loaded["timing"]

    def experiment(self) -> ExperimentConfig:
        if "experiment" not in self.loaded:
            params, species = self.params()
            exp = load_experiment(self.experiment_file, params, species, self.fort(), self.timing(), self.psd())
            self.loaded["experiment"] = replace(exp, master_seed=self.master_seed)
        return self.loaded["experiment"]


def load_run_config(path=None) -> RunConfig:
    """Run bundle from ``path`` (default: the shipped ``run.cfg``)."""
    path = data_path("run.cfg") if path is None else Path(path)
    vals = _apply(path, parse_kv(path), RUN_KEYS)
    for key in ("params_file", "fort_file", "timing_file", "experiment_file"):
        if key not in vals:
            raise ConfigError(f"{path}: missing required key {key}")
    files = {}
    for key in ("params_file", "fort_file", "psd_file", "timing_file", "experiment_file"):
        if key in vals:
            p = _resolve(path, vals.pop(key))
            if not p.is_file():
                raise ConfigError(f"{path}: {key} not found: {p}")
            files[key] = p
    files.setdefault("psd_file", None)
    if "output_dir" in vals:
        vals["output_dir"] = Path(vals["output_dir"])
    if vals.get("format", "csv") not in ("csv", "json"):
        raise ConfigError(f"{path}: format must be csv or json")
    cfg = RunConfig(**files, **vals, source=path)
    if cfg.spectrum_points < 2 or not math.isfinite(cfg.spectrum_min) or cfg.spectrum_max <= cfg.spectrum_min:
        raise ConfigError(f"{path}: spectrum range needs spectrum_max > spectrum_min and >= 2 points")
    return cfg
