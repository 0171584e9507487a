"""Command-line entry point: ``cqedtrap <subcommand> [--config run.cfg] ...``.

Subcommands write CSV/JSON into ``--out`` and print a short JSON summary.
Every file carries the master seed, a hash of the configuration files and
the package version.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cavity import ProbeConfig, dressed_eigenvalues, spectrum_scan
from .config import ConfigError, RunConfig, load_run_config
from .detection import TrialRecord, run_protocol
from .dynamics import InitialDistribution, sample_initial_state, simulate_transit, transit_velocity
from .harness import (
    default_transit_conditions,
    phantom_fraction,
    run_lifetime_experiment,
    run_transit_survey,
    trial_rng,
)
from .noise import heating_estimate
from .physics import (
    C,
    K_B,
    TWO_PI,
    DomainError,
    cavity_buildup,
    central_antinode,
    critical_numbers,
    free_fall_velocity,
    scattering_rate,
    trap_frequencies,
)
from .psd import PsdRangeError

SUBCOMMANDS = ("spectrum", "transit", "heating", "protocol", "lifetime", "params")


class _Output:
    def __init__(self, cfg: RunConfig, seed: int, out_dir: Path, fmt: str):
        self.seed = seed
        self.out_dir = out_dir
        self.fmt = fmt
        self.config_hash = cfg.config_hash()
        out_dir.mkdir(parents=True, exist_ok=True)

    @property
    def provenance(self) -> dict:
        return {"master_seed": self.seed, "config_sha256": self.config_hash, "version": __version__}

    def json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        body = {"provenance": self.provenance, **payload}
        path.write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def table(self, stem: str, header, rows) -> Path:
        rows = [list(r) for r in rows]
        if self.fmt == "json":
            return self.json(stem + ".json", {"columns": list(header), "rows": rows})
        path = self.out_dir / (stem + ".csv")
        buf = io.StringIO()
        for k, v in self.provenance.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        path.write_text(buf.getvalue(), encoding="utf-8")
        return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# subcommands


def cmd_params(cfg: RunConfig, out: _Output, args) -> dict:
    params, species = cfg.params()
    fort = cfg.fort()
    m0, n0 = critical_numbers(params)
    nu_r, nu_a = trap_frequencies(fort, params, species)
    result = {
        "g0_over_2pi_hz": params.g0 / TWO_PI,
        "kappa_over_2pi_hz": params.kappa / TWO_PI,
        "gamma_perp_over_2pi_hz": params.gamma_perp / TWO_PI,
        "critical_photon_number_m0": m0,
        "critical_atom_number_N0": n0,
        "cavity_length_m": params.cavity_length_l,
        "lambda_cavity_m": params.lambda_cavity,
        "lambda_fort_m": params.lambda_fort,
        "fort_depth_k": fort.depth / K_B,
        "fort_transition_shift_hz": fort.transition_shift,
        "trap_frequency_radial_hz": nu_r,
        "trap_frequency_axial_hz": nu_a,
        "scattering_rate_per_s": scattering_rate(fort, params),
        "circulating_power_w": cavity_buildup(fort.input_power, params.finesse_fort, fort.coupling_efficiency),
        "free_fall_velocity_m_s": free_fall_velocity(InitialDistribution().drop_height, species.g_acc),
        "fort_detuning_hz": C * (1 / params.lambda_fort - 1 / params.lambda_atom),
    }
    psd = fort.noise_psd
    if psd is not None:
        quoted = heating_estimate(psd, nu_radial=cfg.heating_nu_radial or nu_r,
                                  nu_axial=cfg.heating_nu_axial or nu_a)
        derived = heating_estimate(psd, fort=fort, params=params, species=species)
        result["heating_quoted_frequencies"] = quoted.as_dict()
        result["heating_fort_frequencies"] = derived.as_dict()
    out.json("params.json", result)
    return result


def cmd_heating(cfg: RunConfig, out: _Output, args) -> dict:
    params, species = cfg.params()
    fort = cfg.fort()
    if fort.noise_psd is None:
        raise ConfigError("heating needs a PSD (psd_file in the run config or noise_psd_file in the FORT file)")
    est = heating_estimate(fort.noise_psd, nu_radial=cfg.heating_nu_radial, nu_axial=cfg.heating_nu_axial,
                           fort=fort, params=params, species=species)
    result = est.as_dict()
    out.json("heating.json", result)
    return result


def cmd_spectrum(cfg: RunConfig, out: _Output, args) -> dict:
    params, _ = cfg.params()
    fort = cfg.fort()
    grid = np.linspace(cfg.spectrum_min, cfg.spectrum_max, cfg.spectrum_points)
    probe = ProbeConfig()
    g = 0.0 if args.empty else args.g_fraction * params.g0
    shift = 0.0
    if args.with_fort and not args.empty:
        # atom at the central antinode of both modes: full transition shift
        shift = fort.transition_shift * args.g_fraction**2
    resp = spectrum_scan(grid, probe, params, g=g, fort_shift=shift)
    rows = zip(grid, np.real(resp.t), np.imag(resp.t), resp.abs2)
    path = out.table("spectrum", ("delta_probe_hz", "t_re", "t_im", "t_abs2"), rows)
    dressed = dressed_eigenvalues(params, g=g, fort_shift=shift)
    return {"file": path.name, "points": cfg.spectrum_points, "g_over_2pi_hz": g / TWO_PI,
            "fort_shift_hz": shift, "dressed_upper_hz": dressed.upper, "dressed_lower_hz": dressed.lower,
            "min_t_abs2": float(np.min(resp.abs2))}


def cmd_transit(cfg: RunConfig, out: _Output, args) -> dict:
    params, species = cfg.params()
    rng = np.random.default_rng(np.random.SeedSequence([out.seed, 0]))
    dist = InitialDistribution(cooled=not args.free_fall, offset_radius=params.waist_w0 / 2)
    atom = sample_initial_state(dist, params, rng, 0.0, species)
    speed = max(float(np.hypot(atom.velocity[1], atom.velocity[2])), 1e-4)
    span = 6 * params.waist_w0 / speed
    start = replace(atom, position=atom.position - atom.velocity * span / 2, time=-span / 2)
    start = replace(start, velocity=atom.velocity.copy())
    traj = simulate_transit(start, span, params, species, gravity=False,
                            sample_dt=max(span / 2000, 1e-7))
    path = out.table("transit", ("t_s", "x_m", "y_m", "z_m", "vx", "vy", "vz", "status"), traj.rows())
    trials = args.trials if args.trials is not None else cfg.transit_trials
    stats = run_transit_survey(default_transit_conditions(), trials, out.seed, params=params)
    summary = {
        "trajectory_file": path.name,
        "crossing_interval_s": traj.crossing_interval,
        "transit_velocity_m_s": traj.transit_velocity,
        "survey": [s.as_dict() for s in stats],
        "survey_transit_velocity_m_s": {
            s.condition: (transit_velocity(s.median_duration, params) if s.median_duration > 0 else None)
            for s in stats
        },
    }
    out.json("transit_summary.json", summary)
    return summary


def cmd_protocol(cfg: RunConfig, out: _Output, args) -> dict:
    exp = cfg.experiment()
    pcfg = replace(exp.protocol, timing=cfg.timing(), record_events=True)
    n = args.trials if args.trials is not None else 1
    records: list[TrialRecord] = []
    for i in range(n):
        records.append(run_protocol(pcfg, trial_rng(out.seed, 0, i), seed=(out.seed, 0, i)))
    first = records[0]
    log_path = out.table("protocol_events", ("t_s", "phase", "probe_on", "fort_on", "cooling_on", "filtered_level"),
                         first.events)
    summary = {
        "trial": first.as_dict(),
        "trials": n,
        "triggered": sum(r.triggered for r in records),
        "redetected": sum(r.redetected for r in records),
        "phantom_fraction": phantom_fraction(records),
        "event_log": log_path.name,
    }
    out.json("protocol.json", summary)
    return summary


def cmd_lifetime(cfg: RunConfig, out: _Output, args) -> dict:
    exp = cfg.experiment()
    if args.trials is not None:
        exp = replace(exp, trials_per_delay=args.trials)
    if args.workers is not None:
        exp = replace(exp, workers=args.workers)
    result = run_lifetime_experiment(exp)
    curve_path = out.table("lifetime_curve", ("delay_s", "p_trap", "p_err", "n_trials", "p_background", "flag"),
                           [(*row, pt.flag) for row, pt in zip(result.subtracted.rows(), result.subtracted.points)])
    raw_path = out.table("lifetime_raw", ("delay_s", "p_trap", "p_err", "n_trials", "p_background"),
                         result.curve.rows())
    fit = result.fit.as_dict() if result.fit else {"converged": False}
    payload = {
        "fit": fit,
        "background_fit": result.background_fit.as_dict() if result.background_fit else None,
        "phantom_fraction": result.phantom_fraction(),
        "trials_per_delay": exp.trials_per_delay,
        "curve_file": curve_path.name,
        "raw_curve_file": raw_path.name,
    }
    out.json("lifetime_fit.json", payload)
    return payload


COMMANDS = {
    "params": cmd_params,
    "heating": cmd_heating,
    "spectrum": cmd_spectrum,
    "transit": cmd_transit,
    "protocol": cmd_protocol,
    "lifetime": cmd_lifetime,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="run configuration (key=value); default: shipped")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--trials", type=int, default=None, help="trial count (per delay for lifetime)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes for lifetime runs (results do not depend on it)")
    common.add_argument("--format", choices=("csv", "json"), default=None, help="format of tabular outputs")

    parser = argparse.ArgumentParser(prog="cqedtrap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("params", parents=[common], help="derived quantities as JSON")
    sub.add_parser("heating", parents=[common], help="parametric heating times as JSON")
    sp = sub.add_parser("spectrum", parents=[common], help="probe transmission spectrum CSV")
    sp.add_argument("--g-fraction", type=float, default=1.0, help="coupling as a fraction of g0")
    sp.add_argument("--empty", action="store_true", help="empty cavity")
    sp.add_argument("--with-fort", action="store_true", help="include the FORT Stark shift of the atom")
    tp = sub.add_parser("transit", parents=[common], help="one transit trajectory and a duration survey")
    tp.add_argument("--free-fall", action="store_true", help="uncooled atom falling from the MOT")
    sub.add_parser("protocol", parents=[common], help="run loading cycles; event log of the first")
    sub.add_parser("lifetime", parents=[common], help="survival curve, background subtraction and fit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config)
    except ConfigError as err:
        print(f"cqedtrap: error: {err}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else cfg.master_seed
    if seed < 0 or seed >= 2**64:
        parser.print_usage(sys.stderr)
        print("cqedtrap: error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.trials is not None and args.trials < 1:
        print("cqedtrap: error: --trials must be positive", file=sys.stderr)
        return 2
    if args.workers is not None and args.workers < 1:
        print("cqedtrap: error: --workers must be positive", file=sys.stderr)
        return 2
    cfg.master_seed = seed
    out = _Output(cfg, seed, args.out or cfg.output_dir, args.format or cfg.format)
    try:
        result = COMMANDS[args.command](cfg, out, args)
    except ConfigError as err:
        print(f"cqedtrap: error: {err}", file=sys.stderr)
        return 2
    except (DomainError, PsdRangeError, ValueError, ZeroDivisionError) as err:
        print(f"cqedtrap {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    print(json.dumps(_clean(result), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
