"""Walk through single loading cycles: drop, cool, trigger, hold, look again.

Each trial releases atoms from the MOT, cools them above the cavity, and
watches the probe transmission. A sustained dip switches the FORT on; after
the hold the FORT goes off and the probe checks whether an atom is still
there.
"""

from dataclasses import replace

from cqedtrap import config
from cqedtrap.detection import run_protocol, schedule_violations
from cqedtrap.harness import trial_rng

cfg = config.load_run_config()
timing = cfg.timing()
protocol = replace(cfg.experiment().protocol, timing=timing, record_events=True)

for i in range(8):
    rec = run_protocol(protocol, trial_rng(7, 0, i), seed=(7, 0, i))
    if not rec.triggered:
        print(f"trial {i}: {rec.n_atoms} atom(s) passed, no trigger in the armed window")
        continue
    cause = rec.trigger_cause.value if rec.trigger_cause else "nothing bound"
    outcome = "redetected" if rec.redetected else "not seen"
    print(f"trial {i}: trigger at {(rec.trigger_time - timing.t3_cool_end_probe_on) * 1e3:.2f} ms after the probe "
          f"came on, {rec.n_trapped} bound ({cause}), after {rec.hold_delay * 1e3:.0f} ms hold: {outcome}")
    assert not schedule_violations(rec, timing)

print("\nphase boundaries of the last triggered trial:")
for t, phase, probe, fort, cooling, level in rec.events:
    if level is None:
        print(f"  {t * 1e3:8.3f} ms  {phase:10s} probe={int(probe)} fort={int(fort)} cooling={int(cooling)}")
