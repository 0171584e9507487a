"""Slower atoms stay visible longer.

Atoms dropped straight from the MOT cross the 20 um waist in about a
hundred microseconds; cooled atoms linger for hundreds. The mean speed
implied by a transit of duration T is 2 w0 / T.
"""

from cqedtrap import config
from cqedtrap.dynamics import InitialDistribution, transit_velocity
from cqedtrap.harness import default_transit_conditions, run_transit_survey
from cqedtrap.physics import free_fall_velocity

cfg = config.load_run_config()
params, _ = cfg.params()
print(f"free-fall speed from {InitialDistribution().drop_height * 1e3:.0f} mm: "
      f"{free_fall_velocity(InitialDistribution().drop_height):.3f} m/s")
for stats in run_transit_survey(default_transit_conditions(), 200, seed=3, params=params):
    print(f"{stats.condition:12s} median detected transit {stats.median_duration * 1e6:6.0f} us, "
          f"median time inside the waist {stats.median_crossing * 1e6:6.0f} us")
for t in (100e-6, 1e-3, 7e-3):
    print(f"a {t * 1e3:g} ms transit implies {transit_velocity(t, params) * 1e3:.1f} mm/s")
