"""How FORT intensity noise sets the trap lifetime.

Fluctuations of the trap depth at twice an oscillation frequency pump energy
into that motion exponentially. The radial and axial heating times follow
from the noise spectrum at 2 nu, and a brute-force ensemble of noisy 1-D
oscillators confirms the rate law.
"""

from cqedtrap import config
from cqedtrap.harness import heating_oracle
from cqedtrap.noise import heating_estimate
from cqedtrap.physics import trap_frequencies

cfg = config.load_run_config()
params, species = cfg.params()
psd = cfg.fort().noise_psd

quoted = heating_estimate(psd, nu_radial=5e3, nu_axial=450e3)
print("quoted trap frequencies 5 kHz / 450 kHz:")
print(f"  radial tau_e = {quoted.tau_e_radial * 1e3:7.1f} ms   (S_e at 10 kHz = {psd(10e3):.2e} /Hz)")
print(f"  axial  tau_e = {quoted.tau_e_axial * 1e3:7.2f} ms   (S_e at 900 kHz = {psd(900e3):.2e} /Hz)")

for fort in (cfg.fort(), cfg.experiment().protocol.fort):
    nu_r, nu_a = trap_frequencies(fort, params, species)
    est = heating_estimate(psd, nu_radial=nu_r, nu_axial=nu_a)
    print(f"\nFORT with {-fort.stark_ground / 1e6:.0f} MHz ground-state shift: nu = {nu_r:.0f} Hz / "
          f"{nu_a / 1e3:.1f} kHz")
    print(f"  radial tau_e = {est.tau_e_radial * 1e3:.1f} ms, axial tau_e = {est.tau_e_axial * 1e3:.2f} ms")

print("\nensemble of 200 noisy oscillators at 450 kHz (about 15 s)...")
check = heating_oracle(450e3, psd, members=200, seed=1)
print(f"  fitted e-folding time {check.tau_fitted * 1e3:.2f} ms vs rate law {check.tau_analytic * 1e3:.2f} ms "
      f"(ratio {check.ratio:.3f})")
