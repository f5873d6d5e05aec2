"""Drive a hard-sphere annihilating gas to its self-similar profile.

The ensemble is rescaled to unit mass and energy d/2 whenever it loses mass,
and the run stops once consecutive window-averaged radial profiles agree.
"""
import numpy as np

from ballistic_annihilation.core import ModelParams
from ballistic_annihilation.selfsim import ProfileSettings, find_profile

params = ModelParams(d=3, gamma=1.0, alpha=0.1)
run = find_profile(ProfileSettings(), params, np.random.default_rng(3))
print(f"window length {run.window_tau:.3f}, windows run {len(run.window_profiles)}, stationary {run.stationary}")
for w, dist in enumerate(run.distances, start=1):
    print(f"  distance between windows {w} and {w + 1}: {dist:.4f}")
prof = run.final_profile
print(" r_lo   r_hi   density")
for lo, hi, rho in zip(prof.bin_edges[:-1], prof.bin_edges[1:], prof.density):
    print(f"{lo:5.2f} {hi:6.2f} {rho:9.5f}")
rec = run.diagnostics[-1]
print("final collision coefficients a, b:", rec.a_psi[0], rec.b_psi[0])
