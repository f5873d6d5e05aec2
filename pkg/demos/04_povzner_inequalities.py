"""Check the moment, lower-bound and weak-form diagnostics along one profile run."""
import numpy as np

from ballistic_annihilation.analysis import (
    check_lower_bound,
    check_moment_inequality,
    moment_bound,
    weak_residual_report,
)
from ballistic_annihilation.core import ModelParams
from ballistic_annihilation.selfsim import ProfileSettings, find_profile

params = ModelParams(d=3, gamma=1.0, alpha=0.1)
settings = ProfileSettings(N_target=30_000, tol=0.04, max_windows=20)
run = find_profile(settings, params, np.random.default_rng(4))

ineq = check_moment_inequality(run.diagnostics, 1.5, params.alpha, params, spacing=settings.snapshots_per_window)
print(f"moment inequality holds at {ineq.pass_fraction:.1%} of {ineq.checkpoints} checkpoints")
low = check_lower_bound(run.diagnostics, params.alpha, params)
print(f"lower bounds: {low.violations} violations out of {low.checkpoints}")
sup3 = max(r.value(1.5) for r in run.diagnostics)
print(f"largest M_3/2 seen {sup3:.3f}, bound {moment_bound(params.alpha, params):.2f}")

rng = np.random.default_rng(5)
wins = run.window_of_record
for label, ens, w in (("first", run.first_window, 0), ("last", run.last_window, wins[-1])):
    recs = [r for r, k in zip(run.diagnostics, wins) if k == w]
    rep = weak_residual_report(ens, [r.A_psi for r in recs], [r.B_psi for r in recs], params, rng=rng)
    print(f"{label} window weak residual {rep['residual']:.4f} +- {rep['residual_se']:.4f}")
