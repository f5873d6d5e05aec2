"""Angular constants and the annihilation thresholds for hard spheres and softer kernels."""
from ballistic_annihilation.constants import kappa_bounds, p_star, rho_k, threshold_report
from ballistic_annihilation.analysis import moment_bound
from ballistic_annihilation.core import ModelParams

hard = ModelParams(d=3, gamma=1.0)
rep = threshold_report(hard)
print("angular constants rho_k = 2/(k+1) in 3D:")
for k, v in sorted(rep.rho.items()):
    print(f"  k={k:<4} rho={v:.12f}")
print(f"moment-bound threshold   {rep.alpha0:.12f}  (2/7 = {2 / 7:.12f})")
print(f"lower-bound threshold    {rep.alpha_star:.12f}  (levels j0={rep.j0})")

# the moment bound blows up as alpha approaches its threshold
for a in (0.05, 0.1, 0.2, 0.28):
    print(f"alpha={a:<5} sup bound on M_3/2: {moment_bound(a, hard):10.3f}   p*={p_star(a, 3) or float('inf'):.3f}")

soft = ModelParams(d=3, gamma=2 / 3)
print("lower-bound ladder for gamma=2/3, alpha=0.1:", [round(x, 6) for x in kappa_bounds(0.1, soft)])
print("rho in other dimensions at k=2:", {d: round(rho_k(2, ModelParams(d=d)), 10) for d in (2, 3, 4, 5)})
