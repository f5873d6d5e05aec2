"""Kinetic Monte Carlo and verification tools for homogeneous ballistic annihilation."""
__version__ = "0.1.0"

from .core import (
    AngularLaw,
    ExtinctionError,
    MajorantExceededError,
    ModelParams,
    MomentRecord,
    NonConvergenceError,
    ParticleEnsemble,
    RadialProfile,
    ScalingState,
    bulk_quantities,
    moment,
    moment_record,
    radial_histogram,
)
from .constants import alpha0, alpha_star, beta_k, p_star, rho_k, threshold_report
from .collision import collide, post_collision, rate_majorant
from .dsmc import InitialSampler, RunSettings, advance, collide_step, initial_ensemble, run_physical
from .selfsim import ProfileSettings, estimate_ab, find_profile, normalize, resample
from .analysis import (
    check_lower_bound,
    check_moment_inequality,
    isotropic_lemma_check,
    lp_pairing_check,
    moment_bound,
    povzner_S_k,
    weak_residual,
)
from .maxwell import MaxwellLaw, density_oracle, equivalence_check, n_exact, s_of_t
