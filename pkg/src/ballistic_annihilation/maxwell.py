"""Closed-form laws for Maxwellian molecules and the DSMC calibration oracle.

With a state-independent collision rate the density obeys
``dn/dt = -mu n^2`` exactly, mean velocity and temperature are invariant,
and the shape of the distribution follows the classical elastic equation in
the logarithmic time ``s(t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, ParticleEnsemble, RadialProfile, bulk_quantities, radial_histogram
from .dsmc import InitialSampler, RunSettings, advance, initial_ensemble, run_physical
from .selfsim import resample
from .selfsim import weighted_l1 as _l1


@dataclass(frozen=True)
class MaxwellLaw:
    n0: float
    alpha: float
    u0: tuple = (0.0, 0.0, 0.0)
    Theta0: float = 1.0
    b_norm: float = 1.0

    def __post_init__(self):
        if not self.n0 > 0:
            raise ValueError("n0 must be positive")
        if not self.Theta0 > 0:
            raise ValueError("Theta0 must be positive")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        object.__setattr__(self, "u0", tuple(float(x) for x in self.u0))

    @property
    def mu(self) -> float:
        return self.alpha * self.b_norm

    @property
    def d(self) -> int:
        return len(self.u0)

    @classmethod
    def from_ensemble(cls, ens: ParticleEnsemble, alpha: float) -> "MaxwellLaw":
        n, u, th = bulk_quantities(ens)
        return cls(n0=n, alpha=alpha, u0=tuple(u), Theta0=th)


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return t


def n_exact(t, law: MaxwellLaw):
    t = _check_t(t)
    out = law.n0 / (law.mu * law.n0 * t + 1.0)
    return float(out) if out.ndim == 0 else out


def s_of_t(t, law: MaxwellLaw):
    """Classical-equation time reached by the annihilation dynamics at time ``t``."""
    if not 0 < law.alpha < 1:
        raise ValueError("time change is degenerate for alpha in {0, 1}")
    t = _check_t(t)
    k = law.mu * law.n0
    out = (1.0 - law.alpha) / k * np.log1p(k * t)
    return float(out) if out.ndim == 0 else out


def maxwellian_limit(law: MaxwellLaw, v):
    v = np.asarray(v, dtype=float)
    c = v - np.asarray(law.u0)
    d = law.d
    return law.n0 * (2 * math.pi * law.Theta0) ** (-d / 2) * np.exp(-np.sum(c * c, axis=-1) / (2 * law.Theta0))


def density_se(t, law: MaxwellLaw, N0: int):
    """Standard error of the particle density from the linear-noise approximation.

    Pair events remove two particles at once, giving
    ``Var(N) = (2 N0 / 3) ((1 + tau)^3 - 1) / (1 + tau)^4`` with ``tau = mu n0 t``.
    """
    t = _check_t(t)
    tau = law.mu * law.n0 * t
    var = (2.0 * N0 / 3.0) * ((1 + tau) ** 3 - 1) / (1 + tau) ** 4
    out = (law.n0 / N0) * np.sqrt(var)
    return float(out) if out.ndim == 0 else out


@dataclass
class OracleReport:
    rows: list = field(default_factory=list)
    n_pass: bool = True
    bulk_pass: bool = True
    max_rel_error: float = 0.0
    max_z_n: float = 0.0
    max_z_u: float = 0.0
    max_z_theta: float = 0.0

    @property
    def passed(self) -> bool:
        return self.n_pass and self.bulk_pass

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_pass": self.n_pass,
            "bulk_pass": self.bulk_pass,
            "max_rel_error": self.max_rel_error,
            "max_z_n": self.max_z_n,
            "max_z_u": self.max_z_u,
            "max_z_theta": self.max_z_theta,
        }


def density_oracle(settings: RunSettings, params: ModelParams, rng, rel_tol: float = 0.01) -> tuple[OracleReport, object]:
    """Run the DSMC engine at ``gamma = 0`` and compare against the exact density law."""
    if params.gamma != 0:
        raise ValueError("density oracle requires gamma = 0")
    traj = run_physical(settings, params, rng)
    n0, u0, th0 = traj.bulk[0]
    law = MaxwellLaw(n0=n0, alpha=params.alpha, u0=tuple(u0), Theta0=th0)
    N0 = traj.counts[0]
    rep = OracleReport()
    for t, (n, u, th), (_, use, thse) in zip(traj.times, traj.bulk, traj.bulk_se):
        ne = n_exact(t, law)
        se = density_se(t, law, N0)
        z = abs(n - ne) / se if se > 0 else (0.0 if n == ne else math.inf)
        rel = abs(n - ne) / ne
        zu = float(np.max(np.abs(u - u0) / use)) if t > 0 else 0.0
        zt = abs(th - th0) / thse if t > 0 else 0.0
        rep.rows.append({"t": t, "n_dsmc": n, "n_exact": ne, "se": se, "rel_error": rel, "z": z,
                         **{f"u{a}": float(x) for a, x in enumerate(u)}, "theta": th})
        rep.max_rel_error = max(rep.max_rel_error, rel)
        rep.max_z_n = max(rep.max_z_n, z)
        rep.max_z_u = max(rep.max_z_u, zu)
        rep.max_z_theta = max(rep.max_z_theta, zt)
    rep.n_pass = rep.max_z_n <= 3.0 and rep.max_rel_error <= rel_tol
    rep.bulk_pass = rep.max_z_u <= 3.0 and rep.max_z_theta <= 3.0
    return rep, traj


@dataclass
class EquivalenceSettings:
    N: int = 100_000
    scaled_time: float = 2.0  # mu * n0 * t
    sampler: InitialSampler = field(default_factory=lambda: InitialSampler("shell", radius=math.sqrt(3.0)))
    bins: int = 24
    r_max: float = 4.8
    null_runs: int = 8
    max_fraction: float = 0.02

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "sampler"}
        out["sampler"] = self.sampler.to_dict()
        return out


@dataclass
class EquivalenceReport:
    t: float
    s: float
    distance: float
    null_distances: list
    threshold: float
    passed: bool
    moments: dict

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "s": self.s,
            "distance": self.distance,
            "null_distances": list(self.null_distances),
            "null_mean": float(np.mean(self.null_distances)) if self.null_distances else None,
            "null_std": float(np.std(self.null_distances, ddof=1)) if len(self.null_distances) > 1 else None,
            "threshold": self.threshold,
            "passed": self.passed,
            "moments": self.moments,
        }


def _shape(ens: ParticleEnsemble, settings: EquivalenceSettings) -> RadialProfile:
    # each histogram divided by its own mass
    unit = ParticleEnsemble(ens.velocities, 1.0 / ens.count)
    return radial_histogram(unit, settings.bins, settings.r_max, overflow_warn=1.0)


def _null_distance(k, streams, settings, d, s, classical, n_keep, g_prof):
    r = streams[3 + k]
    e0 = initial_ensemble(settings.sampler, settings.N, d, r)
    e, _, _ = advance(e0, s, classical, r, settings.max_fraction) if s > 0 else (e0, 0.0, None)
    e = resample(e, max(n_keep, 2), r)
    return _l1(_shape(e, settings), g_prof)


def equivalence_check(params: ModelParams, settings: EquivalenceSettings, rng, threads: int = 1) -> EquivalenceReport:
    """Compare the annihilation run at ``t`` with the classical run at ``s(t)``.

    Both runs start from the same initial ensemble. The null band comes from
    classical runs started from independent initial ensembles and thinned to
    the annihilation run's particle count. Every run owns a stream spawned
    from ``rng``, so the result does not depend on ``threads``.
    """
    if params.gamma != 0:
        raise ValueError("equivalence check requires gamma = 0")
    if not 0 < params.alpha < 1:
        raise ValueError("equivalence check requires 0 < alpha < 1")
    d = params.d
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(int(rng.integers(2**63))).spawn(3 + settings.null_runs)]
    ens0 = initial_ensemble(settings.sampler, settings.N, d, streams[0])
    law = MaxwellLaw.from_ensemble(ens0, params.alpha)
    t = settings.scaled_time / (law.mu * law.n0)
    s = s_of_t(t, law)
    classical = params.replace(alpha=0.0)

    f_ens, _, _ = advance(ens0, t, params, streams[1], settings.max_fraction) if t > 0 else (ens0, 0.0, None)
    g_ens, _, _ = advance(ens0, s, classical, streams[2], settings.max_fraction) if s > 0 else (ens0, 0.0, None)
    dist = _l1(_shape(f_ens, settings), _shape(g_ens, settings))

    g_prof = _shape(g_ens, settings)
    args = (streams, settings, d, s, classical, f_ens.count, g_prof)
    if threads > 1 and settings.null_runs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            nulls = list(pool.map(lambda k: _null_distance(k, *args), range(settings.null_runs)))
    else:
        nulls = [_null_distance(k, *args) for k in range(settings.null_runs)]
    if len(nulls) > 1:
        threshold = float(np.mean(nulls) + 3 * np.std(nulls, ddof=1))
    else:
        threshold = float(nulls[0]) if nulls else math.inf

    _, uf, thf = bulk_quantities(f_ens)
    _, ug, thg = bulk_quantities(g_ens)

    def _se(ens):
        c = ens.velocities - ens.velocities.mean(axis=0)
        N = ens.count
        sq = np.einsum("ij,ij->i", c, c)
        return c.std(axis=0, ddof=1) / math.sqrt(N), float(sq.std(ddof=1)) / (d * math.sqrt(N))

    uf_se, thf_se = _se(f_ens)
    ug_se, thg_se = _se(g_ens)
    z_u = float(np.max(np.abs(uf - ug) / np.hypot(uf_se, ug_se)))
    z_th = abs(thf - thg) / math.hypot(thf_se, thg_se)
    moments = {
        "u_annihilation": uf.tolist(),
        "u_classical": ug.tolist(),
        "theta_annihilation": thf,
        "theta_classical": thg,
        "z_u": z_u,
        "z_theta": z_th,
        "n_annihilation": f_ens.mass,
        "n_exact": n_exact(t, law),
        "moments_pass": bool(z_u <= 3 and z_th <= 3),
    }
    passed = bool(dist <= threshold and moments["moments_pass"])
    return EquivalenceReport(t=t, s=s, distance=dist, null_distances=nulls, threshold=threshold, passed=passed, moments=moments)
