"""Self-similar frame: renormalization, resampling and the profile driver.

The physical-frame particle system is advanced with the DSMC engine and
mapped back to unit mass and energy ``d/2`` by rescaling velocities with the
thermal speed ``vbar = sqrt(2E / (d n))``. Rescaled time advances as
``dtau = n * vbar^gamma * dt``, which is the collision clock of the
normalized system.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .collision import rate_majorant
from .core import (
    ExtinctionError,
    ModelParams,
    MomentRecord,
    ParticleEnsemble,
    RadialProfile,
    ScalingState,
    average_profiles,
    moment_record,
    radial_histogram,
)
from .dsmc import InitialSampler, _step_arrays, initial_ensemble


def scaling_state(n: float, E: float, d: int) -> ScalingState:
    if not n > 0:
        raise ValueError(f"n must be positive, got {n!r}")
    if not E > 0:
        raise ValueError(f"E must be positive, got {E!r}")
    beta = math.sqrt(d * n / (2.0 * E))
    return ScalingState(n=n, E=E, beta=beta, lam=beta**d * n, vbar=1.0 / beta)


def normalize(ensemble: ParticleEnsemble) -> tuple[ParticleEnsemble, ScalingState]:
    """Map to unit mass and energy ``d/2``; returns the new ensemble and the old scaling state."""
    if ensemble.count == 0:
        raise ValueError("empty ensemble")
    E = ensemble.energy()
    if not E > 0:
        raise ValueError("zero energy: all particles at rest")
    st = scaling_state(ensemble.mass, E, ensemble.d)
    return ParticleEnsemble(ensemble.velocities / st.vbar, 1.0 / ensemble.count), st


def resample(ensemble: ParticleEnsemble, N_target: int, rng, mode: str = "clone", jitter: float = 0.0) -> ParticleEnsemble:
    """Bring the particle count to ``N_target`` keeping the mass exactly.

    Missing particles are clones of parents drawn uniformly with
    replacement. ``mode="antithetic"`` adds clones in pairs ``(xi, -xi)`` so
    that no momentum is injected (unbiased only for isotropic ensembles).
    ``jitter`` adds an isotropic Gaussian kick of that standard deviation to
    the clones only. Surplus particles are removed by uniform thinning.
    """
    N_target = int(N_target)
    if N_target < 2:
        raise ValueError(f"N_target must be >= 2, got {N_target}")
    N = ensemble.count
    if N < 2:
        raise ValueError("need at least 2 particles to resample")
    if mode not in ("clone", "antithetic"):
        raise ValueError(f"unknown resample mode {mode!r}")
    mass = ensemble.mass
    v = ensemble.velocities
    if N == N_target:
        return ensemble
    if N > N_target:
        keep = np.sort(rng.choice(N, N_target, replace=False))
        return ParticleEnsemble(v[keep], mass / N_target)
    K = N_target - N
    if mode == "clone":
        new = v[rng.integers(0, N, K)]
    else:
        half = v[rng.integers(0, N, K // 2)]
        new = np.concatenate([half, -half])
        if K % 2:
            new = np.concatenate([new, v[rng.integers(0, N, 1)]])
    if jitter > 0:
        new = new + jitter * rng.standard_normal(new.shape)
    return ParticleEnsemble(np.concatenate([v, new]), mass / N_target)


def _pair_indices(N: int, budget: int, rng):
    """Pairs for U-statistics: all of them when affordable, else a balanced offset design."""
    total = N * (N - 1) // 2
    if total <= budget:
        i, j = np.triu_indices(N, 1)
        return i, j, True
    K = max(1, min(budget // N, N - 1))
    offsets = rng.choice(np.arange(1, N), K, replace=False)
    i = np.repeat(np.arange(N), K)
    j = (i + np.tile(offsets, N)) % N
    return i, j, False


def default_pair_budget(N: int) -> int:
    return int(min(N * N // 2, 1_000_000))


def _u_stat(h: np.ndarray, i: np.ndarray, j: np.ndarray, N: int, full: bool) -> tuple[float, float]:
    """Mean of pair values and its standard error (Hoeffding projection plus pair noise)."""
    mean = float(h.mean())
    row = np.bincount(i, weights=h, minlength=N) + np.bincount(j, weights=h, minlength=N)
    cnt = np.bincount(i, minlength=N) + np.bincount(j, minlength=N)
    ok = cnt > 0
    h1 = row[ok] / cnt[ok]
    var_pair = float(h.var()) if h.size > 1 else 0.0
    var_h1 = float(h1.var())
    if full:
        var = 4.0 * var_h1 / N
    else:
        k = float(cnt[ok].mean())
        var = max(var_h1 - var_pair / k, 0.0) * 4.0 / N + var_pair / h.size
    return mean, math.sqrt(var)


def estimate_ab(ensemble: ParticleEnsemble, params: ModelParams, pair_budget: int | None = None, rng=None):
    """Loss-term integrals ``a = int Q_-`` and ``b = int Q_- |xi|^2`` with standard errors.

    Both are U-statistics: the squared mass times the average over distinct
    pairs of ``|xi_i - xi_j|^gamma`` (times the symmetrized ``|xi|^2`` for
    ``b``).
    """
    N = ensemble.count
    if N < 2:
        raise ValueError("estimate_ab needs N >= 2")
    budget = default_pair_budget(N) if pair_budget is None else int(pair_budget)
    if budget < 1000 and N * (N - 1) // 2 > budget:
        raise ValueError("pair_budget must be >= 1000")
    rng = np.random.default_rng(0) if rng is None else rng
    v = ensemble.velocities
    m2 = ensemble.mass**2
    sq = np.einsum("ij,ij->i", v, v)
    i, j, full = _pair_indices(N, budget, rng)
    if params.gamma == 0:
        phi = np.ones(i.size)
    else:
        rel = v[i] - v[j]
        r = np.sqrt(np.einsum("ij,ij->i", rel, rel))
        if params.trunc_n is not None:
            r = np.minimum(r, float(params.trunc_n))
        phi = r**params.gamma
    a, a_se = _u_stat(phi, i, j, N, full)
    b, b_se = _u_stat(phi * 0.5 * (sq[i] + sq[j]), i, j, N, full)
    if params.gamma == 0:
        a_se = 0.0
    return (m2 * a, m2 * a_se), (m2 * b, m2 * b_se)


def coefficients_AB(a_psi: float, b_psi: float, alpha: float, d: int) -> tuple[float, float]:
    A = -0.5 * alpha * (d + 2) * a_psi + alpha * b_psi
    B = -0.5 * alpha * a_psi + alpha / d * b_psi
    return A, B


def isotropy_stats(ensemble: ParticleEnsemble) -> dict:
    """Momentum and off-diagonal second moments with their standard errors."""
    v = ensemble.velocities
    N, d = v.shape
    w = ensemble.weight
    P = w * v.sum(axis=0)
    P_se = w * math.sqrt(N) * v.std(axis=0, ddof=1)
    off, off_se = [], []
    for a in range(d):
        for b in range(a + 1, d):
            x = v[:, a] * v[:, b]
            off.append(w * float(x.sum()))
            off_se.append(w * math.sqrt(N) * float(x.std(ddof=1)))
    off, off_se = np.array(off), np.array(off_se)
    z_P = float(np.max(np.abs(P) / P_se))
    z_off = float(np.max(np.abs(off) / off_se)) if off.size else 0.0
    return {
        "momentum": P.tolist(),
        "momentum_se": P_se.tolist(),
        "offdiag": off.tolist(),
        "offdiag_se": off_se.tolist(),
        "max_z_momentum": z_P,
        "max_z_offdiag": z_off,
    }


def default_orders(params: ModelParams) -> tuple:
    """Moment orders needed by the Povzner and lower-bound checks."""
    g = params.gamma
    ks = {0.0, 1.0, g / 2, g, 1 + g / 2, 1 + g, 1.5, 2.0, 1.5 + g / 2}
    if g > 0:
        j = 1
        while j * g / 2 < 1 + 1e-12:
            ks.add(j * g / 2)
            ks.add((j + 1) * g / 2)
            j += 1
    return tuple(sorted(round(k, 12) for k in ks))


def weighted_l1(p: RadialProfile, q: RadialProfile) -> float:
    """``sum_b |rho_p - rho_q| * V_b * <xi_b>^2`` on shared bins."""
    if p.bin_edges.shape != q.bin_edges.shape or np.any(p.bin_edges != q.bin_edges):
        raise ValueError("profiles must share bin edges")
    return float(np.sum(np.abs(p.density - q.density) * p.shell_volumes * (1.0 + p.midpoints**2)))


@dataclass
class ProfileSettings:
    N_target: int = 100_000
    sampler: InitialSampler = field(default_factory=lambda: InitialSampler("shell", radius=math.sqrt(1.5)))
    window_tau: float | None = None
    snapshots_per_window: int = 8
    tol: float = 0.02
    W: int = 5
    min_windows: int = 8
    max_windows: int = 60
    bins: int = 16
    r_max: float = 4.8
    max_fraction: float = 0.1
    renorm_mass_loss: float = 0.05
    resample_mode: str = "antithetic"
    jitter: float = 0.0
    pair_budget: int | None = None
    moment_orders: tuple | None = None
    keep_all_snapshots: bool = False

    def __post_init__(self):
        if self.N_target < 2:
            raise ValueError("N_target must be >= 2")
        if not (self.tol > 0 and self.W >= 1 and self.snapshots_per_window >= 1):
            raise ValueError("tol, W and snapshots_per_window must be positive")
        if not 0 < self.renorm_mass_loss < 1:
            raise ValueError("renorm_mass_loss must lie in (0, 1)")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "sampler"}
        out["sampler"] = self.sampler.to_dict()
        if out["moment_orders"] is not None:
            out["moment_orders"] = list(out["moment_orders"])
        return out


@dataclass
class Snapshot:
    tau: float
    record: MomentRecord
    profile: RadialProfile
    isotropy: dict
    ensemble: ParticleEnsemble | None = None


@dataclass
class ProfileRun:
    params: ModelParams
    settings: ProfileSettings
    window_profiles: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    stationary: bool = False
    final_profile: RadialProfile | None = None
    diagnostics: list = field(default_factory=list)
    isotropy: list = field(default_factory=list)
    window_bounds: list = field(default_factory=list)
    window_of_record: list = field(default_factory=list)
    first_window: list = field(default_factory=list)
    last_window: list = field(default_factory=list)
    all_windows: list = field(default_factory=list)
    window_tau: float = float("nan")
    final_ensemble: ParticleEnsemble | None = None
    clones: int = 0

    def records_tau(self) -> np.ndarray:
        return np.array([r.t for r in self.diagnostics])

    def final_isotropy(self) -> dict:
        return self.isotropy[-1]


def _snapshot(ens, tau, params, settings, orders, rng, keep):
    rec = moment_record(ens, tau, orders)
    (a, a_se), (b, b_se) = estimate_ab(ens, params, settings.pair_budget, rng)
    A, B = coefficients_AB(a, b, params.alpha, params.d)
    rec.a_psi, rec.b_psi, rec.A_psi, rec.B_psi = (a, a_se), (b, b_se), A, B
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        prof = radial_histogram(ens, settings.bins, settings.r_max)
    return Snapshot(tau, rec, prof, isotropy_stats(ens), ens if keep else None)


def find_profile(settings: ProfileSettings, params: ModelParams, rng, initial: ParticleEnsemble | None = None) -> ProfileRun:
    """Run the physical system with periodic renormalization until the window profiles settle."""
    from .constants import alpha0, alpha_star

    if params.gamma > 0 and params.alpha > 0:
        a_low = min(alpha0(params), min(0.5, alpha_star(params)[0]))
        if params.alpha >= a_low:
            warnings.warn(f"alpha={params.alpha} is not below the existence threshold {a_low:.4g}", RuntimeWarning)
    d = params.d
    orders = settings.moment_orders or default_orders(params)
    ens = initial if initial is not None else initial_ensemble(settings.sampler, settings.N_target, d, rng)
    ens, _ = normalize(resample(ens, settings.N_target, rng, settings.resample_mode, settings.jitter))
    run = ProfileRun(params=params, settings=settings)

    snap0 = _snapshot(ens, 0.0, params, settings, orders, rng, True)
    run.diagnostics.append(snap0.record)
    run.isotropy.append(snap0.isotropy)
    run.window_of_record.append(-1)
    L = settings.window_tau if settings.window_tau is not None else 1.0 / snap0.record.a_psi[0]
    run.window_tau = L

    v = np.array(ens.velocities)
    w = ens.weight
    tau = 0.0
    S = settings.snapshots_per_window
    prev = None
    for win in range(settings.max_windows):
        start = tau
        snaps = []
        for s in range(S):
            target = start + (s + 1) * L / S
            while tau < target:
                N = v.shape[0]
                if N < 2:
                    if not run.window_profiles:
                        raise ExtinctionError("ensemble extinct before the first window")
                    run.final_ensemble = None
                    return run
                sq = np.einsum("ij,ij->i", v, v)
                n = w * N
                vbar = math.sqrt(2.0 * w * float(sq.sum()) / (d * n))
                clock = n * vbar**params.gamma
                maj = rate_majorant(math.sqrt(float(sq.max())), params)
                dt = settings.max_fraction / ((N - 1) * w * maj)
                if (target - tau) <= clock * dt:
                    dt = (target - tau) / clock
                    tau = target
                else:
                    tau += clock * dt
                v, _ = _step_arrays(v, w, dt, params, rng, majorant=maj)
                if w * v.shape[0] < 1.0 - settings.renorm_mass_loss and v.shape[0] >= 2:
                    v, w = _renormalize(v, w, settings, rng, run)
            if v.shape[0] < 2:
                continue
            v, w = _renormalize(v, w, settings, rng, run)
            ens = ParticleEnsemble(v, w)
            snap = _snapshot(ens, tau, params, settings, orders, rng, True)
            snaps.append(snap)
            run.diagnostics.append(snap.record)
            run.isotropy.append(snap.isotropy)
            run.window_of_record.append(win)
        if not snaps:
            break
        prof = average_profiles([sn.profile for sn in snaps])
        run.window_profiles.append(prof)
        run.window_bounds.append((start, tau))
        if win == 0:
            run.first_window = [sn.ensemble for sn in snaps]
        run.last_window = [sn.ensemble for sn in snaps]
        if settings.keep_all_snapshots:
            run.all_windows.append(run.last_window)
        if prev is not None:
            run.distances.append(weighted_l1(prof, prev))
        prev = prof
        if (
            len(run.window_profiles) >= settings.min_windows
            and len(run.distances) >= settings.W
            and all(x < settings.tol for x in run.distances[-settings.W:])
        ):
            run.stationary = True
            break
    run.final_profile = run.window_profiles[-1] if run.window_profiles else None
    run.final_ensemble = ParticleEnsemble(v, w) if v.shape[0] >= 2 else None
    return run


def _renormalize(v, w, settings, rng, run):
    ens, _ = normalize(ParticleEnsemble(v, w))
    N0 = ens.count
    ens = resample(ens, settings.N_target, rng, settings.resample_mode, settings.jitter)
    run.clones += max(settings.N_target - N0, 0)
    ens, _ = normalize(ens)
    return np.array(ens.velocities), ens.weight
