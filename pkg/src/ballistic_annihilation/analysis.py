"""Numerical checks of the moment, lower-bound and Lebesgue-norm inequalities.

Statistical checks compare ``lhs`` against ``rhs + 3 se``; the quadrature
checks on radial densities are exact statements and use ``se = 0`` with a
small absolute quadrature tolerance.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import binom

from .collision import sample_directions
from .constants import THRESHOLD_TOL, alpha0, alpha_star, beta_k, kappa_bounds, rho_k
from .core import ModelParams, MomentRecord, ParticleEnsemble, RadialProfile, sphere_area
from .selfsim import _pair_indices, default_pair_budget, estimate_ab


@dataclass
class InequalityReport:
    name: str
    checkpoints: int = 0
    violations: int = 0
    max_violation_sigma: float = 0.0
    details: list = field(default_factory=list)
    tolerance: float = 0.0

    def add(self, lhs: float, rhs: float, se: float = 0.0, **extra) -> bool:
        """Record one comparison of ``lhs <= rhs``; returns True when it is violated."""
        excess = lhs - rhs - self.tolerance
        violated = excess > 3.0 * se
        if se > 0:
            sig = excess / se
        else:
            sig = math.inf if excess > 0 else 0.0
        self.checkpoints += 1
        if violated:
            self.violations += 1
        if excess > 0:
            self.max_violation_sigma = max(self.max_violation_sigma, sig)
        self.details.append({"lhs": float(lhs), "rhs": float(rhs), "se": float(se), "violated": bool(violated), **extra})
        return violated

    @property
    def pass_fraction(self) -> float:
        return 1.0 - self.violations / self.checkpoints if self.checkpoints else float("nan")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass_fraction"] = self.pass_fraction
        if math.isinf(out["max_violation_sigma"]):
            out["max_violation_sigma"] = "inf"
        return out


# ---------------------------------------------------------------- Povzner bounds


def required_orders(k: float, params: ModelParams) -> list[float]:
    """Moment orders entering ``S_k`` and the rest of the moment inequality at ``k``."""
    g = params.gamma
    ks = {k, k + g / 2, g / 2, 1 + g / 2}
    for j in range(1, int(math.floor((k + 1) / 2)) + 1):
        ks |= {j + g / 2, k - j, j, k - j + g / 2}
    return sorted(round(x, 12) for x in ks)


def _M(record: MomentRecord, k: float) -> tuple[float, float]:
    if abs(k) < 1e-12:
        return record.get(0.0) if record.has(0.0) else (1.0, 0.0)
    return record.get(k)


def _check_orders(record: MomentRecord, ks) -> None:
    missing = [k for k in ks if abs(k) > 1e-12 and not record.has(k)]
    if missing:
        raise KeyError(f"missing moment order(s) M_k for k = {', '.join(f'{k:g}' for k in missing)}")


def povzner_S_k(record: MomentRecord, k: float, alpha: float, params: ModelParams, with_se: bool = False):
    """Lower-order moment combination bounding the collisional production of ``M_k``."""
    g = params.gamma
    ks = {k, g / 2}
    for j in range(1, int(math.floor((k + 1) / 2)) + 1):
        ks |= {j + g / 2, k - j, j, k - j + g / 2}
    _check_orders(record, sorted(ks))
    bk = beta_k(k, alpha, params)
    total, var = 0.0, 0.0
    for j in range(1, int(math.floor((k + 1) / 2)) + 1):
        c = float(binom(k, j))
        for p, q in ((j + g / 2, k - j), (j, k - j + g / 2)):
            (mp, sp), (mq, sq) = _M(record, p), _M(record, q)
            total += bk * c * mp * mq
            var += (bk * c) ** 2 * ((sp * mq) ** 2 + (mp * sq) ** 2)
    (mk, sk), (mg, sg) = _M(record, k), _M(record, g / 2)
    total += (1.0 - bk) * mk * mg
    var += (1.0 - bk) ** 2 * ((sk * mg) ** 2 + (mk * sg) ** 2)
    return (total, math.sqrt(var)) if with_se else total


def _records(trajectory) -> list[MomentRecord]:
    recs = getattr(trajectory, "records", None)
    if recs is None:
        recs = getattr(trajectory, "diagnostics", trajectory)
    return list(recs)


def check_moment_inequality(trajectory, k: float, alpha: float, params: ModelParams, spacing: int = 1) -> InequalityReport:
    """Check the differential moment inequality at every interior checkpoint.

    ``dM_k/dt`` is a centered difference over ``spacing`` records on each
    side. The trajectory must be in the normalized frame (unit mass, energy
    ``d/2``) with times in rescaled units.
    """
    recs = _records(trajectory)
    if len(recs) < 3:
        raise ValueError("need at least 3 checkpoints")
    if len(recs) < 2 * spacing + 1:
        raise ValueError("too few checkpoints for the requested spacing")
    g, d = params.gamma, params.d
    bk = beta_k(k, alpha, params)
    rep = InequalityReport(f"moment_inequality_k={k:g}")
    for n in range(spacing, len(recs) - spacing):
        lo, mid, hi = recs[n - spacing], recs[n], recs[n + spacing]
        _check_orders(mid, [k, k + g / 2, 1 + g / 2])
        h = hi.t - lo.t
        (m_hi, s_hi), (m_lo, s_lo) = hi.get(k), lo.get(k)
        deriv = (m_hi - m_lo) / h
        deriv_se = math.hypot(s_hi, s_lo) / h
        (mkg, skg) = mid.get(k + g / 2)
        lhs = deriv + (1 - bk) * mkg
        S, S_se = povzner_S_k(mid, k, alpha, params, with_se=True)
        (m1g, s1g), (mk, sk) = mid.get(1 + g / 2), mid.get(k)
        rhs = S + 2 * alpha * k / d * m1g * mk + alpha * k * (1 + d / 2) * mk
        se = math.sqrt(
            deriv_se**2 + ((1 - bk) * skg) ** 2 + S_se**2
            + (2 * alpha * k / d) ** 2 * ((s1g * mk) ** 2 + (m1g * sk) ** 2)
            + (alpha * k * (1 + d / 2) * sk) ** 2
        )
        rep.add(lhs, rhs, se, t=mid.t)
    return rep


def moment_bound_coefficients(alpha: float, params: ModelParams) -> tuple[float, float, float]:
    """Coefficients ``(c, C0, C1)`` of the Riccati bound on ``M_{1+gamma/2}``."""
    g, d = params.gamma, params.d
    k = 1 + g / 2
    r = rho_k(k, params)
    c = 1 - r + alpha * (r - k)
    if c <= THRESHOLD_TOL:
        raise ValueError("c_{alpha,1+gamma/2,d} <= 0")
    bk = (1 - alpha) * r
    low = 1 + d / 2  # bound on M_{gamma/2} and M_gamma
    # beta * binom(k, 1) * M_{k} M_{gamma/2}: linear in M_k
    # (1 - beta) * M_k M_{gamma/2}: linear in M_k
    # alpha * k * (1 + d/2) * M_k: linear in M_k
    C0 = (bk * k + (1 - bk)) * low + alpha * k * (1 + d / 2)
    # beta * binom(k, 1) * M_1 M_gamma with M_1 = d/2: constant
    C1 = bk * k * (d / 2) * low
    return c, C0, C1


def moment_bound(alpha: float, params: ModelParams) -> float:
    """Positive root ``Mbar`` of ``c (2/d) X^2 = C0 X + C1``."""
    if params.gamma == 0:
        raise ValueError("Maxwellian case: thresholds not applicable, see maxwell module")
    if alpha >= alpha0(params) - THRESHOLD_TOL:
        raise ValueError("c_{alpha,1+gamma/2,d} <= 0")
    c, C0, C1 = moment_bound_coefficients(alpha, params)
    q = c * 2 / params.d
    return (C0 + math.sqrt(C0 * C0 + 4 * q * C1)) / (2 * q)


def lower_bounds(record0: MomentRecord, alpha: float, params: ModelParams) -> dict[float, float]:
    """Lower bound for each propagated moment given the initial record."""
    g, d = params.gamma, params.d
    a_s, j0, _ = alpha_star(params)
    if alpha >= a_s - THRESHOLD_TOL:
        raise ValueError("alpha >= alpha_star: lower-bound propagation unavailable")
    if g == 1:
        b = beta_k(0.5, alpha, params)
        return {0.5: min(record0.value(0.5), math.sqrt((b - 1) / (b + 1) * record0.value(1.0)))}
    kap = kappa_bounds(alpha, params)
    return {j * g / 2: min(record0.value(j * g / 2), kap[j - 1]) for j in range(1, j0 + 1)}


def check_lower_bound(trajectory, alpha: float, params: ModelParams) -> InequalityReport:
    recs = _records(trajectory)
    if not recs:
        raise ValueError("empty trajectory")
    bounds = lower_bounds(recs[0], alpha, params)
    rep = InequalityReport("lower_bound")
    for rec in recs:
        for k, bound in bounds.items():
            m, s = rec.get(k)
            # lhs <= rhs form: bound <= M_k
            rep.add(bound, m, s, t=rec.t, k=k)
    return rep


# ------------------------------------------------------- radial quadrature tools

_GL_CACHE: dict = {}


def _gl_nodes(a: float, b: float, n: int = 24):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    x, w = _GL_CACHE[n]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def angular_average_power(r, s, gamma: float, d: int):
    """Average over the sphere of ``|x - y|^gamma`` with ``|x| = r``, ``|y| = s``."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if d == 3:
        rr, ss = np.broadcast_arrays(r, s)
        out = np.empty(rr.shape)
        small = (rr * ss) < 1e-12
        big = ~small
        p = gamma + 2.0
        out[big] = ((rr[big] + ss[big]) ** p - np.abs(rr[big] - ss[big]) ** p) / (2 * p * rr[big] * ss[big])
        out[small] = np.maximum(rr[small], ss[small]) ** gamma
        return out
    from scipy.special import hyp2f1

    # substituting t = 2x - 1 turns the average into a Gauss hypergeometric function
    rr, ss = np.broadcast_arrays(r, s)
    tot = rr + ss
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(tot > 0, 4 * rr * ss / np.where(tot > 0, tot, 1.0) ** 2, 0.0)
    return tot**gamma * hyp2f1(-gamma / 2, (d - 1) / 2, d - 1, np.minimum(z, 1.0))


def _radial_integral(profile: RadialProfile, kernel, splits=(), n: int = 24):
    """``sum_b rho_b * |S^{d-1}| * int_b s^{d-1} kernel(s) ds`` with the bins split at ``splits``."""
    d = profile.d
    S = sphere_area(d)
    total = 0.0
    edges = profile.bin_edges
    for b in range(edges.size - 1):
        if profile.density[b] == 0:
            continue
        lo, hi = edges[b], edges[b + 1]
        pts = [lo] + [x for x in splits if lo < x < hi] + [hi]
        acc = 0.0
        for a, c in zip(pts[:-1], pts[1:]):
            x, w = _gl_nodes(a, c, n)
            acc += float(np.sum(w * x ** (d - 1) * kernel(x)))
        total += profile.density[b] * S * acc
    return total


def loss_rate(profile: RadialProfile, r: float, gamma: float, n: int = 24) -> float:
    """``L(psi)(xi) = int psi(xi_*) |xi - xi_*|^gamma`` at ``|xi| = r`` for a radial profile."""
    d = profile.d
    return _radial_integral(profile, lambda s: angular_average_power(r, s, gamma, d), splits=(r,), n=n)


def isotropic_lemma_check(radial_density: RadialProfile, gamma: float, probe_xis, tol: float = 1e-8) -> InequalityReport:
    """Compare ``int f_* |xi - xi_*|^gamma`` with half of ``int f_* (|xi|^2 + |xi_*|^2)^(gamma/2)``."""
    rep = InequalityReport("isotropic_lemma", tolerance=tol)
    d = radial_density.d
    for xi in probe_xis:
        r = float(np.linalg.norm(np.atleast_1d(xi)))
        if not math.isfinite(r):
            raise ValueError("probe must be finite")
        lhs_int = loss_rate(radial_density, r, gamma)
        rhs_int = 0.5 * _radial_integral(radial_density, lambda s: (r * r + s * s) ** (gamma / 2))
        _verify_quadrature(radial_density, r, gamma, lhs_int, d)
        # inequality is rhs <= lhs
        rep.add(rhs_int, lhs_int, 0.0, r=r)
    return rep


def _verify_quadrature(profile, r, gamma, value, d, tol=1e-9):
    ref = loss_rate(profile, r, gamma, n=48)
    if abs(ref - value) > tol * max(1.0, abs(ref)):
        raise ArithmeticError(f"radial quadrature did not converge at r={r:g} (diff {abs(ref - value):.3g})")


def lp_norm_pow(profile: RadialProfile, p: float) -> float:
    return float(np.sum(profile.density**p * profile.shell_volumes))


def lp_loss_functional(profile: RadialProfile, p: float, gamma: float) -> float:
    """``int psi^p L(psi)`` for a piecewise-constant radial profile."""
    d = profile.d
    S = sphere_area(d)
    total = 0.0
    edges = profile.bin_edges
    for b in range(edges.size - 1):
        if profile.density[b] == 0:
            continue
        x, w = _gl_nodes(edges[b], edges[b + 1])
        vals = np.array([loss_rate(profile, xi, gamma) for xi in x])
        total += profile.density[b] ** p * S * float(np.sum(w * x ** (d - 1) * vals))
    return total


def lp_pairing_check(profile, ensemble, p: float, params: ModelParams, a_psi=None, rng=None) -> InequalityReport:
    """``a_psi * ||psi||_p^p <= 2 * int psi^p L(psi)`` at each checkpoint.

    ``profile`` and ``ensemble`` may be single objects or matched lists;
    ``a_psi`` may replace the ensembles with precomputed ``(value, se)``.
    """
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p!r}")
    if 0 < params.alpha < 1:
        from .constants import p_star

        ps = p_star(params.alpha, params.d)
        if ps is not None and p >= ps:
            raise ValueError(f"p must lie below p_star = {ps:g}")
    profiles = profile if isinstance(profile, (list, tuple)) else [profile]
    if a_psi is None:
        ens_list = ensemble if isinstance(ensemble, (list, tuple)) else [ensemble]
        if len(ens_list) != len(profiles):
            raise ValueError("profiles and ensembles must match")
        a_list = [estimate_ab(e, params, rng=rng)[0] for e in ens_list]
    else:
        a_list = a_psi if isinstance(a_psi, list) else [a_psi]
    rep = InequalityReport(f"lp_pairing_p={p:g}")
    for prof, (a, a_se) in zip(profiles, a_list):
        norm = lp_norm_pow(prof, p)
        Lp = lp_loss_functional(prof, p, params.gamma)
        lhs = a * norm
        rhs = 2 * Lp
        se = a_se * norm
        if prof.density_se is not None:
            # first-order propagation of the bin noise into both sides
            dn = p * prof.density ** (p - 1) * prof.shell_volumes * prof.density_se
            se = math.sqrt(se**2 + a**2 * float(np.sum(dn**2)) + 4 * (Lp / max(norm, 1e-300)) ** 2 * float(np.sum(dn**2)))
        rep.add(lhs, rhs, se)
    return rep


# -------------------------------------------------------------- weak residual


@dataclass(frozen=True)
class BumpFunction:
    """Smooth compactly supported radial bump ``exp(1 - 1/(1 - x^2))``, ``x = (|xi| - center)/width``."""

    center: float
    width: float

    def _x(self, r):
        return (r - self.center) / self.width

    def value(self, r):
        x = self._x(np.asarray(r, dtype=float))
        out = np.zeros_like(x)
        m = np.abs(x) < 1
        out[m] = np.exp(1.0 - 1.0 / (1.0 - x[m] ** 2))
        return out

    def radial_derivative(self, r):
        x = self._x(np.asarray(r, dtype=float))
        out = np.zeros_like(x)
        m = np.abs(x) < 1
        xm = x[m]
        out[m] = np.exp(1.0 - 1.0 / (1.0 - xm**2)) * (-2 * xm / (1 - xm**2) ** 2) / self.width
        return out


@dataclass(frozen=True)
class ConstantTest:
    """``rho == 1``: the mass-balance test function."""

    def value(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def radial_derivative(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))


def default_test_set() -> list:
    return [BumpFunction(c, 0.6) for c in (0.6, 1.0, 1.4, 1.9, 2.5)]


def _weak_terms(ens: ParticleEnsemble, A: float, B: float, params: ModelParams, tests, rng, pair_budget, groups: int):
    """Per test function: residual, standard error and a magnitude scale for one snapshot."""
    v = ens.velocities
    N, d = v.shape
    m0 = ens.mass
    r = np.sqrt(np.einsum("ij,ij->i", v, v))
    budget = default_pair_budget(N) if pair_budget is None else pair_budget
    i, j, _ = _pair_indices(N, budget, rng)
    vi, vj = v[i], v[j]
    rel = vi - vj
    g = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    phi = np.ones(i.size) if params.gamma == 0 else g**params.gamma
    sigma = sample_directions(rng, i.size, d)
    center = 0.5 * (vi + vj)
    shift = 0.5 * g[:, None] * sigma
    rp = np.sqrt(np.einsum("ij,ij->i", center + shift, center + shift))
    rsp = np.sqrt(np.einsum("ij,ij->i", center - shift, center - shift))
    label = rng.integers(0, groups, N)
    gl = label[i]
    out = []
    for test in tests:
        f = test.value(r)
        df = r * test.radial_derivative(r)
        gain = 0.5 * (1 - params.alpha) * phi * (test.value(rp) + test.value(rsp))
        loss = 0.5 * phi * (f[i] + f[j])
        T1 = (A - d * B) * m0 * f
        T2 = B * m0 * df
        R_g = np.empty(groups)
        for k in range(groups):
            pm = label == k
            qm = gl == k
            R_g[k] = (T1[pm].mean() - T2[pm].mean()) - m0 * m0 * (gain[qm].mean() - loss[qm].mean())
        R = (T1.mean() - T2.mean()) - m0 * m0 * (gain.mean() - loss.mean())
        scale = abs(T1.mean()) + abs(T2.mean()) + m0 * m0 * (abs(gain.mean()) + abs(loss.mean()))
        se = float(R_g.std(ddof=1)) / math.sqrt(groups)
        out.append((R, se, scale))
    return out


def weak_residual_report(window_ensembles, A_psi, B_psi, params: ModelParams, test_set=None, rng=None,
                         pair_budget: int | None = None, groups: int = 10) -> dict:
    """Stationary weak-form residual averaged over a window of snapshots.

    For each test function ``rho`` the residual is
    ``(A - d B) <rho> - B <xi . grad rho> - int B(psi, psi) rho``, which
    vanishes for a stationary profile. ``A_psi``/``B_psi`` are scalars or one
    value per snapshot.
    """
    ens_list = list(window_ensembles)
    if len(ens_list) < 2:
        raise ValueError("insufficient snapshots: need at least 2")
    tests = default_test_set() if test_set is None else list(test_set)
    rng = np.random.default_rng(0) if rng is None else rng
    As = np.broadcast_to(np.asarray(A_psi, dtype=float), (len(ens_list),))
    Bs = np.broadcast_to(np.asarray(B_psi, dtype=float), (len(ens_list),))
    per = [_weak_terms(e, a, b, params, tests, rng, pair_budget, groups) for e, a, b in zip(ens_list, As, Bs)]
    rows = []
    for t in range(len(tests)):
        R = float(np.mean([p[t][0] for p in per]))
        se = float(np.mean([p[t][1] for p in per]))
        scale = float(np.mean([p[t][2] for p in per]))
        rows.append({"residual": R, "se": se, "scale": scale, "normalized": abs(R) / scale if scale > 0 else 0.0,
                     "normalized_se": se / scale if scale > 0 else 0.0, "z": abs(R) / se if se > 0 else math.inf})
    worst = max(range(len(rows)), key=lambda t: rows[t]["normalized"])
    return {
        "residual": rows[worst]["normalized"],
        "residual_se": rows[worst]["normalized_se"],
        "max_z": max(r["z"] for r in rows),
        "tests": rows,
    }


def weak_residual(window_ensembles, A_psi, B_psi, params: ModelParams, test_set=None, rng=None, pair_budget=None) -> float:
    """Largest normalized stationary weak-form residual over the test set."""
    return weak_residual_report(window_ensembles, A_psi, B_psi, params, test_set, rng, pair_budget)["residual"]
