"""Angular spectral constants and admissibility thresholds for ``alpha``."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .core import ModelParams


THRESHOLD_TOL = 1e-12


def _angular_weight_norm(d: int) -> float:
    """``|S^{d-2}| / |S^{d-1}|``: the density of ``t = cos(theta)`` for uniform sigma."""
    return math.exp(gammaln(d / 2) - gammaln((d - 1) / 2)) / math.sqrt(math.pi)


def _quad(f, a, b, tol=1e-12):
    val, err = integrate.quad(f, a, b, epsabs=tol * 1e-2, epsrel=tol, limit=200)
    if err > 10 * tol * max(1.0, abs(val)):
        raise ArithmeticError(f"quadrature did not converge (err={err:.3g})")
    return val


def rho_k(k: float, params: ModelParams) -> float:
    """Angular constant ``int [((1+t)/2)^k + ((1-t)/2)^k] b dsigma``.

    For the constant law this is a one-dimensional integral in ``t`` with
    weight ``(1 - t^2)^((d-3)/2)``, evaluated by adaptive Gauss-Kronrod
    quadrature.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    params.angular.check_normalized()
    d = params.d
    c = _angular_weight_norm(d) * params.angular.norm
    e = (d - 3) / 2.0
    if k == 0:
        return 2.0 * params.angular.norm
    # symmetric in t -> -t: integrate one branch and double it
    f = lambda t: ((1.0 + t) / 2.0) ** k * (1.0 - t * t) ** e
    if e < 0:
        # integrable endpoint singularity in d = 2: use the algebraic weight form
        val, err = integrate.quad(
            lambda t: ((1.0 + t) / 2.0) ** k, -1.0, 1.0, weight="alg", wvar=(e, e), epsabs=1e-14, epsrel=1e-12
        )
    else:
        val = _quad(f, -1.0, 1.0)
    return 2.0 * c * val


def rho_k_closed_form_d3(k: float) -> float:
    """``2 / (k + 1)``, valid for ``d = 3`` and the constant law."""
    return 2.0 / (k + 1.0)


def beta_k(k: float, alpha: float, params: ModelParams) -> float:
    return (1.0 - alpha) * rho_k(k, params)


def _require_hard(params: ModelParams) -> None:
    if params.gamma == 0:
        raise ValueError("Maxwellian case: thresholds not applicable, see maxwell module")
    if not 0 < params.gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")


def alpha0(params: ModelParams) -> float:
    """Upper limit on ``alpha`` for the uniform bound on ``M_{1+gamma/2}``."""
    _require_hard(params)
    k = 1.0 + params.gamma / 2.0
    r = rho_k(k, params)
    return (1.0 - r) / (k - r)


def j0_index(gamma: float) -> int:
    """Integer ``j0`` with ``j0*gamma/2 < 1 <= (j0+1)*gamma/2``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    x = 2.0 / gamma
    j = math.ceil(x - 1e-12) - 1
    # guard against rounding of 2/gamma near an integer
    while j * gamma / 2 >= 1 - 1e-12:
        j -= 1
    while (j + 1) * gamma / 2 < 1 - 1e-12:
        j += 1
    return max(j, 1)


def alpha_star(params: ModelParams) -> tuple[float, int, float]:
    """Threshold for lower-bound propagation, with ``j0`` and ``k0 = j0*gamma/2``."""
    _require_hard(params)
    j0 = j0_index(params.gamma)
    k0 = j0 * params.gamma / 2.0
    r = rho_k(k0, params)
    return (r - 1.0) / r, j0, k0


def p_star(alpha: float, d: int) -> float | None:
    """Largest admissible Lebesgue exponent; ``None`` when every ``p > 1`` works."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if alpha <= 1.0 / (d + 2):
        return None
    return alpha * d / (alpha * d + 2 * alpha - 1)


def eta_p(p: float, alpha: float, d: int) -> float:
    return p - 2 * alpha * p - alpha * d * (p - 1)


def kappa_bounds(alpha: float, params: ModelParams) -> list[float]:
    """Largest admissible ``kappa_1, ..., kappa_j0`` for lower-bound propagation.

    Computed top-down: ``kappa_j0`` from the energy ``d/2`` and each lower
    level from the one above it.
    """
    a_star, j0, _ = alpha_star(params)
    # the quadrature can overshoot the exact threshold by a few ulps
    if alpha >= a_star - THRESHOLD_TOL:
        raise ValueError("beta_{k0} <= 1: lower-bound propagation unavailable")
    g, d = params.gamma, params.d

    def ratio(j):
        b = beta_k(j * g / 2.0, alpha, params)
        return (b - 1.0) / (b + 1.0)

    kappas = [0.0] * (j0 + 1)
    kappas[j0] = ratio(j0) ** (j0 / (1.0 + j0)) * (d / 2.0) ** (j0 * g / 2.0)
    for j in range(j0 - 1, 0, -1):
        kappas[j] = (ratio(j) * kappas[j + 1]) ** (j / (1.0 + j))
    return kappas[1:]


def c_gamma(gamma: float) -> float:
    """``(x^2 + y^2)^(gamma/2) >= c * (x^gamma + y^gamma)``, sharp at ``x = y``."""
    return 2.0 ** (gamma / 2.0 - 1.0)


def kappa_gamma(gamma: float, n_grid: int = 200001, r_max: float = 1e6) -> float:
    """Grid infimum of ``(1 + r^gamma) / (1 + r^2)^(gamma/2)`` over ``r >= 0``."""
    r = np.concatenate([[0.0], np.geomspace(1e-8, r_max, n_grid)])
    vals = (1.0 + r**gamma) / (1.0 + r * r) ** (gamma / 2.0)
    return float(vals.min())


def lower_bound_factor(alpha: float, params: ModelParams) -> float:
    """Factor ``C_alpha`` with ``M_{gamma/2}(t) >= C_alpha * M_{gamma/2}(0)``.

    For ``gamma = 1`` this is ``sqrt((beta-1)/(beta+1))``; in general we take
    ``kappa_1 / (d/2)^(gamma/2)``, which coincides with it at ``gamma = 1``.
    """
    kap = kappa_bounds(alpha, params)
    return kap[0] / (params.d / 2.0) ** (params.gamma / 2.0)


def mu_alpha(alpha: float, params: ModelParams, M_gamma_half_initial: float) -> float:
    """Coercivity constant of the lower bound on ``int psi_* |xi - xi_*|^gamma``."""
    if not M_gamma_half_initial > 0:
        raise ValueError("M_gamma_half_initial must be positive")
    C = lower_bound_factor(alpha, params)
    g = params.gamma
    return c_gamma(g) * kappa_gamma(g) / 2.0 * min(1.0, C * M_gamma_half_initial)


@dataclass
class ThresholdReport:
    rho: dict[float, float]
    alpha0: float
    alpha_star: float
    alpha_bar: float
    alpha_underbar: float
    j0: int
    k0: float
    p_star: float | None
    c_gamma: float
    kappa_gamma: float
    params: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rho"] = {repr(float(k)): v for k, v in sorted(self.rho.items())}
        return out


def threshold_report(params: ModelParams, ks=(0.0, 0.5, 1.0, 1.5, 2.0, 3.0)) -> ThresholdReport:
    """All thresholds for ``params``; ``p_star`` is evaluated at ``params.alpha``."""
    a0 = alpha0(params)
    a_s, j0, k0 = alpha_star(params)
    a_bar = min(0.5, a_s)
    ks = sorted({*map(float, ks), k0, 1.0 + params.gamma / 2.0})
    a = params.alpha
    if a <= 1.0 / (params.d + 2):
        ps = None
    elif a < 1:
        ps = p_star(a, params.d)
    else:
        ps = params.d / (params.d + 1.0)
    return ThresholdReport(
        rho={k: rho_k(k, params) for k in ks},
        alpha0=a0,
        alpha_star=a_s,
        alpha_bar=a_bar,
        alpha_underbar=min(a0, a_bar),
        j0=j0,
        k0=k0,
        p_star=ps,
        c_gamma=c_gamma(params.gamma),
        kappa_gamma=kappa_gamma(params.gamma),
        params=params.to_dict(),
    )
