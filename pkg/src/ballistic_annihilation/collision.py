"""Binary collision kinematics, rate kernel and scattering directions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelParams


@dataclass(frozen=True)
class CollisionOutcome:
    v_prime: np.ndarray | None
    v_star_prime: np.ndarray | None
    annihilated: bool


def post_collision(v, v_star, sigma, tol: float = 1e-12):
    """Elastic post-collision velocities for scattering direction ``sigma``.

    Works on single d-vectors or on stacked arrays of shape (m, d).
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    norm = np.sqrt(np.sum(sigma * sigma, axis=-1))
    if np.any(np.abs(norm - 1.0) > tol):
        raise ValueError("sigma must be a unit vector")
    center = 0.5 * (v + v_star)
    half = 0.5 * np.sqrt(np.sum((v - v_star) ** 2, axis=-1))
    shift = half[..., None] * sigma if sigma.ndim > 1 else half * sigma
    return center + shift, center - shift


def collide(v, v_star, sigma, annihilate: bool) -> CollisionOutcome:
    if annihilate:
        return CollisionOutcome(None, None, True)
    vp, vsp = post_collision(v, v_star, sigma)
    return CollisionOutcome(vp, vsp, False)


def relative_rate(v, v_star, params: ModelParams):
    """``|v - v_*|^gamma``, capped at ``trunc_n^gamma`` for the truncated kernel."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    if params.gamma == 0:
        shape = np.broadcast_shapes(v.shape, v_star.shape)[:-1]
        return 1.0 if shape == () else np.ones(shape)
    r = np.sqrt(np.sum((v - v_star) ** 2, axis=-1))
    if params.trunc_n is not None:
        r = np.minimum(r, float(params.trunc_n))
    return r**params.gamma


def rate_majorant(max_speed: float, params: ModelParams) -> float:
    """Upper bound of the pair rate over an ensemble with the given largest speed."""
    if params.gamma == 0:
        return 1.0
    r = 2.0 * max_speed
    if params.trunc_n is not None:
        r = min(r, float(params.trunc_n))
    return max(r, 1e-300) ** params.gamma


def sample_directions(rng: np.random.Generator, m: int, d: int) -> np.ndarray:
    """``m`` independent uniform points on S^{d-1} (normalized Gaussians)."""
    g = rng.standard_normal((m, d))
    nrm = np.sqrt(np.einsum("ij,ij->i", g, g))
    bad = nrm == 0
    while np.any(bad):
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        nrm = np.sqrt(np.einsum("ij,ij->i", g, g))
        bad = nrm == 0
    return g / nrm[:, None]


def sample_direction(rng: np.random.Generator, params: ModelParams, reference=None, size: int | None = None):
    """Uniform scattering direction(s).

    With ``trunc_n`` set and a ``reference`` direction (the relative
    velocity), directions with ``|sigma . u_hat| > 1 - 1/n`` are rejected and
    redrawn, giving the restricted law ``b_n``.
    """
    params.angular.check_normalized()
    if params.trunc_n == 1 and reference is not None:
        raise ValueError("trunc_n = 1 leaves no admissible scattering direction")
    d = params.d
    m = 1 if size is None else int(size)
    out = sample_directions(rng, m, d)
    if params.trunc_n is not None and reference is not None:
        ref = np.asarray(reference, dtype=float).reshape(-1, d)
        rn = np.sqrt(np.einsum("ij,ij->i", ref, ref))
        if np.any(rn == 0):
            raise ValueError("degenerate reference direction with truncation requested")
        uhat = np.broadcast_to(ref / rn[:, None], (m, d))
        cut = 1.0 - 1.0 / params.trunc_n
        bad = np.abs(np.einsum("ij,ij->i", out, uhat)) > cut
        while np.any(bad):
            out[bad] = sample_directions(rng, int(bad.sum()), d)
            bad = np.abs(np.einsum("ij,ij->i", out, uhat)) > cut
    return out[0] if size is None else out


def truncated_mass_fraction(params: ModelParams) -> float:
    """Fraction of uniform directions kept by the truncated law ``b_n``."""
    from scipy import integrate

    from .constants import _angular_weight_norm

    if params.trunc_n is None:
        return 1.0
    cut = 1.0 - 1.0 / params.trunc_n
    e = (params.d - 3) / 2.0
    val = integrate.quad(lambda t: (1 - t * t) ** e, -cut, cut, epsabs=1e-13, epsrel=1e-12)[0]
    return _angular_weight_norm(params.d) * val
