"""Domain types and ensemble statistics.

A particle ensemble is a set of ``N`` velocity samples in ``R^d`` that all
carry the same statistical weight, so that the represented density is
``f = weight * sum_i delta(v - v_i)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


class ExtinctionError(RuntimeError):
    """Raised when fewer than two particles remain."""


class MajorantExceededError(RuntimeError):
    """Raised when an accepted pair rate exceeds the step majorant."""


class NonConvergenceError(RuntimeError):
    """Raised when a driver fails to reach its stopping criterion."""


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class AngularLaw:
    """Angular part ``b(cos theta)`` of the collision kernel.

    Only the constant law is supported; ``norm`` is its integral over the
    sphere and must equal one.
    """

    kind: str = "constant"
    norm: float = 1.0

    def __post_init__(self):
        if self.kind != "constant":
            raise ValueError(f"angular: unsupported law {self.kind!r} (only 'constant')")
        if not (self.norm > 0 and math.isfinite(self.norm)):
            raise ValueError("angular: norm must be positive and finite")

    def check_normalized(self, tol: float = 1e-9) -> None:
        if abs(self.norm - 1.0) > tol:
            raise ValueError(f"angular law is not normalized: ||b||_1 = {self.norm!r} != 1")

    def density(self, d: int) -> float:
        """Constant value of b on the sphere."""
        return self.norm / sphere_area(d)


@dataclass(frozen=True)
class ModelParams:
    """Collision model: dimension, rate exponent, annihilation probability."""

    d: int = 3
    gamma: float = 1.0
    alpha: float = 0.0
    angular: AngularLaw = field(default_factory=AngularLaw)
    trunc_n: int | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d: dimension must be an integer >= 2, got {self.d!r}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma: must lie in [0, 1], got {self.gamma!r}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha: must lie in [0, 1], got {self.alpha!r}")
        if self.trunc_n is not None and (int(self.trunc_n) != self.trunc_n or self.trunc_n < 1):
            raise ValueError(f"trunc_n: must be a positive integer, got {self.trunc_n!r}")

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "d": int(self.d),
            "gamma": float(self.gamma),
            "alpha": float(self.alpha),
            "angular": {"kind": self.angular.kind, "norm": float(self.angular.norm)},
            "trunc_n": None if self.trunc_n is None else int(self.trunc_n),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        data = dict(data)
        ang = data.pop("angular", None)
        angular = AngularLaw(**ang) if isinstance(ang, dict) else (ang or AngularLaw())
        return cls(angular=angular, **data)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Equal-weight velocity samples.

    Parameters
    ----------
    velocities : ndarray, shape (N, d)
    weight : float
        Mass carried by each particle.
    """

    velocities: np.ndarray
    weight: float

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=float)
        if v.flags.writeable:
            # never freeze an array the caller may still be mutating
            v = v.copy()
        if v.ndim != 2:
            raise ValueError("velocities must be a 2-D array of shape (N, d)")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ValueError(f"weight must be positive and finite, got {self.weight!r}")
        v.setflags(write=False)
        object.__setattr__(self, "velocities", v)

    @property
    def count(self) -> int:
        return self.velocities.shape[0]

    @property
    def d(self) -> int:
        return self.velocities.shape[1]

    @property
    def mass(self) -> float:
        return self.weight * self.count

    def speeds(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.velocities, self.velocities))

    def energy(self) -> float:
        return self.weight * float(np.einsum("ij,ij->", self.velocities, self.velocities))

    def with_velocities(self, velocities, weight=None) -> "ParticleEnsemble":
        return ParticleEnsemble(velocities, self.weight if weight is None else weight)


def _require_nonempty(ensemble: ParticleEnsemble) -> None:
    if ensemble.count == 0:
        raise ValueError("empty ensemble")


def moment(ensemble: ParticleEnsemble, order: float) -> tuple[float, float]:
    """Return ``weight * sum |v_i|**order`` and its Monte Carlo standard error.

    ``order`` is the power of the speed, so the kinetic moment ``M_k`` is
    ``moment(ens, 2 * k)``.
    """
    _require_nonempty(ensemble)
    if order < 0:
        raise ValueError("order must be >= 0")
    if order == 0:
        return ensemble.mass, 0.0
    sq = np.einsum("ij,ij->i", ensemble.velocities, ensemble.velocities)
    x = sq if order == 2 else sq ** (order / 2.0)
    n = x.size
    value = ensemble.weight * float(x.sum())
    se = ensemble.weight * math.sqrt(n) * float(x.std(ddof=1)) if n > 1 else 0.0
    return value, se


def bulk_quantities(ensemble: ParticleEnsemble) -> tuple[float, np.ndarray, float]:
    """Number density, mean velocity and temperature ``Theta`` of the ensemble."""
    _require_nonempty(ensemble)
    v = ensemble.velocities
    n = ensemble.mass
    u = v.mean(axis=0)
    c = v - u
    theta = ensemble.weight * float(np.einsum("ij,ij->", c, c)) / (ensemble.d * n)
    return n, u, theta


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Shell-averaged density on radial bins.

    ``mass`` and ``energy`` cover the binned range only; the mass beyond the
    last edge is kept in ``overflow_mass``.
    """

    bin_edges: np.ndarray
    density: np.ndarray
    d: int
    density_se: np.ndarray | None = None
    overflow_mass: float = 0.0
    mass: float = field(default=float("nan"))
    energy: float = field(default=float("nan"))

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("bin_edges must hold at least two radii")
        if edges[0] != 0.0 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must start at 0 and be strictly increasing")
        if dens.shape != (edges.size - 1,):
            raise ValueError("density must have one entry per bin")
        if np.any(dens < 0):
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "density", dens)
        if self.density_se is not None:
            object.__setattr__(self, "density_se", np.asarray(self.density_se, dtype=float))
        vol = self.shell_volumes
        if math.isnan(self.mass):
            object.__setattr__(self, "mass", float(np.sum(dens * vol)))
        if math.isnan(self.energy):
            object.__setattr__(self, "energy", float(np.sum(dens * vol * self.midpoints**2)))

    @property
    def shell_volumes(self) -> np.ndarray:
        e = self.bin_edges
        return ball_volume(self.d) * (e[1:] ** self.d - e[:-1] ** self.d)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def theta(self) -> float:
        """Temperature implied by the binned mass and energy (zero mean velocity)."""
        return self.energy / (self.d * self.mass)

    def scaled(self, density) -> "RadialProfile":
        return RadialProfile(self.bin_edges, density, self.d)


def average_profiles(profiles) -> RadialProfile:
    """Bin-wise mean of profiles that share the same edges."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("no profiles to average")
    edges = profiles[0].bin_edges
    for p in profiles[1:]:
        if p.bin_edges.shape != edges.shape or np.any(p.bin_edges != edges):
            raise ValueError("profiles must share bin edges")
    dens = np.mean([p.density for p in profiles], axis=0)
    se = None
    if all(p.density_se is not None for p in profiles):
        # snapshots are correlated; keep the per-snapshot scale instead of shrinking it
        se = np.mean([p.density_se for p in profiles], axis=0)
    overflow = float(np.mean([p.overflow_mass for p in profiles]))
    return RadialProfile(edges, dens, profiles[0].d, density_se=se, overflow_mass=overflow)


def radial_histogram(
    ensemble: ParticleEnsemble,
    bins: int | np.ndarray = 40,
    r_max: float | None = None,
    overflow_warn: float = 1e-3,
) -> RadialProfile:
    """Histogram the speeds into shells and divide by the shell volumes.

    ``bins`` is either a bin count (uniform in radius on ``[0, r_max]``) or an
    explicit array of edges. When ``r_max`` is omitted the largest speed is
    used, so nothing overflows.
    """
    _require_nonempty(ensemble)
    speeds = ensemble.speeds()
    if np.ndim(bins) == 0:
        nb = int(bins)
        if nb < 1:
            raise ValueError("bins must be >= 1")
        if r_max is None:
            r_max = float(speeds.max()) * (1 + 1e-12) or 1.0
        if not r_max > 0:
            raise ValueError("nonpositive bin width")
        edges = np.linspace(0.0, r_max, nb + 1)
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("nonpositive bin width")
    counts = np.histogram(speeds, bins=edges)[0]
    # np.histogram closes the last bin on the right; keep the overflow tally half-open
    n_over = int(np.count_nonzero(speeds >= edges[-1]))
    if n_over:
        counts[-1] -= int(np.count_nonzero(speeds == edges[-1]))
    prof_vol = ball_volume(ensemble.d) * (edges[1:] ** ensemble.d - edges[:-1] ** ensemble.d)
    w = ensemble.weight
    density = w * counts / prof_vol
    se = w * np.sqrt(counts) / prof_vol
    overflow = w * n_over
    if overflow > overflow_warn * ensemble.mass:
        warnings.warn(
            f"radial_histogram: {overflow / ensemble.mass:.3%} of the mass lies beyond r_max={edges[-1]:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return RadialProfile(edges, density, ensemble.d, density_se=se, overflow_mass=overflow)


def lp_norm_estimate(profile: RadialProfile, p: float) -> float:
    """``(sum_b density_b**p * volume_b) ** (1/p)`` for a piecewise-constant profile."""
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p!r}")
    return float(np.sum(profile.density**p * profile.shell_volumes) ** (1.0 / p))


def gaussian_moment(order: float, d: int, theta: float = 1.0) -> float:
    """``E|X|**order`` for ``X ~ N(0, theta I_d)``."""
    return math.exp(
        0.5 * order * math.log(2 * theta) + gammaln((d + order) / 2) - gammaln(d / 2)
    )


@dataclass(frozen=True)
class ScalingState:
    n: float
    E: float
    beta: float
    lam: float
    vbar: float


@dataclass
class MomentRecord:
    """Moments ``M_k = int psi |xi|^{2k}`` keyed by ``k``, with loss-term integrals."""

    t: float
    M: dict[float, tuple[float, float]]
    a_psi: tuple[float, float] = (float("nan"), 0.0)
    b_psi: tuple[float, float] = (float("nan"), 0.0)
    A_psi: float = float("nan")
    B_psi: float = float("nan")

    def get(self, k: float) -> tuple[float, float]:
        for key, val in self.M.items():
            if abs(key - k) < 1e-9:
                return val
        raise KeyError(k)

    def has(self, k: float) -> bool:
        return any(abs(key - k) < 1e-9 for key in self.M)

    def value(self, k: float) -> float:
        return self.get(k)[0]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "M": {repr(float(k)): [v, s] for k, v, s in ((k, *self.M[k]) for k in sorted(self.M))},
            "a_psi": list(self.a_psi),
            "b_psi": list(self.b_psi),
            "A_psi": self.A_psi,
            "B_psi": self.B_psi,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MomentRecord":
        return cls(
            t=float(data["t"]),
            M={float(k): (float(v[0]), float(v[1])) for k, v in data["M"].items()},
            a_psi=tuple(float(x) for x in data.get("a_psi", (float("nan"), 0.0))),
            b_psi=tuple(float(x) for x in data.get("b_psi", (float("nan"), 0.0))),
            A_psi=float(data.get("A_psi", float("nan"))),
            B_psi=float(data.get("B_psi", float("nan"))),
        )


def moment_record(ensemble: ParticleEnsemble, t: float, orders) -> MomentRecord:
    """Collect ``M_k`` for each ``k`` in ``orders`` (always including 0 and 1)."""
    ks = sorted({0.0, 1.0, *map(float, orders)})
    return MomentRecord(t=float(t), M={k: moment(ensemble, 2 * k) for k in ks})
