"""Direct simulation Monte Carlo for the homogeneous annihilation equation.

Pairs are selected with a Nanbu-Babovsky scheme: a binomial number of
disjoint candidate pairs is drawn per step, each is accepted with
probability ``rate / majorant``, and an accepted pair annihilates with
probability ``alpha`` or scatters elastically otherwise.

With per-particle weight ``w`` every unordered pair collides at rate
``w * |v_i - v_j|^gamma``, so the loss rate of particle ``i`` is the
empirical ``L(f)(v_i)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .collision import rate_majorant, relative_rate, sample_directions
from .core import (
    MajorantExceededError,
    ModelParams,
    MomentRecord,
    ParticleEnsemble,
    bulk_quantities,
    moment_record,
)


@dataclass(frozen=True)
class StepReport:
    dt: float
    attempted_pairs: int
    accepted_collisions: int
    annihilations: int
    majorant: float

    def __post_init__(self):
        if not (0 <= self.annihilations <= self.accepted_collisions <= self.attempted_pairs):
            raise ValueError("inconsistent step counts")


@dataclass(frozen=True)
class InitialSampler:
    """Initial velocity law.

    kind: ``maxwellian`` (temperature ``theta``), ``two_temperature``
    (fraction ``mix`` at ``theta``, the rest at ``theta2``), ``shell``
    (uniform on the sphere of radius ``radius``) or ``ball`` (uniform in the
    ball of radius ``radius``). ``drift`` shifts every velocity.
    """

    kind: str = "maxwellian"
    theta: float = 1.0
    theta2: float = 4.0
    mix: float = 0.5
    radius: float = 1.0
    drift: tuple | None = None

    KINDS = ("maxwellian", "two_temperature", "shell", "ball")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"sampler: unknown kind {self.kind!r}, expected one of {self.KINDS}")
        if not (self.theta > 0 and self.theta2 > 0 and self.radius > 0):
            raise ValueError("sampler: theta, theta2 and radius must be positive")
        if not 0 <= self.mix <= 1:
            raise ValueError("sampler: mix must lie in [0, 1]")

    def sample(self, rng: np.random.Generator, N: int, d: int) -> np.ndarray:
        if self.kind == "maxwellian":
            v = math.sqrt(self.theta) * rng.standard_normal((N, d))
        elif self.kind == "two_temperature":
            hot = rng.random(N) >= self.mix
            scale = np.where(hot, math.sqrt(self.theta2), math.sqrt(self.theta))
            v = scale[:, None] * rng.standard_normal((N, d))
        elif self.kind == "shell":
            v = self.radius * sample_directions(rng, N, d)
        else:
            r = self.radius * rng.random(N) ** (1.0 / d)
            v = r[:, None] * sample_directions(rng, N, d)
        if self.drift is not None:
            drift = np.asarray(self.drift, dtype=float)
            if drift.shape != (d,):
                raise ValueError("sampler: drift must have length d")
            v = v + drift
        return v

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "theta": self.theta,
            "theta2": self.theta2,
            "mix": self.mix,
            "radius": self.radius,
            "drift": None if self.drift is None else [float(x) for x in self.drift],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InitialSampler":
        data = dict(data)
        if data.get("drift") is not None:
            data["drift"] = tuple(float(x) for x in data["drift"])
        return cls(**data)


def initial_ensemble(sampler: InitialSampler, N: int, d: int, rng, mass: float = 1.0) -> ParticleEnsemble:
    if N < 2:
        raise ValueError(f"N: need at least 2 particles, got {N}")
    return ParticleEnsemble(sampler.sample(rng, N, d), mass / N)


def max_speed(velocities: np.ndarray) -> float:
    return math.sqrt(float(np.max(np.einsum("ij,ij->i", velocities, velocities))))


def stable_dt(ensemble: ParticleEnsemble, params: ModelParams, max_fraction: float = 0.1) -> float:
    """Largest step for which the expected fraction of particles in a candidate pair is ``max_fraction``."""
    N = ensemble.count
    if N < 2:
        raise ValueError("need at least 2 particles")
    maj = rate_majorant(max_speed(ensemble.velocities), params)
    return max_fraction / ((N - 1) * ensemble.weight * maj)


def _step_arrays(v: np.ndarray, w: float, dt: float, params: ModelParams, rng, majorant=None):
    """One collision step on a writable copy ``v``; returns (velocities, report)."""
    N, d = v.shape
    if N < 2:
        raise ValueError("collide_step needs N >= 2")
    if majorant is None:
        majorant = rate_majorant(max_speed(v), params)
    npairs = N // 2
    p = (N - 1) * w * majorant * dt * N / (2.0 * npairs)
    if p > 1.0:
        raise ValueError(f"dt too large: candidate-pair probability {p:.3g} > 1")
    m = int(rng.binomial(npairs, p))
    if m == 0:
        return v, StepReport(dt, 0, 0, 0, majorant)
    idx = rng.choice(N, 2 * m, replace=False)
    i, j = idx[:m], idx[m:]
    rate = relative_rate(v[i], v[j], params)
    rate = np.broadcast_to(rate, (m,))
    if np.any(rate > majorant * (1.0 + 1e-12)):
        worst = float(rate.max())
        raise MajorantExceededError(f"pair rate {worst:.6g} exceeds majorant {majorant:.6g}; majorant too small")
    accept = rng.random(m) * majorant < rate
    i, j = i[accept], j[accept]
    k = i.size
    if k == 0:
        return v, StepReport(dt, m, 0, 0, majorant)

    sigma = sample_directions(rng, k, d)
    rel = v[i] - v[j]
    if params.trunc_n is not None:
        # the angular cut acts as a null collision: the pair stays untouched
        rn = np.sqrt(np.einsum("ij,ij->i", rel, rel))
        cosang = np.abs(np.einsum("ij,ij->i", sigma, rel)) / np.where(rn > 0, rn, 1.0)
        keep = cosang <= 1.0 - 1.0 / params.trunc_n
        i, j, sigma, rel = i[keep], j[keep], sigma[keep], rel[keep]
        k = i.size
    annihilate = rng.random(k) < params.alpha
    s = ~annihilate
    if np.any(s):
        si, sj = i[s], j[s]
        center = 0.5 * (v[si] + v[sj])
        half = 0.5 * np.sqrt(np.einsum("ij,ij->i", rel[s], rel[s]))
        shift = half[:, None] * sigma[s]
        v[si] = center + shift
        v[sj] = center - shift
    n_ann = int(annihilate.sum())
    if n_ann:
        keep = np.ones(N, dtype=bool)
        keep[i[annihilate]] = False
        keep[j[annihilate]] = False
        v = v[keep]
    return v, StepReport(dt, m, k, n_ann, majorant)


def collide_step(ensemble: ParticleEnsemble, dt: float, params: ModelParams, rng):
    """Advance the ensemble by one step of length ``dt``."""
    if ensemble.count < 2:
        raise ValueError("collide_step needs N >= 2")
    if not dt > 0:
        raise ValueError("dt must be positive")
    v, rep = _step_arrays(np.array(ensemble.velocities), ensemble.weight, dt, params, rng)
    return ensemble.with_velocities(v), rep


@dataclass
class EventCounts:
    steps: int = 0
    attempted: int = 0
    accepted: int = 0
    annihilations: int = 0

    def add(self, rep: StepReport) -> None:
        self.steps += 1
        self.attempted += rep.attempted_pairs
        self.accepted += rep.accepted_collisions
        self.annihilations += rep.annihilations

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "attempted": self.attempted,
            "accepted": self.accepted,
            "annihilations": self.annihilations,
        }


def advance(ensemble: ParticleEnsemble, duration: float, params: ModelParams, rng,
            max_fraction: float = 0.1, counts: EventCounts | None = None):
    """Run steps until ``duration`` has elapsed or fewer than two particles remain.

    Returns ``(ensemble, elapsed, counts)``.
    """
    counts = EventCounts() if counts is None else counts
    v = np.array(ensemble.velocities)
    w = ensemble.weight
    t = 0.0
    while t < duration and v.shape[0] >= 2:
        maj = rate_majorant(max_speed(v), params)
        dt = max_fraction / ((v.shape[0] - 1) * w * maj)
        if duration - t <= dt:
            dt = duration - t
            t = duration
        else:
            t += dt
        v, rep = _step_arrays(v, w, dt, params, rng, majorant=maj)
        counts.add(rep)
    return ensemble.with_velocities(v), t, counts


@dataclass
class RunSettings:
    N: int = 100_000
    t_end: float = 1.0
    checkpoints: int = 10
    checkpoint_times: tuple | None = None
    sampler: InitialSampler = field(default_factory=InitialSampler)
    mass: float = 1.0
    max_fraction: float = 0.1
    moment_orders: tuple = (0.5, 1.0, 1.5, 2.0)

    def times(self) -> np.ndarray:
        if self.checkpoint_times is not None:
            ts = np.asarray(self.checkpoint_times, dtype=float)
        else:
            ts = np.linspace(0.0, self.t_end, self.checkpoints + 1)[1:]
        if ts.size == 0 or ts[0] <= 0 or np.any(np.diff(ts) <= 0):
            raise ValueError("checkpoint times must be positive and strictly increasing")
        return ts

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "t_end": self.t_end,
            "checkpoints": self.checkpoints,
            "checkpoint_times": None if self.checkpoint_times is None else list(self.checkpoint_times),
            "sampler": self.sampler.to_dict(),
            "mass": self.mass,
            "max_fraction": self.max_fraction,
            "moment_orders": list(self.moment_orders),
        }


@dataclass
class Trajectory:
    """Checkpoint series of a physical-frame run.

    ``bulk`` holds ``(n, u, Theta)``; ``bulk_se`` the matching standard
    errors of ``u`` and ``Theta`` (the density itself is exact).
    """

    params: ModelParams
    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    bulk: list = field(default_factory=list)
    bulk_se: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    events: list = field(default_factory=list)
    extinct: bool = False
    final: ParticleEnsemble | None = None

    def append(self, t: float, ens: ParticleEnsemble, orders, counts: EventCounts) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("checkpoint times must be strictly increasing")
        n, u, theta = bulk_quantities(ens)
        c = ens.velocities - u
        N = ens.count
        if N > 1:
            u_se = c.std(axis=0, ddof=1) / math.sqrt(N)
            th_se = float(np.einsum("ij,ij->i", c, c).std(ddof=1)) / (ens.d * math.sqrt(N))
        else:
            u_se, th_se = np.zeros(ens.d), 0.0
        self.times.append(float(t))
        self.records.append(moment_record(ens, t, orders))
        self.bulk.append((n, u, theta))
        self.bulk_se.append((0.0, u_se, th_se))
        self.counts.append(N)
        self.energies.append(ens.energy())
        self.events.append(counts.to_dict())

    def density(self) -> np.ndarray:
        return np.array([b[0] for b in self.bulk])

    def to_rows(self) -> list[dict]:
        rows = []
        for t, rec, (n, u, th), (_, use, thse), N, E, ev in zip(
            self.times, self.records, self.bulk, self.bulk_se, self.counts, self.energies, self.events
        ):
            row = {"t": t, "N": N, "n": n, "E": E}
            for a, (x, s) in enumerate(zip(u, use)):
                row[f"u{a}"] = float(x)
                row[f"u{a}_se"] = float(s)
            row["theta"] = th
            row["theta_se"] = thse
            for k in sorted(rec.M):
                val, se = rec.M[k]
                row[f"M_{k:g}"] = val
                row[f"M_{k:g}_se"] = se
            row.update(ev)
            rows.append(row)
        return rows


def run_physical(settings: RunSettings, params: ModelParams, rng, initial: ParticleEnsemble | None = None) -> Trajectory:
    """Simulate from ``t = 0`` through every checkpoint, stopping early on extinction."""
    ens = initial if initial is not None else initial_ensemble(settings.sampler, settings.N, params.d, rng, settings.mass)
    if ens.d != params.d:
        raise ValueError("initial ensemble dimension does not match params.d")
    traj = Trajectory(params=params)
    counts = EventCounts()
    traj.append(0.0, ens, settings.moment_orders, counts)
    t = 0.0
    for tc in settings.times():
        ens, elapsed, counts = advance(ens, tc - t, params, rng, settings.max_fraction, counts)
        if ens.count < 2 and elapsed < tc - t:
            traj.extinct = True
            if ens.count > 0:
                traj.append(t + elapsed, ens, settings.moment_orders, counts)
            break
        t = tc
        traj.append(t, ens, settings.moment_orders, counts)
    traj.final = ens
    return traj


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    rows = traj.to_rows()
    if not rows:
        raise ValueError("empty trajectory")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        cols = list(rows[0])
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in cols])


def write_trajectory_jsonl(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        for r in traj.to_rows():
            fh.write(json.dumps(r, sort_keys=False) + "\n")


def read_records_jsonl(path) -> list[MomentRecord]:
    """Rebuild moment records from a trajectory JSONL file."""
    out = []
    with open(path) as fh:
        for line in fh:
            r = json.loads(line)
            M = {}
            for key, val in r.items():
                if key.startswith("M_") and not key.endswith("_se"):
                    M[float(key[2:])] = (float(val), float(r[key + "_se"]))
            out.append(MomentRecord(t=float(r["t"]), M=M))
    return out
