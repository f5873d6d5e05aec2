"""Command-line drivers: constants, simulate, profile, verify, maxwell-oracle.

Every run writes ``manifest.json`` (full config, seed, version, wall time)
next to its data files. Data files depend only on the config and seed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import ExtinctionError, ModelParams, MomentRecord, NonConvergenceError, ParticleEnsemble, RadialProfile

MODES = ("constants", "simulate", "profile", "verify", "maxwell-oracle")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_EXTINCT = 3
EXIT_NONCONVERGED = 4
EXIT_CHECK_FAILED = 5
EXIT_IO = 6


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "constants"
    d: int = 3
    gamma: float = 1.0
    alpha: float = 0.0
    trunc_n: int | None = None
    angular_norm: float = 1.0
    N: int = 100_000
    seed: int = 0
    t_end: float = 1.0
    checkpoints: int = 10
    max_fraction: float = 0.1
    sampler: dict = field(default_factory=lambda: {"kind": "maxwellian", "theta": 1.0})
    moment_orders: list | None = None
    output_dir: str = "out"
    input_dir: str | None = None
    threads: int = 1
    deterministic: bool = False
    # profile driver
    window_tau: float | None = None
    snapshots_per_window: int = 8
    tol: float = 0.02
    W: int = 5
    min_windows: int = 8
    max_windows: int = 60
    bins: int = 16
    r_max: float = 4.8
    resample_mode: str = "antithetic"
    save_snapshots: bool = True
    # verification
    moment_k: float | None = None
    lp_p: float = 2.0
    probes: int = 100
    # maxwell oracle
    scaled_time: float = 3.0
    equivalence_scaled_time: float = 2.0
    equivalence_alpha: float = 0.2
    equivalence_N: int = 100_000
    null_runs: int = 8
    rel_tol: float = 0.01

    def params(self) -> ModelParams:
        return ModelParams.from_dict(
            {"d": self.d, "gamma": self.gamma, "alpha": self.alpha, "trunc_n": self.trunc_n,
             "angular": {"kind": "constant", "norm": self.angular_norm}}
        )

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got {self.mode!r}")
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.mode in ("simulate", "profile") and self.N < 2:
            raise ConfigError(f"N: need at least 2 particles, got {self.N}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        for name in ("t_end", "max_fraction", "tol", "r_max", "lp_p", "rel_tol", "scaled_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive")
        if self.max_fraction > 1:
            raise ConfigError("max_fraction: must not exceed 1")
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        if self.resample_mode not in ("clone", "antithetic"):
            raise ConfigError("resample_mode: must be 'clone' or 'antithetic'")
        if self.mode == "maxwell-oracle" and self.gamma != 0:
            raise ConfigError("gamma: maxwell-oracle requires gamma = 0")
        if self.mode == "verify" and not self.input_dir:
            raise ConfigError("input_dir: verify needs the output directory of a previous run")
        if not 0 < self.equivalence_alpha < 1:
            raise ConfigError("equivalence_alpha: must lie in (0, 1)")
        try:
            from .dsmc import InitialSampler

            InitialSampler.from_dict(self.sampler)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sampler: {exc}") from None
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**data)


# applied before the config file and flags
MODE_DEFAULTS = {
    "maxwell-oracle": {"gamma": 0.0, "alpha": 0.1, "N": 200_000, "max_fraction": 0.01,
                       "sampler": {"kind": "shell", "radius": 3**0.5}},
    "profile": {"alpha": 0.1, "sampler": {"kind": "shell", "radius": 1.5**0.5}},
}

_INT_FIELDS = {"d", "N", "seed", "checkpoints", "threads", "snapshots_per_window", "W", "min_windows",
               "max_windows", "bins", "probes", "equivalence_N", "null_runs"}


def _coerce(key: str, value):
    if key in _INT_FIELDS and isinstance(value, float) and value.is_integer():
        return int(value)
    if key == "trunc_n" and isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated config from an optional JSON file plus overrides (overrides win)."""
    given: dict = {}
    if path is not None:
        with open(path) as fh:
            given = json.load(fh)
        if not isinstance(given, dict):
            raise ConfigError("config file must hold a JSON object")
        if "config" in given and "tool_version" in given:
            given = given["config"]  # a manifest
    given.update(overrides or {})
    data = dict(MODE_DEFAULTS.get(given.get("mode", "constants"), {}))
    data.update(given)
    data = {k: _coerce(k, v) for k, v in data.items()}
    cfg = RunConfig.from_dict(data)
    if cfg.deterministic:
        cfg.threads = 1
    return cfg.validate()


# ------------------------------------------------------------------- writers


def _dump_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_csv(rows: list[dict], path: Path) -> None:
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_cell(r[c]) for c in cols])


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# ------------------------------------------------------------------- drivers


def _rng(cfg: RunConfig):
    return np.random.default_rng(np.random.SeedSequence(cfg.seed))


def _run_constants(cfg: RunConfig, out: Path) -> int:
    from .analysis import moment_bound
    from .constants import THRESHOLD_TOL, kappa_bounds, lower_bound_factor, threshold_report

    params = cfg.params()
    rep = threshold_report(params).to_dict()
    a = cfg.alpha
    if 0 < a < rep["alpha0"] - THRESHOLD_TOL:
        rep["moment_bound"] = moment_bound(a, params)
    if 0 < a < rep["alpha_star"] - THRESHOLD_TOL:
        rep["kappa"] = kappa_bounds(a, params)
        rep["C_alpha"] = lower_bound_factor(a, params)
    _dump_json(rep, out / "constants.json")
    return EXIT_OK


def _run_simulate(cfg: RunConfig, out: Path) -> int:
    from .dsmc import InitialSampler, RunSettings, run_physical, write_trajectory_csv, write_trajectory_jsonl

    params = cfg.params()
    settings = RunSettings(
        N=cfg.N, t_end=cfg.t_end, checkpoints=cfg.checkpoints, sampler=InitialSampler.from_dict(cfg.sampler),
        max_fraction=cfg.max_fraction,
        moment_orders=tuple(cfg.moment_orders) if cfg.moment_orders else (0.5, 1.0, 1.5, 2.0),
    )
    traj = run_physical(settings, params, _rng(cfg))
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_trajectory_jsonl(traj, out / "trajectory.jsonl")
    _dump_json({"extinct": traj.extinct, "final_count": traj.counts[-1], "checkpoints": len(traj.times)},
               out / "summary.json")
    if traj.extinct:
        raise ExtinctionError(f"ensemble extinct at t={traj.times[-1]:g}")
    return EXIT_OK


def _run_profile(cfg: RunConfig, out: Path) -> int:
    from .dsmc import InitialSampler
    from .selfsim import ProfileSettings, find_profile

    params = cfg.params()
    settings = ProfileSettings(
        N_target=cfg.N, sampler=InitialSampler.from_dict(cfg.sampler), window_tau=cfg.window_tau,
        snapshots_per_window=cfg.snapshots_per_window, tol=cfg.tol, W=cfg.W, min_windows=cfg.min_windows,
        max_windows=cfg.max_windows, bins=cfg.bins, r_max=cfg.r_max, max_fraction=cfg.max_fraction,
        resample_mode=cfg.resample_mode, moment_orders=tuple(cfg.moment_orders) if cfg.moment_orders else None,
    )
    run = find_profile(settings, params, _rng(cfg))
    write_profile_outputs(run, out, save_snapshots=cfg.save_snapshots)
    if not run.stationary:
        raise NonConvergenceError(f"no stationarity within {cfg.max_windows} windows")
    return EXIT_OK


def write_profile_outputs(run, out: Path, save_snapshots: bool = True) -> None:
    prof = run.final_profile
    e = prof.bin_edges
    se = prof.density_se if prof.density_se is not None else np.zeros_like(prof.density)
    _write_csv([{"bin_lo": e[b], "bin_hi": e[b + 1], "density": prof.density[b], "se": se[b]}
                for b in range(prof.density.size)], out / "profile.csv")
    with open(out / "diagnostics.jsonl", "w") as fh:
        for rec, iso, win in zip(run.diagnostics, run.isotropy, run.window_of_record):
            fh.write(json.dumps(_jsonable({"window": win, **rec.to_dict(), "isotropy": iso}), sort_keys=True) + "\n")
    _dump_json({
        "stationary": run.stationary,
        "distances": run.distances,
        "window_tau": run.window_tau,
        "windows": len(run.window_profiles),
        "window_bounds": run.window_bounds,
        "final_mass": prof.mass,
        "final_energy": prof.energy,
        "final_overflow": prof.overflow_mass,
        "clones": run.clones,
        "first_window_profile": run.window_profiles[0].density.tolist(),
    }, out / "windows.json")
    if save_snapshots:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)
        for tag, ensembles in (("first", run.first_window), ("last", run.last_window)):
            for k, ens in enumerate(ensembles):
                np.save(snap / f"{tag}_{k:02d}.npy", ens.velocities)


def _load_records(path: Path) -> tuple[list[MomentRecord], list[dict]]:
    recs, extra = [], []
    with open(path) as fh:
        for line in fh:
            row = json.loads(line)
            recs.append(MomentRecord.from_dict(row))
            extra.append(row)
    return recs, extra


def _load_profile(path: Path, d: int) -> RadialProfile:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    edges = [float(rows[0]["bin_lo"])] + [float(r["bin_hi"]) for r in rows]
    return RadialProfile(np.array(edges), np.array([float(r["density"]) for r in rows]), d,
                         density_se=np.array([float(r["se"]) for r in rows]))


def _run_verify(cfg: RunConfig, out: Path) -> int:
    from . import analysis

    params = cfg.params()
    src = Path(cfg.input_dir)
    reports = {}
    ok = True
    if (src / "diagnostics.jsonl").exists():
        recs, extra = _load_records(src / "diagnostics.jsonl")
        k = cfg.moment_k if cfg.moment_k is not None else 1 + params.gamma / 2
        mi = analysis.check_moment_inequality(recs, k, params.alpha, params)
        reports["moment_inequality"] = mi.to_dict()
        ok &= mi.pass_fraction >= 0.95
        if params.gamma > 0 and params.alpha < 1:
            from .constants import THRESHOLD_TOL, alpha0, alpha_star


            if params.alpha < alpha_star(params)[0] - THRESHOLD_TOL:
                lb = analysis.check_lower_bound(recs, params.alpha, params)
                reports["lower_bound"] = lb.to_dict()
                ok &= lb.violations == 0
            if params.alpha < alpha0(params) - THRESHOLD_TOL:
                mbar = analysis.moment_bound(params.alpha, params)
                kk = 1 + params.gamma / 2
                mb = analysis.InequalityReport("moment_bound")
                cap = max(recs[0].value(kk), mbar)
                for r in recs:
                    m, s = r.get(kk)
                    mb.add(m, cap, s, t=r.t)
                reports["moment_bound"] = {**mb.to_dict(), "Mbar": mbar}
                ok &= mb.violations == 0
        prof = _load_profile(src / "profile.csv", params.d)
        last = [r for r, e in zip(recs, extra) if e["window"] == extra[-1]["window"]]
        if 0 < params.alpha < 1:
            from .constants import p_star

            ps = p_star(params.alpha, params.d)
        else:
            ps = None
        if ps is None or cfg.lp_p < ps:
            lp = analysis.lp_pairing_check(prof, None, cfg.lp_p, params, a_psi=last[-1].a_psi)
            reports["lp_pairing"] = lp.to_dict()
            ok &= lp.violations == 0
        rng = _rng(cfg)
        probes = rng.uniform(0, prof.bin_edges[-1], cfg.probes)
        if params.gamma > 0:
            iso = analysis.isotropic_lemma_check(prof, params.gamma, probes)
            reports["isotropic_lemma"] = iso.to_dict()
            ok &= iso.violations == 0
        snap = src / "snapshots"
        if snap.exists():
            wins = [e["window"] for e in extra]
            wr = {}
            for tag, win in (("first", 0), ("last", wins[-1])):
                files = sorted(snap.glob(f"{tag}_*.npy"))
                recs_w = [r for r, w in zip(recs, wins) if w == win]
                if len(files) < 2 or len(recs_w) != len(files):
                    continue
                ens = []
                for f in files:
                    v = np.load(f)
                    ens.append(ParticleEnsemble(v, 1.0 / v.shape[0]))  # snapshots carry unit mass
                wr[tag] = analysis.weak_residual_report(ens, [r.A_psi for r in recs_w], [r.B_psi for r in recs_w],
                                                        params, rng=rng)
            if "first" in wr and "last" in wr:
                wr["ratio"] = wr["first"]["residual"] / max(wr["last"]["residual"], 1e-300)
                ok &= wr["ratio"] >= 5.0
            reports["weak_residual"] = wr
    elif (src / "trajectory.jsonl").exists():
        from .dsmc import read_records_jsonl

        recs = read_records_jsonl(src / "trajectory.jsonl")
        mono = analysis.InequalityReport("monotonicity")
        for a, b in zip(recs[:-1], recs[1:]):
            mono.add(b.value(0.0), a.value(0.0), 0.0, t=b.t, quantity="n")
            mono.add(b.value(1.0), a.value(1.0), 0.0, t=b.t, quantity="E")
        reports["monotonicity"] = mono.to_dict()
        ok &= params.alpha == 0 or mono.violations == 0
    else:
        raise FileNotFoundError(f"no diagnostics.jsonl or trajectory.jsonl in {src}")
    reports_dir = out / "reports"
    reports_dir.mkdir(exist_ok=True)
    for name, rep in reports.items():
        _dump_json(rep, reports_dir / f"{name}.json")
    _dump_json({"passed": bool(ok), "checks": sorted(reports)}, out / "verify_summary.json")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _run_maxwell(cfg: RunConfig, out: Path) -> int:
    from .dsmc import InitialSampler, RunSettings
    from .maxwell import EquivalenceSettings, density_oracle, equivalence_check

    params = cfg.params()
    if not 0 < params.alpha < 1:
        raise ConfigError("alpha: maxwell-oracle needs 0 < alpha < 1")
    streams = np.random.SeedSequence(cfg.seed).spawn(2)
    t_end = cfg.scaled_time / params.alpha  # unit initial density
    settings = RunSettings(N=cfg.N, t_end=t_end, checkpoints=cfg.checkpoints,
                           sampler=InitialSampler.from_dict(cfg.sampler), max_fraction=cfg.max_fraction)
    rep, _ = density_oracle(settings, params, np.random.default_rng(streams[0]), cfg.rel_tol)
    _write_csv(rep.rows, out / "maxwell_oracle.csv")
    eq_params = params.replace(alpha=cfg.equivalence_alpha)
    eq = equivalence_check(eq_params, EquivalenceSettings(N=cfg.equivalence_N, scaled_time=cfg.equivalence_scaled_time,
                                                          null_runs=cfg.null_runs),
                           np.random.default_rng(streams[1]), threads=cfg.threads)
    _dump_json({"density_oracle": rep.to_dict(), "equivalence": eq.to_dict(),
                "passed": bool(rep.passed and eq.passed)}, out / "equivalence_report.json")
    return EXIT_OK if rep.passed and eq.passed else EXIT_CHECK_FAILED


DRIVERS = {
    "constants": _run_constants,
    "simulate": _run_simulate,
    "profile": _run_profile,
    "verify": _run_verify,
    "maxwell-oracle": _run_maxwell,
}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    t0 = time.time()
    started = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(t0))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    status, err = EXIT_OK, None
    try:
        status = DRIVERS[cfg.mode](cfg, out)
    except ConfigError as exc:
        status, err = EXIT_CONFIG, exc
    except ExtinctionError as exc:
        status, err = EXIT_EXTINCT, exc
    except NonConvergenceError as exc:
        status, err = EXIT_NONCONVERGED, exc
    except OSError as exc:
        status, err = EXIT_IO, exc
    except ValueError as exc:
        status, err = EXIT_CONFIG, exc
    except Exception as exc:  # noqa: BLE001 - every failure gets a record
        status, err = EXIT_ERROR, exc
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "tool_version": __version__,
        "started_utc": started,
        "wall_time_s": round(time.time() - t0, 3),
        "exit_code": status,
    }
    _dump_json(manifest, out / "manifest.json")
    if err is not None:
        _dump_json({"exit_code": status, "error": type(err).__name__, "message": str(err), "mode": cfg.mode},
                   out / "failure.json")
        print(f"error ({type(err).__name__}): {err}", file=sys.stderr)
    return status


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ballistic-annihilation", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", help="JSON config file (a previous manifest.json also works)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", dest="output_dir")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--deterministic", action="store_true", default=None, help="single-threaded reference mode")
    ap.add_argument("--input", dest="input_dir", help="run directory to check (verify mode)")
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--d", type=int)
    ap.add_argument("--N", type=int)
    ap.add_argument("--t-end", dest="t_end", type=float)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config key; VALUE is parsed as JSON when possible")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"mode": args.mode}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        key, val = item.split("=", 1)
        overrides[key.strip()] = _parse_value(val)
    for key in ("seed", "output_dir", "threads", "deterministic", "input_dir", "alpha", "gamma", "d", "N", "t_end"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        out = Path(overrides.get("output_dir", "out"))
        try:
            out.mkdir(parents=True, exist_ok=True)
            _dump_json({"exit_code": EXIT_CONFIG, "error": "ConfigError", "message": str(exc)}, out / "failure.json")
        except OSError:
            pass
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
