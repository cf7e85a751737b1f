"""Command line front end for the simulation and sampling experiments.

Every subcommand reads one INI config, resolves it against the defaults
below (unknown sections or keys are hard errors), and writes its outputs
into the configured directory together with ``manifest.json`` echoing the
resolved configuration and its sha256 hash.  All randomness derives from
the single configured seed, workers are only ever mapped over independent
seed-indexed tasks in submission order, and manifests carry no timestamps,
so a rerun with the same config and seed is byte-identical and the thread
count cannot change any result.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .diagnostics import (_LLN_KINDS, commutator_defect, difference_norms, energy_en,
                          fit_rate, lln_estimator, write_csv)
from .dynamics import (HlsmState, MeanFieldState, run_trajectory, step_linear_ensemble,
                       step_renormalized_wave)
from .gibbs import (GibbsSamplerConfig, coupled_gibbs_gaussian_pair,
                    gibbs_vs_gaussian_covariance, invariance_check, sample_gibbs)
from .grid import (ComponentEnsemble, GridSpec, SpectralField, load_field, rms,
                   save_field, sobolev_norm)
from .noise import NoiseKind, NoiseStream, RenormConstants, alpha_m, sample_mu1_mu0_pair

THREADS_ENV = "SIGMA_WAVE_THREADS"

# Resolved-config schema: every key, its type, and its default.  The help
# epilog and the coercion table are generated from this single source.
DEFAULTS = {
    "grid": {"n_grid": 32, "m": 1.0},
    "truncation": {"M": 4},
    "dynamics": {"N": 4, "R": 8, "dt": 0.01, "T": 1.0, "stride": 10,
                 "dealias": True, "data": "zero", "data_file": ""},
    "gibbs": {"h": 0.3, "chain": 2000, "burnin": 500, "thin": 10},
    "experiment": {"N_list": [4, 8, 16], "reps": 4, "s": 0.9, "eps": 0.1, "seed": 0},
    "output": {"dir": "out", "formats": ["csv"]},
}

_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}


class ConfigError(ValueError):
    """Configuration problem the user must fix; reported without a traceback."""


def _coerce(section: str, key: str, text: str, default):
    where = f"[{section}] {key}"
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in _BOOL_WORDS:
                raise ValueError(f"{where}: not a boolean: {text!r}")
            return _BOOL_WORDS[text.lower()]
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            items = [p.strip() for p in text.split(",") if p.strip()]
            if default and isinstance(default[0], int):
                return [int(p) for p in items]
            return items
        return text
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from None


def load_config(path=None) -> dict:
    """Defaults overlaid with the INI file; unknown keys are hard errors."""
    cfg = {section: dict(keys) for section, keys in DEFAULTS.items()}
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except configparser.Error as err:
        raise ConfigError(f"malformed config {path}: {err}") from None
    for section in parser.sections():
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}]")
        for key, text in parser[section].items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown config key [{section}] {key}")
            cfg[section][key] = _coerce(section, key, text, DEFAULTS[section][key])
    return cfg


def _validate(cfg: dict) -> None:
    g, d, gb, ex = cfg["grid"], cfg["dynamics"], cfg["gibbs"], cfg["experiment"]
    if g["n_grid"] < 2 or g["n_grid"] % 2:
        raise ConfigError(f"[grid] n_grid must be even and >= 2, got {g['n_grid']}")
    if g["m"] <= 0:
        raise ConfigError(f"[grid] m must be positive, got {g['m']}")
    if cfg["truncation"]["M"] < 0:
        raise ConfigError(f"[truncation] M must be >= 0, got {cfg['truncation']['M']}")
    if d["N"] < 1 or d["R"] < 1:
        raise ConfigError("[dynamics] N and R must be >= 1")
    if d["dt"] <= 0 or d["T"] < d["dt"]:
        raise ConfigError(f"[dynamics] need 0 < dt <= T, got dt={d['dt']}, T={d['T']}")
    if d["stride"] < 1:
        raise ConfigError(f"[dynamics] stride must be >= 1, got {d['stride']}")
    if d["data"] not in ("zero", "gaussian", "file"):
        raise ConfigError(f"[dynamics] data must be zero, gaussian or file, got {d['data']!r}")
    if d["data"] == "file" and not d["data_file"]:
        raise ConfigError("[dynamics] data = file requires data_file")
    if gb["h"] <= 0 or gb["chain"] < 1 or gb["thin"] < 1:
        raise ConfigError("[gibbs] need h > 0, chain >= 1, thin >= 1")
    if not 0 <= gb["burnin"] < gb["chain"]:
        raise ConfigError(f"[gibbs] need 0 <= burnin < chain, got {gb['burnin']}")
    if not ex["N_list"]:
        raise ConfigError("[experiment] N_list must not be empty")
    if any(n < 1 for n in ex["N_list"]):
        raise ConfigError(f"[experiment] N_list entries must be >= 1: {ex['N_list']}")
    if ex["reps"] < 1:
        raise ConfigError(f"[experiment] reps must be >= 1, got {ex['reps']}")
    if not 0 <= ex["seed"] < 2**64:
        raise ConfigError(f"[experiment] seed must fit in 64 bits, got {ex['seed']}")
    bad = [f for f in cfg["output"]["formats"] if f not in ("csv", "fields")]
    if bad:
        raise ConfigError(f"[output] unknown formats {bad}; choose from csv, fields")


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON form; any key flip changes the digest."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: dict) -> None:
    manifest = {"command": command, "version": __version__,
                "config": cfg, "config_hash": config_hash(cfg)}
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def thread_map(fn, items, threads: int) -> list:
    """Order-preserving map over independent tasks.

    Each task owns its seeds, the reduction follows submission order, and
    nothing is shared between workers, so the result is the same for any
    thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _steps_and_stride(d: dict):
    n_steps = int(round(d["T"] / d["dt"]))
    if abs(n_steps * d["dt"] - d["T"]) > 1e-9 * max(1.0, d["T"]):
        raise ConfigError(f"[dynamics] dt {d['dt']} does not divide T {d['T']}")
    if n_steps % d["stride"]:
        raise ConfigError(f"[dynamics] stride {d['stride']} does not divide {n_steps} steps")
    return n_steps, d["stride"]


def _require_exact_ball(cfg: dict, command: str) -> None:
    # sharp-cutoff products are grid-exact only below this line
    n_grid, M = cfg["grid"]["n_grid"], cfg["truncation"]["M"]
    if n_grid <= 4 * M:
        raise ConfigError(f"{command} needs n_grid > 4*M for exact truncated "
                          f"products; got n_grid = {n_grid}, M = {M}")


def _stationary_psi(spec: GridSpec, n: int, M: int, seed: int) -> ComponentEnsemble:
    pairs = [sample_mu1_mu0_pair(spec, M, NoiseStream(seed, j, NoiseKind.INITIAL))
             for j in range(n)]
    return ComponentEnsemble.from_components(pairs)


def _ensemble_from_files(spec: GridSpec, n: int, directory: str) -> ComponentEnsemble:
    root = Path(directory)
    states = []
    for j in range(n):
        pos_path = root / f"field_u{j:03d}.sgwv"
        vel_path = root / f"field_du{j:03d}.sgwv"
        if not pos_path.exists() or not vel_path.exists():
            raise ConfigError(f"data_file {directory}: missing snapshots for component {j}")
        pos = load_field(pos_path, spec.m)
        vel = load_field(vel_path, spec.m)
        if pos.spec.n_grid != spec.n_grid:
            raise ConfigError(f"{pos_path}: snapshot grid {pos.spec.n_grid} != "
                              f"configured {spec.n_grid}")
        states.append(SimpleNamespace(spec=spec, pos=pos, vel=vel))
    pos = np.stack([s.pos.coeffs for s in states])
    vel = np.stack([s.vel.coeffs for s in states])
    return ComponentEnsemble(spec, pos, vel, copy=False)


def _write_field_snapshots(out_dir: Path, ens: ComponentEnsemble) -> None:
    for j in range(len(ens)):
        state = ens[j]
        save_field(state.pos, out_dir / f"field_u{j:03d}.sgwv")
        save_field(state.vel, out_dir / f"field_du{j:03d}.sgwv")


def _component_norms(coeffs: np.ndarray, spec: GridSpec, s: float) -> float:
    vals = [sobolev_norm(SpectralField(spec, coeffs[j], copy=False), s)
            for j in range(coeffs.shape[0])]
    return float(rms(np.asarray(vals)))


def _run_observables(m: float):
    def u1_wick_int(state):
        c = state.renorm.sigma_at(state.step)
        u = state.combined()
        ug = np.fft.ifft2(u.pos[0], norm="forward").real
        return float(np.mean(ug * ug) - c)

    return {
        "v_h1": lambda st: _component_norms(st.v.pos, st.v.spec, 1.0),
        "vdot_l2": lambda st: _component_norms(st.v.vel, st.v.spec, 0.0),
        "u1_wick_int": u1_wick_int,
        "energy_en": lambda st: energy_en(st.combined(), m),
    }


def _simulate(cfg: dict, out_dir: Path, meanfield: bool) -> None:
    g, d = cfg["grid"], cfg["dynamics"]
    spec = GridSpec(g["n_grid"], g["m"])
    M, seed = cfg["truncation"]["M"], cfg["experiment"]["seed"]
    n_steps, stride = _steps_and_stride(d)
    n = d["R"] if meanfield else d["N"]
    rc = RenormConstants.build(g["m"], M, d["dt"], n_steps)
    if d["data"] == "gaussian":
        # stationary convolution: the Wick constant sits at its equilibrium
        rc = replace(rc, sigma=np.full(n_steps + 1, rc.alpha))
    cls = MeanFieldState if meanfield else HlsmState
    state = cls.zero(spec, n, rc, seed, d["dealias"])
    if d["data"] == "gaussian":
        state = replace(state, psi=_stationary_psi(spec, n, M, seed))
    elif d["data"] == "file":
        state = replace(state, v=_ensemble_from_files(spec, n, d["data_file"]))
    record = run_trajectory(state, d["dt"], n_steps, stride,
                            observables=_run_observables(g["m"]),
                            keep_states="fields" in cfg["output"]["formats"])
    record.to_csv(out_dir / "trajectory.csv")
    print(f"wrote {out_dir / 'trajectory.csv'} ({len(record.times)} nodes)")
    if "fields" in cfg["output"]["formats"]:
        _write_field_snapshots(out_dir, record.states[-1].combined())
        print(f"wrote {2 * n} field snapshots to {out_dir}")


def cmd_renorm_table(cfg: dict, out_dir: Path, threads: int) -> None:
    g, d = cfg["grid"], cfg["dynamics"]
    n_steps, _ = _steps_and_stride(d)
    rc = RenormConstants.build(g["m"], cfg["truncation"]["M"], d["dt"], n_steps)
    rc.to_csv(out_dir / "renorm.csv")
    print(f"wrote {out_dir / 'renorm.csv'}: sigma_M(T) = {rc.sigma[-1]:.6g}, "
          f"alpha_M = {rc.alpha:.6g}")


def cmd_simulate_hlsm(cfg: dict, out_dir: Path, threads: int) -> None:
    _simulate(cfg, out_dir, meanfield=False)


def cmd_simulate_meanfield(cfg: dict, out_dir: Path, threads: int) -> None:
    _simulate(cfg, out_dir, meanfield=True)


def _coupled_difference(spec: GridSpec, n: int, M: int, gb: dict, dyn: dict,
                        s: float, root: int) -> float:
    """C_T script-H^s distance of one coupled (interacting, free) run, component 1."""
    cfgg = GibbsSamplerConfig(n, M, spec.m, gb["h"], gb["chain"], gb["burnin"],
                              thin=gb["thin"], acceptance_band=(0.0, 1.0))
    gibbs, gauss = coupled_gibbs_gaussian_pair(spec, cfgg, root)
    streams = tuple(NoiseStream(root, j, NoiseKind.DRIVE) for j in range(n))
    alpha = alpha_m(spec.m, M)
    n_steps, stride = _steps_and_stride(dyn)
    times, states_n, states_l = [0.0], [gibbs], [gauss]
    a, b = gibbs, gauss
    for k in range(n_steps):
        a = step_renormalized_wave(a, streams, k, dyn["dt"], alpha, float(M))
        b = step_linear_ensemble(b, streams, k, dyn["dt"], float(M))
        if (k + 1) % stride == 0:
            times.append((k + 1) * dyn["dt"])
            states_n.append(a)
            states_l.append(b)
    traj_n = SimpleNamespace(times=np.asarray(times), states=states_n)
    traj_l = SimpleNamespace(times=np.asarray(times), states=states_l)
    norm_j, _ = difference_norms(traj_n, traj_l, s, 0)
    return norm_j


def cmd_convergence_rate(cfg: dict, out_dir: Path, threads: int) -> None:
    _require_exact_ball(cfg, "convergence-rate")
    g, ex = cfg["grid"], cfg["experiment"]
    spec = GridSpec(g["n_grid"], g["m"])
    M = cfg["truncation"]["M"]
    reps, seed = ex["reps"], ex["seed"]

    def one(task):
        n, rep = task
        return _coupled_difference(spec, n, M, cfg["gibbs"], cfg["dynamics"],
                                   ex["s"], seed + 7919 * rep)

    tasks = [(n, rep) for n in ex["N_list"] for rep in range(reps)]
    norms = np.asarray(thread_map(one, tasks, threads)).reshape(len(ex["N_list"]), reps)
    rows = [{"N": int(n), "mean_norm": float(np.mean(norms[i])),
             "se": float(np.std(norms[i], ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0}
            for i, n in enumerate(ex["N_list"])]
    write_csv(out_dir / "convergence.csv", "N,mean_norm,se", rows)
    print(f"wrote {out_dir / 'convergence.csv'}")
    if len(rows) >= 3:
        fit = fit_rate(rows)
        write_csv(out_dir / "fit.csv", "x,y", list(zip(fit.x, fit.y)))
        print(f"rate = {fit.slope:.4f} +/- {fit.slope_se:.4f}")


def cmd_lln_decay(cfg: dict, out_dir: Path, threads: int) -> None:
    g, ex, d = cfg["grid"], cfg["experiment"], cfg["dynamics"]
    spec = GridSpec(g["n_grid"], g["m"])
    for kind in _LLN_KINDS:
        rows = lln_estimator(spec, kind, ex["N_list"], cfg["truncation"]["M"],
                             d["T"], ex["reps"], ex["eps"], ex["seed"], dt=d["dt"])
        write_csv(out_dir / f"lln_{kind}.csv", "N,mean_norm,se", rows)
        line = f"wrote {out_dir / f'lln_{kind}.csv'}"
        if len(rows) >= 3:
            fit = fit_rate(rows)
            write_csv(out_dir / f"fit_{kind}.csv", "x,y", list(zip(fit.x, fit.y)))
            line += f": rate = {fit.slope:.4f} +/- {fit.slope_se:.4f}"
        print(line)


def _gibbs_config(cfg: dict) -> GibbsSamplerConfig:
    g, gb = cfg["grid"], cfg["gibbs"]
    return GibbsSamplerConfig(cfg["dynamics"]["N"], cfg["truncation"]["M"], g["m"],
                              gb["h"], gb["chain"], gb["burnin"], thin=gb["thin"])


def cmd_sample_gibbs(cfg: dict, out_dir: Path, threads: int) -> None:
    _require_exact_ball(cfg, "sample-gibbs")
    spec = GridSpec(cfg["grid"]["n_grid"], cfg["grid"]["m"])
    samples = sample_gibbs(spec, _gibbs_config(cfg), cfg["experiment"]["seed"])
    write_csv(out_dir / "gibbs_chain.csv", "iter,wick_square_int",
              [(i, v) for i, v in enumerate(samples.series)])
    M = cfg["truncation"]["M"]
    modes = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]
    rows = []
    for mode in modes:
        if mode[0] ** 2 + mode[1] ** 2 > M * M:
            continue
        r = gibbs_vs_gaussian_covariance(samples, 0, mode)
        rows.append({"n1": r["mode"][0], "n2": r["mode"][1], "variance": r["variance"],
                     "se": r["se"], "gaussian_variance": r["gaussian_variance"]})
    write_csv(out_dir / "gibbs_modes.csv", "n1,n2,variance,se,gaussian_variance", rows)
    write_csv(out_dir / "gibbs_stats.csv", "accept_rate,iact,n_samples",
              [(samples.accept_rate, samples.iact, len(samples))])
    print(f"wrote gibbs_chain.csv, gibbs_modes.csv, gibbs_stats.csv to {out_dir}; "
          f"acceptance = {samples.accept_rate:.3f}, iact = {samples.iact:.1f}")
    if "fields" in cfg["output"]["formats"]:
        _write_field_snapshots(out_dir, samples.ensemble(len(samples) - 1))
        print(f"wrote final-sample field snapshots to {out_dir}")


def cmd_invariance_check(cfg: dict, out_dir: Path, threads: int) -> None:
    _require_exact_ball(cfg, "invariance-check")
    spec = GridSpec(cfg["grid"]["n_grid"], cfg["grid"]["m"])
    d = cfg["dynamics"]
    report = invariance_check(spec, _gibbs_config(cfg), cfg["experiment"]["seed"],
                              d["T"], d["dt"])
    report.to_csv(out_dir / "invariance.csv")
    worst = min(row["p_value"] for row in report.rows)
    print(f"wrote {out_dir / 'invariance.csv'}; smallest KS p-value = {worst:.4f}")


def cmd_commutator(cfg: dict, out_dir: Path, threads: int) -> None:
    g, ex = cfg["grid"], cfg["experiment"]
    spec = GridSpec(g["n_grid"], g["m"])
    rows = commutator_defect(spec, ex["s"], ex["N_list"], ex["reps"], ex["seed"],
                             float(cfg["truncation"]["M"]))
    write_csv(out_dir / "commutator.csv", "M,defect_max", rows)
    line = f"wrote {out_dir / 'commutator.csv'}"
    if len(rows) >= 3:
        fit = fit_rate(rows)
        write_csv(out_dir / "fit.csv", "x,y", list(zip(fit.x, fit.y)))
        line += f": rate = {fit.slope:.4f} +/- {fit.slope_se:.4f}"
    print(line)


COMMANDS = {
    "renorm-table": (cmd_renorm_table, "tabulate sigma_M(t) and alpha_M on the step grid"),
    "simulate-hlsm": (cmd_simulate_hlsm, "integrate the N-component system from configured data"),
    "simulate-meanfield": (cmd_simulate_meanfield, "integrate the limiting replica system"),
    "convergence-rate": (cmd_convergence_rate, "coupled N-vs-limit distance over N_list with a rate fit"),
    "lln-decay": (cmd_lln_decay, "averaged Wick estimator norms over N_list with rate fits"),
    "sample-gibbs": (cmd_sample_gibbs, "MALA chain for the truncated Gibbs ensemble"),
    "invariance-check": (cmd_invariance_check, "evolve Gibbs samples and compare observable laws"),
    "commutator": (cmd_commutator, "smoothing-operator commutator defect over a threshold sweep"),
}


def _epilog() -> str:
    lines = ["configuration keys (INI file, all optional):"]
    for section, keys in DEFAULTS.items():
        parts = []
        for key, default in keys.items():
            if isinstance(default, bool):
                kind, shown = "bool", str(default).lower()
            elif isinstance(default, int):
                kind, shown = "int", str(default)
            elif isinstance(default, float):
                kind, shown = "float", str(default)
            elif isinstance(default, list):
                kind = "list"
                shown = ",".join(str(v) for v in default) or "(empty)"
            else:
                kind, shown = "str", default or "(empty)"
            parts.append(f"{key} ({kind}, default {shown})")
        lines.append(f"  [{section}]  " + "; ".join(parts))
    lines.append(f"threads come from --threads or ${THREADS_ENV}; results do not depend on them")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigma-wave",
        description="stochastic damped wave experiments on the 2D torus",
        epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, epilog=_epilog(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="PATH", help="INI config file")
        p.add_argument("--seed", type=int, metavar="U64",
                       help="overrides [experiment] seed")
        p.add_argument("--out", metavar="DIR", help="overrides [output] dir")
        p.add_argument("--threads", type=int, metavar="K",
                       help=f"worker threads (default ${THREADS_ENV} or 1)")
    return parser


def _resolve_threads(flag) -> int:
    if flag is None:
        text = os.environ.get(THREADS_ENV, "1")
        try:
            flag = int(text)
        except ValueError:
            raise ConfigError(f"${THREADS_ENV} must be an integer, got {text!r}") from None
    if flag < 1:
        raise ConfigError(f"thread count must be >= 1, got {flag}")
    return flag


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["experiment"]["seed"] = args.seed
        if args.out is not None:
            cfg["output"]["dir"] = args.out
        _validate(cfg)
        threads = _resolve_threads(args.threads)
        out_dir = Path(cfg["output"]["dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(out_dir, args.command, cfg)
        COMMANDS[args.command][0](cfg, out_dir, threads)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
