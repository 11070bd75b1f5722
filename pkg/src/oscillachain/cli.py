"""Command-line front end.

One subcommand per analysis (equilibria, simulate, orbit, branch, region,
basin, validate), JSON config files with flag overrides, and CSV/JSON
outputs in the shared dialect.  Exit codes: 0 success, 1 domain failure,
2 usage error.
"""
from __future__ import annotations

import argparse
import datetime
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .basin import DELTA_RANGE, STOP_WINDOW, TRAP_RADIUS, run_experiment
from .continuation import (continue_branch, export_branch_csv,
                           export_region_csv, trace_region, _seed_orbit_at_k)
from .equilibria import enumerate_equilibria, lyapunov_E, lyapunov_rate
from .errors import NoConvergence, OscillaChainError
from .model import (Parameters, c_eigenvalues_closed_form, coupling_matrix,
                    coupling_matrix_determinant, vector_field)
from .numerics import IntegratorOptions, eigenvalues, spectrum_distance
from .orbits import find_orbit, guess_from_simulation, orbit_from_json, \
    export_orbit_json
from .serialize import read_json, write_json, write_sidecar
from .simulate import WindingVector, export_trajectory_csv, simulate

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flags or config; maps to exit code 2."""


# config schema: section -> key -> type coercion; unknown keys rejected
_SCHEMA: dict[str, dict[str, type]] = {
    "model": {"N": int, "k": float, "delta": float, "gamma": str,
              "omega_mode": object},
    "tolerances": {"rtol": float, "atol": float, "orbit_tol": float},
    "seeds": {"seed": int},
    "output": {"out": str},
}


def _defaults() -> dict:
    return {
        "model": {"N": None, "k": None, "delta": None, "gamma": "sin",
                  "omega_mode": "travelling_wave"},
        "tolerances": {"rtol": 1e-9, "atol": 1e-9, "orbit_tol": 1e-9},
        "seeds": {"seed": None},
        "output": {"out": None},
    }


def _load_config(path: str | None) -> dict:
    cfg = _defaults()
    if path is None:
        return cfg
    try:
        raw = read_json(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config root must be a JSON object")
    for section, values in raw.items():
        if section not in _SCHEMA:
            raise UsageError(f"unknown config section {section!r}; "
                             f"known: {sorted(_SCHEMA)}")
        if not isinstance(values, dict):
            raise UsageError(f"config section {section!r} must be an object")
        for key, value in values.items():
            if key not in _SCHEMA[section]:
                raise UsageError(
                    f"unknown key {section}.{key}; "
                    f"known: {sorted(_SCHEMA[section])}")
            want = _SCHEMA[section][key]
            if want is not object and value is not None:
                try:
                    value = want(value)
                except (TypeError, ValueError) as exc:
                    raise UsageError(
                        f"config {section}.{key} is not {want.__name__}: "
                        f"{value!r}") from exc
            cfg[section][key] = value
    return cfg


def _apply_flags(cfg: dict, args: argparse.Namespace) -> dict:
    """Flag values override config-file values override defaults."""
    pairs = (("model", "N", "n"), ("model", "k", "k"),
             ("model", "delta", "delta"),
             ("tolerances", "rtol", "rtol"), ("tolerances", "atol", "atol"),
             ("tolerances", "orbit_tol", "orbit_tol"),
             ("seeds", "seed", "seed"), ("output", "out", "out"))
    for section, key, attr in pairs:
        value = getattr(args, attr, None)
        if value is not None:
            cfg[section][key] = value
    if cfg["seeds"]["seed"] is None:
        env = os.environ.get("OSCILLACHAIN_SEED")
        cfg["seeds"]["seed"] = int(env) if env else 0
    return cfg


def _require(cfg: dict, *keys: str) -> list:
    out = []
    for dotted in keys:
        section, key = dotted.split(".")
        value = cfg[section][key]
        if value is None:
            flag = "--n" if key == "N" else f"--{key.replace('_', '-')}"
            raise UsageError(f"{dotted} is required (flag {flag} "
                             "or config file)")
        out.append(value)
    return out


def _params_from(cfg: dict) -> Parameters:
    N, k, delta = _require(cfg, "model.N", "model.k", "model.delta")
    if cfg["model"]["gamma"] != "sin":
        raise UsageError(f"unsupported coupling {cfg['model']['gamma']!r}; "
                         "only 'sin' is available")
    mode = cfg["model"]["omega_mode"]
    if mode == "travelling_wave":
        return Parameters.travelling_wave(N, k, delta)
    if isinstance(mode, (list, tuple)):
        return Parameters(N=N, k=k, delta=delta,
                          omega=np.asarray(mode, dtype=float))
    raise UsageError("model.omega_mode must be 'travelling_wave' or an "
                     f"explicit frequency vector, got {mode!r}")


def _metadata(cfg: dict, args: argparse.Namespace, command: str) -> dict:
    meta = {"command": command, "version": __version__,
            "config": {k: dict(v) for k, v in cfg.items()}}
    if not args.deterministic:
        meta["timestamp"] = datetime.datetime.now(
            datetime.timezone.utc).isoformat()
    return meta


def _parse_vector(text: str, name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"{name} must be comma-separated numbers, "
                         f"got {text!r}") from exc


def _integrator_opts(cfg: dict) -> IntegratorOptions:
    return IntegratorOptions(abs_tol=cfg["tolerances"]["atol"],
                             rel_tol=cfg["tolerances"]["rtol"])


# ---------------------------------------------------------------- commands

def _cmd_equilibria(cfg: dict, args: argparse.Namespace) -> int:
    p = _params_from(cfg)
    (out,) = _require(cfg, "output.out")
    eqs = enumerate_equilibria(p)
    records = []
    for eq in eqs:
        rec = {
            "pattern": "".join(str(b) for b in eq.pattern),
            "point": [float(v) for v in eq.point],
            "spectrum": [{"re": float(v.real), "im": float(v.imag)}
                         for v in eq.spectrum],
        }
        if eq.indices is not None:
            rec.update(nu0=eq.indices.nu0, nu_pi=eq.indices.nu_pi,
                       nu_u=eq.indices.nu_u, nu_s=eq.indices.nu_s,
                       stable=eq.indices.nu_u == 0)
        else:
            rec.update(nu0=None, nu_pi=None, nu_u=None, nu_s=None,
                       stable=None)
        records.append(rec)
    write_json(out, {"N": p.N, "k": p.k, "delta": p.delta,
                     "equilibria": records,
                     "metadata": _metadata(cfg, args, "equilibria")})
    print(f"wrote {len(records)} equilibria to {out}")
    return 0


def _cmd_simulate(cfg: dict, args: argparse.Namespace) -> int:
    p = _params_from(cfg)
    (out,) = _require(cfg, "output.out")
    if args.x0 is not None:
        x0 = _parse_vector(args.x0, "--x0")
        if x0.size != p.N:
            raise UsageError(f"--x0 has {x0.size} components, expected {p.N}")
    else:
        rng = np.random.default_rng(cfg["seeds"]["seed"])
        x0 = rng.uniform(0.0, 2.0 * math.pi, p.N)
    traj = simulate(x0, p, args.t_end, opts=_integrator_opts(cfg),
                    dt_sample=args.dt_sample)
    export_trajectory_csv(traj, p, out)
    meta = _metadata(cfg, args, "simulate")
    meta["x0"] = [float(v) for v in x0]
    meta["t_end"] = args.t_end
    write_sidecar(out, meta)
    print(f"wrote {traj.times.size} samples to {out}")
    return 0


def _find_orbit_for_cli(cfg: dict, args: argparse.Namespace,
                        p: Parameters) -> object:
    tol = cfg["tolerances"]["orbit_tol"]
    if args.anchor is not None:
        if args.period is None or args.winding is None:
            raise UsageError("--anchor needs --period and --winding")
        anchor = _parse_vector(args.anchor, "--anchor")
        w = WindingVector(tuple(int(v) for v in args.winding.split(",")))
        return find_orbit((anchor, args.period), w, p, m=args.m, tol=tol)
    # no explicit guess: harvest one from a settled random simulation
    rng = np.random.default_rng(cfg["seeds"]["seed"])
    last: Exception = NoConvergence("no attempts made")
    for _ in range(args.attempts):
        x0 = rng.uniform(0.0, 2.0 * math.pi, p.N)
        try:
            traj = simulate(x0, p, args.t_end, dt_sample=0.25)
            anchor, period, w = guess_from_simulation(traj, p, args.t_settle)
            return find_orbit((anchor, period), w, p, m=args.m, tol=tol)
        except OscillaChainError as exc:
            last = exc
    raise NoConvergence(f"no rotating orbit found in {args.attempts} "
                        f"simulation attempts: {last}")


def _cmd_orbit(cfg: dict, args: argparse.Namespace) -> int:
    p = _params_from(cfg)
    (out,) = _require(cfg, "output.out")
    orbit = _find_orbit_for_cli(cfg, args, p)
    export_orbit_json(orbit, p, out, metadata=_metadata(cfg, args, "orbit"))
    print(f"orbit converged: T={orbit.period:.6g}, winding "
          f"{tuple(orbit.winding.w)}, residual {orbit.residual:.3g}; "
          f"wrote {out}")
    return 0


def _cmd_branch(cfg: dict, args: argparse.Namespace) -> int:
    (out,) = _require(cfg, "output.out")
    which = args.param
    if args.range is not None:
        lo, hi = (float(v) for v in args.range.split(","))
    else:
        lo, hi = ((0.02, math.pi - 0.02) if which == "delta"
                  else (-0.99, 3.0))
    tol = cfg["tolerances"]["orbit_tol"]

    if args.seed_orbit is not None:
        payload = read_json(args.seed_orbit)
        orbit, fields = orbit_from_json(payload)
        p = Parameters.travelling_wave(fields["N"], fields["k"],
                                       fields["delta"])
        orbit = find_orbit((orbit.anchor, orbit.period), orbit.winding, p,
                           m=4, tol=tol)
    else:
        N, k = _require(cfg, "model.N", "model.k")
        if which == "k" or cfg["model"]["delta"] is not None:
            (delta,) = _require(cfg, "model.delta")
            deltas = np.array([delta])
        else:
            # sweep downward: stable rotating waves sit under the upper
            # existence boundary, and points above it fail fast
            top = min(hi, math.pi - 0.02)
            deltas = np.arange(top, max(lo, 0.02), -0.025)
        seeded = _seed_orbit_at_k(N, k, deltas, tol=tol)
        if seeded is None:
            raise NoConvergence(
                f"no rotating orbit found at k={k} over the seed sweep")
        orbit, p = seeded

    branch = continue_branch(orbit, p, which, (lo, hi), h0=args.h0, tol=tol,
                             max_points=args.max_points)
    export_branch_csv(branch, out)
    meta = _metadata(cfg, args, "branch")
    meta["parameter"] = which
    meta["range"] = [lo, hi]
    meta["statuses"] = list(branch.statuses)
    meta["events"] = [{"kind": ev.kind, "param": ev.param}
                      for ev in branch.events]
    write_sidecar(out, meta)
    print(f"branch: {len(branch.points)} points, "
          f"{len(branch.events)} events "
          f"({', '.join(ev.kind for ev in branch.events) or 'none'}); "
          f"wrote {out}")
    return 0


def _cmd_region(cfg: dict, args: argparse.Namespace) -> int:
    (N,) = _require(cfg, "model.N")
    (out,) = _require(cfg, "output.out")
    grid = np.linspace(args.k_min, args.k_max, args.k_points)
    region = trace_region(N, grid,
                          delta_range=(args.delta_min, args.delta_max),
                          tol=cfg["tolerances"]["orbit_tol"],
                          seeding=args.seeding)
    export_region_csv(region, out)
    meta = _metadata(cfg, args, "region")
    meta["k_grid"] = [float(k) for k in grid]
    meta["empty_k"] = [float(k) for k in region.empty_k]
    write_sidecar(out, meta)
    nonempty = len(grid) - len(region.empty_k)
    print(f"region: {nonempty}/{len(grid)} grid points nonempty, "
          f"{len(region.all_events)} boundary events; wrote {out}")
    return 0


def _cmd_basin(cfg: dict, args: argparse.Namespace) -> int:
    (out,) = _require(cfg, "output.out")
    n_values = [int(v) for v in args.n_values.split(",")]
    delta_range = ((0.0, 0.0) if args.delta_zero
                   else DELTA_RANGE)
    summary = run_experiment(n_values, args.trials, args.n_ic,
                             cfg["seeds"]["seed"], radius=args.radius,
                             window=args.window, delta_range=delta_range)
    payload = summary.as_dict()
    payload["metadata"] = _metadata(cfg, args, "basin")
    write_json(out, payload)
    for stats in summary.per_n:
        print(f"N={stats.N}: mean untrapped {stats.mean:.4f} "
              f"[q25 {stats.q25:.4f}, q75 {stats.q75:.4f}]")
    print(f"wrote {out}")
    return 0


def _cmd_validate(cfg: dict, args: argparse.Namespace) -> int:
    seed = cfg["seeds"]["seed"]
    failures = 0

    def report(name: str, ok: bool, detail: str, t0: float) -> None:
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name} ({time.perf_counter() - t0:.2f}s)"
              + ("" if ok else f": {detail}"))
        failures += 0 if ok else 1

    # index identities on a random parameter sample
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bad = ""
    for _ in range(20):
        N = int(rng.integers(2, 5))
        k = float(rng.uniform(-0.9, 3.0))
        delta = float(rng.uniform(0.05, 1.5))
        p = Parameters.travelling_wave(N, k, delta)
        for eq in enumerate_equilibria(p):
            idx = eq.indices
            if idx is None or idx.nu0 != idx.nu_s or idx.nu_pi != idx.nu_u:
                bad = (f"N={N} k={k:.4f} delta={delta:.4f} "
                       f"pattern={eq.pattern}")
                break
        if bad:
            break
    report("index-identities", not bad, bad, t0)

    # energy rate matches the chain-rule derivative along the field
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(200):
        N = int(rng.integers(2, 5))
        p = Parameters.travelling_wave(N, float(rng.uniform(-0.9, 2.0)),
                                       float(rng.uniform(0.05, 1.5)))
        x = rng.uniform(0.0, 2.0 * math.pi, N)
        h = 1e-6
        f = vector_field(x, p)
        num = (lyapunov_E(x + h * f, p) - lyapunov_E(x - h * f, p)) / (2 * h)
        worst = max(worst, abs(lyapunov_rate(x, p) - num))
    report("energy-rate", worst < 1e-6, f"max deviation {worst:.3e}", t0)

    # closed-form coupling-matrix oracles
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for _ in range(30):
        N = int(rng.integers(2, 9))
        k = float(rng.uniform(-2.0, 3.0))
        C = coupling_matrix(N, k)
        det_ref = coupling_matrix_determinant(N, k)
        det_err = abs(np.linalg.det(C) - det_ref) / max(1.0, abs(det_ref))
        spec_err = spectrum_distance(c_eigenvalues_closed_form(N, k),
                                     eigenvalues(C))
        worst = max(worst, det_err, spec_err)
    report("coupling-oracles", worst < 1e-8, f"max deviation {worst:.3e}",
           t0)

    print(f"{3 - failures}/3 suites passed")
    return 1 if failures else 0


# ------------------------------------------------------------------ parser

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int,
                     help="RNG seed (default: OSCILLACHAIN_SEED or 0)")
    sub.add_argument("--deterministic", action="store_true",
                     help="omit the timestamp from output metadata")
    sub.add_argument("--jobs", type=int, default=1,
                     help="worker budget (current build runs serially)")
    sub.add_argument("--out", help="output file path")
    sub.add_argument("--rtol", type=float, help="integrator relative tol")
    sub.add_argument("--atol", type=float, help="integrator absolute tol")
    sub.add_argument("--orbit-tol", dest="orbit_tol", type=float,
                     help="shooting residual tolerance")
    sub.add_argument("-v", "--verbose", action="store_true")


def _add_model(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--n", type=int, help="number of phase differences N")
    sub.add_argument("--k", type=float, help="coupling ratio")
    sub.add_argument("--delta", type=float, help="phase lag of the wave")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oscillachain",
        description="Rotating waves and synchronization in an "
                    "asymmetrically coupled oscillator chain")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    eq = subs.add_parser("equilibria",
                         help="enumerate and classify phase-locked states")
    _add_model(eq)
    _add_common(eq)

    sim = subs.add_parser("simulate", help="integrate one trajectory to CSV")
    _add_model(sim)
    sim.add_argument("--x0", help="initial state, comma separated "
                                  "(default: random from seed)")
    sim.add_argument("--t-end", dest="t_end", type=float, default=200.0)
    sim.add_argument("--dt-sample", dest="dt_sample", type=float,
                     default=0.25)
    _add_common(sim)

    orb = subs.add_parser("orbit", help="converge one rotating-wave orbit")
    _add_model(orb)
    orb.add_argument("--anchor", help="orbit anchor point, comma separated")
    orb.add_argument("--period", type=float, help="period guess")
    orb.add_argument("--winding", help="winding numbers, comma separated")
    orb.add_argument("--m", type=int, default=4, help="shooting nodes")
    orb.add_argument("--attempts", type=int, default=6,
                     help="random simulation seeding attempts")
    orb.add_argument("--t-end", dest="t_end", type=float, default=600.0)
    orb.add_argument("--t-settle", dest="t_settle", type=float,
                     default=450.0)
    _add_common(orb)

    br = subs.add_parser("branch",
                         help="continue an orbit branch in one parameter")
    _add_model(br)
    br.add_argument("--param", choices=("k", "delta"), required=True)
    br.add_argument("--range", help="parameter window lo,hi")
    br.add_argument("--seed-orbit", dest="seed_orbit",
                    help="orbit JSON to start from (skips simulation "
                         "seeding)")
    br.add_argument("--h0", type=float, default=0.01,
                    help="initial continuation step")
    br.add_argument("--max-points", dest="max_points", type=int,
                    default=1500)
    _add_common(br)

    reg = subs.add_parser("region",
                          help="trace the rotating-wave existence region")
    _add_model(reg)
    reg.add_argument("--k-min", dest="k_min", type=float, default=-0.9)
    reg.add_argument("--k-max", dest="k_max", type=float, default=-0.1)
    reg.add_argument("--k-points", dest="k_points", type=int, default=41)
    reg.add_argument("--delta-min", dest="delta_min", type=float,
                     default=0.02)
    reg.add_argument("--delta-max", dest="delta_max", type=float,
                     default=math.pi - 0.02)
    reg.add_argument("--seeding", choices=("auto", "simulate"),
                     default="auto")
    _add_common(reg)

    ba = subs.add_parser("basin",
                         help="Monte Carlo untrapped-fraction experiment")
    ba.add_argument("--n-values", dest="n_values", default="2,3",
                    help="chain lengths, comma separated")
    ba.add_argument("--trials", type=int, default=20)
    ba.add_argument("--n-ic", dest="n_ic", type=int, default=500)
    ba.add_argument("--radius", type=float, default=TRAP_RADIUS)
    ba.add_argument("--window", type=float, default=STOP_WINDOW)
    ba.add_argument("--delta-zero", dest="delta_zero", action="store_true",
                    help="control run with the wave phase lag forced to 0")
    _add_common(ba)

    va = subs.add_parser("validate",
                         help="run the built-in property suites")
    _add_common(va)

    return parser


_COMMANDS = {
    "equilibria": _cmd_equilibria,
    "simulate": _cmd_simulate,
    "orbit": _cmd_orbit,
    "branch": _cmd_branch,
    "region": _cmd_region,
    "basin": _cmd_basin,
    "validate": _cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False)
        else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_flags(_load_config(getattr(args, "config", None)), args)
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OscillaChainError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
