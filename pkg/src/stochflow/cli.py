"""Configuration-driven experiment runner and command line interface.

Commands:
    check <config> [--out DIR] [--seed S] [--dt D] [--paths N]
    liealg <constants.json> --subalgebra i,j,...
    simulate <config> --trajectory out.csv [--t T] [--dt D] [--seed S]
    presets list | show NAME

Exit codes: 0 when every verdict is true, 2 when any check fails,
1 on configuration or execution errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys as _sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import expr, liealg
from .config import CheckSpec, ConfigError, ExperimentConfig, parse_config, serialize_config
from .currents import DensityCurrent, EmpiricalCurrent
from .invariance import (
    FrameRealization,
    InvarianceReport,
    check_mean_nform,
    check_strict_nform,
    empirical_check,
    foliated_system,
    foliation_pipeline,
    heisenberg_realization,
    jacobian_check,
    residual_check,
    torus_translation_realization,
)
from .manifold import ChartedManifold, VectorFieldSpec, make_test_basis, torus
from .presets import preset_names, preset_text
from .sde import StratonovichSystem, flow_with_jacobian, generate_noise, write_trajectory_csv

__all__ = ["main", "run", "build_experiment"]

_DEFAULTS = {
    "t": 1.0,
    "dt": 1e-3,
    "seed": 0,
    "basis_k": 3,
    "paths_mean": 1000,
    "paths_jacobian": 100,
    "tolerance": {
        "strict_nform": 1e-8,
        "mean_nform": 1e-6,
        "strict_residual": 1e-8,
        "mean_residual": 1e-6,
        "empirical_pathwise": 1e-2,
        "empirical_mean": 1e-2,
        "jacobian": 1e-2,
    },
}


# ---------------------------------------------------------------------------
# building runtime objects out of a validated config

class Experiment:
    """Runtime objects for one config: either a flow or a liealg setup."""

    def __init__(self, config):
        self.config = config
        self.manifold = None
        self.fields = None
        self.system = None
        self.current = None
        self.algebra = None
        self.subalgebra = None
        self.realization = None
        self.default_grid = 64

    def current_at(self, grid_n):
        if isinstance(self.current, EmpiricalCurrent) or grid_n is None:
            return self.current
        if isinstance(self.current, DensityCurrent) and self.current.grid_n == grid_n:
            return self.current
        return DensityCurrent(manifold=self.current.manifold,
                              density=self.current.density, grid_n=grid_n,
                              normalize=self.current.normalize)


def _build_manifold(section):
    mtype = section.get("type", "torus")
    if mtype == "heisenberg":
        lengths = section.get("lengths")
        vals = tuple(float(v) for v in lengths.split(",")) if lengths else (1.0, 1.0, 1.0)
        return ChartedManifold(dim=3, box_lengths=vals, identification="heisenberg")
    lengths = section.get("lengths", "1")
    return torus(*(float(v) for v in lengths.split(",")))


def _build_fields(section, dim):
    drift = VectorFieldSpec.zero(dim)
    diffusions = []
    for key, value in sorted(section.items(),
                             key=lambda kv: (kv[0] != "drift", kv[0])):
        comps = [part.strip() for part in value.split(",")]
        field = VectorFieldSpec.from_strings(comps)
        if key == "drift":
            drift = field
        else:
            diffusions.append((int(key[len("diffusion"):]), field))
    diffusions.sort(key=lambda kv: kv[0])
    return drift, tuple(f for _, f in diffusions)


def _build_current(section, manifold, default_grid):
    section = section or {}
    if section.get("type", "density") == "empirical":
        atoms = [[float(v) for v in pt.split()]
                 for pt in section["atoms"].split(";")]
        weights = [float(v) for v in section["weights"].split(",")]
        return EmpiricalCurrent(manifold=manifold, atoms=atoms, atom_weights=weights)
    grid_n = int(section.get("grid", default_grid))
    density_text = section.get("density", "1").strip()
    density = None if density_text == "1" else expr.parse(density_text)
    normalize = section.get("normalize", "false").lower() == "true"
    return DensityCurrent(manifold=manifold, density=density, grid_n=grid_n,
                          normalize=normalize)


def _build_algebra(section):
    if "constants" in section:
        return liealg.load_structure_constants(section["constants"])
    name = section["algebra"]
    if name.startswith("file:"):
        with open(name[len("file:"):], encoding="utf-8") as fh:
            return liealg.load_structure_constants(fh)
    zoo = liealg.algebra_zoo()
    if name not in zoo:
        raise ConfigError([f"unknown algebra {name!r}; known: {', '.join(sorted(zoo))}"])
    return zoo[name]


def build_experiment(config: ExperimentConfig) -> Experiment:
    exp = Experiment(config)
    if config.is_liealg:
        section = config.section("liealg")
        exp.algebra = _build_algebra(section)
        exp.subalgebra = liealg.parse_subalgebra(section["subalgebra"])
        realization = section.get("realization")
        if realization == "heisenberg":
            exp.realization = heisenberg_realization()
        elif realization == "torus":
            exp.realization = torus_translation_realization(exp.algebra.n)
        elif realization is not None:
            raise ConfigError([f"unknown realization {realization!r}"])
        return exp
    exp.manifold = _build_manifold(config.section("manifold"))
    exp.default_grid = 32 if exp.manifold.dim >= 3 else 64
    drift, diffusions = _build_fields(config.section("fields"), exp.manifold.dim)
    exp.fields = [drift, *diffusions]
    exp.system = StratonovichSystem(manifold=exp.manifold, drift=drift,
                                    diffusions=diffusions)
    exp.current = _build_current(config.section("current"), exp.manifold,
                                 exp.default_grid)
    return exp


# ---------------------------------------------------------------------------
# check dispatch

def _param(chk: CheckSpec, overrides, key, default, cast):
    if key in overrides and overrides[key] is not None:
        return overrides[key]
    raw = chk.get(key)
    return default if raw is None else cast(raw)


def _run_check(exp: Experiment, chk: CheckSpec, overrides) -> InvarianceReport:
    kind = chk.kind
    tol = _param(chk, {}, "tolerance", _DEFAULTS["tolerance"].get(kind), float)
    seed = _param(chk, overrides, "seed", _DEFAULTS["seed"], int)
    dt = _param(chk, overrides, "dt", _DEFAULTS["dt"], float)
    t = _param(chk, {}, "t", _DEFAULTS["t"], float)
    basis_k = _param(chk, {}, "basis_k", _DEFAULTS["basis_k"], int)

    if kind == "foliation":
        paths = _param(chk, overrides, "paths", _DEFAULTS["paths_mean"], int)
        grid = _param(chk, {}, "grid", 8, int)
        bias = chk.get("bias_c")
        label = ""
        if exp.realization is not None:
            label = {"heisenberg": "heisenberg_foliation",
                     "": ""}.get(exp.realization.label, "frame_divergence_torus")
        return foliation_pipeline(
            exp.algebra, exp.subalgebra, exp.realization, t=t, dt=dt,
            seed=seed, n_paths=paths, grid_n=grid, basis_k=basis_k,
            label=label, bias_c=None if bias is None else float(bias))

    if exp.system is None:
        raise ConfigError([f"check {kind!r} needs a flow experiment"])
    m = exp.manifold
    grid = _param(chk, {}, "grid", None, int)

    if kind == "strict_nform":
        density = exp.current.density if isinstance(exp.current, DensityCurrent) else None
        return check_strict_nform(m, density, exp.fields,
                                  grid or exp.default_grid, tol)
    if kind == "mean_nform":
        density = exp.current.density if isinstance(exp.current, DensityCurrent) else None
        return check_mean_nform(m, density, exp.fields,
                                grid or exp.default_grid, tol)
    if kind in ("strict_residual", "mean_residual"):
        T = exp.current_at(grid)
        basis = make_test_basis(m, basis_k)
        mode = "strict" if kind == "strict_residual" else "mean"
        return residual_check(T, exp.system, basis, mode, tol)
    if kind in ("empirical_pathwise", "empirical_mean"):
        T = exp.current_at(grid)
        basis = make_test_basis(m, basis_k)
        mode = "pathwise" if kind == "empirical_pathwise" else "mean"
        paths = _param(chk, overrides, "paths", _DEFAULTS["paths_mean"], int)
        bias = chk.get("bias_c")
        return empirical_check(T, exp.system, basis, t, dt, seed, paths, mode,
                               tolerance=tol,
                               bias_c=None if bias is None else float(bias))
    if kind == "jacobian":
        paths = _param(chk, overrides, "paths", _DEFAULTS["paths_jacobian"], int)
        x0_text = chk.get("x0")
        if x0_text is None:
            x0 = 0.5 * m.lengths
        else:
            x0 = np.array([float(v) for v in x0_text.split(",")])
        return jacobian_check(exp.system, x0, t, dt, seed, paths, tol)
    raise ConfigError([f"unhandled check kind {kind!r}"])


# ---------------------------------------------------------------------------
# reports

def _csv_rows(report: InvarianceReport):
    prefix = report.kind
    for row in report.per_basis:
        yield (prefix, row.get("basis_index", row.get("path_index", "")),
               row.get("field_index", ""), row.get("value"))
    if report.kind == "foliation_verdict":
        for item in report.metadata.get("offending", []):
            yield (prefix, item["index"], "", item["trace"])
    for sub in report.subchecks:
        for row in _csv_rows(sub):
            yield (f"{prefix}/{row[0]}",) + row[1:]


def _write_csvs(reports, outdir: Path):
    for i, rep in enumerate(reports, start=1):
        path = outdir / f"check_{i:02d}_{rep.kind}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["check", "basis_index", "field_index", "value"])
            for row in _csv_rows(rep):
                writer.writerow(row)


def run(config: ExperimentConfig, outdir, overrides=None) -> int:
    """Execute every check; write report.json and per-check CSVs.

    Returns 0 when all verdicts hold, 2 when any fails, 1 on error.
    """
    overrides = dict(overrides or {})
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        exp = build_experiment(config)
        reports = [_run_check(exp, chk, overrides) for chk in config.checks]
        payload = {
            "config": serialize_config(config),
            "overrides": {k: v for k, v in sorted(overrides.items())
                          if v is not None},
            "checks": [r.payload() for r in reports],
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        document = {
            "payload": payload,
            "payload_sha256": hashlib.sha256(blob.encode()).hexdigest(),
            "generated_at": datetime.now(timezone.utc).isoformat(),
        }
        with open(outdir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(document, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_csvs(reports, outdir)
    except (ConfigError, OSError, ValueError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1
    for rep in reports:
        status = "pass" if rep.all_verdicts() else "FAIL"
        print(f"[{status}] {rep.kind}: residual={rep.residual:.6g} "
              f"tolerance={rep.tolerance:.6g}")
    return 0 if all(r.all_verdicts() for r in reports) else 2


# ---------------------------------------------------------------------------
# commands

def _load_config_text(path_or_name: str) -> str:
    path = Path(path_or_name)
    if path.exists():
        return path.read_text(encoding="utf-8")
    if path_or_name in preset_names():
        return preset_text(path_or_name)
    raise FileNotFoundError(f"no config file or preset named {path_or_name!r}")


def _cmd_check(args) -> int:
    try:
        text = _load_config_text(args.config)
        config = parse_config(text)
    except FileNotFoundError as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1
    except ConfigError as e:
        for issue in e.issues:
            print(f"error: {issue}", file=_sys.stderr)
        return 1
    overrides = {"seed": args.seed, "dt": args.dt, "paths": args.paths}
    return run(config, args.out, overrides)


def _cmd_liealg(args) -> int:
    try:
        with open(args.constants, encoding="utf-8") as fh:
            g = liealg.load_structure_constants(fh)
        h = liealg.parse_subalgebra(args.subalgebra)
        ok, offending = liealg.invariance_verdict(g, h)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1
    print(f"dimension: {g.n}")
    print(f"subalgebra: {', '.join(g.label(i) for i in h.indices)}")
    print(f"nilpotent: {liealg.is_nilpotent(g)}")
    print(f"semisimple: {liealg.is_semisimple(g)}")
    for i in h.indices:
        print(f"trace ad({g.label(i)}) on h: {liealg.tr_ad_restricted(g, h, i):g}")
    drift = liealg.foliated_drift(g, h)
    print("foliated drift: "
          + ", ".join(f"{g.label(k)}: {d:g}" for k, d in zip(h.indices, drift)))
    print(f"totally invariant: {ok}")
    for i, tr in offending:
        print(f"offending: {g.label(i)} trace {tr:g}")
    return 0 if ok else 2


def _cmd_simulate(args) -> int:
    try:
        config = parse_config(_load_config_text(args.config))
        exp = build_experiment(config)
        if exp.system is not None:
            system = exp.system
        elif exp.realization is not None:
            system = foliated_system(exp.algebra, exp.subalgebra, exp.realization)
        else:
            print("error: config has no simulatable system "
                  "(liealg experiment without a realization)", file=_sys.stderr)
            return 1
        x0 = (np.array([float(v) for v in args.x0.split(",")])
              if args.x0 else 0.5 * system.manifold.lengths)
        steps = int(round(args.t / args.dt))
        noise = generate_noise(args.seed, args.path_index, system.m, args.dt, steps)
        result = flow_with_jacobian(system, x0, args.t, args.dt, noise)
        with open(args.trajectory, "w", newline="", encoding="utf-8") as fh:
            write_trajectory_csv(result, fh)
    except (ConfigError, FileNotFoundError, OSError, ValueError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1
    print(f"wrote {args.trajectory} ({steps + 1} rows)")
    return 0


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name in preset_names():
            print(name)
        return 0
    try:
        print(preset_text(args.name), end="")
    except KeyError as e:
        print(f"error: {e.args[0]}", file=_sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochflow",
        description="Stochastic flows on compact manifolds and "
                    "invariance checks for 0-currents.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="run the checks of a config or preset")
    p_check.add_argument("config", help="config file path or preset name")
    p_check.add_argument("--out", default="out", help="output directory")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--dt", type=float, default=None)
    p_check.add_argument("--paths", type=int, default=None)
    p_check.set_defaults(func=_cmd_check)

    p_lie = sub.add_parser("liealg", help="trace criterion for a constants file")
    p_lie.add_argument("constants", help="structure-constant JSON file")
    p_lie.add_argument("--subalgebra", required=True,
                       help="1-based indices, e.g. 1,2")
    p_lie.set_defaults(func=_cmd_liealg)

    p_sim = sub.add_parser("simulate", help="integrate one path and export CSV")
    p_sim.add_argument("config", help="config file path or preset name")
    p_sim.add_argument("--trajectory", required=True, help="output CSV path")
    p_sim.add_argument("--t", type=float, default=1.0)
    p_sim.add_argument("--dt", type=float, default=1e-3)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--path-index", type=int, default=0)
    p_sim.add_argument("--x0", default=None, help="comma-separated start point")
    p_sim.set_defaults(func=_cmd_simulate)

    p_pre = sub.add_parser("presets", help="list or show shipped presets")
    pre_sub = p_pre.add_subparsers(dest="action", required=True)
    p_list = pre_sub.add_parser("list")
    p_list.set_defaults(func=_cmd_presets)
    p_show = pre_sub.add_parser("show")
    p_show.add_argument("name")
    p_show.set_defaults(func=_cmd_presets)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
