"""Command-line benchmark harness.

Subcommands: run a configured case, sweep a time-step ladder, bisect for
the critical time step, and generate or check mesh files.  Runs are
described by a JSON config (see README) and write errors.json,
diagnostics.csv and rates.csv into the output directory; CFL searches
add probes.csv.  Exit codes: 0 success, 1 error, 2 divergence-flagged run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..mesh import MeshError, build_cartesian, build_voronoi_polygonal_2d, read_mesh, write_mesh
from ..timestep import SchemeConfig, StepError
from .cases import CaseSpec, mtgv3d, tgv2d
from .errors import exact_norms
from .studies import CflSearchSpec, cfl_search, convergence_study, observed_rates, run_case

logger = logging.getLogger(__name__)

RATES_HEADER = ("dt,velocity_l2,velocity_h1,pressure_l2,"
                "rate_velocity_l2,rate_velocity_h1,rate_pressure_l2")


class ConfigError(Exception):
    pass


def load_config(path: str, overrides) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return cfg


def build_mesh(spec: dict):
    if "file" in spec:
        return read_mesh(spec["file"])
    kind = spec.get("kind", "cartesian")
    if kind == "cartesian":
        return build_cartesian(int(spec.get("dim", len(spec["cells"]))),
                               spec["cells"], spec.get("box"))
    if kind == "voronoi":
        return build_voronoi_polygonal_2d(int(spec["n_seeds"]), spec.get("box"),
                                          float(spec.get("jitter", 0.3)),
                                          int(spec.get("rng_seed", 0)))
    raise ConfigError(f"unknown mesh kind '{kind}'")


def build_case(spec: dict) -> CaseSpec:
    cid = spec.get("id", "tgv2d")
    if cid == "tgv2d":
        nu = spec.get("nu")
        if nu is None:
            nu = 1.0 / float(spec["reynolds"]) if "reynolds" in spec else 1.0
        return tgv2d(nu=float(nu), t_end=float(spec.get("t_end", 1.2)))
    if cid == "mtgv3d":
        return mtgv3d(t_end=float(spec.get("t_end", 2.0)))
    raise ConfigError(f"unknown case id '{cid}' (expected tgv2d or mtgv3d)")


def build_scheme(spec: dict, case: CaseSpec) -> SchemeConfig:
    fields = {f.name for f in dataclasses.fields(SchemeConfig)}
    unknown = set(spec) - fields
    if unknown:
        raise ConfigError(f"unknown scheme keys: {sorted(unknown)}")
    kw = dict(spec)
    kw.setdefault("nu", case.nu)
    kw.setdefault("t_end", case.t_end)
    return SchemeConfig(**kw)


def _write_rates_csv(path, dts, reports, rates=None):
    with open(path, "w") as fh:
        fh.write(RATES_HEADER + "\n")
        for i, (dt, rep) in enumerate(zip(dts, reports)):
            row = [f"{dt:.10g}", f"{rep.velocity_l2:.8e}", f"{rep.velocity_h1:.8e}",
                   f"{rep.pressure_l2:.8e}"]
            for norm in ("velocity_l2", "velocity_h1", "pressure_l2"):
                if rates is not None and i > 0:
                    row.append(f"{rates[norm][i - 1]:.4f}")
                else:
                    row.append("")
            fh.write(",".join(row) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_mesh(cfg["mesh"])
    case = build_case(cfg.get("case", {}))
    scheme = build_scheme(cfg.get("scheme", {}), case)
    result = run_case(mesh, case, scheme, diagnostics_path=out / "diagnostics.csv")
    report = result.errors
    doc = {
        "config": cfg,
        "case": {"id": case.case_id, "nu": case.nu, "reynolds": case.reynolds,
                 "t_end": scheme.t_end, **case.metadata},
        "diverged": result.diverged,
        "t_div": result.t_div,
        "n_steps": result.n_steps,
        "errors": report.as_dict() if report is not None else None,
        "telemetry": result.telemetry,
    }
    (out / "errors.json").write_text(json.dumps(doc, indent=2, default=_json_default))
    if report is not None:
        _write_rates_csv(out / "rates.csv", [scheme.dt], [report])
    else:
        (out / "rates.csv").write_text(RATES_HEADER + "\n")
    print(f"run finished: diverged={result.diverged}"
          + (f" t_div={result.t_div:.6g}" if result.t_div else ""))
    return 2 if result.diverged else 0


def cmd_sweep_dt(args) -> int:
    cfg = load_config(args.config, args.set)
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_mesh(cfg["mesh"])
    case = build_case(cfg.get("case", {}))
    scheme = build_scheme(cfg.get("scheme", {}), case)
    dts = cfg.get("sweep", {}).get("dts")
    if args.dts:
        dts = [float(x) for x in args.dts.split(",")]
    if not dts:
        raise ConfigError("sweep-dt needs sweep.dts in the config or --dts")
    study = convergence_study(mesh, case, scheme, dts)
    _write_rates_csv(out / "rates.csv", study.dts, study.reports, study.rates)
    doc = {
        "config": cfg,
        "dts": study.dts,
        "errors": [r.as_dict() for r in study.reports],
        "rates": study.rates,
        "overall_order": study.overall,
    }
    (out / "errors.json").write_text(json.dumps(doc, indent=2, default=_json_default))
    for norm, slope in study.overall.items():
        print(f"{norm}: overall order {slope:.3f}, pairwise {study.rates[norm]}")
    return 0


def cmd_cfl_search(args) -> int:
    cfg = load_config(args.config, args.set)
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_mesh(cfg["mesh"])
    case = build_case(cfg.get("case", {}))
    scheme = build_scheme(cfg.get("scheme", {}), case)
    cfl = cfg.get("cfl", {})
    bracket = cfl.get("bracket")
    if args.bracket:
        bracket = [float(x) for x in args.bracket.split(",")]
    if not bracket or len(bracket) != 2:
        raise ConfigError("cfl-search needs cfl.bracket = [low, high] or --bracket")
    spec = CflSearchSpec(bracket[0], bracket[1],
                         resolution=float(cfl.get("resolution", 0.01)))
    result = cfl_search(mesh, case, scheme, spec)
    with open(out / "probes.csv", "w") as fh:
        fh.write("dt,diverged,t_div,n_steps,final_energy_ratio\n")
        for p in result.probes:
            fh.write(f"{p.dt:.10g},{int(p.diverged)},"
                     f"{'' if p.t_div is None else f'{p.t_div:.10g}'},"
                     f"{p.n_steps},{p.final_energy_ratio:.6g}\n")
    doc = {"config": cfg, "critical_dt": result.critical_dt,
           "smallest_diverging_dt": result.smallest_diverging_dt,
           "probes": len(result.probes)}
    (out / "errors.json").write_text(json.dumps(doc, indent=2, default=_json_default))
    print(f"critical dt = {result.critical_dt:.6g} "
          f"(first diverging {result.smallest_diverging_dt:.6g}, "
          f"{len(result.probes)} probes)")
    return 0


def cmd_mesh(args) -> int:
    if args.mesh_command == "gen":
        spec = {"kind": args.kind}
        if args.kind == "cartesian":
            spec["cells"] = [int(x) for x in args.cells.split(",")]
        else:
            spec["n_seeds"] = int(args.n_seeds)
            spec["jitter"] = args.jitter
            spec["rng_seed"] = args.rng_seed
        if args.box:
            vals = [float(x) for x in args.box.split(",")]
            spec["box"] = [vals[i:i + 2] for i in range(0, len(vals), 2)]
        mesh = build_mesh(spec)
        write_mesh(mesh, args.out)
        print(f"wrote {args.out}: {mesh.n_cells} cells, {mesh.n_faces} faces, "
              f"h = {mesh.mesh_size:.6g}")
        return 0
    mesh = read_mesh(args.path)
    mesh.validate()
    print(f"{args.path}: valid ({mesh.dim}D, {mesh.n_cells} cells, "
          f"{mesh.n_faces} faces, {len(mesh.boundary_faces)} boundary faces, "
          f"h = {mesh.mesh_size:.6g})")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdofb-ns",
                                     description="Face-based incompressible "
                                                 "Navier-Stokes benchmark harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured case")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep-dt", help="time-step convergence ladder")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sweep.add_argument("--dts", help="comma-separated step sizes")
    p_sweep.set_defaults(func=cmd_sweep_dt)

    p_cfl = sub.add_parser("cfl-search", help="bisect for the critical time step")
    p_cfl.add_argument("--config", required=True)
    p_cfl.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_cfl.add_argument("--bracket", help="low,high")
    p_cfl.set_defaults(func=cmd_cfl_search)

    p_mesh = sub.add_parser("mesh", help="generate or check mesh files")
    mesh_sub = p_mesh.add_subparsers(dest="mesh_command", required=True)
    p_gen = mesh_sub.add_parser("gen")
    p_gen.add_argument("--kind", choices=["cartesian", "voronoi"], default="cartesian")
    p_gen.add_argument("--cells", default="16,16", help="cells per axis (cartesian)")
    p_gen.add_argument("--n-seeds", type=int, default=64, dest="n_seeds")
    p_gen.add_argument("--jitter", type=float, default=0.3)
    p_gen.add_argument("--rng-seed", type=int, default=0, dest="rng_seed")
    p_gen.add_argument("--box", help="lo0,hi0,lo1,hi1[,lo2,hi2]")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_mesh)
    p_check = mesh_sub.add_parser("check")
    p_check.add_argument("path")
    p_check.set_defaults(func=cmd_mesh)

    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, StepError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
