#!/usr/bin/env python3
"""Critical-time-step study under explicit convection.

Bisects the largest stable step for the monolithic and the
artificial-compressibility (eta = 10 Re) schemes at first and second
order, over a list of Reynolds numbers, with T chosen so T * Re = 1e4.
Supports Cartesian and polygonal meshes.
"""

import argparse
import json
from pathlib import Path

from cdofb.bench.cases import tgv2d
from cdofb.bench.studies import CflSearchSpec, cfl_search
from cdofb.mesh import build_cartesian, build_voronoi_polygonal_2d
from cdofb.timestep import AC, MONOLITHIC, SchemeConfig

TWO_PI = 6.283185307179586

# published starting guesses on the 128^2 Cartesian mesh; generic brackets
# are used for other Reynolds numbers
SEEDS = {
    (MONOLITHIC, 1, 200): 2.98e-2, (MONOLITHIC, 2, 200): 1.15e-2,
    (MONOLITHIC, 1, 500): 1.03e-2, (MONOLITHIC, 2, 500): 4.16e-3,
    (MONOLITHIC, 1, 700): 7.27e-3, (MONOLITHIC, 2, 700): 2.97e-3,
    (AC, 1, 200): 2.98e-2, (AC, 2, 200): 1.14e-2,
    (AC, 1, 500): 1.04e-2, (AC, 2, 500): 4.16e-3,
    (AC, 1, 700): 7.25e-3, (AC, 2, 700): 2.95e-3,
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reynolds", default="200,700")
    parser.add_argument("--cells", type=int, default=128)
    parser.add_argument("--mesh", choices=["cartesian", "voronoi"], default="cartesian")
    parser.add_argument("--seeds", type=int, default=15129,
                        help="voronoi seed count (perfect square)")
    parser.add_argument("--resolution", type=float, default=0.01)
    parser.add_argument("--bracket", help="lo,hi override for every search")
    parser.add_argument("--orders", default="1,2", help="time orders to search")
    parser.add_argument("--couplings", default="monolithic,ac")
    parser.add_argument("--stab", type=float, default=1.0)
    parser.add_argument("--out", default="out/cfl_study")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mesh == "cartesian":
        mesh = build_cartesian(2, [args.cells, args.cells],
                               [[0, TWO_PI], [0, TWO_PI]])
    else:
        mesh = build_voronoi_polygonal_2d(args.seeds, [[0, TWO_PI], [0, TWO_PI]],
                                          jitter=0.3, rng_seed=0)

    results = []
    for re in (int(r) for r in args.reynolds.split(",")):
        nu = 1.0 / re
        t_end = 1e4 / re
        case = tgv2d(nu=nu, t_end=t_end)
        couplings = [{"monolithic": MONOLITHIC, "ac": AC}[c]
                     for c in args.couplings.split(",")]
        for coupling in couplings:
            for order in (int(o) for o in args.orders.split(",")):
                seed = SEEDS.get((coupling, order, re))
                if args.bracket:
                    lo, hi = (float(x) for x in args.bracket.split(","))
                    bracket = (lo, hi)
                elif seed and args.mesh == "cartesian" and args.cells == 128:
                    bracket = (0.90 * seed, 1.12 * seed)
                else:
                    bracket = (1.0 / re, 40.0 / re)
                spec = CflSearchSpec(*bracket, resolution=args.resolution)
                template = SchemeConfig(coupling=coupling, order=order,
                                        convection="explicit", dt=bracket[0],
                                        t_end=t_end, nu=nu,
                                        eta=10.0 * re if coupling == AC else None,
                                        backend="direct", stab_param=args.stab)
                scheme = spec.scheme_for_reynolds(template, re)
                try:
                    res = cfl_search(mesh, case, scheme, spec)
                except ValueError:
                    spec = CflSearchSpec(bracket[0] * 0.6, bracket[1] * 1.6,
                                         resolution=args.resolution)
                    res = cfl_search(mesh, case, scheme, spec)
                row = {"coupling": coupling, "order": order, "reynolds": re,
                       "critical_dt": res.critical_dt,
                       "smallest_diverging_dt": res.smallest_diverging_dt,
                       "probes": len(res.probes)}
                results.append(row)
                print(f"{coupling} o{order} Re={re}: dt_c = {res.critical_dt:.4e} "
                      f"({len(res.probes)} probes)")
                with open(out / f"probes_{coupling}_o{order}_re{re}.csv", "w") as fh:
                    fh.write("dt,diverged,t_div,n_steps,final_energy_ratio\n")
                    for p in res.probes:
                        fh.write(f"{p.dt:.10g},{int(p.diverged)},"
                                 f"{'' if p.t_div is None else f'{p.t_div:.8g}'},"
                                 f"{p.n_steps},{p.final_energy_ratio:.6g}\n")
    (out / "critical_steps.json").write_text(json.dumps(results, indent=2))
    print(f"written to {out}/")


if __name__ == "__main__":
    main()
