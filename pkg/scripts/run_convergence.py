#!/usr/bin/env python3
"""Temporal-convergence study: 2D Taylor-Green at Re = 1 on a 128^2 box.

Runs all six time-stepping schemes over the halving ladder dt = T/2 .. T/32
(T = 1.2) and writes per-scheme error tables with observed orders.
"""

import argparse
import json
import time
from pathlib import Path

from cdofb.bench.cases import tgv2d
from cdofb.bench.errors import exact_norms
from cdofb.bench.studies import convergence_study
from cdofb.mesh import build_cartesian
from cdofb.timestep import AC, MONOLITHIC, SchemeConfig

SCHEMES = [
    ("monolithic_o1_implicit", dict(coupling=MONOLITHIC, order=1, convection="implicit")),
    ("monolithic_o1_explicit", dict(coupling=MONOLITHIC, order=1, convection="explicit")),
    ("ac_o1_implicit", dict(coupling=AC, order=1, convection="implicit", eta=10.0)),
    ("ac_o1_explicit", dict(coupling=AC, order=1, convection="explicit", eta=10.0)),
    ("monolithic_o2_explicit", dict(coupling=MONOLITHIC, order=2, convection="explicit")),
    ("ac_o2_bootstrap", dict(coupling=AC, order=2, convection="explicit", eta=10.0)),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cells", type=int, default=128)
    parser.add_argument("--t-end", type=float, default=1.2)
    parser.add_argument("--levels", type=int, default=5, help="halvings from T/2")
    parser.add_argument("--stab", type=float, default=1.0)
    parser.add_argument("--out", default="out/convergence")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case = tgv2d(nu=1.0, t_end=args.t_end)
    mesh = build_cartesian(2, [args.cells, args.cells], case.box)
    dts = [args.t_end / 2 ** k for k in range(1, args.levels + 1)]
    norms = exact_norms(mesh, case.velocity, case.pressure, args.t_end,
                        stab_param=args.stab)

    summary = {}
    for name, kw in SCHEMES:
        t0 = time.time()
        scheme = SchemeConfig(dt=dts[0], t_end=args.t_end, nu=1.0, backend="direct",
                              stab_param=args.stab, **kw)
        study = convergence_study(mesh, case, scheme, dts, normalization=norms)
        rows = study.table_rows()
        with open(out / f"{name}.csv", "w") as fh:
            fh.write("dt,velocity_l2,velocity_h1,pressure_l2,"
                     "rate_velocity_l2,rate_velocity_h1,rate_pressure_l2\n")
            for row in rows:
                fh.write(f"{row['dt']:.8g},{row['velocity_l2']:.8e},"
                         f"{row['velocity_h1']:.8e},{row['pressure_l2']:.8e},"
                         f"{row['rate_velocity_l2']:.4f},{row['rate_velocity_h1']:.4f},"
                         f"{row['rate_pressure_l2']:.4f}\n")
        summary[name] = {"pairwise": study.rates, "overall": study.overall,
                         "seconds": time.time() - t0}
        print(f"{name}: velL2 rates {['%.3f' % r for r in study.rates['velocity_l2']]} "
              f"({summary[name]['seconds']:.0f}s)")
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"written to {out}/")


if __name__ == "__main__":
    main()
