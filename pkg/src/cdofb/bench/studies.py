"""Convergence ladders and critical-time-step searches."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..mesh import PolytopalMesh
from ..timestep import SchemeConfig, run_simulation
from .cases import CaseSpec
from .errors import ErrorReport, SpacetimeErrorAccumulator, exact_norms

logger = logging.getLogger(__name__)


@dataclass
class ConvergenceResult:
    dts: list
    reports: list          # ErrorReport per dt
    rates: dict            # norm name -> pairwise rates (len(dts) - 1)
    overall: dict          # norm name -> least-squares slope

    def table_rows(self):
        rows = []
        for i, (dt, rep) in enumerate(zip(self.dts, self.reports)):
            row = {"dt": dt, "velocity_l2": rep.velocity_l2,
                   "velocity_h1": rep.velocity_h1, "pressure_l2": rep.pressure_l2}
            for norm in ("velocity_l2", "velocity_h1", "pressure_l2"):
                row[f"rate_{norm}"] = self.rates[norm][i - 1] if i > 0 else float("nan")
            rows.append(row)
        return rows


NORM_NAMES = ("velocity_l2", "velocity_h1", "pressure_l2")


def observed_rates(dts, errors) -> list:
    """Pairwise observed orders log2(e_i / e_{i+1}) for a halving ladder."""
    out = []
    for i in range(len(errors) - 1):
        ratio = dts[i] / dts[i + 1]
        out.append(math.log(errors[i] / errors[i + 1]) / math.log(ratio))
    return out


def least_squares_slope(dts, errors) -> float:
    x = np.log(np.asarray(dts))
    y = np.log(np.asarray(errors))
    return float(np.polyfit(x, y, 1)[0])


def run_case(mesh: PolytopalMesh, case: CaseSpec, scheme: SchemeConfig,
             normalization=None, diagnostics_path=None):
    """One benchmark run with error accumulation against the exact solution."""
    if normalization is None:
        normalization = exact_norms(mesh, case.velocity, case.pressure,
                                    scheme.t_end, scheme.stab_param,
                                    scheme.projection_degree)
    acc = SpacetimeErrorAccumulator(mesh, case.velocity, case.pressure, scheme.dt,
                                    scheme.t_end, scheme.stab_param,
                                    scheme.projection_degree, normalization)
    return run_simulation(mesh, scheme, case.problem(), error_accumulator=acc,
                          diagnostics_path=diagnostics_path)


def convergence_study(mesh: PolytopalMesh, case: CaseSpec, scheme_template: SchemeConfig,
                      dts, normalization=None) -> ConvergenceResult:
    """Run the scheme at each step size and report observed temporal orders."""
    from dataclasses import replace

    if normalization is None:
        normalization = exact_norms(mesh, case.velocity, case.pressure,
                                    scheme_template.t_end, scheme_template.stab_param,
                                    scheme_template.projection_degree)
    reports = []
    for dt in dts:
        scheme = replace(scheme_template, dt=dt)
        result = run_case(mesh, case, scheme, normalization)
        if result.diverged:
            raise RuntimeError(f"run at dt={dt} diverged at t={result.t_div}")
        reports.append(result.errors)
        logger.info("dt=%.5g: velL2=%.4e velH1=%.4e presL2=%.4e", dt,
                    result.errors.velocity_l2, result.errors.velocity_h1,
                    result.errors.pressure_l2)
    rates = {}
    overall = {}
    for norm in NORM_NAMES:
        errs = [getattr(r, norm) for r in reports]
        rates[norm] = observed_rates(dts, errs)
        overall[norm] = least_squares_slope(dts, errs)
    return ConvergenceResult(list(dts), reports, rates, overall)


def synthetic_rates(dts, errors) -> list:
    """Rates from precomputed error values (used for self-tests and CSV replay)."""
    return observed_rates(dts, errors)


@dataclass
class CflSearchSpec:
    """Controls for the critical-time-step bisection.

    The rules fix the observation horizon (T Re = 1e4 by default, long
    enough for slow instabilities to trip the energy flag) and the grad-div
    parameter (eta = 10 Re) as functions of the Reynolds number.
    """

    bracket_low: float
    bracket_high: float
    resolution: float = 0.01
    t_end_rule: object = None     # callable Re -> T; default 1e4 / Re
    eta_rule: object = None       # callable Re -> eta; default 10 * Re

    def __post_init__(self):
        if not 0.0 < self.resolution <= 0.1:
            raise ValueError("resolution must lie in (0, 0.1]")
        if not 0.0 < self.bracket_low < self.bracket_high:
            raise ValueError("bracket must satisfy 0 < low < high")
        if self.t_end_rule is None:
            self.t_end_rule = lambda re: 1e4 / re
        if self.eta_rule is None:
            self.eta_rule = lambda re: 10.0 * re

    def scheme_for_reynolds(self, scheme_template: "SchemeConfig", reynolds: float):
        """Template specialization: nu, horizon and eta follow the rules."""
        from dataclasses import replace

        from ..timestep import AC

        eta = self.eta_rule(reynolds) if scheme_template.coupling == AC else None
        return replace(scheme_template, nu=1.0 / reynolds,
                       t_end=self.t_end_rule(reynolds), eta=eta)


@dataclass
class CflProbe:
    dt: float
    diverged: bool
    t_div: float | None
    n_steps: int
    final_energy_ratio: float


@dataclass
class CflSearchResult:
    critical_dt: float
    smallest_diverging_dt: float
    probes: list = field(default_factory=list)


def cfl_search(mesh: PolytopalMesh, case: CaseSpec, scheme_template: SchemeConfig,
               spec: CflSearchSpec, probe_fn=None) -> CflSearchResult:
    """Bisect for the largest stable step under explicit convection.

    A probe runs the full simulation and reports the kinetic-energy
    divergence flag; the search requires the bracket to straddle the
    stability boundary and stops once (high - low) / low <= resolution.
    probe_fn replaces the simulation probe in tests (dt -> bool).
    """
    from dataclasses import replace

    probes: list[CflProbe] = []

    def probe(dt: float) -> bool:
        if probe_fn is not None:
            diverged = bool(probe_fn(dt))
            probes.append(CflProbe(dt, diverged, None, 0, math.nan))
            return diverged
        scheme = replace(scheme_template, dt=dt)
        result = run_simulation(mesh, scheme, case.problem())
        ek0 = result.diagnostics[0].kinetic_energy if result.diagnostics else math.nan
        last = result.diagnostics[-1]
        probes.append(CflProbe(dt, result.diverged, result.t_div, last.n,
                               last.kinetic_energy / ek0 if ek0 else math.nan))
        logger.info("probe dt=%.6g -> %s (t_div=%s, %d steps)", dt,
                    "diverged" if result.diverged else "stable", result.t_div, last.n)
        return result.diverged

    low, high = spec.bracket_low, spec.bracket_high
    if probe(low):
        raise ValueError(f"bracket does not straddle: dt={low} already diverges")
    if not probe(high):
        raise ValueError(f"bracket does not straddle: dt={high} is stable")
    while (high - low) / low > spec.resolution:
        mid = 0.5 * (low + high)
        if probe(mid):
            high = mid
        else:
            low = mid
    return CflSearchResult(critical_dt=low, smallest_diverging_dt=high, probes=probes)
