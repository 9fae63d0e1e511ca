from .cases import CaseSpec, SeparableForcing, exact_mtgv3d, exact_tgv2d, mtgv3d, tgv2d
from .errors import ErrorReport, SpacetimeErrorAccumulator, compute_spacetime_errors, exact_norms
from .studies import (CflProbe, CflSearchResult, CflSearchSpec, ConvergenceResult,
                      cfl_search, convergence_study, observed_rates, run_case)

__all__ = [
    "CaseSpec", "SeparableForcing", "exact_mtgv3d", "exact_tgv2d", "mtgv3d", "tgv2d",
    "ErrorReport", "SpacetimeErrorAccumulator", "compute_spacetime_errors", "exact_norms",
    "CflProbe", "CflSearchResult", "CflSearchSpec", "ConvergenceResult",
    "cfl_search", "convergence_study", "observed_rates", "run_case",
]
