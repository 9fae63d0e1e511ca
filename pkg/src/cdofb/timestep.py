"""Time-stepping schemes and the simulation driver.

Six schemes are provided: monolithic saddle-point stepping at first and
second (BDF2) order with implicit (Picard) or explicit convection, the
first-order artificial-compressibility scheme (implicit or explicit
convection), and the second-order bootstrap artificial-compressibility
scheme (explicit convection only), in which a first-order track supplies
the pressure-increment correction for the BDF2 track.

Linear systems route through either the hand-written iterative solvers
(Jacobi CG for SPD systems, GKB for symmetric saddle points, GMRES for
the Picard-linearized nonsymmetric systems) or a cached sparse LU shared
across all steps of a run, since the matrices of a constant-step run are
time-invariant.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import spaces
from .frozen import FrozenLu
from .linalg import CsrMatrix, SolverConfig, add_csr, block_saddle, cg_jacobi, gkb_saddle, gmres
from .mesh import PolytopalMesh
from .operators import (GlobalSystem, OperatorConfig, convection_apply, convection_matrix,
                        divergence_field, gradient_energy)
from .spaces import HybridVelocity, PressureField

logger = logging.getLogger(__name__)

MONOLITHIC = "monolithic"
AC = "artificial_compressibility"
DIVERGENCE_FACTOR = 1.1  # kinetic-energy blowup threshold, fixed for comparability


class StepError(Exception):
    """A step failed structurally (solver breakdown, bad configuration)."""


@dataclass
class SchemeConfig:
    """Full description of one time-stepping configuration."""

    coupling: str = MONOLITHIC          # "monolithic" | "artificial_compressibility"
    order: int = 1
    convection: str = "implicit"        # "implicit" | "explicit" | "none"
    dt: float = 0.1
    t_end: float = 1.0
    nu: float = 1.0
    eta: float | None = None            # grad-div parameter (AC only)
    stab_param: float | None = None
    picard_tol: float = 1e-8
    picard_max: int = 50
    solver_tol: float | None = None     # None: 1e-4 (order 1) / 1e-5 (order 2)
    solver_inner_tol: float | None = None
    solver_max_iterations: int = 100000
    gmres_restart: int = 80
    backend: str = "auto"               # "auto" | "direct" | "iterative"
    projection_degree: int = 6

    def __post_init__(self):
        if self.coupling in ("ac", "AC"):
            self.coupling = AC
        if self.coupling not in (MONOLITHIC, AC):
            raise StepError(f"unknown coupling '{self.coupling}'")
        if self.order not in (1, 2):
            raise StepError("order must be 1 or 2")
        if self.convection not in ("implicit", "explicit", "none"):
            raise StepError(f"unknown convection treatment '{self.convection}'")
        if self.dt <= 0:
            raise StepError("dt must be positive")
        if self.t_end < self.dt:
            raise StepError("observation time shorter than time step")
        if self.nu <= 0:
            raise StepError("viscosity must be positive")
        if self.coupling == AC:
            if self.eta is None or self.eta <= 0:
                raise StepError("AC coupling needs a positive grad-div parameter eta")
            if self.order == 2 and self.convection == "implicit":
                raise StepError("second-order AC runs explicit convection only "
                                "(two nonlinear solves per step are too expensive)")
        if self.backend not in ("auto", "direct", "iterative"):
            raise StepError(f"unknown backend '{self.backend}'")

    @property
    def effective_tol(self) -> float:
        if self.solver_tol is not None:
            return self.solver_tol
        return 1e-4 if self.order == 1 else 1e-5

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.effective_tol,
                            max_iterations=self.solver_max_iterations,
                            restart=self.gmres_restart,
                            inner_tol=self.solver_inner_tol)


@dataclass
class FlowProblem:
    """Data handles of one flow case; all callables take (t, points)."""

    initial_velocity: object
    initial_pressure: object = None
    boundary_velocity: object = None    # None: homogeneous Dirichlet
    forcing: object = None              # None: zero body force
    exact_velocity: object = None
    exact_pressure: object = None


@dataclass
class StepState:
    """Evolving discrete state; the bootstrap scheme carries two tracks."""

    u: HybridVelocity
    p: PressureField
    u_prev: HybridVelocity | None = None
    u_prev2: HybridVelocity | None = None
    n: int = 0
    track1_u: HybridVelocity | None = None
    track1_p: PressureField | None = None
    track1_dp: np.ndarray | None = None


@dataclass
class StepDiagnostics:
    n: int
    t: float
    kinetic_energy: float
    divergence_norm: float
    picard_iterations: int
    solver_iterations: int
    solver_residual: float
    energy_balance_residual: float | None = None
    convection_pairing: float | None = None
    pressure_pairing: float | None = None
    diverged: bool = False
    picard_converged: bool = True
    reports: list = field(default_factory=list, repr=False)


class RunOperators:
    """Assembled blocks plus cached solvers for one (mesh, scheme) pair."""

    def __init__(self, mesh: PolytopalMesh, scheme: SchemeConfig, problem: FlowProblem):
        self.mesh = mesh
        self.scheme = scheme
        self.problem = problem
        op_cfg = OperatorConfig(stab_param=scheme.stab_param,
                                source_degree=scheme.projection_degree)
        eta = scheme.eta if scheme.coupling == AC else None
        self.system = GlobalSystem.assemble(mesh, op_cfg, nu=scheme.nu, eta=eta)
        dm = self.system.dofs
        self.dofs = dm
        visc = self.system.a_visc
        if self.system.divdiv is not None:
            visc = add_csr(visc, self.system.divdiv)
        self.visc_full = visc
        self.visc_ff = visc.submatrix(dm.free, dm.free)
        self.visc_fb = visc.submatrix(dm.free, dm.boundary)
        cells = np.arange(mesh.n_cells)
        self.b_free = self.system.coupling.submatrix(cells, dm.free)
        self.b_bdry = self.system.coupling.submatrix(cells, dm.boundary)
        self.mass_free = self.system.mass_diag[dm.free]
        self.use_direct = scheme.backend in ("auto", "direct")
        self._vel_ops: dict = {}
        self._saddles: dict = {}
        self._lus: dict = {}
        self._source_cache: dict = {}
        self.pin = mesh.n_cells - 1
        self.inner_iterations = 0

    # -- cached operators --------------------------------------------------

    def velocity_operator(self, mass_coeff: float) -> CsrMatrix:
        key = float(mass_coeff)
        if key not in self._vel_ops:
            n = self.mass_free.size
            idx = np.arange(n)
            mass = CsrMatrix.from_coo(idx, idx, mass_coeff * self.mass_free, (n, n))
            self._vel_ops[key] = add_csr(mass, self.visc_ff)
        return self._vel_ops[key]

    def saddle_operator(self, mass_coeff: float, pinned: bool) -> CsrMatrix:
        key = (float(mass_coeff), pinned)
        if key not in self._saddles:
            self._saddles[key] = block_saddle(self.velocity_operator(mass_coeff),
                                              self.b_free,
                                              pin_row=self.pin if pinned else None)
        return self._saddles[key]

    def lu(self, kind: str, mass_coeff: float) -> FrozenLu:
        key = (kind, float(mass_coeff))
        if key not in self._lus:
            if kind == "velocity":
                mat = self.velocity_operator(mass_coeff)
            else:
                mat = self.saddle_operator(mass_coeff, pinned=True)
            permc = "COLAMD" if self.mesh.dim == 2 else "MMD_AT_PLUS_A"
            t0 = time.perf_counter()
            self._lus[key] = FrozenLu(mat, permc_spec=permc)
            logger.debug("factorized %s operator (%d dofs) in %.2fs",
                         kind, mat.shape[0], time.perf_counter() - t0)
        return self._lus[key]

    # -- per-step data -----------------------------------------------------

    def boundary_values(self, t: float) -> np.ndarray:
        """Boundary face DoF values at time t, flattened to match dofs.boundary."""
        if self.problem.boundary_velocity is None or self.mesh.boundary_faces.size == 0:
            return np.zeros(self.dofs.boundary.size)
        means = spaces.boundary_face_means(self.mesh, self.problem.boundary_velocity,
                                           t, self.scheme.projection_degree)
        return means.ravel()

    def source(self, t: float) -> np.ndarray:
        """Source functional over the full DoF vector at time t."""
        forcing = self.problem.forcing
        dm = self.dofs
        rhs = np.zeros(dm.n_velocity)
        if forcing is None:
            return rhs
        cells = dm.cell_dofs(np.arange(self.mesh.n_cells))
        terms = getattr(forcing, "separable_terms", None)
        if terms is not None:
            if "spatial" not in self._source_cache:
                self._source_cache["spatial"] = [
                    self.mesh.integrate_cells(spatial, degree=self.scheme.projection_degree)
                    for _, spatial in terms]
            acc = 0.0
            for (time_coeff, _), integ in zip(terms, self._source_cache["spatial"]):
                acc = acc + time_coeff(t) * integ
            rhs[cells] = acc
            return rhs
        vals = self.mesh.integrate_cells(lambda X: forcing(t, X),
                                         degree=self.scheme.projection_degree)
        rhs[cells] = np.atleast_2d(vals)
        return rhs

    def convection_blocks(self, w: HybridVelocity):
        """T(w) restricted to (free x free, free x boundary)."""
        t_full = convection_matrix(w, self.mesh, self.dofs)
        return (t_full.submatrix(self.dofs.free, self.dofs.free),
                t_full.submatrix(self.dofs.free, self.dofs.boundary))


class _SaddleWithConvection:
    """Pinned saddle operator plus a convection block on the velocity part."""

    def __init__(self, base: CsrMatrix, t_ff: CsrMatrix, nvel: int):
        self.base = base
        self.t_ff = t_ff
        self.nvel = nvel
        self.shape = base.shape

    def __matmul__(self, x):
        y = self.base @ x
        y[:self.nvel] += self.t_ff @ x[:self.nvel]
        return y


class _MatrixSum:
    def __init__(self, a, b):
        self.a, self.b = a, b
        self.shape = a.shape

    def __matmul__(self, x):
        return (self.a @ x) + (self.b @ x)


def initialize(mesh: PolytopalMesh, problem: FlowProblem, scheme: SchemeConfig) -> StepState:
    """Project the initial data; seeds both bootstrap tracks."""
    u0 = spaces.project_velocity(mesh, problem.initial_velocity, 0.0,
                                 scheme.projection_degree)
    if problem.initial_pressure is not None:
        p0 = spaces.zero_mean_adjust(
            spaces.project_pressure(mesh, problem.initial_pressure, 0.0,
                                    scheme.projection_degree), mesh)
    else:
        p0 = PressureField.zeros(mesh)
    state = StepState(u=u0, p=p0)
    if scheme.coupling == AC and scheme.order == 2:
        state.track1_u = u0.copy()
        state.track1_p = p0.copy()
    return state


# -- solvers -------------------------------------------------------------------


def _solve_saddle(ctx: RunOperators, mass_coeff: float, t_blocks, rhs_u, rhs_p,
                  state_guess=None):
    """Solve the (possibly convection-augmented) saddle system on free DoFs."""
    scheme = ctx.scheme
    nvel = ctx.mass_free.size
    nc = ctx.mesh.n_cells
    cfg = scheme.solver_config()
    if t_blocks is None:
        if ctx.use_direct:
            lu = ctx.lu("saddle", mass_coeff)
            rhs = np.concatenate([rhs_u, rhs_p])
            rhs[nvel + ctx.pin] = 0.0
            x, rep = lu.solve_with_report(rhs)
            return x[:nvel], x[nvel:], rep
        a_op = ctx.velocity_operator(mass_coeff)
        u, p, rep = gkb_saddle(a_op, ctx.b_free, rhs_u, rhs_p, cfg,
                               pressure_weights=ctx.mesh.cell_measures)
        ctx.inner_iterations += rep.extra.get("inner_iterations", 0)
        if not rep.converged:
            raise StepError(f"saddle solve failed to converge: {rep}")
        return u, p, rep
    # nonsymmetric (Picard-linearized) saddle
    t_ff = t_blocks
    if ctx.use_direct:
        base = ctx.saddle_operator(mass_coeff, pinned=True)
        op = _SaddleWithConvection(base, t_ff, nvel)
        lu = ctx.lu("saddle", mass_coeff)
        precond = lu.solve
    else:
        base = ctx.saddle_operator(mass_coeff, pinned=True)
        op = _SaddleWithConvection(base, t_ff, nvel)
        diag_a = ctx.velocity_operator(mass_coeff).diagonal()
        schur = _schur_diagonal(ctx.b_free, diag_a)
        dvec = np.concatenate([diag_a, schur])
        dvec[nvel + ctx.pin] = 1.0
        dvec[dvec == 0.0] = 1.0
        precond = lambda v: v / dvec
    rhs = np.concatenate([rhs_u, rhs_p])
    rhs[nvel + ctx.pin] = 0.0
    x0 = state_guess
    x, rep = gmres(op, rhs, scheme.solver_config(), x0=x0, precondition=precond)
    if not rep.converged:
        raise StepError(f"Picard saddle GMRES failed to converge: {rep}")
    return x[:nvel], x[nvel:], rep


def _schur_diagonal(b: CsrMatrix, diag_a: np.ndarray) -> np.ndarray:
    rows = b.entry_rows()
    contrib = b.data * b.data / diag_a[b.indices]
    out = np.zeros(b.shape[0])
    np.add.at(out, rows, contrib)
    out[out == 0.0] = 1.0
    return out


def _solve_velocity(ctx: RunOperators, mass_coeff: float, t_ff, rhs, guess=None):
    """Solve the velocity system (SPD without convection block)."""
    scheme = ctx.scheme
    cfg = scheme.solver_config()
    if t_ff is None:
        if ctx.use_direct:
            return ctx.lu("velocity", mass_coeff).solve_with_report(rhs)
        x, rep = cg_jacobi(ctx.velocity_operator(mass_coeff), rhs, cfg, x0=guess)
        if not rep.converged:
            raise StepError(f"velocity CG failed to converge: {rep}")
        return x, rep
    a_op = ctx.velocity_operator(mass_coeff)
    if ctx.use_direct:
        op = _MatrixSum(a_op, t_ff)
        precond = ctx.lu("velocity", mass_coeff).solve
    else:
        op = add_csr(a_op, t_ff)
        d = op.diagonal().copy()
        d[d == 0.0] = 1.0
        precond = lambda v: v / d
    x, rep = gmres(op, rhs, cfg, x0=guess, precondition=precond)
    if not rep.converged:
        raise StepError(f"velocity GMRES failed to converge: {rep}")
    return x, rep


# -- steps ---------------------------------------------------------------------


def _history_rhs(ctx, state, order):
    dm = ctx.dofs
    dt = ctx.scheme.dt
    u_prev = dm.pack(state.u)[dm.free]
    if order == 1:
        return (1.0 / dt) * ctx.mass_free * u_prev
    u_prev2 = dm.pack(state.u_prev)[dm.free]
    return ctx.mass_free * (4.0 * u_prev - u_prev2) / (2.0 * dt)


def _explicit_convection_rhs(ctx, state, order):
    scheme = ctx.scheme
    if scheme.convection == "none":
        return 0.0
    dm = ctx.dofs
    if order == 1 or state.u_prev is None:
        return convection_apply(state.u, state.u, ctx.mesh, dm)[dm.free]
    # second-order extrapolation applied to the operator
    t1 = convection_apply(state.u, state.u, ctx.mesh, dm)[dm.free]
    t2 = convection_apply(state.u_prev, state.u_prev, ctx.mesh, dm)[dm.free]
    return 2.0 * t1 - t2


def _picard_transport(ctx, state, order) -> HybridVelocity:
    if order == 1 or state.u_prev is None:
        return state.u.copy()
    return 2.0 * state.u - state.u_prev


def _advance(state: StepState, u_new, p_new, order):
    state.u_prev2 = state.u_prev
    state.u_prev = state.u
    state.u = u_new
    state.p = p_new
    state.n += 1
    del order
    return state


def step_monolithic(state: StepState, ctx: RunOperators, t: float,
                    order: int) -> tuple[StepState, StepDiagnostics]:
    """One monolithic step (backward Euler or BDF2 mass, per order)."""
    scheme = ctx.scheme
    dm = ctx.dofs
    dt = scheme.dt
    mass_coeff = (1.0 / dt) if order == 1 else 3.0 / (2.0 * dt)
    g = ctx.boundary_values(t)
    source = ctx.source(t)
    rhs_u = source[dm.free] + _history_rhs(ctx, state, order) - (ctx.visc_fb @ g)
    rhs_p = -(ctx.b_bdry @ g)

    reports = []
    picard_iters = 0
    picard_ok = True
    w_last = None
    if scheme.convection in ("explicit", "none"):
        rhs_u = rhs_u - _explicit_convection_rhs(ctx, state, order)
        u_free, p_vals, rep = _solve_saddle(ctx, mass_coeff, None, rhs_u, rhs_p)
        reports.append(rep)
    else:
        w = _picard_transport(ctx, state, order)
        u_free = dm.pack(w)[dm.free]
        p_vals = state.p.cell_values.copy()
        guess = np.concatenate([u_free, p_vals])
        for k in range(1, scheme.picard_max + 1):
            t_ff, t_fb = ctx.convection_blocks(w)
            rhs_k = rhs_u - (t_fb @ g)
            u_new, p_vals, rep = _solve_saddle(ctx, mass_coeff, t_ff, rhs_k, rhs_p,
                                               state_guess=guess)
            reports.append(rep)
            picard_iters = k
            w_last = w
            inc = _cell_norm_free(ctx, u_new - u_free)
            ref = _cell_norm_free(ctx, u_new)
            u_free = u_new
            guess = np.concatenate([u_free, p_vals])
            w = ctx.dofs.unpack(dm.expand_free(u_free, g))
            if inc <= scheme.picard_tol * ref or (inc == 0.0 and ref == 0.0):
                break
        else:
            picard_ok = False
        if not picard_ok:
            logger.warning("Picard did not reach tol %.1e in %d iterations",
                           scheme.picard_tol, scheme.picard_max)

    u_new = dm.unpack(dm.expand_free(u_free, g))
    p_new = spaces.zero_mean_adjust(PressureField(p_vals), ctx.mesh)
    diag = _diagnostics(ctx, state, u_new, p_new, t, picard_iters, reports,
                        w_last if scheme.convection == "implicit" else None,
                        order, source)
    diag.picard_converged = picard_ok
    return _advance(state, u_new, p_new, order), diag


def step_monolithic_o1(state, ctx, t):
    return step_monolithic(state, ctx, t, order=1)


def step_monolithic_o2(state, ctx, t):
    """BDF2 monolithic step; the first step must come from step_monolithic_o1."""
    if state.u_prev is None:
        return step_monolithic(state, ctx, t, order=1)
    return step_monolithic(state, ctx, t, order=2)


def _ac_pressure_update(ctx, p_prev_vals, u_full: HybridVelocity) -> np.ndarray:
    div = divergence_field(ctx.mesh, u_full)
    return p_prev_vals - ctx.scheme.nu * ctx.scheme.eta * div


def step_ac_o1(state: StepState, ctx: RunOperators, t: float,
               mass_coeff: float | None = None, history=None, pressure_guess=None,
               convection_rhs=None, track=None) -> tuple[StepState, StepDiagnostics]:
    """First-order artificial-compressibility step (velocity solve + update).

    The keyword hooks let the bootstrap scheme reuse this machinery with a
    BDF2 mass term, a corrected pressure guess and extrapolated convection.
    """
    scheme = ctx.scheme
    dm = ctx.dofs
    dt = scheme.dt
    if mass_coeff is None:
        mass_coeff = 1.0 / dt
    g = ctx.boundary_values(t)
    source = ctx.source(t)
    base_u = state.u if track is None else track[0]
    base_p = state.p if track is None else track[1]
    if history is None:
        history = (1.0 / dt) * ctx.mass_free * dm.pack(base_u)[dm.free]
    rhs_fixed = source[dm.free] + history - (ctx.visc_fb @ g)
    rhs_p_base = pressure_guess if pressure_guess is not None else base_p.cell_values

    reports = []
    picard_iters = 0
    picard_ok = True
    if scheme.convection in ("explicit", "none") or convection_rhs is not None:
        if convection_rhs is None:
            conv = 0.0
            if scheme.convection == "explicit":
                conv = convection_apply(base_u, base_u, ctx.mesh, dm)[dm.free]
        else:
            conv = convection_rhs
        rhs = rhs_fixed - conv - ctx.b_free.rmatvec(rhs_p_base)
        u_free, rep = _solve_velocity(ctx, mass_coeff, None, rhs,
                                      guess=dm.pack(base_u)[dm.free])
        reports.append(rep)
        u_new = dm.unpack(dm.expand_free(u_free, g))
        p_vals = _ac_pressure_update(ctx, rhs_p_base, u_new)
    else:
        w = base_u.copy()
        u_free = dm.pack(base_u)[dm.free]
        p_vals = rhs_p_base.copy()
        for k in range(1, scheme.picard_max + 1):
            t_ff, t_fb = ctx.convection_blocks(w)
            rhs = rhs_fixed - (t_fb @ g) - ctx.b_free.rmatvec(p_vals)
            u_new_free, rep = _solve_velocity(ctx, mass_coeff, t_ff, rhs, guess=u_free)
            reports.append(rep)
            picard_iters = k
            u_new = dm.unpack(dm.expand_free(u_new_free, g))
            p_vals = _ac_pressure_update(ctx, p_vals, u_new)
            inc = _cell_norm_free(ctx, u_new_free - u_free)
            ref = _cell_norm_free(ctx, u_new_free)
            u_free = u_new_free
            w = u_new
            if inc <= scheme.picard_tol * ref or (inc == 0.0 and ref == 0.0):
                break
        else:
            picard_ok = False
            logger.warning("AC Picard did not reach tol %.1e in %d iterations",
                           scheme.picard_tol, scheme.picard_max)
        u_new = dm.unpack(dm.expand_free(u_free, g))

    p_new = PressureField(p_vals)
    if track is not None:
        return u_new, p_new, reports, picard_iters

    diag = _diagnostics(ctx, state, u_new, p_new, t, picard_iters, reports, None, 1, source)
    diag.picard_converged = picard_ok
    return _advance(state, u_new, p_new, 1), diag


def step_ac_o2_bootstrap(state: StepState, ctx: RunOperators,
                         t: float) -> tuple[StepState, StepDiagnostics]:
    """Second-order AC step: first-order track plus pressure-corrected BDF2 track."""
    scheme = ctx.scheme
    dm = ctx.dofs
    dt = scheme.dt
    # track 1: plain first-order explicit AC on its own history
    p1_old = state.track1_p.cell_values.copy()
    u1, p1, reports, _ = step_ac_o1(state, ctx, t, track=(state.track1_u, state.track1_p))
    dp1 = p1.cell_values - p1_old
    state.track1_u, state.track1_p, state.track1_dp = u1, p1, dp1

    source = ctx.source(t)
    if state.n == 0:
        # seeding step: the second-order track copies the first-order one
        u_new, p_new = u1.copy(), p1.copy()
        diag = _diagnostics(ctx, state, u_new, p_new, t, 0, reports, None, 1, source)
        return _advance(state, u_new, p_new, 2), diag

    history = ctx.mass_free * (4.0 * dm.pack(state.u)[dm.free]
                               - dm.pack(state.u_prev)[dm.free]) / (2.0 * dt)
    conv = _explicit_convection_rhs(ctx, state, 2)
    guess = state.p.cell_values + dp1
    u_new, p_mid, reports2, _ = step_ac_o1(
        state, ctx, t, mass_coeff=3.0 / (2.0 * dt), history=history,
        pressure_guess=guess, convection_rhs=conv, track=(state.u, state.p))
    p_new = p_mid  # guess already includes dp1; update subtracted nu*eta*div
    diag = _diagnostics(ctx, state, u_new, p_new, t, 0, reports + reports2,
                        None, 2, source)
    return _advance(state, u_new, p_new, 2), diag


def _cell_norm_free(ctx, u_free_diff) -> float:
    w = ctx.mass_free
    return float(np.sqrt(np.abs(u_free_diff) @ (w * np.abs(u_free_diff))))


def _diagnostics(ctx, state, u_new, p_new, t, picard_iters, reports, w_last,
                 order, source) -> StepDiagnostics:
    scheme = ctx.scheme
    mesh = ctx.mesh
    ek = spaces.kinetic_energy(u_new, mesh)
    divn = float(np.sqrt(mesh.cell_measures @ (divergence_field(mesh, u_new) ** 2)))
    iters = sum(r.iterations for r in reports)
    res = max((r.residual for r in reports), default=0.0)
    diag = StepDiagnostics(n=state.n + 1, t=t, kinetic_energy=ek, divergence_norm=divn,
                           picard_iterations=picard_iters, solver_iterations=iters,
                           solver_residual=res, reports=reports)
    if (scheme.coupling == MONOLITHIC and order == 1 and scheme.convection == "implicit"
            and w_last is not None):
        dt = scheme.dt
        dm = ctx.dofs
        ek_prev = spaces.kinetic_energy(state.u, mesh)
        ek_diff = spaces.kinetic_energy(u_new - state.u, mesh)
        grad = scheme.nu * gradient_energy(mesh, ctx.system.config, u_new)
        upk = dm.pack(u_new)
        src = float(source @ upk)
        diag.energy_balance_residual = ek - ek_prev + ek_diff + dt * grad - dt * src
        from .operators import convection_form, coupling_form
        diag.convection_pairing = dt * convection_form(w_last, u_new, u_new, mesh)
        diag.pressure_pairing = dt * coupling_form(mesh, u_new, p_new)
    return diag


@dataclass
class RunResult:
    diagnostics: list[StepDiagnostics]
    state: StepState
    diverged: bool
    t_div: float | None
    n_steps: int
    errors: object = None
    telemetry: dict = field(default_factory=dict)


DIAGNOSTIC_CSV_HEADER = ("n,t,kinetic_energy,divergence_norm,picard_iterations,"
                         "solver_iterations,solver_residual,energy_balance_residual,"
                         "diverged")


def _select_stepper(scheme: SchemeConfig):
    if scheme.coupling == MONOLITHIC:
        return step_monolithic_o1 if scheme.order == 1 else step_monolithic_o2
    if scheme.order == 1:
        return step_ac_o1
    return step_ac_o2_bootstrap


def run_simulation(mesh: PolytopalMesh, scheme: SchemeConfig, problem: FlowProblem,
                   error_accumulator=None, diagnostics_path=None,
                   observer=None) -> RunResult:
    """March the configured scheme to the observation time.

    Stops early (flagging divergence) as soon as the kinetic energy exceeds
    1.1x its initial value.  When an error accumulator is supplied its
    add(t, u, p) hook runs at every time node and its report() lands in the
    result.
    """
    n_steps = int(round(scheme.t_end / scheme.dt))
    if n_steps < 1:
        raise StepError("observation time shorter than time step")
    if abs(scheme.t_end - n_steps * scheme.dt) > 0.01 * scheme.dt:
        logger.warning("t_end = %.6g is not a multiple of dt = %.6g; running %d steps",
                       scheme.t_end, scheme.dt, n_steps)
    ctx = RunOperators(mesh, scheme, problem)
    state = initialize(mesh, problem, scheme)
    ek0 = spaces.kinetic_energy(state.u, mesh)
    stepper = _select_stepper(scheme)

    diags: list[StepDiagnostics] = []
    diverged = False
    t_div = None
    fh = open(diagnostics_path, "w") if diagnostics_path else None
    if fh:
        fh.write(DIAGNOSTIC_CSV_HEADER + "\n")
    try:
        for n in range(1, n_steps + 1):
            t = n * scheme.dt
            state, diag = stepper(state, ctx, t)
            # flows started from rest grow from the forcing; the kinetic-energy
            # blowup criterion only makes sense against a nonzero initial energy
            if ek0 > 0.0 and diag.kinetic_energy > DIVERGENCE_FACTOR * ek0:
                diag.diverged = True
                diverged = True
                t_div = t
            diags.append(diag)
            if fh:
                ebr = ("" if diag.energy_balance_residual is None
                       else f"{diag.energy_balance_residual:.6e}")
                fh.write(f"{diag.n},{diag.t:.12g},{diag.kinetic_energy:.12e},"
                         f"{diag.divergence_norm:.6e},{diag.picard_iterations},"
                         f"{diag.solver_iterations},{diag.solver_residual:.3e},"
                         f"{ebr},{int(diag.diverged)}\n")
            if error_accumulator is not None and not diverged:
                error_accumulator.add(t, state.u, state.p)
            if observer is not None:
                observer(n, t, state)
            if diverged:
                break
    finally:
        if fh:
            fh.close()
    telemetry = {
        "factorizations": {str(k): lu.factor_time for k, lu in ctx._lus.items()},
        "inner_iterations": ctx.inner_iterations,
        "total_solver_iterations": int(sum(d.solver_iterations for d in diags)),
    }
    errors = error_accumulator.report() if (error_accumulator is not None
                                            and not diverged) else None
    return RunResult(diags, state, diverged, t_div, n_steps, errors, telemetry)
