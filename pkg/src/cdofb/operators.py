"""Discrete operators of the face-based scheme.

The velocity gradient is reconstructed cellwise as a piecewise-constant
tensor over the subpyramids: a consistent mean part

    Gc_cons(v) = |c|^-1 sum_f |f| (v_f - v_c) otimes n_fc

plus, on the subpyramid of face f', a stabilization residual

    alpha |f'|/|p_f'c| ((v_f' - v_c) - Gc_cons(v)(x_f' - x_c)) otimes n_f'c.

Diffusion is the L2 product of reconstructed gradients, the divergence is
the trace of the consistent part, the div-div form is its volume-weighted
square, and convection is a skew-symmetric face-flux form with an inflow
boundary term.  Assembly is batched over cell groups and emits CsrMatrix
blocks over a full velocity DoF vector (faces first, then cells); boundary
face DoFs are handled by restriction plus lifting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import CsrMatrix
from .mesh import PolytopalMesh
from .spaces import HybridVelocity, PressureField

DEFAULT_SOURCE_DEGREE = 6


@dataclass
class OperatorConfig:
    """Assembly parameters.

    stab_param is the positive gradient-stabilization coefficient; None
    selects 1/sqrt(d) (the hybrid finite-volume variant), while 1 recovers
    the generalized Crouzeix-Raviart scheme.
    """

    stab_param: float | None = None
    source_degree: int = DEFAULT_SOURCE_DEGREE

    def __post_init__(self):
        if self.stab_param is not None and self.stab_param <= 0:
            raise ValueError("stab_param must be positive")

    def stab(self, dim: int) -> float:
        return self.stab_param if self.stab_param is not None else 1.0 / np.sqrt(dim)


@dataclass
class DofMap:
    """Velocity DoF numbering: face blocks first, then cell blocks.

    The free subset drops boundary faces (their values are imposed data);
    pressure unknowns are numbered separately, one per cell.
    """

    n_faces: int
    n_cells: int
    dim: int
    free: np.ndarray = field(default=None)
    boundary: np.ndarray = field(default=None)

    @property
    def n_velocity(self) -> int:
        return (self.n_faces + self.n_cells) * self.dim

    def face_dofs(self, faces) -> np.ndarray:
        """(len(faces), d) full indices of face velocity DoFs."""
        faces = np.asarray(faces, dtype=np.int64)
        return faces[:, None] * self.dim + np.arange(self.dim)

    def cell_dofs(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        return (self.n_faces + cells)[:, None] * self.dim + np.arange(self.dim)

    @classmethod
    def build(cls, mesh: PolytopalMesh) -> "DofMap":
        dm = cls(mesh.n_faces, mesh.n_cells, mesh.dim)
        bdry = dm.face_dofs(mesh.boundary_faces).ravel()
        mask = np.ones(dm.n_velocity, dtype=bool)
        mask[bdry] = False
        dm.free = np.flatnonzero(mask)
        dm.boundary = bdry
        return dm

    def pack(self, v: HybridVelocity) -> np.ndarray:
        return np.concatenate([v.face_values.ravel(), v.cell_values.ravel()])

    def unpack(self, x: np.ndarray) -> HybridVelocity:
        nf = self.n_faces * self.dim
        return HybridVelocity(x[:nf].reshape(self.n_faces, self.dim),
                              x[nf:].reshape(self.n_cells, self.dim))

    def expand_free(self, x_free: np.ndarray, boundary_values: np.ndarray | None = None) -> np.ndarray:
        full = np.zeros(self.n_velocity)
        full[self.free] = x_free
        if boundary_values is not None:
            full[self.boundary] = boundary_values
        return full


# -- local gradient machinery -------------------------------------------------


def _group_gradient_vectors(mesh: PolytopalMesh, grp, alpha: float):
    """Per-subpyramid gradient coefficient vectors m[g, p, f, :].

    G(v)|_p = sum_f (v_f - v_c) otimes m[p, f] for each subpyramid p of the
    cell (one per face).
    """
    meas_c = mesh.cell_measures[grp.cells]
    cons = grp.face_measures[:, :, None] * grp.outward_normals / meas_c[:, None, None]
    dot = np.einsum("gfd,gpd->gpf", cons, grp.face_offsets)
    k = grp.nfaces
    coeff = np.eye(k)[None, :, :] - dot
    ratio = alpha * grp.face_measures / grp.pyramid_measures  # (g, k) over p
    m = cons[:, None, :, :] + (ratio[:, :, None] * coeff)[:, :, :, None] * grp.outward_normals[:, :, None, :]
    return cons, m


def _group_diffusion_scalar(mesh, grp, alpha):
    """Local scalar diffusion matrices over [face values..., cell value]."""
    _, m = _group_gradient_vectors(mesh, grp, alpha)
    s = np.einsum("gp,gpfd,gped->gfe", grp.pyramid_measures, m, m)
    k = grp.nfaces
    loc = np.empty((s.shape[0], k + 1, k + 1))
    loc[:, :k, :k] = s
    loc[:, :k, k] = -s.sum(axis=2)
    loc[:, k, :k] = -s.sum(axis=1)
    loc[:, k, k] = s.sum(axis=(1, 2))
    return loc


def _group_divergence(mesh, grp):
    """Divergence row coefficients: D_c(v) = sum_f coef_f . v_f + coef_c . v_c."""
    meas_c = mesh.cell_measures[grp.cells]
    coef_f = grp.face_measures[:, :, None] * grp.outward_normals / meas_c[:, None, None]
    coef_c = -coef_f.sum(axis=1)
    return coef_f, coef_c


def _scatter_scalar_blocks(dm: DofMap, grp, loc):
    """Triplets for a scalar local matrix applied identically per component."""
    d = dm.dim
    base = np.concatenate([grp.faces * d, dm.n_faces * d + grp.cells[:, None] * d], axis=1)
    k1 = base.shape[1]
    rows = np.repeat(base[:, :, None], k1, axis=2)
    cols = np.repeat(base[:, None, :], k1, axis=1)
    r, c, v = [], [], []
    for beta in range(d):
        r.append((rows + beta).ravel())
        c.append((cols + beta).ravel())
        v.append(loc.ravel())
    return np.concatenate(r), np.concatenate(c), np.concatenate(v)


def assemble_diffusion(mesh: PolytopalMesh, config: OperatorConfig | None = None,
                       dofmap: DofMap | None = None) -> CsrMatrix:
    """Global diffusion bilinear form on the full velocity DoF vector."""
    config = config or OperatorConfig()
    dm = dofmap or DofMap.build(mesh)
    alpha = config.stab(mesh.dim)
    rows, cols, vals = [], [], []
    for grp in mesh.cell_groups:
        loc = _group_diffusion_scalar(mesh, grp, alpha)
        r, c, v = _scatter_scalar_blocks(dm, grp, loc)
        rows.append(r), cols.append(c), vals.append(v)
    n = dm.n_velocity
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals), (n, n))


def assemble_divdiv(mesh: PolytopalMesh, dofmap: DofMap | None = None) -> CsrMatrix:
    """Global div-div form: sum_c |c| D_c(u) D_c(v)."""
    dm = dofmap or DofMap.build(mesh)
    d = dm.dim
    rows, cols, vals = [], [], []
    for grp in mesh.cell_groups:
        coef_f, coef_c = _group_divergence(mesh, grp)
        k = grp.nfaces
        w = np.concatenate([coef_f, coef_c[:, None, :]], axis=1).reshape(len(grp.cells), (k + 1) * d)
        loc = np.einsum("g,gi,gj->gij", mesh.cell_measures[grp.cells], w, w)
        base = np.concatenate([grp.faces * d, dm.n_faces * d + grp.cells[:, None] * d], axis=1)
        ids = (base[:, :, None] + np.arange(d)).reshape(len(grp.cells), (k + 1) * d)
        n1 = ids.shape[1]
        rows.append(np.repeat(ids[:, :, None], n1, axis=2).ravel())
        cols.append(np.repeat(ids[:, None, :], n1, axis=1).ravel())
        vals.append(loc.ravel())
    n = dm.n_velocity
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals), (n, n))


def assemble_coupling(mesh: PolytopalMesh, dofmap: DofMap | None = None) -> CsrMatrix:
    """Velocity-pressure coupling: row c holds -|c| D_c, shape (ncells, nvel)."""
    dm = dofmap or DofMap.build(mesh)
    d = dm.dim
    rows, cols, vals = [], [], []
    for grp in mesh.cell_groups:
        coef_f, coef_c = _group_divergence(mesh, grp)
        k = grp.nfaces
        meas = mesh.cell_measures[grp.cells]
        base = np.concatenate([grp.faces * d, dm.n_faces * d + grp.cells[:, None] * d], axis=1)
        ids = (base[:, :, None] + np.arange(d)).reshape(len(grp.cells), (k + 1) * d)
        coef = np.concatenate([coef_f, coef_c[:, None, :]], axis=1).reshape(len(grp.cells), (k + 1) * d)
        rows.append(np.repeat(grp.cells, (k + 1) * d))
        cols.append(ids.ravel())
        vals.append((-meas[:, None] * coef).ravel())
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals), (mesh.n_cells, dm.n_velocity))


def assemble_h1_gram(mesh: PolytopalMesh, dofmap: DofMap | None = None) -> CsrMatrix:
    """Gram matrix of the discrete H1-like seminorm on the full DoF vector."""
    dm = dofmap or DofMap.build(mesh)
    rows, cols, vals = [], [], []
    for grp in mesh.cell_groups:
        w = grp.face_measures / mesh.cell_diameters[grp.cells][:, None]
        k = grp.nfaces
        loc = np.zeros((len(grp.cells), k + 1, k + 1))
        idx = np.arange(k)
        loc[:, idx, idx] = w
        loc[:, :k, k] = -w
        loc[:, k, :k] = -w
        loc[:, k, k] = w.sum(axis=1)
        r, c, v = _scatter_scalar_blocks(dm, grp, loc)
        rows.append(r), cols.append(c), vals.append(v)
    n = dm.n_velocity
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals), (n, n))


def mass_diagonal(mesh: PolytopalMesh, dofmap: DofMap | None = None) -> np.ndarray:
    """Mass acts on cell velocity DoFs only: |c| per component, 0 on faces."""
    dm = dofmap or DofMap.build(mesh)
    diag = np.zeros(dm.n_velocity)
    diag[dm.cell_dofs(np.arange(mesh.n_cells))] = mesh.cell_measures[:, None]
    return diag


def assemble_source(mesh: PolytopalMesh, forcing, t: float,
                    dofmap: DofMap | None = None,
                    degree: int = DEFAULT_SOURCE_DEGREE) -> np.ndarray:
    """Source functional on cell velocity DoFs: integral of f(t) per cell."""
    dm = dofmap or DofMap.build(mesh)
    rhs = np.zeros(dm.n_velocity)
    if forcing is None:
        return rhs
    vals = mesh.integrate_cells(lambda X: forcing(t, X), degree=degree)
    rhs[dm.cell_dofs(np.arange(mesh.n_cells))] = np.atleast_2d(vals)
    return rhs


def assemble_mass_and_source(mesh: PolytopalMesh, forcing, t: float,
                             dofmap: DofMap | None = None,
                             degree: int = DEFAULT_SOURCE_DEGREE):
    return mass_diagonal(mesh, dofmap), assemble_source(mesh, forcing, t, dofmap, degree)


# -- convection ---------------------------------------------------------------


def _negative_part(x):
    return 0.5 * (np.abs(x) - x)


def convection_matrix(w: HybridVelocity, mesh: PolytopalMesh,
                      dofmap: DofMap | None = None) -> CsrMatrix:
    """Operator of u -> t(w; u, .) on the full velocity DoF vector."""
    dm = dofmap or DofMap.build(mesh)
    d = dm.dim
    rows, cols, vals = [], [], []
    for grp in mesh.cell_groups:
        wn = np.einsum("gkd,gkd->gk", w.face_values[grp.faces], grp.outward_normals)
        phi = 0.5 * grp.face_measures * wn
        fdof = grp.faces * d          # (g, k) component-0 ids
        cdof = dm.n_faces * d + grp.cells * d
        for beta in range(d):
            fi = fdof + beta
            ci = (cdof + beta)[:, None].repeat(grp.nfaces, axis=1)
            rows += [fi.ravel(), fi.ravel(), ci.ravel(), ci.ravel()]
            cols += [fi.ravel(), ci.ravel(), fi.ravel(), ci.ravel()]
            vals += [phi.ravel(), -phi.ravel(), phi.ravel(), -phi.ravel()]
    bf = mesh.boundary_faces
    if bf.size:
        wn_b = np.einsum("fd,fd->f", w.face_values[bf], mesh.face_normals[bf])
        inflow = mesh.face_measures[bf] * _negative_part(wn_b)
        for beta in range(d):
            ids = bf * d + beta
            rows.append(ids)
            cols.append(ids)
            vals.append(inflow)
    n = dm.n_velocity
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals), (n, n))


def convection_apply(w: HybridVelocity, u: HybridVelocity, mesh: PolytopalMesh,
                     dofmap: DofMap | None = None) -> np.ndarray:
    """Dual vector of t(w; u, .) over the full velocity DoF layout."""
    dm = dofmap or DofMap.build(mesh)
    out_f = np.zeros((mesh.n_faces, dm.dim))
    out_c = np.zeros((mesh.n_cells, dm.dim))
    for grp in mesh.cell_groups:
        wn = np.einsum("gkd,gkd->gk", w.face_values[grp.faces], grp.outward_normals)
        phi = 0.5 * grp.face_measures * wn
        diff = u.face_values[grp.faces] - u.cell_values[grp.cells][:, None, :]
        contrib = phi[:, :, None] * diff
        np.add.at(out_f, grp.faces, contrib)
        out_c[grp.cells] += contrib.sum(axis=1)
    bf = mesh.boundary_faces
    if bf.size:
        wn_b = np.einsum("fd,fd->f", w.face_values[bf], mesh.face_normals[bf])
        inflow = mesh.face_measures[bf] * _negative_part(wn_b)
        out_f[bf] += inflow[:, None] * u.face_values[bf]
    return np.concatenate([out_f.ravel(), out_c.ravel()])


def convection_form(w: HybridVelocity, u: HybridVelocity, v: HybridVelocity,
                    mesh: PolytopalMesh) -> float:
    """Direct evaluation of the trilinear form t(w; u, v)."""
    dm = DofMap(mesh.n_faces, mesh.n_cells, mesh.dim)
    return float(convection_apply(w, u, mesh, dm) @ dm.pack(v))


# -- direct (matrix-free) evaluations ----------------------------------------


def grad_reconstruct(mesh: PolytopalMesh, config: OperatorConfig, cell: int,
                     face_values: np.ndarray, cell_value: np.ndarray):
    """Reconstructed gradient on one cell.

    face_values has one d-vector per face of the cell (mesh.cell_faces
    order).  Returns (per_subpyramid_tensors (k, d, d), consistent (d, d)).
    """
    g, pos = mesh._cell_slot[cell]
    grp = mesh.cell_groups[g]
    alpha = config.stab(mesh.dim)
    cons_vec, m = _group_gradient_vectors(mesh, grp, alpha)
    diff = np.asarray(face_values) - np.asarray(cell_value)[None, :]
    consistent = np.einsum("fa,fb->ab", diff, cons_vec[pos])
    tensors = np.einsum("fa,pfb->pab", diff, m[pos])
    return tensors, consistent


def gradient_tensors(mesh: PolytopalMesh, config: OperatorConfig, u: HybridVelocity):
    """Per-subpyramid reconstructed gradients for a whole field.

    Returns (tensors (nsub, d, d), measures (nsub,), cells (nsub,)) in cell
    group order; sum(measures * |tensors|^2) is the squared gradient norm.
    """
    alpha = config.stab(mesh.dim)
    tens, meas, cells = [], [], []
    for grp in mesh.cell_groups:
        _, m = _group_gradient_vectors(mesh, grp, alpha)
        diff = u.face_values[grp.faces] - u.cell_values[grp.cells][:, None, :]
        tens.append(np.einsum("gfa,gpfb->gpab", diff, m).reshape(-1, mesh.dim, mesh.dim))
        meas.append(grp.pyramid_measures.ravel())
        cells.append(np.repeat(grp.cells, grp.nfaces))
    return np.concatenate(tens), np.concatenate(meas), np.concatenate(cells)


def gradient_energy(mesh: PolytopalMesh, config: OperatorConfig, u: HybridVelocity) -> float:
    """\\int |G(u)|^2 evaluated from the reconstructed tensors."""
    tens, meas, _ = gradient_tensors(mesh, config, u)
    return float(np.einsum("p,pab,pab->", meas, tens, tens))


def divergence(mesh: PolytopalMesh, cell: int, face_values, cell_value) -> float:
    """Local discrete divergence of one cell's hybrid values."""
    g, pos = mesh._cell_slot[cell]
    grp = mesh.cell_groups[g]
    diff = np.asarray(face_values) - np.asarray(cell_value)[None, :]
    return float(np.einsum("k,kd,kd->", grp.face_measures[pos], diff,
                           grp.outward_normals[pos])
                 / mesh.cell_measures[cell])


def divergence_field(mesh: PolytopalMesh, u: HybridVelocity) -> np.ndarray:
    """D_c(u) for every cell."""
    out = np.zeros(mesh.n_cells)
    for grp in mesh.cell_groups:
        diff = u.face_values[grp.faces] - u.cell_values[grp.cells][:, None, :]
        out[grp.cells] = (np.einsum("gk,gkd,gkd->g", grp.face_measures, diff,
                                    grp.outward_normals)
                          / mesh.cell_measures[grp.cells])
    return out


def divergence_norm(mesh: PolytopalMesh, u: HybridVelocity) -> float:
    """Volume-weighted L2 norm of the discrete divergence."""
    div = divergence_field(mesh, u)
    return float(np.sqrt(mesh.cell_measures @ (div * div)))


def coupling_form(mesh: PolytopalMesh, v: HybridVelocity, q: PressureField) -> float:
    """b(v, q) = -sum_c |c| D_c(v) q_c, evaluated directly."""
    return float(-(mesh.cell_measures * divergence_field(mesh, v)) @ q.cell_values)


# -- bundled system -----------------------------------------------------------


@dataclass
class GlobalSystem:
    """Assembled operator blocks of one run configuration."""

    mesh: PolytopalMesh
    dofs: DofMap
    config: OperatorConfig
    nu: float
    eta: float | None
    a_visc: CsrMatrix          # nu * diffusion, full DoFs
    divdiv: CsrMatrix | None   # nu * eta * divdiv, full DoFs
    coupling: CsrMatrix        # B, (ncells x nvel)
    mass_diag: np.ndarray      # (nvel,)

    @classmethod
    def assemble(cls, mesh: PolytopalMesh, config: OperatorConfig | None = None,
                 nu: float = 1.0, eta: float | None = None) -> "GlobalSystem":
        config = config or OperatorConfig()
        dm = DofMap.build(mesh)
        a = assemble_diffusion(mesh, config, dm).scaled(nu)
        dd = assemble_divdiv(mesh, dm).scaled(nu * eta) if eta is not None else None
        b = assemble_coupling(mesh, dm)
        return cls(mesh, dm, config, nu, eta, a, dd, b, mass_diagonal(mesh, dm))


def infsup_inputs(mesh: PolytopalMesh, config: OperatorConfig | None = None):
    """Coupling and norm Gram matrices on free DoFs for the inf-sup estimate.

    Returns (B_free, gram_velocity, gram_pressure); the velocity Gram is the
    H1-seminorm matrix (a norm on the homogeneous subspace) and the pressure
    Gram is the diagonal cell-measure matrix.
    """
    if mesh.n_cells < 2:
        raise ValueError("pressure space has no zero-mean subspace on a single-cell mesh")
    dm = DofMap.build(mesh)
    b = assemble_coupling(mesh, dm).submatrix(np.arange(mesh.n_cells), dm.free)
    gram_v = assemble_h1_gram(mesh, dm).submatrix(dm.free, dm.free)
    nc = mesh.n_cells
    gram_p = CsrMatrix.from_coo(np.arange(nc), np.arange(nc), mesh.cell_measures, (nc, nc))
    return b, gram_v, gram_p
