"""Hybrid velocity and cell pressure fields, projections, and discrete norms.

A hybrid velocity carries one d-vector per face and one per cell; a
pressure carries one scalar per cell.  Fields enter the library through
L2-orthogonal projections (entity means, computed with simplex-split
quadrature) and leave through CSV snapshots.  Smooth fields are callables
``f(t, points) -> values`` taking an (n, dim) array of positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import PolytopalMesh

DEFAULT_PROJECTION_DEGREE = 6


@dataclass
class HybridVelocity:
    face_values: np.ndarray  # (nfaces, d)
    cell_values: np.ndarray  # (ncells, d)

    def __post_init__(self):
        self.face_values = np.atleast_2d(np.asarray(self.face_values, dtype=np.float64))
        self.cell_values = np.atleast_2d(np.asarray(self.cell_values, dtype=np.float64))
        if self.face_values.shape[1] != self.cell_values.shape[1]:
            raise ValueError("face and cell values must share the component count")
        if not (np.all(np.isfinite(self.face_values)) and np.all(np.isfinite(self.cell_values))):
            raise ValueError("velocity values must be finite")

    @property
    def dim(self) -> int:
        return self.face_values.shape[1]

    def copy(self) -> "HybridVelocity":
        return HybridVelocity(self.face_values.copy(), self.cell_values.copy())

    def __add__(self, other):
        return HybridVelocity(self.face_values + other.face_values,
                              self.cell_values + other.cell_values)

    def __sub__(self, other):
        return HybridVelocity(self.face_values - other.face_values,
                              self.cell_values - other.cell_values)

    def __mul__(self, scalar):
        return HybridVelocity(scalar * self.face_values, scalar * self.cell_values)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, mesh: PolytopalMesh) -> "HybridVelocity":
        return cls(np.zeros((mesh.n_faces, mesh.dim)), np.zeros((mesh.n_cells, mesh.dim)))


@dataclass
class PressureField:
    cell_values: np.ndarray  # (ncells,)

    def __post_init__(self):
        self.cell_values = np.asarray(self.cell_values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.cell_values)):
            raise ValueError("pressure values must be finite")

    def copy(self) -> "PressureField":
        return PressureField(self.cell_values.copy())

    @classmethod
    def zeros(cls, mesh: PolytopalMesh) -> "PressureField":
        return cls(np.zeros(mesh.n_cells))


def _entity_means(mesh, kind, nent, measures, field, t, degree):
    pts, wts, owner = mesh.quadrature(kind, degree)
    flat = pts.reshape(-1, mesh.dim)
    vals = np.asarray(field(t, flat), dtype=np.float64)
    vals = vals.reshape(pts.shape[0], pts.shape[1], -1)
    acc = np.zeros((nent, vals.shape[2]))
    np.add.at(acc, owner, np.einsum("nq,nqm->nm", wts, vals))
    return acc / measures[:, None]


def project_velocity(mesh: PolytopalMesh, field, t: float = 0.0,
                     degree: int = DEFAULT_PROJECTION_DEGREE) -> HybridVelocity:
    """L2-orthogonal projection of a smooth vector field: face and cell means."""
    fv = _entity_means(mesh, "face", mesh.n_faces, mesh.face_measures, field, t, degree)
    cv = _entity_means(mesh, "cell", mesh.n_cells, mesh.cell_measures, field, t, degree)
    if fv.shape[1] != mesh.dim:
        raise ValueError(f"velocity field must return {mesh.dim} components")
    return HybridVelocity(fv, cv)


def project_pressure(mesh: PolytopalMesh, field, t: float = 0.0,
                     degree: int = DEFAULT_PROJECTION_DEGREE) -> PressureField:
    """Cellwise means of a smooth scalar field."""
    cv = _entity_means(mesh, "cell", mesh.n_cells, mesh.cell_measures, field, t, degree)
    if cv.shape[1] != 1:
        raise ValueError("pressure field must return one component")
    return PressureField(cv[:, 0])


def boundary_face_means(mesh: PolytopalMesh, field, t: float,
                        degree: int = DEFAULT_PROJECTION_DEGREE) -> np.ndarray:
    """Means of a vector field over the boundary faces only, (nbfaces, d)."""
    pts, wts, owner = mesh.quadrature("boundary_face", degree)
    flat = pts.reshape(-1, mesh.dim)
    vals = np.asarray(field(t, flat), dtype=np.float64)
    vals = vals.reshape(pts.shape[0], pts.shape[1], -1)
    acc = np.zeros((mesh.n_faces, vals.shape[2]))
    np.add.at(acc, owner, np.einsum("nq,nqm->nm", wts, vals))
    bf = mesh.boundary_faces
    return acc[bf] / mesh.face_measures[bf, None]


def apply_dirichlet(velocity: HybridVelocity, mesh: PolytopalMesh, boundary_data,
                    t: float, degree: int = DEFAULT_PROJECTION_DEGREE) -> HybridVelocity:
    """Overwrite boundary face values with face means of the boundary data."""
    out = velocity.copy()
    if mesh.boundary_faces.size == 0:
        return out
    out.face_values[mesh.boundary_faces] = boundary_face_means(mesh, boundary_data, t, degree)
    return out


def zero_boundary(velocity: HybridVelocity, mesh: PolytopalMesh) -> HybridVelocity:
    """Member of the homogeneous subspace: boundary face values set to zero."""
    out = velocity.copy()
    out.face_values[mesh.boundary_faces] = 0.0
    return out


def zero_mean_adjust(p: PressureField, mesh: PolytopalMesh) -> PressureField:
    """Subtract the volume-weighted mean; idempotent."""
    mean = mesh.cell_measures @ p.cell_values / mesh.cell_measures.sum()
    return PressureField(p.cell_values - mean)


def pressure_mean(p: PressureField, mesh: PolytopalMesh) -> float:
    return float(mesh.cell_measures @ p.cell_values / mesh.cell_measures.sum())


def kinetic_energy(v: HybridVelocity, mesh: PolytopalMesh) -> float:
    """Half the squared cell-based L2 norm of the velocity."""
    return 0.5 * float(np.einsum("c,cd,cd->", mesh.cell_measures,
                                 v.cell_values, v.cell_values))


def cell_l2_norm(values: np.ndarray, mesh: PolytopalMesh) -> float:
    """Volume-weighted L2 norm of cellwise data (scalar or vector)."""
    values = np.asarray(values)
    if values.ndim == 1:
        return float(np.sqrt(mesh.cell_measures @ (values * values)))
    return float(np.sqrt(np.einsum("c,cd,cd->", mesh.cell_measures, values, values)))


def h1_seminorm(v: HybridVelocity, mesh: PolytopalMesh) -> float:
    """Discrete H1-like seminorm: sum_c sum_f h_c^-1 |f| |v_f - v_c|^2, rooted."""
    total = 0.0
    for grp in mesh.cell_groups:
        diff = v.face_values[grp.faces] - v.cell_values[grp.cells][:, None, :]
        hinv = 1.0 / mesh.cell_diameters[grp.cells]
        total += np.einsum("g,gk,gkd,gkd->", hinv, grp.face_measures, diff, diff)
    return float(np.sqrt(total))


def write_velocity_csv(v: HybridVelocity, path):
    """Snapshot as CSV rows (entity kind, entity id, component index, value)."""
    with open(path, "w") as fh:
        fh.write("kind,id,component,value\n")
        for kind, arr in (("face", v.face_values), ("cell", v.cell_values)):
            for i, row in enumerate(arr):
                for comp, val in enumerate(row):
                    fh.write(f"{kind},{i},{comp},{val:.17g}\n")


def write_pressure_csv(p: PressureField, path):
    with open(path, "w") as fh:
        fh.write("kind,id,component,value\n")
        for i, val in enumerate(p.cell_values):
            fh.write(f"cell,{i},0,{val:.17g}\n")
