"""Polytopal mesh data model and geometry derivation.

Cells are arbitrary polygons (2D) or polyhedra with planar faces (3D),
described by faces (vertex loops) and signed face references per cell.
Geometry is derived once at construction: barycenters, measures,
diameters, unit face normals with a fixed global orientation (outward at
the boundary, low cell id to high cell id inside), and the subpyramid
measures obtained by coning each face to the cell barycenter.  Meshes
are immutable after construction and safe to share read-only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..quadrature import map_to_simplices, simplex_rule

logger = logging.getLogger(__name__)

PLANARITY_RTOL = 1e-10


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


def _ragged_ranges(starts, lengths):
    """Concatenation of arange(s, s+l) for each (s, l) pair."""
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(lengths)
    out = np.repeat(starts, lengths) + np.arange(total) - np.repeat(ends - lengths, lengths)
    return out


@dataclass(eq=False)
class CellGroup:
    """Cells sharing the same face count, batched for vectorized assembly."""

    nfaces: int
    cells: np.ndarray            # (g,) cell ids
    faces: np.ndarray            # (g, k) face ids
    outward_normals: np.ndarray  # (g, k, d) n_fc
    face_measures: np.ndarray    # (g, k)
    pyramid_measures: np.ndarray  # (g, k)
    face_offsets: np.ndarray     # (g, k, d) x_f - x_c
    is_boundary: np.ndarray      # (g, k) bool


@dataclass(eq=False)
class PolytopalMesh:
    dim: int
    vertices: np.ndarray                  # (nv, dim)
    face_vertices: list[np.ndarray]       # vertex loop per face
    cell_faces: list[np.ndarray]          # face ids per cell
    cell_face_signs: list[np.ndarray]     # +1 if n_f points outward of the cell

    face_normals: np.ndarray = field(default=None, repr=False)
    face_barycenters: np.ndarray = field(default=None, repr=False)
    face_measures: np.ndarray = field(default=None, repr=False)
    cell_barycenters: np.ndarray = field(default=None, repr=False)
    cell_measures: np.ndarray = field(default=None, repr=False)
    cell_diameters: np.ndarray = field(default=None, repr=False)
    face_cells: np.ndarray = field(default=None, repr=False)   # (nf, 2), -1 when absent
    boundary_faces: np.ndarray = field(default=None, repr=False)
    interior_faces: np.ndarray = field(default=None, repr=False)
    cell_groups: list[CellGroup] = field(default=None, repr=False)

    # -- basic queries -------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cell_faces)

    @property
    def mesh_size(self) -> float:
        return float(self.cell_diameters.max())

    def pyramid_measures(self, cell: int) -> np.ndarray:
        """|p_fc| for the faces of one cell, in cell_faces order."""
        g, pos = self._cell_slot[cell]
        return self.cell_groups[g].pyramid_measures[pos]

    def outward_normals(self, cell: int) -> np.ndarray:
        g, pos = self._cell_slot[cell]
        return self.cell_groups[g].outward_normals[pos]

    def face_simplices(self):
        """(simplex_vertices, face_of_simplex): faces split at their barycenters."""
        return self._face_simplices

    def cell_simplices(self):
        """(simplex_vertices, cell_of_simplex): face simplices coned to x_c."""
        return self._cell_simplices

    def subpyramid_simplices(self):
        """(simplex_vertices, cell_of_simplex, face_of_simplex)."""
        verts, cells = self._cell_simplices
        return verts, cells, self._cell_simplex_faces

    # -- construction --------------------------------------------------------

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        if self.dim not in (2, 3):
            raise MeshError(f"dim must be 2 or 3, got {self.dim}")
        if self.vertices.ndim != 2 or self.vertices.shape[1] != self.dim:
            raise MeshError("vertex array must have shape (n, dim)")
        if len(self.cell_faces) == 0:
            raise MeshError("mesh has no cells")
        self.face_vertices = [np.asarray(f, dtype=np.int64) for f in self.face_vertices]
        self.cell_faces = [np.asarray(c, dtype=np.int64) for c in self.cell_faces]
        self.cell_face_signs = [np.asarray(s, dtype=np.int64) for s in self.cell_face_signs]
        self._flatten()
        self._check_topology()
        self._face_geometry()
        self._build_face_simplices()
        self._cell_geometry()
        self._orient()
        self._build_groups()
        self._build_cell_simplices()
        self.validate()

    def _flatten(self):
        nc = self.n_cells
        counts = np.array([c.size for c in self.cell_faces], dtype=np.int64)
        self._cf_offsets = np.concatenate([[0], np.cumsum(counts)])
        self._cf_faces = (np.concatenate(self.cell_faces) if counts.sum()
                          else np.empty(0, dtype=np.int64))
        self._cf_cells = np.repeat(np.arange(nc, dtype=np.int64), counts)
        # group faces by loop length
        fsizes = np.array([f.size for f in self.face_vertices], dtype=np.int64)
        self._face_size_groups = []
        for L in np.unique(fsizes):
            ids = np.flatnonzero(fsizes == L)
            loops = np.stack([self.face_vertices[f] for f in ids])
            self._face_size_groups.append((int(L), ids, loops))

    def _check_topology(self):
        nv, nf, nc = self.n_vertices, self.n_faces, self.n_cells
        for L, ids, loops in self._face_size_groups:
            if self.dim == 2 and L != 2:
                raise MeshError(f"face {ids[0]} must be a vertex pair in 2D")
            if self.dim == 3 and L < 3:
                raise MeshError(f"face {ids[0]} has fewer than 3 vertices")
            if loops.min() < 0 or loops.max() >= nv:
                rr, cc = np.nonzero((loops < 0) | (loops >= nv))
                raise MeshError(
                    f"face {ids[rr[0]]} references vertex {loops[rr[0], cc[0]]} of {nv}")
            srt = np.sort(loops, axis=1)
            if np.any(srt[:, 1:] == srt[:, :-1]):
                bad = ids[np.any(srt[:, 1:] == srt[:, :-1], axis=1)][0]
                raise MeshError(f"face {bad} repeats a vertex")
        counts = np.diff(self._cf_offsets)
        if np.any(counts < self.dim + 1):
            raise MeshError(f"cell {int(np.argmin(counts))} has fewer than "
                            f"{self.dim + 1} faces")
        for c, s in enumerate(self.cell_face_signs):
            if s.size != self.cell_faces[c].size or np.any(np.abs(s) != 1):
                raise MeshError(f"cell {c} has malformed orientation signs")
        if self._cf_faces.size and (self._cf_faces.min() < 0 or self._cf_faces.max() >= nf):
            bad = np.flatnonzero((self._cf_faces < 0) | (self._cf_faces >= nf))[0]
            raise MeshError(f"cell {self._cf_cells[bad]} references face "
                            f"{self._cf_faces[bad]} of {nf}")
        inc = np.bincount(self._cf_faces, minlength=nf)
        if np.any(inc == 0):
            raise MeshError(f"face {int(np.argmin(inc))} belongs to no cell")
        if np.any(inc > 2):
            raise MeshError(f"face {int(np.argmax(inc))} belongs to more than 2 cells")
        order = np.argsort(self._cf_faces, kind="stable")
        foff = np.concatenate([[0], np.cumsum(inc)])
        self.face_cells = np.full((nf, 2), -1, dtype=np.int64)
        owner = self._cf_cells[order]
        self.face_cells[:, 0] = owner[foff[:-1]]
        two = inc == 2
        self.face_cells[two, 1] = owner[foff[:-1][two] + 1]
        both = self.face_cells[two]
        self.face_cells[two, 0] = both.min(axis=1)
        self.face_cells[two, 1] = both.max(axis=1)
        self.boundary_faces = np.flatnonzero(inc == 1)
        self.interior_faces = np.flatnonzero(inc == 2)

    def _face_geometry(self):
        d = self.dim
        nf = self.n_faces
        normals = np.empty((nf, d))
        bary = np.empty((nf, d))
        meas = np.empty(nf)
        for L, ids, loops in self._face_size_groups:
            pts = self.vertices[loops]  # (m, L, d)
            if d == 2:
                v0, v1 = pts[:, 0], pts[:, 1]
                tang = v1 - v0
                ln = np.hypot(tang[:, 0], tang[:, 1])
                if np.any(ln <= 0):
                    raise MeshError(f"face {ids[int(np.argmin(ln))]} has zero measure")
                meas[ids] = ln
                bary[ids] = 0.5 * (v0 + v1)
                normals[ids, 0] = tang[:, 1] / ln
                normals[ids, 1] = -tang[:, 0] / ln
            else:
                anchor = pts.mean(axis=1)
                a = pts - anchor[:, None, :]
                b = np.roll(pts, -1, axis=1) - anchor[:, None, :]
                cross = np.cross(a, b)
                area_vec = 0.5 * cross.sum(axis=1)
                nrm = np.linalg.norm(area_vec, axis=1)
                if np.any(nrm <= 0):
                    raise MeshError(f"face {ids[int(np.argmin(nrm))]} has zero measure")
                tri_area = 0.5 * np.linalg.norm(cross, axis=2)
                tri_ctr = (anchor[:, None, :] + pts + np.roll(pts, -1, axis=1)) / 3.0
                meas[ids] = tri_area.sum(axis=1)
                bary[ids] = np.einsum("mt,mtd->md", tri_area, tri_ctr) / meas[ids][:, None]
                normals[ids] = area_vec / nrm[:, None]
        self.face_normals = normals
        self.face_barycenters = bary
        self.face_measures = meas

    def _build_face_simplices(self):
        d = self.dim
        nf = self.n_faces
        if d == 2:
            verts = np.stack([self.vertices[[f[0] for f in self.face_vertices]],
                              self.vertices[[f[1] for f in self.face_vertices]]], axis=1)
            self._face_simplices = (verts, np.arange(nf, dtype=np.int64))
            self._fs_offsets = np.arange(nf + 1, dtype=np.int64)
            return
        chunks, owners = [], []
        for L, ids, loops in self._face_size_groups:
            pts = self.vertices[loops]
            sim = np.empty((ids.size, L, 3, 3))
            sim[:, :, 0, :] = self.face_barycenters[ids][:, None, :]
            sim[:, :, 1, :] = pts
            sim[:, :, 2, :] = np.roll(pts, -1, axis=1)
            chunks.append(sim.reshape(-1, 3, 3))
            owners.append(np.repeat(ids, L))
        verts = np.concatenate(chunks, axis=0)
        owner = np.concatenate(owners)
        order = np.argsort(owner, kind="stable")
        verts, owner = verts[order], owner[order]
        counts = np.bincount(owner, minlength=nf)
        self._face_simplices = (verts, owner)
        self._fs_offsets = np.concatenate([[0], np.cumsum(counts)])

    def _cell_geometry(self):
        """Cell measures and centroids, exact via simplex fans from an anchor."""
        d = self.dim
        nc = self.n_cells
        fs_verts, _ = self._face_simplices
        fs_counts = np.diff(self._fs_offsets)
        lens = fs_counts[self._cf_faces]
        rows = _ragged_ranges(self._fs_offsets[self._cf_faces], lens)
        sim_cells = np.repeat(self._cf_cells, lens)
        base = fs_verts[rows]  # (nsim, d, d)

        # anchor: mean of the cell's face barycenters (inside for star-shaped cells)
        fb = self.face_barycenters[self._cf_faces]
        cnt = np.diff(self._cf_offsets).astype(float)
        anchor = np.zeros((nc, d))
        np.add.at(anchor, self._cf_cells, fb)
        anchor /= cnt[:, None]

        edges = base - anchor[sim_cells][:, None, :]
        vol = np.abs(np.linalg.det(edges)) / (2.0 if d == 2 else 6.0)
        ctr = (base.sum(axis=1) + anchor[sim_cells]) / (d + 1)

        meas = np.zeros(nc)
        np.add.at(meas, sim_cells, vol)
        if np.any(meas <= 0):
            raise MeshError(f"cell {int(np.argmin(meas))} has zero measure")
        wctr = np.zeros((nc, d))
        np.add.at(wctr, sim_cells, vol[:, None] * ctr)
        self.cell_measures = meas
        self.cell_barycenters = wctr / meas[:, None]

        # diameters: max pairwise distance over the (duplicated) loop vertices
        diam = np.empty(nc)
        sizes = np.diff(self._cf_offsets)
        fsize = np.array([f.size for f in self.face_vertices])
        for k in np.unique(sizes):
            cells = np.flatnonzero(sizes == k)
            faces = np.stack([self.cell_faces[c] for c in cells])
            per_face = fsize[faces]  # (g, k)
            if np.all(per_face == per_face.flat[0]):
                L = int(per_face.flat[0])
                vids = np.stack([np.concatenate([self.face_vertices[f] for f in self.cell_faces[c]])
                                 for c in cells])
                pts = self.vertices[vids]  # (g, k*L, d)
                diff = pts[:, :, None, :] - pts[:, None, :, :]
                diam[cells] = np.sqrt(np.einsum("gijd,gijd->gij", diff, diff).max(axis=(1, 2)))
            else:
                for c in cells:
                    vv = np.unique(np.concatenate([self.face_vertices[f]
                                                   for f in self.cell_faces[c]]))
                    pts = self.vertices[vv]
                    diff = pts[:, None, :] - pts[None, :, :]
                    diam[c] = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff).max())
        self.cell_diameters = diam

    def _orient(self):
        """Fix global normals (outward / low-to-high) and rebase cell signs."""
        ref_cell = self.face_cells[:, 0]  # lower id inside, only cell at the boundary
        towards = self.face_barycenters - self.cell_barycenters[ref_cell]
        flip = np.einsum("fd,fd->f", self.face_normals, towards) < 0.0
        self.face_normals[flip] *= -1.0

        heights = np.einsum("id,id->i",
                            self.face_normals[self._cf_faces],
                            self.face_barycenters[self._cf_faces]
                            - self.cell_barycenters[self._cf_cells])
        if np.any(heights == 0.0):
            c = self._cf_cells[np.flatnonzero(heights == 0.0)[0]]
            raise MeshError(f"cell {c} has a face through its barycenter")
        derived = np.where(heights > 0, 1, -1).astype(np.int64)
        # stored signs describe the input loop orientation; rebase them onto
        # the fixed global normal orientation derived from the geometry
        for c in range(self.n_cells):
            self.cell_face_signs[c] = derived[self._cf_offsets[c]:self._cf_offsets[c + 1]]

    def _build_groups(self):
        d = self.dim
        sizes = np.diff(self._cf_offsets)
        self.cell_groups = []
        self._cell_slot = np.empty((self.n_cells, 2), dtype=np.int64)
        bset = np.zeros(self.n_faces, dtype=bool)
        bset[self.boundary_faces] = True
        for g, k in enumerate(np.unique(sizes)):
            cells = np.flatnonzero(sizes == k)
            faces = np.stack([self.cell_faces[c] for c in cells])
            signs = np.stack([self.cell_face_signs[c] for c in cells])
            n_fc = self.face_normals[faces] * signs[:, :, None]
            fmeas = self.face_measures[faces]
            offsets = self.face_barycenters[faces] - self.cell_barycenters[cells][:, None, :]
            heights = np.einsum("gkd,gkd->gk", n_fc, offsets)
            pyr = fmeas * heights / d
            self.cell_groups.append(CellGroup(int(k), cells, faces, n_fc, fmeas,
                                              pyr, offsets, bset[faces]))
            self._cell_slot[cells, 0] = g
            self._cell_slot[cells, 1] = np.arange(cells.size)
        if any(np.any(grp.pyramid_measures <= 0) for grp in self.cell_groups):
            logger.warning("mesh has non-positive subpyramid volumes; "
                           "a cell is not star-shaped with respect to its barycenter")

    def _build_cell_simplices(self):
        d = self.dim
        fs_verts, _ = self._face_simplices
        fs_counts = np.diff(self._fs_offsets)
        lens = fs_counts[self._cf_faces]
        rows = _ragged_ranges(self._fs_offsets[self._cf_faces], lens)
        sim_cells = np.repeat(self._cf_cells, lens)
        sim_faces = np.repeat(self._cf_faces, lens)
        base = fs_verts[rows]
        cone = np.empty((rows.size, d + 1, d))
        cone[:, 0, :] = self.cell_barycenters[sim_cells]
        cone[:, 1:, :] = base
        self._cell_simplices = (cone, sim_cells)
        self._cell_simplex_faces = sim_faces

    # -- validation ----------------------------------------------------------

    def validate(self, rtol: float = 1e-12):
        """Check the structural mesh invariants; raises MeshError on failure."""
        if np.any(self.face_measures <= 0):
            raise MeshError("a face has non-positive measure")
        if np.any(self.cell_measures <= 0):
            raise MeshError("a cell has non-positive measure")
        if self.dim == 3:
            self._check_planarity()
        for grp in self.cell_groups:
            closure = np.einsum("gk,gkd->gd", grp.face_measures, grp.outward_normals)
            scale = np.einsum("gk->g", grp.face_measures)
            worst = np.abs(closure).max(axis=1) / scale
            if np.any(worst > rtol):
                c = grp.cells[int(np.argmax(worst))]
                raise MeshError(f"cell {c} boundary does not close (defect {worst.max():.2e})")
            vol = grp.pyramid_measures.sum(axis=1)
            err = np.abs(vol - self.cell_measures[grp.cells]) / self.cell_measures[grp.cells]
            if np.any(err > rtol):
                c = grp.cells[int(np.argmax(err))]
                raise MeshError(f"cell {c}: subpyramids do not partition the cell "
                                f"(defect {err.max():.2e})")

    def _check_planarity(self):
        for L, ids, loops in self._face_size_groups:
            pts = self.vertices[loops]
            dev = np.abs(np.einsum("mld,md->ml",
                                   pts - self.face_barycenters[ids][:, None, :],
                                   self.face_normals[ids])).max(axis=1)
            hc = np.where(self.face_cells[ids, 1] >= 0,
                          np.minimum(self.cell_diameters[self.face_cells[ids, 0]],
                                     self.cell_diameters[self.face_cells[ids, 1]]),
                          self.cell_diameters[self.face_cells[ids, 0]])
            bad = dev > PLANARITY_RTOL * hc
            if np.any(bad):
                f = ids[bad][0]
                raise MeshError(f"face {f} is not planar within tolerance "
                                f"(deviation {dev[bad][0]:.2e})")

    # -- convenience ---------------------------------------------------------

    def translated(self, shift) -> "PolytopalMesh":
        """New mesh with all vertices shifted (geometry recomputed)."""
        shift = np.asarray(shift, dtype=np.float64)
        return PolytopalMesh(self.dim, self.vertices + shift,
                             [f.copy() for f in self.face_vertices],
                             [c.copy() for c in self.cell_faces],
                             [s.copy() for s in self.cell_face_signs])

    def quadrature(self, kind: str, degree: int):
        """Cached quadrature data: (points, weights, owner) arrays.

        kind is "cell", "face" or "boundary_face"; points have shape
        (nsimplices, npts, dim), weights include the simplex measures, owner
        maps each simplex to its cell or face id.
        """
        cache = getattr(self, "_quad_cache", None)
        if cache is None:
            cache = self._quad_cache = {}
        key = (kind, degree)
        if key not in cache:
            if kind == "cell":
                verts, owner = self._cell_simplices
                rule = simplex_rule(self.dim, degree)
            elif kind == "face":
                verts, owner = self._face_simplices
                rule = simplex_rule(self.dim - 1, degree)
            elif kind == "boundary_face":
                verts, owner = self._face_simplices
                onb = np.zeros(self.n_faces, dtype=bool)
                onb[self.boundary_faces] = True
                keep = onb[owner]
                verts, owner = verts[keep], owner[keep]
                rule = simplex_rule(self.dim - 1, degree)
            else:
                raise ValueError(f"unknown quadrature kind '{kind}'")
            pts, wts = map_to_simplices(rule, verts)
            cache[key] = (pts, wts, owner)
        return cache[key]

    def _integrate(self, kind, nent, func, degree):
        pts, wts, owner = self.quadrature(kind, degree)
        vals = np.asarray(func(pts.reshape(-1, self.dim)), dtype=np.float64)
        vals = vals.reshape(pts.shape[0], pts.shape[1], -1)
        sim = np.einsum("nq,nqm->nm", wts, vals)
        out = np.zeros((nent, sim.shape[1]))
        np.add.at(out, owner, sim)
        return out[:, 0] if out.shape[1] == 1 else out

    def integrate_cells(self, func, degree: int = 6) -> np.ndarray:
        """Cellwise integrals of a vectorized function of position.

        func maps points (n, dim) to scalars (n,) or vectors (n, m); returns
        per-cell integrals of shape (ncells,) or (ncells, m).
        """
        return self._integrate("cell", self.n_cells, func, degree)

    def integrate_faces(self, func, degree: int = 6) -> np.ndarray:
        """Facewise integrals of a vectorized function of position."""
        return self._integrate("face", self.n_faces, func, degree)
