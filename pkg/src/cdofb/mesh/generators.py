"""Built-in mesh generators: Cartesian boxes and clipped Voronoi polygons."""

from __future__ import annotations

import math

import numpy as np

from .core import MeshError, PolytopalMesh


def _normalize_box(box, dim):
    box = np.asarray(box, dtype=np.float64)
    if box.shape == (2 * dim,):
        box = box.reshape(dim, 2)
    if box.shape != (dim, 2):
        raise MeshError(f"box must give (lo, hi) per axis, got shape {box.shape}")
    if np.any(box[:, 1] - box[:, 0] <= 0):
        raise MeshError("box extents must be positive")
    return box


def build_cartesian(dim: int, cells_per_axis, box=None) -> PolytopalMesh:
    """Tensor-product mesh of an axis-aligned box.

    cells_per_axis is one positive integer per axis; box defaults to the
    unit square/cube.
    """
    if dim not in (2, 3):
        raise MeshError("dim must be 2 or 3")
    n = np.asarray(cells_per_axis, dtype=np.int64)
    if n.ndim == 0:
        n = np.full(dim, int(n))
    if n.size != dim or np.any(n < 1):
        raise MeshError("cells_per_axis must be positive, one entry per axis")
    box = _normalize_box(box if box is not None else [[0.0, 1.0]] * dim, dim)

    axes = [np.linspace(box[a, 0], box[a, 1], n[a] + 1) for a in range(dim)]
    if dim == 2:
        return _cartesian_2d(n, axes)
    return _cartesian_3d(n, axes)


def _cartesian_2d(n, axes):
    nx, ny = int(n[0]), int(n[1])
    xs, ys = axes
    vid = lambda i, j: j * (nx + 1) + i
    verts = np.array([[xs[i], ys[j]] for j in range(ny + 1) for i in range(nx + 1)])

    faces = []
    vface = {}
    for j in range(ny):
        for i in range(nx + 1):
            vface[(i, j)] = len(faces)
            faces.append([vid(i, j), vid(i, j + 1)])
    hface = {}
    for j in range(ny + 1):
        for i in range(nx):
            hface[(i, j)] = len(faces)
            faces.append([vid(i, j), vid(i + 1, j)])

    cells, signs = [], []
    for j in range(ny):
        for i in range(nx):
            cells.append([vface[(i, j)], vface[(i + 1, j)], hface[(i, j)], hface[(i, j + 1)]])
            signs.append([-1, 1, -1, 1])
    return PolytopalMesh(2, verts, [np.array(f) for f in faces],
                         [np.array(c) for c in cells], [np.array(s) for s in signs])


def _cartesian_3d(n, axes):
    nx, ny, nz = (int(v) for v in n)
    xs, ys, zs = axes
    vid = lambda i, j, k: (k * (ny + 1) + j) * (nx + 1) + i
    verts = np.array([[xs[i], ys[j], zs[k]]
                      for k in range(nz + 1) for j in range(ny + 1) for i in range(nx + 1)])

    faces = []
    xface, yface, zface = {}, {}, {}
    for k in range(nz):
        for j in range(ny):
            for i in range(nx + 1):
                xface[(i, j, k)] = len(faces)
                faces.append([vid(i, j, k), vid(i, j + 1, k), vid(i, j + 1, k + 1), vid(i, j, k + 1)])
    for k in range(nz):
        for j in range(ny + 1):
            for i in range(nx):
                yface[(i, j, k)] = len(faces)
                faces.append([vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j, k + 1), vid(i, j, k + 1)])
    for k in range(nz + 1):
        for j in range(ny):
            for i in range(nx):
                zface[(i, j, k)] = len(faces)
                faces.append([vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k)])

    cells, signs = [], []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                cells.append([xface[(i, j, k)], xface[(i + 1, j, k)],
                              yface[(i, j, k)], yface[(i, j + 1, k)],
                              zface[(i, j, k)], zface[(i, j, k + 1)]])
                signs.append([-1, 1, -1, 1, -1, 1])
    return PolytopalMesh(3, verts, [np.array(f) for f in faces],
                         [np.array(c) for c in cells], [np.array(s) for s in signs])


def build_voronoi_polygonal_2d(n_seeds: int, box=None, jitter: float = 0.3,
                               rng_seed: int = 0) -> PolytopalMesh:
    """Voronoi polygons of a jittered lattice, clipped exactly to the box.

    n_seeds must be a perfect square (the seeds form a jittered sqrt(n) by
    sqrt(n) lattice); jitter is a fraction of the lattice spacing in [0, 0.5).
    Seeds are mirrored across the four box edges so every clipped cell is the
    exact intersection of its Voronoi region with the box.  Deterministic for
    a fixed rng_seed.
    """
    from scipy.spatial import Voronoi

    if n_seeds < 4:
        raise MeshError("need at least 4 seeds")
    side = int(round(math.sqrt(n_seeds)))
    if side * side != n_seeds:
        raise MeshError(f"n_seeds must be a perfect square, got {n_seeds}")
    if not 0.0 <= jitter < 0.5:
        raise MeshError("jitter must lie in [0, 0.5)")
    box = _normalize_box(box if box is not None else [[0.0, 1.0]] * 2, 2)
    lo, hi = box[:, 0], box[:, 1]
    spacing = (hi - lo) / side

    rng = np.random.default_rng(rng_seed)
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    lattice = np.column_stack([(ii.ravel() + 0.5), (jj.ravel() + 0.5)])
    for attempt in range(10):
        seeds = lo + (lattice + jitter * rng.uniform(-1.0, 1.0, lattice.shape)) * spacing
        d2 = np.sum((seeds[:, None, :] - seeds[None, :, :]) ** 2, axis=2) if n_seeds <= 2048 else None
        if d2 is not None:
            np.fill_diagonal(d2, np.inf)
            min_d = math.sqrt(d2.min())
        else:
            # grid construction keeps distant seeds apart; check lattice neighbors only
            grid = seeds.reshape(side, side, 2)
            dx = np.linalg.norm(grid[1:, :] - grid[:-1, :], axis=2).min()
            dy = np.linalg.norm(grid[:, 1:] - grid[:, :-1], axis=2).min()
            dd = np.linalg.norm(grid[1:, 1:] - grid[:-1, :-1], axis=2).min()
            da = np.linalg.norm(grid[1:, :-1] - grid[:-1, 1:], axis=2).min()
            min_d = min(dx, dy, dd, da)
        if min_d > 1e-9 * spacing.min():
            break
    else:
        raise MeshError("could not generate distinct seeds after 10 attempts")

    mirrored = [seeds]
    for axis in range(2):
        for bound in (lo[axis], hi[axis]):
            m = seeds.copy()
            m[:, axis] = 2.0 * bound - m[:, axis]
            mirrored.append(m)
    allpts = np.vstack(mirrored)
    vor = Voronoi(allpts)

    # quantized vertex merge keeps shared polygon edges bitwise identical
    scale = max(hi - lo)
    quant = 1e-9 * scale
    vert_index: dict[tuple, int] = {}
    verts: list[np.ndarray] = []
    face_index: dict[tuple, int] = {}
    faces: list[list[int]] = []
    cells, signs = [], []

    def add_vertex(p):
        key = (round(p[0] / quant), round(p[1] / quant))
        idx = vert_index.get(key)
        if idx is None:
            idx = len(verts)
            vert_index[key] = idx
            verts.append(np.array([key[0] * quant, key[1] * quant]))
        return idx

    def add_face(a, b):
        key = (a, b) if a < b else (b, a)
        idx = face_index.get(key)
        if idx is None:
            idx = len(faces)
            face_index[key] = idx
            faces.append([key[0], key[1]])
        return idx

    for s in range(n_seeds):
        region = vor.regions[vor.point_region[s]]
        if -1 in region or len(region) < 3:
            raise MeshError(f"seed {s} has an unbounded region; mirroring failed")
        poly = vor.vertices[region]
        ids = []
        for p in poly:
            vi = add_vertex(p)
            if not ids or ids[-1] != vi:
                ids.append(vi)
        if len(ids) > 1 and ids[0] == ids[-1]:
            ids.pop()
        if len(ids) < 3:
            raise MeshError(f"seed {s} collapsed to a degenerate polygon")
        cfaces = []
        for a, b in zip(ids, ids[1:] + ids[:1]):
            cfaces.append(add_face(a, b))
        cells.append(np.array(cfaces))
        signs.append(np.ones(len(cfaces), dtype=np.int64))

    vertices = np.vstack(verts)
    mesh = PolytopalMesh(2, vertices, [np.array(f) for f in faces], cells, signs)
    if mesh.n_cells != n_seeds:
        raise MeshError(f"generated {mesh.n_cells} cells for {n_seeds} seeds")
    return mesh
