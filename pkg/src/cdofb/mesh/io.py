"""Mesh file I/O.

The on-disk format is JSON:

    {"dim": 2, "vertices": [[x, y], ...],
     "faces": [[v0, v1], ...],
     "cells": [[+3, -7, ...], ...]}

Cells reference 1-based face ids whose sign says whether the face normal
(as induced by the stored vertex loop) points outward of the cell.  The
writer emits coordinates with 17 significant digits so a round trip is
bit-exact; geometry is recomputed on read.
"""

from __future__ import annotations

import json

import numpy as np

from .core import MeshError, PolytopalMesh


class MeshParseError(MeshError):
    """Malformed mesh file."""


def write_mesh(mesh: PolytopalMesh, path):
    """Write a mesh as JSON with 17-significant-digit coordinates."""
    def int_list(values):
        return "[" + ",".join(str(int(v)) for v in values) + "]"

    with open(path, "w") as fh:
        fh.write('{"dim": %d,\n' % mesh.dim)
        fh.write('"vertices": [\n')
        rows = ("[" + ",".join(format(x, ".17g") for x in row) + "]"
                for row in mesh.vertices)
        fh.write(",\n".join(rows))
        fh.write('],\n"faces": [\n')
        fh.write(",\n".join(int_list(loop) for loop in mesh.face_vertices))
        fh.write('],\n"cells": [\n')
        cells = (int_list(s * (f + 1) for f, s in zip(mesh.cell_faces[c],
                                                      mesh.cell_face_signs[c]))
                 for c in range(mesh.n_cells))
        fh.write(",\n".join(cells))
        fh.write("]}\n")


def read_mesh(path) -> PolytopalMesh:
    """Read a JSON mesh and recompute all derived geometry."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise MeshParseError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("dim", "vertices", "faces", "cells"):
        if key not in doc:
            raise MeshParseError(f"{path}: missing key '{key}'")
    dim = int(doc["dim"])
    vertices = np.asarray(doc["vertices"], dtype=np.float64)
    if not doc["cells"]:
        raise MeshParseError(f"{path}: mesh has no cells")
    nf = len(doc["faces"])
    faces = []
    for i, loop in enumerate(doc["faces"]):
        loop = np.asarray(loop, dtype=np.int64)
        if loop.size and (loop.min() < 0 or loop.max() >= len(vertices)):
            bad = int(loop[(loop < 0) | (loop >= len(vertices))][0])
            raise MeshParseError(f"{path}: face {i} references vertex {bad} "
                                 f"of {len(vertices)}")
        faces.append(loop)
    cells, signs = [], []
    for c, entries in enumerate(doc["cells"]):
        ids = np.asarray(entries, dtype=np.int64)
        if np.any(ids == 0):
            raise MeshParseError(f"{path}: cell {c} contains face id 0 "
                                 "(ids are 1-based and signed)")
        fids = np.abs(ids) - 1
        if fids.size and fids.max() >= nf:
            raise MeshParseError(f"{path}: cell {c} references face "
                                 f"{int(fids.max())} of {nf}")
        cells.append(fids)
        signs.append(np.sign(ids))
    try:
        return PolytopalMesh(dim, vertices, faces, cells, signs)
    except MeshError as exc:
        raise MeshParseError(f"{path}: {exc}") from exc
