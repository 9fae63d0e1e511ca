"""Quadrature rules on reference simplices.

Rules are built by tensorizing Gauss-Legendre points through the Duffy
(collapsed-coordinate) map, so exactness up to the requested polynomial
degree holds by construction for any degree.  The reference elements are
the unit interval [0,1], the unit triangle {x,y >= 0, x+y <= 1} and the
unit tetrahedron {x,y,z >= 0, x+y+z <= 1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: measures of the reference simplices, by spatial dimension of the simplex
REFERENCE_MEASURE = {1: 1.0, 2: 0.5, 3: 1.0 / 6.0}


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights exact for polynomials up to ``degree`` on a reference simplex."""

    degree: int
    points: np.ndarray  # (npts, dim)
    weights: np.ndarray  # (npts,)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("quadrature degree must be nonnegative")
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")
        total = self.weights.sum()
        ref = REFERENCE_MEASURE[self.dim]
        if not math.isclose(total, ref, rel_tol=1e-13):
            raise ValueError(f"weights sum to {total}, expected {ref}")


@lru_cache(maxsize=None)
def _gauss_legendre_01(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _npts_for(degree: int) -> int:
    # n-point Gauss-Legendre is exact up to degree 2n-1
    return degree // 2 + 1


@lru_cache(maxsize=None)
def interval_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0,1]."""
    x, w = _gauss_legendre_01(_npts_for(degree))
    return QuadratureRule(degree, x[:, None].copy(), w.copy())


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Duffy-mapped tensor rule on the unit triangle.

    The map (u,v) -> (u, v*(1-u)) has Jacobian (1-u); a monomial x^a y^b pulls
    back to u^a v^b (1-u)^(b+1), so the u-direction needs exactness degree+1.
    """
    xu, wu = _gauss_legendre_01(_npts_for(degree + 1))
    xv, wv = _gauss_legendre_01(_npts_for(degree))
    u, v = np.meshgrid(xu, xv, indexing="ij")
    wu2, wv2 = np.meshgrid(wu, wv, indexing="ij")
    x = u
    y = v * (1.0 - u)
    w = wu2 * wv2 * (1.0 - u)
    pts = np.column_stack([x.ravel(), y.ravel()])
    return QuadratureRule(degree, pts, w.ravel())


@lru_cache(maxsize=None)
def tetrahedron_rule(degree: int) -> QuadratureRule:
    """Duffy-mapped tensor rule on the unit tetrahedron.

    Map (u,v,w) -> (u, v*(1-u), w*(1-u)*(1-v)) with Jacobian (1-u)^2 (1-v).
    """
    xu, wu = _gauss_legendre_01(_npts_for(degree + 2))
    xv, wv = _gauss_legendre_01(_npts_for(degree + 1))
    xw, ww = _gauss_legendre_01(_npts_for(degree))
    u, v, t = np.meshgrid(xu, xv, xw, indexing="ij")
    wu3, wv3, ww3 = np.meshgrid(wu, wv, ww, indexing="ij")
    x = u
    y = v * (1.0 - u)
    z = t * (1.0 - u) * (1.0 - v)
    w = wu3 * wv3 * ww3 * (1.0 - u) ** 2 * (1.0 - v)
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return QuadratureRule(degree, pts, w.ravel())


def simplex_rule(dim: int, degree: int) -> QuadratureRule:
    if dim == 1:
        return interval_rule(degree)
    if dim == 2:
        return triangle_rule(degree)
    if dim == 3:
        return tetrahedron_rule(degree)
    raise ValueError(f"no simplex rule in dimension {dim}")


def map_to_simplices(rule: QuadratureRule, verts: np.ndarray):
    """Map a reference rule onto a batch of simplices.

    verts has shape (nsimp, dim+1, space_dim) where dim is the simplex
    dimension (may be lower than space_dim, e.g. triangles in 3D).  Returns
    (points, weights) of shapes (nsimp, npts, space_dim) and (nsimp, npts);
    the weights include the simplex measures, so summing weights over axis 1
    gives each simplex measure.
    """
    verts = np.asarray(verts, dtype=float)
    nsimp, nv, sdim = verts.shape
    dim = nv - 1
    if rule.dim != dim:
        raise ValueError("rule dimension does not match simplex vertices")
    origin = verts[:, 0, :]
    edges = verts[:, 1:, :] - origin[:, None, :]  # (nsimp, dim, sdim)
    pts = origin[:, None, :] + np.einsum("qd,ndk->nqk", rule.points, edges)
    if dim == sdim:
        det = np.abs(np.linalg.det(edges))
    else:
        gram = np.einsum("nik,njk->nij", edges, edges)
        det = np.sqrt(np.abs(np.linalg.det(gram)))
    # reference weights sum to 1/dim!, so scaling by |det| makes the
    # physical weights sum to the simplex measure |det|/dim!
    weights = rule.weights[None, :] * det[:, None]
    return pts, weights
