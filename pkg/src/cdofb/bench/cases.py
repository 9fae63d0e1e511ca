"""Benchmark flow cases with closed-form solutions.

The 2D Taylor-Green vortex decays freely on [0, 2pi]^2 with zero forcing;
the Reynolds number is 1/nu for unit reference length and velocity.  The
3D case is a modified Taylor-Green field on the unit cube, made unsteady
by a sinusoidal amplitude, with the body force that turns it into an
exact Navier-Stokes solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..timestep import FlowProblem

TWO_PI = 2.0 * math.pi


class SeparableForcing:
    """Body force sum_i s_i(t) * F_i(x); exposes the split for fast assembly."""

    def __init__(self, terms):
        self.separable_terms = terms

    def __call__(self, t, points):
        acc = None
        for time_coeff, spatial in self.separable_terms:
            contrib = time_coeff(t) * np.asarray(spatial(points))
            acc = contrib if acc is None else acc + contrib
        return acc


@dataclass
class CaseSpec:
    """One benchmark case: domain, viscosity, horizon and exact handles."""

    case_id: str
    dim: int
    box: list
    nu: float
    t_end: float
    velocity: object
    pressure: object
    forcing: object = None
    inhomogeneous_boundary: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def reynolds(self) -> float:
        return 1.0 / self.nu

    def problem(self, homogeneous_boundary: bool = False) -> FlowProblem:
        return FlowProblem(
            initial_velocity=self.velocity,
            initial_pressure=self.pressure,
            boundary_velocity=None if (homogeneous_boundary
                                       or not self.inhomogeneous_boundary)
            else self.velocity,
            forcing=self.forcing,
            exact_velocity=self.velocity,
            exact_pressure=self.pressure,
        )


def exact_tgv2d(t, points, nu: float):
    """2D Taylor-Green vortex velocity and pressure at (t, points)."""
    x, y = points[:, 0], points[:, 1]
    decay = math.exp(-2.0 * nu * t)
    vel = np.column_stack([decay * np.sin(x) * np.cos(y),
                           -decay * np.cos(x) * np.sin(y)])
    pres = 0.25 * math.exp(-4.0 * nu * t) * (np.cos(2 * x) + np.cos(2 * y))
    return vel, pres


def tgv2d(nu: float = 1.0, t_end: float = 1.2) -> CaseSpec:
    """Decaying Taylor-Green vortex on [0, 2pi]^2 (Re = 1/nu)."""
    def velocity(t, points):
        return exact_tgv2d(t, points, nu)[0]

    def pressure(t, points):
        return exact_tgv2d(t, points, nu)[1]

    return CaseSpec("tgv2d", 2, [[0.0, TWO_PI], [0.0, TWO_PI]], nu, t_end,
                    velocity, pressure, forcing=None,
                    metadata={"reynolds": 1.0 / nu})


# -- 3D modified Taylor-Green --------------------------------------------------


def _mtgv_velocity_shape(points):
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    sx, cx = np.sin(TWO_PI * x), np.cos(TWO_PI * x)
    sy, cy = np.sin(TWO_PI * y), np.cos(TWO_PI * y)
    sz, cz = np.sin(TWO_PI * z), np.cos(TWO_PI * z)
    return np.column_stack([-2.0 * cx * sy * sz, sx * cy * sz, sx * sy * cz])


def _mtgv_pressure_shape(points):
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return -6.0 * math.pi * np.sin(TWO_PI * x) * np.sin(TWO_PI * y) * np.sin(TWO_PI * z)


def _mtgv_viscous_shape(points):
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    out = np.zeros((len(points), 3))
    out[:, 0] = -36.0 * math.pi ** 2 * np.cos(TWO_PI * x) * np.sin(TWO_PI * y) * np.sin(TWO_PI * z)
    return out


def _mtgv_convective_shape(points):
    # -4 (u'.grad)u'; the 2*pi factor is required for the momentum residual
    # to vanish (checked by the finite-difference oracle in the test suite)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    s4x, c4x = np.sin(2 * TWO_PI * x), np.cos(2 * TWO_PI * x)
    s4y, c4y = np.sin(2 * TWO_PI * y), np.cos(2 * TWO_PI * y)
    s4z, c4z = np.sin(2 * TWO_PI * z), np.cos(2 * TWO_PI * z)
    return TWO_PI * np.column_stack([
        -2.0 * s4x * (c4y + c4z - 2.0),
        s4y * (c4x - 2.0 * c4z + 1.0),
        s4z * (c4x - 2.0 * c4y + 1.0),
    ])


def _mtgv_amplitude(t):
    return math.sin(8.0 * math.pi * t)


def _mtgv_amplitude_rate(t):
    return 8.0 * math.pi * math.cos(8.0 * math.pi * t)


def exact_mtgv3d(t, points):
    """Modified 3D Taylor-Green: (velocity, pressure, forcing) at (t, points)."""
    a = _mtgv_amplitude(t)
    vel = a * _mtgv_velocity_shape(points)
    pres = a * _mtgv_pressure_shape(points)
    force = (a * _mtgv_viscous_shape(points)
             + _mtgv_amplitude_rate(t) * _mtgv_velocity_shape(points)
             - 0.25 * a * a * _mtgv_convective_shape(points))
    return vel, pres, force


def mtgv3d(t_end: float = 2.0) -> CaseSpec:
    """Modified Taylor-Green vortex on the unit cube, nu = 1."""
    def velocity(t, points):
        return _mtgv_amplitude(t) * _mtgv_velocity_shape(points)

    def pressure(t, points):
        return _mtgv_amplitude(t) * _mtgv_pressure_shape(points)

    forcing = SeparableForcing([
        (_mtgv_amplitude, _mtgv_viscous_shape),
        (_mtgv_amplitude_rate, _mtgv_velocity_shape),
        (lambda t: -0.25 * _mtgv_amplitude(t) ** 2, _mtgv_convective_shape),
    ])
    return CaseSpec("mtgv3d", 3, [[0.0, 1.0]] * 3, 1.0, t_end,
                    velocity, pressure, forcing=forcing,
                    metadata={"reynolds": 1.0})
