import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdofb import spaces
from cdofb.mesh import build_cartesian, build_voronoi_polygonal_2d
from cdofb.spaces import HybridVelocity, PressureField

TWO_PI = 2 * np.pi


def tgv_velocity(t, X, nu=1.0):
    decay = np.exp(-2 * nu * t)
    return np.column_stack([decay * np.sin(X[:, 0]) * np.cos(X[:, 1]),
                            -decay * np.cos(X[:, 0]) * np.sin(X[:, 1])])


def tgv_pressure(t, X, nu=1.0):
    return 0.25 * np.exp(-4 * nu * t) * (np.cos(2 * X[:, 0]) + np.cos(2 * X[:, 1]))


@pytest.fixture(scope="module")
def box_mesh():
    return build_cartesian(2, [8, 8], [[0, TWO_PI], [0, TWO_PI]])


class TestProjection:
    def test_constant_reproduced(self, box_mesh):
        v = spaces.project_velocity(box_mesh, lambda t, X: np.tile([1.0, 2.0], (len(X), 1)))
        assert np.allclose(v.face_values, [1.0, 2.0], atol=1e-14)
        assert np.allclose(v.cell_values, [1.0, 2.0], atol=1e-14)

    def test_linear_field_gives_barycenters(self, box_mesh):
        v = spaces.project_velocity(box_mesh, lambda t, X: X)
        assert np.allclose(v.cell_values, box_mesh.cell_barycenters, atol=1e-13)
        assert np.allclose(v.face_values, box_mesh.face_barycenters, atol=1e-13)

    def test_tgv_kinetic_energy(self):
        mesh = build_cartesian(2, [64, 64], [[0, TWO_PI], [0, TWO_PI]])
        v = spaces.project_velocity(mesh, tgv_velocity, 0.0)
        ek = spaces.kinetic_energy(v, mesh)
        assert ek == pytest.approx(np.pi ** 2, rel=0.01)

    def test_pressure_constant_and_linear(self, box_mesh):
        p = spaces.project_pressure(box_mesh, lambda t, X: np.full(len(X), 3.0))
        assert np.allclose(p.cell_values, 3.0)
        p2 = spaces.project_pressure(box_mesh, lambda t, X: X[:, 0])
        assert np.allclose(p2.cell_values, box_mesh.cell_barycenters[:, 0], atol=1e-13)

    def test_tgv_pressure_zero_mean(self, box_mesh):
        p = spaces.project_pressure(box_mesh, tgv_pressure, 0.0)
        assert abs(spaces.pressure_mean(p, box_mesh)) < 1e-12

    def test_unit_square_pressure_mean(self):
        mesh = build_cartesian(2, [1, 1])
        p = spaces.project_pressure(mesh, lambda t, X: X[:, 0])
        assert p.cell_values[0] == pytest.approx(0.5)

    def test_projection_on_polygonal_mesh(self):
        mesh = build_voronoi_polygonal_2d(25, jitter=0.25, rng_seed=2)
        v = spaces.project_velocity(mesh, lambda t, X: X)
        assert np.allclose(v.cell_values, mesh.cell_barycenters, atol=1e-12)


class TestDirichlet:
    def test_zero_data_lands_in_homogeneous_subspace(self, box_mesh):
        v = spaces.project_velocity(box_mesh, tgv_velocity, 0.0)
        out = spaces.apply_dirichlet(v, box_mesh, lambda t, X: np.zeros((len(X), 2)), 0.0)
        assert np.abs(out.face_values[box_mesh.boundary_faces]).max() == 0.0
        assert np.array_equal(out.cell_values, v.cell_values)
        interior = np.setdiff1d(np.arange(box_mesh.n_faces), box_mesh.boundary_faces)
        assert np.array_equal(out.face_values[interior], v.face_values[interior])

    def test_matches_projection_on_boundary(self, box_mesh):
        v = HybridVelocity.zeros(box_mesh)
        out = spaces.apply_dirichlet(v, box_mesh, tgv_velocity, 0.3)
        proj = spaces.project_velocity(box_mesh, tgv_velocity, 0.3)
        bf = box_mesh.boundary_faces
        assert np.allclose(out.face_values[bf], proj.face_values[bf], atol=1e-14)

    def test_no_boundary_faces_identity(self, box_mesh):
        v = spaces.project_velocity(box_mesh, tgv_velocity, 0.0)
        import copy
        closed = copy.copy(box_mesh)
        closed.boundary_faces = np.empty(0, dtype=np.int64)
        out = spaces.apply_dirichlet(v, closed, tgv_velocity, 0.5)
        assert np.array_equal(out.face_values, v.face_values)


class TestZeroMean:
    def test_constant_becomes_zero(self, box_mesh):
        p = PressureField(np.full(box_mesh.n_cells, 5.0))
        out = spaces.zero_mean_adjust(p, box_mesh)
        assert np.allclose(out.cell_values, 0.0)

    def test_idempotent(self, box_mesh):
        rng = np.random.default_rng(0)
        p = PressureField(rng.standard_normal(box_mesh.n_cells))
        once = spaces.zero_mean_adjust(p, box_mesh)
        twice = spaces.zero_mean_adjust(once, box_mesh)
        assert np.allclose(once.cell_values, twice.cell_values, atol=1e-15)
        scale = np.abs(once.cell_values).max() * box_mesh.cell_measures.sum()
        assert abs(box_mesh.cell_measures @ once.cell_values) <= 1e-12 * max(scale, 1)

    def test_single_cell(self):
        mesh = build_cartesian(2, [1, 1])
        out = spaces.zero_mean_adjust(PressureField(np.array([7.0])), mesh)
        assert out.cell_values[0] == 0.0


class TestNorms:
    def test_kinetic_energy_zero_and_constant(self, box_mesh):
        assert spaces.kinetic_energy(HybridVelocity.zeros(box_mesh), box_mesh) == 0.0
        v = HybridVelocity(np.zeros((box_mesh.n_faces, 2)),
                           np.tile([1.0, 0.0], (box_mesh.n_cells, 1)))
        vol = box_mesh.cell_measures.sum()
        assert spaces.kinetic_energy(v, box_mesh) == pytest.approx(0.5 * vol)

    def test_h1_seminorm_vanishes_on_constants(self, box_mesh):
        v = HybridVelocity(np.tile([2.0, -1.0], (box_mesh.n_faces, 1)),
                           np.tile([2.0, -1.0], (box_mesh.n_cells, 1)))
        assert spaces.h1_seminorm(v, box_mesh) == 0.0

    def test_h1_single_face_value(self):
        mesh = build_cartesian(2, [1, 1])
        v = HybridVelocity.zeros(mesh)
        v.face_values[0] = [1.0, 0.0]
        assert spaces.h1_seminorm(v, mesh) == pytest.approx(2 ** -0.25)

    def test_h1_homogeneity(self, box_mesh):
        rng = np.random.default_rng(1)
        v = HybridVelocity(rng.standard_normal((box_mesh.n_faces, 2)),
                           rng.standard_normal((box_mesh.n_cells, 2)))
        s = spaces.h1_seminorm(v, box_mesh)
        assert spaces.h1_seminorm(-2.5 * v, box_mesh) == pytest.approx(2.5 * s)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_h1_positive_on_homogeneous_subspace(self, seed):
        mesh = build_cartesian(2, [3, 3])
        rng = np.random.default_rng(seed)
        v = HybridVelocity(rng.standard_normal((mesh.n_faces, 2)),
                           rng.standard_normal((mesh.n_cells, 2)))
        v = spaces.zero_boundary(v, mesh)
        norm_sq = v.face_values @ v.face_values.T
        if np.abs(v.face_values).max() + np.abs(v.cell_values).max() > 1e-12:
            assert spaces.h1_seminorm(v, mesh) > 0
        del norm_sq


class TestSnapshots:
    def test_velocity_csv(self, box_mesh, tmp_path):
        v = spaces.project_velocity(box_mesh, lambda t, X: X)
        path = tmp_path / "vel.csv"
        spaces.write_velocity_csv(v, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "kind,id,component,value"
        assert len(lines) == 1 + 2 * (box_mesh.n_faces + box_mesh.n_cells)
        kind, fid, comp, val = lines[1].split(",")
        assert kind == "face" and fid == "0" and comp == "0"
        assert float(val) == pytest.approx(v.face_values[0, 0])

    def test_pressure_csv(self, box_mesh, tmp_path):
        p = spaces.project_pressure(box_mesh, lambda t, X: X[:, 1])
        path = tmp_path / "pre.csv"
        spaces.write_pressure_csv(p, path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 1 + box_mesh.n_cells
