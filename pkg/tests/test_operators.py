import numpy as np
import pytest

from cdofb import operators as ops
from cdofb import spaces
from cdofb.linalg import infsup_estimate
from cdofb.mesh import build_cartesian, build_voronoi_polygonal_2d
from cdofb.spaces import HybridVelocity, PressureField

RNG = np.random.default_rng(7)


def meshes():
    return [build_cartesian(2, [3, 3]),
            build_voronoi_polygonal_2d(16, jitter=0.25, rng_seed=2),
            build_cartesian(3, [2, 2, 2])]


def random_hybrid(mesh, rng=RNG):
    return HybridVelocity(rng.standard_normal((mesh.n_faces, mesh.dim)),
                          rng.standard_normal((mesh.n_cells, mesh.dim)))


def stream_velocity_2d(coeffs, zero_boundary_flux):
    """Divergence-free polynomial velocity from a stream function.

    With the bump factor the potential vanishes on the unit-square boundary,
    so the normal flux is zero there as well.
    """
    c0, c1, c2 = coeffs

    def w(t, X):
        x, y = X[:, 0], X[:, 1]
        if zero_boundary_flux:
            px = (1 - 2 * x) * y * (1 - y) * (c0 + c1 * x + c2 * y) \
                + x * (1 - x) * y * (1 - y) * c1
            py = x * (1 - x) * (1 - 2 * y) * (c0 + c1 * x + c2 * y) \
                + x * (1 - x) * y * (1 - y) * c2
        else:
            px = 2 * c0 * x * y + c2 * y
            py = c0 * x * x + 2 * c1 * y + c2 * x
        return np.column_stack([py, -px])

    return w


def curl_velocity_3d(coeffs, zero_boundary_flux):
    """Divergence-free polynomial velocity as the curl of a vector potential."""
    c0, c1, c2 = coeffs

    def bump(x):
        return x * (1 - x)

    def w(t, X):
        x, y, z = X[:, 0], X[:, 1], X[:, 2]
        if zero_boundary_flux:
            # potential components vanish on the unit-cube boundary
            bx, by, bz = bump(x), bump(y), bump(z)
            dbx, dby, dbz = 1 - 2 * x, 1 - 2 * y, 1 - 2 * z
            # A = (c0*b, c1*b, c2*b) with b = bx*by*bz
            b = bx * by * bz
            db_dx = dbx * by * bz
            db_dy = bx * dby * bz
            db_dz = bx * by * dbz
            return np.column_stack([c2 * db_dy - c1 * db_dz,
                                    c0 * db_dz - c2 * db_dx,
                                    c1 * db_dx - c0 * db_dy])
        ax = c0 * y * z * z
        del ax
        # A = (c0*y*z^2, c1*x^2*z, c2*x*y^2)
        return np.column_stack([2 * c2 * x * y - c1 * x * x,
                                2 * c0 * y * z - c2 * y * y,
                                2 * c1 * x * z - c0 * z * z])

    return w


class TestGradientReconstruction:
    @pytest.mark.parametrize("alpha", [None, 1.0])
    def test_affine_consistency(self, alpha):
        for mesh in meshes():
            cfg = ops.OperatorConfig(stab_param=alpha)
            d = mesh.dim
            for trial in range(10):
                lin = RNG.standard_normal((d, d))
                shift = RNG.standard_normal(d)
                v = spaces.project_velocity(mesh, lambda t, X: X @ lin.T + shift)
                for c in range(0, mesh.n_cells, max(1, mesh.n_cells // 4)):
                    faces = mesh.cell_faces[c]
                    tens, cons = ops.grad_reconstruct(mesh, cfg, c,
                                                      v.face_values[faces],
                                                      v.cell_values[c])
                    scale = max(np.abs(lin).max(), 1e-30)
                    assert np.abs(cons - lin).max() <= 1e-12 * scale
                    assert np.abs(tens - lin[None]).max() <= 1e-11 * scale

    def test_constant_field_zero_gradient(self):
        mesh = build_cartesian(2, [2, 2])
        cfg = ops.OperatorConfig()
        tens, cons = ops.grad_reconstruct(mesh, cfg, 0, np.ones((4, 2)), np.ones(2))
        assert np.abs(tens).max() == 0.0 and np.abs(cons).max() == 0.0

    @pytest.mark.parametrize("alpha", [None, 1.0])
    def test_consistent_stabilization_orthogonality(self, alpha):
        for mesh in meshes():
            cfg = ops.OperatorConfig(stab_param=alpha)
            for _ in range(10):
                c = int(RNG.integers(mesh.n_cells))
                faces = mesh.cell_faces[c]
                fv = RNG.standard_normal((faces.size, mesh.dim))
                cv = RNG.standard_normal(mesh.dim)
                tens, cons = ops.grad_reconstruct(mesh, cfg, c, fv, cv)
                stab = tens - cons[None]
                pm = mesh.pyramid_measures(c)
                inner = np.einsum("p,ab,pab->", pm, cons, stab)
                scale = max(np.einsum("p,pab,pab->", pm, tens, tens), 1e-30)
                assert abs(inner) <= 1e-12 * scale


class TestDiffusion:
    @pytest.mark.parametrize("alpha", [None, 1.0])
    def test_symmetry_kernel_and_identity_energy(self, alpha):
        for mesh in meshes():
            cfg = ops.OperatorConfig(stab_param=alpha)
            dm = ops.DofMap.build(mesh)
            a = ops.assemble_diffusion(mesh, cfg, dm)
            assert a.symmetry_error() <= 1e-13
            const = HybridVelocity(np.ones((mesh.n_faces, mesh.dim)),
                                   np.ones((mesh.n_cells, mesh.dim)))
            x = dm.pack(const)
            assert abs(x @ (a @ x)) <= 1e-12 * mesh.cell_measures.sum()
            vid = spaces.project_velocity(mesh, lambda t, X: X)
            xid = dm.pack(vid)
            vol = mesh.cell_measures.sum()
            energy = xid @ (a @ xid)
            assert energy == pytest.approx(mesh.dim * vol, rel=1e-10)
            assert ops.gradient_energy(mesh, cfg, vid) == pytest.approx(energy, rel=1e-12)

    def test_spd_on_homogeneous_subspace_spectral_bounds(self):
        # dense eigenvalue oracle: a_h vs the H1-seminorm Gram on free DoFs
        mesh = build_cartesian(2, [4, 4])
        dm = ops.DofMap.build(mesh)
        a = ops.assemble_diffusion(mesh, ops.OperatorConfig(), dm)
        g = ops.assemble_h1_gram(mesh, dm)
        a_ff = a.submatrix(dm.free, dm.free).to_dense()
        g_ff = g.submatrix(dm.free, dm.free).to_dense()
        lam = np.linalg.eigvalsh(np.linalg.solve(g_ff, a_ff))
        assert lam.min() > 0, "diffusion form must be SPD on the homogeneous subspace"
        delta = min(lam.min(), 1.0 / lam.max())
        assert delta > 0
        assert delta * 1.0 <= lam.min() and lam.max() <= 1.0 / delta
        print(f"measured equivalence constant delta = {delta:.4f} "
              f"(spectrum [{lam.min():.4f}, {lam.max():.4f}])")


class TestDivergence:
    def test_projected_identity_field(self):
        for mesh in meshes():
            v = spaces.project_velocity(mesh, lambda t, X: X)
            div = ops.divergence_field(mesh, v)
            assert np.allclose(div, mesh.dim, atol=1e-11)

    def test_constant_field(self):
        mesh = build_cartesian(2, [2, 2])
        v = HybridVelocity(np.tile([3.0, -1.0], (mesh.n_faces, 1)),
                           np.tile([3.0, -1.0], (mesh.n_cells, 1)))
        assert np.abs(ops.divergence_field(mesh, v)).max() <= 1e-13

    def test_commuting_property_quadratic(self):
        # D_c(proj v) = cell mean of div v, exactly for polynomials
        mesh = build_cartesian(2, [1, 1])
        v = spaces.project_velocity(
            mesh, lambda t, X: np.column_stack([X[:, 0] ** 2, X[:, 0] * X[:, 1]]))
        dc = ops.divergence(mesh, 0, v.face_values[mesh.cell_faces[0]], v.cell_values[0])
        assert dc == pytest.approx(1.5, abs=1e-12)

    def test_commuting_property_random_polynomials(self):
        rng = np.random.default_rng(11)
        for mesh in [build_cartesian(2, [3, 3]),
                     build_voronoi_polygonal_2d(16, jitter=0.2, rng_seed=5)]:
            c = rng.standard_normal(8)

            def v(t, X):
                x, y = X[:, 0], X[:, 1]
                return np.column_stack([c[0] + c[1] * x + c[2] * y + c[3] * x * y,
                                        c[4] + c[5] * x + c[6] * y + c[7] * x * x])

            def div_v(X):
                x, y = X[:, 0], X[:, 1]
                return c[1] + c[3] * y + c[6]

            proj = spaces.project_velocity(mesh, v)
            lhs = ops.divergence_field(mesh, proj)
            rhs = mesh.integrate_cells(div_v) / mesh.cell_measures
            assert np.abs(lhs - rhs).max() <= 1e-10

    def test_coupling_matrix_matches_form(self):
        mesh = build_voronoi_polygonal_2d(16, jitter=0.2, rng_seed=1)
        dm = ops.DofMap.build(mesh)
        b = ops.assemble_coupling(mesh, dm)
        v = random_hybrid(mesh)
        q = PressureField(RNG.standard_normal(mesh.n_cells))
        via_matrix = q.cell_values @ (b @ dm.pack(v))
        assert via_matrix == pytest.approx(ops.coupling_form(mesh, v, q), rel=1e-12)

    def test_coupling_zero_rowsum_on_constants(self):
        for mesh in meshes():
            dm = ops.DofMap.build(mesh)
            b = ops.assemble_coupling(mesh, dm)
            const = HybridVelocity(np.ones((mesh.n_faces, mesh.dim)),
                                   np.ones((mesh.n_cells, mesh.dim)))
            assert np.abs(b @ dm.pack(const)).max() <= 1e-12


class TestDivDiv:
    def test_identity_field_energy(self):
        for mesh in meshes():
            dm = ops.DofMap.build(mesh)
            dd = ops.assemble_divdiv(mesh, dm)
            assert dd.symmetry_error() <= 1e-13
            vid = spaces.project_velocity(mesh, lambda t, X: X)
            xid = dm.pack(vid)
            d, vol = mesh.dim, mesh.cell_measures.sum()
            assert xid @ (dd @ xid) == pytest.approx(d * d * vol, rel=1e-9)

    def test_divergence_free_in_kernel(self):
        mesh = build_cartesian(2, [4, 4])
        dm = ops.DofMap.build(mesh)
        dd = ops.assemble_divdiv(mesh, dm)
        w = spaces.project_velocity(mesh, stream_velocity_2d([0.4, -0.2, 0.7], False))
        assert np.abs(dd @ dm.pack(w)).max() <= 1e-12

    def test_rank_bounded_by_cells(self):
        mesh = build_cartesian(2, [2, 2])
        dm = ops.DofMap.build(mesh)
        dd = ops.assemble_divdiv(mesh, dm).to_dense()
        assert np.linalg.matrix_rank(dd, tol=1e-10) <= mesh.n_cells


class TestConvection:
    def test_zero_transport(self):
        mesh = build_cartesian(2, [3, 3])
        w = HybridVelocity.zeros(mesh)
        u = random_hybrid(mesh)
        assert np.abs(ops.convection_apply(w, u, mesh)).max() == 0.0

    @pytest.mark.parametrize("mesh_kind", ["cartesian", "voronoi", "cartesian3d"])
    def test_skew_symmetry(self, mesh_kind):
        mesh = {"cartesian": build_cartesian(2, [4, 4]),
                "voronoi": build_voronoi_polygonal_2d(25, jitter=0.2, rng_seed=3),
                "cartesian3d": build_cartesian(3, [2, 2, 2])}[mesh_kind]
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(25):
            coeffs = rng.standard_normal(3)
            field = (stream_velocity_2d(coeffs, True) if mesh.dim == 2
                     else curl_velocity_3d(coeffs, True))
            w = spaces.project_velocity(mesh, field)
            assert np.abs(ops.divergence_field(mesh, w)).max() <= 1e-11
            flux = np.einsum("fd,fd->f", w.face_values[mesh.boundary_faces],
                             mesh.face_normals[mesh.boundary_faces])
            assert np.abs(flux).max() <= 1e-12
            u = random_hybrid(mesh, rng)
            val = ops.convection_form(w, u, u, mesh)
            scale = 2 * spaces.kinetic_energy(u, mesh) + spaces.h1_seminorm(u, mesh) ** 2
            worst = max(worst, abs(val) / scale)
        assert worst <= 1e-12

    @pytest.mark.parametrize("mesh_kind", ["cartesian", "voronoi", "cartesian3d"])
    def test_positivity_with_boundary_flux(self, mesh_kind):
        mesh = {"cartesian": build_cartesian(2, [4, 4]),
                "voronoi": build_voronoi_polygonal_2d(25, jitter=0.2, rng_seed=4),
                "cartesian3d": build_cartesian(3, [2, 2, 2])}[mesh_kind]
        rng = np.random.default_rng(23)
        for _ in range(25):
            coeffs = rng.standard_normal(3)
            field = (stream_velocity_2d(coeffs, False) if mesh.dim == 2
                     else curl_velocity_3d(coeffs, False))
            w = spaces.project_velocity(mesh, field)
            assert np.abs(ops.divergence_field(mesh, w)).max() <= 1e-10
            u = random_hybrid(mesh, rng)
            val = ops.convection_form(w, u, u, mesh)
            scale = 2 * spaces.kinetic_energy(u, mesh) + spaces.h1_seminorm(u, mesh) ** 2
            assert val >= -1e-12 * scale

    def test_matrix_matches_apply(self):
        mesh = build_voronoi_polygonal_2d(16, jitter=0.3, rng_seed=6)
        dm = ops.DofMap.build(mesh)
        w = random_hybrid(mesh)
        u = random_hybrid(mesh)
        t_mat = ops.convection_matrix(w, mesh, dm)
        assert np.abs(t_mat @ dm.pack(u)
                      - ops.convection_apply(w, u, mesh, dm)).max() <= 1e-12

    def test_consistency_against_quadrature_oracle(self):
        mesh = build_cartesian(2, [48, 48], [[0, 2 * np.pi], [0, 2 * np.pi]])

        def w_fn(t, X):
            return np.column_stack([np.sin(X[:, 0]) * np.cos(X[:, 1]),
                                    -np.cos(X[:, 0]) * np.sin(X[:, 1])])

        def u_fn(t, X):
            return np.column_stack([np.sin(X[:, 0] + 0.7) * np.sin(2 * X[:, 1]),
                                    np.cos(X[:, 1])])

        def v_fn(t, X):
            return np.column_stack([np.cos(2 * X[:, 0]),
                                    np.sin(X[:, 0] + X[:, 1])])

        wh, uh, vh = (spaces.project_velocity(mesh, f) for f in (w_fn, u_fn, v_fn))
        val = ops.convection_form(wh, uh, vh, mesh)

        def integrand(X):
            w, v = w_fn(0, X), v_fn(0, X)
            du1x = np.cos(X[:, 0] + 0.7) * np.sin(2 * X[:, 1])
            du1y = 2 * np.sin(X[:, 0] + 0.7) * np.cos(2 * X[:, 1])
            du2y = -np.sin(X[:, 1])
            return ((w[:, 0] * du1x + w[:, 1] * du1y) * v[:, 0]
                    + w[:, 1] * du2y * v[:, 1])

        oracle = mesh.integrate_cells(integrand, degree=10).sum()
        assert val == pytest.approx(oracle, rel=5e-3)


class TestMassAndSource:
    def test_constant_forcing_unit_cell(self):
        mesh = build_cartesian(2, [1, 1])
        dm = ops.DofMap.build(mesh)
        diag, rhs = ops.assemble_mass_and_source(
            mesh, lambda t, X: np.tile([1.0, 0.0], (len(X), 1)), 0.0, dm)
        cell_dofs = dm.cell_dofs(np.array([0]))[0]
        assert rhs[cell_dofs[0]] == pytest.approx(1.0)
        assert rhs[cell_dofs[1]] == pytest.approx(0.0)
        assert np.abs(rhs[:mesh.n_faces * 2]).max() == 0.0
        assert diag[cell_dofs[0]] == pytest.approx(1.0)

    def test_mass_is_twice_kinetic_energy(self):
        mesh = build_cartesian(2, [3, 3])
        dm = ops.DofMap.build(mesh)
        diag = ops.mass_diagonal(mesh, dm)
        v = random_hybrid(mesh)
        x = dm.pack(v)
        assert x @ (diag * x) == pytest.approx(2 * spaces.kinetic_energy(v, mesh))

    def test_zero_forcing(self):
        mesh = build_cartesian(2, [2, 2])
        rhs = ops.assemble_source(mesh, None, 0.0)
        assert np.abs(rhs).max() == 0.0


class TestInfsupInputs:
    def test_positive_on_2x2(self):
        b, gv, gp = ops.infsup_inputs(build_cartesian(2, [2, 2]))
        assert infsup_estimate(b, gv, gp) > 0

    def test_single_cell_rejected(self):
        with pytest.raises(ValueError, match="zero-mean"):
            ops.infsup_inputs(build_cartesian(2, [1, 1]))

    def test_mesh_family_bounded_below(self):
        values = []
        for n in (4, 8, 16):
            b, gv, gp = ops.infsup_inputs(build_cartesian(2, [n, n]))
            values.append(infsup_estimate(b, gv, gp))
        assert min(values) > 0
        assert min(values) / max(values) > 0.5
