"""MAC operator identities, spectral solves, viscosity laws, heating algebra."""

import numpy as np
import pytest

from bousscontrol import operators as ops
from bousscontrol.exceptions import DomainError, ShapeError
from bousscontrol.grids import GridSpec
from bousscontrol.linsolve import cg_solve
from bousscontrol.operators import SpectralSolver, ViscosityLaw, project_div_free

from conftest import rand_cells, rand_div_free, rand_u, rand_v

RNG = np.random.default_rng(20240811)


class TestStencils:
    def test_grad_of_constant_vanishes(self, grid16):
        gu, gv = ops.grad(np.full((16, 16), 3.7), grid16)
        assert np.all(gu == 0.0) and np.all(gv == 0.0)

    def test_div_grad_equals_laplacian_interior(self, grid16):
        f = rand_cells(grid16, RNG)
        gu, gv = ops.grad(f, grid16)
        dg = ops.div(gu, gv, grid16)
        lap = ops.laplacian_cells(f, grid16)
        assert np.abs((dg - lap)[1:-1, 1:-1]).max() < 1e-12 * np.abs(lap).max()

    def test_laplacian_eigenfunction_refinement(self):
        errs = []
        for n in (16, 32):
            g = GridSpec(n, n)
            x, y = g.cell_centers()
            f = np.sin(np.pi * x) * np.sin(np.pi * y)
            lap = ops.laplacian_cells(f, g)
            errs.append(np.abs(lap + 2 * np.pi ** 2 * f).max() / (2 * np.pi ** 2))
        assert errs[1] < errs[0] / 3.0  # ~ factor 4 for O(h^2)

    def test_shape_mismatch_raises(self, grid16):
        with pytest.raises(ShapeError):
            ops.laplacian_cells(np.zeros((8, 8)), grid16)

    def test_sbp_adjointness(self, grid16):
        f = rand_cells(grid16, RNG)
        u, v = rand_u(grid16, RNG), rand_v(grid16, RNG)
        gu, gv = ops.grad(f, grid16)
        lhs = ops.inner_velocity(gu, gv, u, v, grid16)
        rhs = -ops.inner_cells(f, ops.div(u, v, grid16), grid16)
        assert abs(lhs - rhs) < 1e-12 * max(abs(lhs), 1.0)

    def test_operator_linearity(self, grid16):
        a, b = 2.3, -0.7
        f, g = rand_cells(grid16, RNG), rand_cells(grid16, RNG)
        lab = ops.laplacian_cells(a * f + b * g, grid16)
        sep = a * ops.laplacian_cells(f, grid16) + b * ops.laplacian_cells(g, grid16)
        assert np.abs(lab - sep).max() < 1e-10 * np.abs(sep).max()


class TestProjection:
    def test_div_free_input_unchanged(self, grid16):
        u, v = rand_div_free(grid16, RNG)
        (u2, v2), _ = project_div_free(u, v, grid16)
        scale = max(np.abs(u).max(), np.abs(v).max())
        assert np.abs(u2 - u).max() < 1e-12 * scale
        assert np.abs(v2 - v).max() < 1e-12 * scale

    def test_pure_gradient_projects_to_zero(self, grid16):
        f = rand_cells(grid16, RNG)
        gu, gv = ops.grad(f, grid16)
        (u2, v2), _ = project_div_free(gu, gv, grid16)
        scale = max(np.abs(gu).max(), 1.0)
        assert np.abs(u2).max() < 1e-12 * scale
        assert np.abs(v2).max() < 1e-12 * scale

    def test_random_field_divergence_below_tol(self):
        g = GridSpec(32, 32)
        u, v = rand_u(g, RNG), rand_v(g, RNG)
        (u2, v2), _ = project_div_free(u, v, g, tol=1e-10)
        assert np.abs(ops.div(u2, v2, g)).max() <= 1e-10 * ops.norm_velocity(
            u, v, g) / np.sqrt(g.cell_area)

    def test_idempotence_and_orthogonality(self, grid16):
        u, v = rand_u(grid16, RNG), rand_v(grid16, RNG)
        (u2, v2), _ = project_div_free(u, v, grid16)
        (u3, v3), _ = project_div_free(u2, v2, grid16)
        assert np.abs(u3 - u2).max() < 1e-12
        ortho = ops.inner_velocity(u2, v2, u - u2, v - v2, grid16)
        assert abs(ortho) <= 1e-10 * ops.norm_velocity(u, v, grid16) ** 2

    def test_zero_mean_potential(self, grid16):
        u, v = rand_u(grid16, RNG), rand_v(grid16, RNG)
        _, phi = project_div_free(u, v, grid16)
        assert abs(phi.mean()) < 1e-13 * max(np.abs(phi).max(), 1.0)


class TestSpectralVsCG:
    def test_helmholtz_cells_matches_cg(self, grid16):
        sp = SpectralSolver(grid16)
        b = rand_cells(grid16, RNG)
        c = 0.02
        x_fft = sp.helmholtz_cells(b, c)
        x_cg, _ = cg_solve(lambda z: z - c * ops.laplacian_cells(z, grid16), b,
                           tol=1e-13, max_iters=4000)
        assert np.abs(x_fft - x_cg).max() < 1e-10 * np.abs(x_fft).max()

    def test_poisson_neumann_matches_cg(self, grid16):
        sp = SpectralSolver(grid16)
        rhs = rand_cells(grid16, RNG)
        rhs -= rhs.mean()
        p_fft = sp.poisson_neumann(rhs)

        def neg_lap_neumann(p):
            g = np.pad(p, 1, mode="edge")
            return -((g[2:, 1:-1] - 2 * p + g[:-2, 1:-1]) / grid16.hx ** 2
                     + (g[1:-1, 2:] - 2 * p + g[1:-1, :-2]) / grid16.hy ** 2)

        p_cg, _ = cg_solve(neg_lap_neumann, -rhs, tol=1e-13, max_iters=8000,
                           project_nullspace=lambda z: z - z.mean())
        assert np.abs(p_fft - p_cg).max() < 1e-9 * np.abs(p_fft).max()


class TestHeating:
    def test_rigid_rotation_exactly_zero(self, grid16):
        xu, yu = grid16.u_positions()
        xv, yv = grid16.v_positions()
        u, v = -yu, xv
        assert np.abs(ops.heating(u, v, grid16)).max() == 0.0

    def test_shear_constant_value(self, grid16):
        a = 0.7
        _, yu = grid16.u_positions()
        u = a * yu
        v = grid16.zeros_v()
        h = ops.heating(u, v, grid16)
        assert np.abs(h - a * a / 2).max() < 1e-13

    def test_nonnegative_for_random_fields(self, grid16):
        for _ in range(20):
            u, v = rand_u(grid16, RNG), rand_v(grid16, RNG)
            assert ops.heating(u, v, grid16).min() >= -1e-12

    def test_sum_formula_equals_squared_deformation(self, grid16):
        u, v = rand_u(grid16, RNG), rand_v(grid16, RNG)
        ux, uy, vx, vy = ops.center_gradients(u, v, grid16)
        d11, d12, d22 = ops.deformation(u, v, grid16)
        literal = d11 * ux + d12 * (uy + vx) + d22 * vy
        assert np.abs(literal - ops.heating(u, v, grid16)).max() < 1e-12 * max(
            np.abs(literal).max(), 1.0)


class TestViscosityLaws:
    def test_zero_field_returns_nu0(self, grid16):
        law = ViscosityLaw("l2", nu0=0.7, nu1=2.0)
        assert ops.nonlocal_viscosity(grid16.zeros_u(), grid16.zeros_v(),
                                      law, grid16) == 0.7

    def test_lp_p2_equals_l2_exactly(self, grid16):
        u, v = rand_u(grid16, RNG), rand_v(grid16, RNG)
        l2 = ViscosityLaw("l2", 1.0, 0.3)
        lp = ViscosityLaw("lp", 1.0, 0.3, p=2.0)
        assert (ops.nonlocal_viscosity(u, v, l2, grid16)
                == ops.nonlocal_viscosity(u, v, lp, grid16))

    def test_manufactured_gradient_energy(self):
        # stream function A sin^2 sin^2 has integral |grad y|^2 = 2 pi^4 A^2;
        # A = 1/pi^2 makes the integral exactly 2
        from bousscontrol.forward import stream_velocity
        amp = 1.0 / np.pi ** 2
        law = ViscosityLaw("l2", 1.0, 1.0)
        errs = []
        for n in (32, 64):
            g = GridSpec(n, n)
            u, v = stream_velocity(g, amp)
            errs.append(abs(ops.nonlocal_viscosity(u, v, law, g) - 3.0))
        assert errs[0] < 0.05
        assert errs[1] < errs[0] / 3.0

    def test_law_validation(self):
        with pytest.raises(DomainError):
            ViscosityLaw("l2", nu0=0.0)
        with pytest.raises(DomainError):
            ViscosityLaw("lp", 1.0, 0.1, p=2.5)
        ViscosityLaw("lp", 1.0, 0.1, p=4.0)


class TestAdvection:
    def test_zero_carrier_gives_zero(self, grid16):
        f = rand_cells(grid16, RNG)
        adv = ops.advect_scalar(f, grid16.zeros_u(), grid16.zeros_v(), grid16)
        assert np.all(adv == 0.0)

    def test_constant_scalar_gives_zero(self, grid16):
        cu, cv = rand_div_free(grid16, RNG)
        adv = ops.advect_scalar(np.full((16, 16), 2.0), cu, cv, grid16)
        assert np.abs(adv).max() < 1e-12 * max(np.abs(cu).max(), 1.0)

    def test_scalar_skew_symmetry(self):
        g = GridSpec(32, 32)
        cu, cv = rand_div_free(g, RNG)
        f = rand_cells(g, RNG)
        defect = abs(ops.inner_cells(ops.advect_scalar(f, cu, cv, g), f, g))
        scale = ops.norm_velocity(cu, cv, g) * ops.norm_cells(f, g) ** 2
        assert defect <= 1e-12 * scale

    def test_velocity_skew_symmetry(self):
        g = GridSpec(32, 32)
        cu, cv = rand_div_free(g, RNG)
        wu, wv = rand_u(g, RNG), rand_v(g, RNG)
        au, av = ops.advect_velocity(wu, wv, cu, cv, g)
        defect = abs(ops.inner_velocity(au, av, wu, wv, g))
        scale = ops.norm_velocity(cu, cv, g) * ops.norm_velocity(wu, wv, g) ** 2
        assert defect <= 1e-12 * scale


class TestNorms:
    def test_zero_norm(self, grid16):
        assert ops.norm_cells(grid16.zeros_cells(), grid16) == 0.0

    def test_lp2_equals_l2(self, grid16):
        f = rand_cells(grid16, RNG)
        assert ops.lp_norm_cells(f, 2.0, grid16) == pytest.approx(
            ops.norm_cells(f, grid16), rel=1e-14)

    def test_sine_mode_l2_norm(self):
        # integral sin^2 sin^2 over the unit square is 1/4 => norm 1/2; the
        # midpoint sum of sin^2 over half-integer nodes is exactly n/2, so
        # this quadrature is exact for the mode
        for n in (16, 32):
            g = GridSpec(n, n)
            x, y = g.cell_centers()
            f = np.sin(np.pi * x) * np.sin(np.pi * y)
            assert abs(ops.norm_cells(f, g) - 0.5) < 1e-14

    def test_cauchy_schwarz(self, grid16):
        a, b = rand_cells(grid16, RNG), rand_cells(grid16, RNG)
        assert abs(ops.inner_cells(a, b, grid16)) <= (
            ops.norm_cells(a, grid16) * ops.norm_cells(b, grid16) + 1e-15)

    def test_h1_seminorms_nonnegative(self, grid16):
        f = rand_cells(grid16, RNG)
        u, v = rand_u(grid16, RNG), rand_v(grid16, RNG)
        assert ops.h1_seminorm_sq_cells(f, grid16) >= 0.0
        assert ops.h1_seminorm_sq_velocity(u, v, grid16) >= 0.0


def test_cg_failure_reports_residual(grid16):
    from bousscontrol.exceptions import LinearSolverError
    rng = np.random.default_rng(0)
    b = rng.standard_normal((grid16.nx, grid16.ny))
    with pytest.raises(LinearSolverError) as err:
        cg_solve(lambda z: z - 0.5 * ops.laplacian_cells(z, grid16), b,
                 tol=1e-14, max_iters=2)
    assert err.value.residual is not None
