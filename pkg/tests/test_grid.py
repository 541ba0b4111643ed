import numpy as np
import pytest

import sediment_lab as sl
from sediment_lab.grid import CAPACITY_EXPONENT

from conftest import oblique_params

# Richardson-extrapolated midpoint quadrature of the closed-form integrands
# for the oblique ridge (independent script, 2048/4096 grids).
ORACLE_ENERGY_OBLIQUE = 0.098730454171


def grid(n=8, W=1.0, L=1.0):
    return sl.make_grid(W, L, n, n)


class TestMakeGrid:
    def test_spacing(self):
        g = sl.make_grid(1, 1, 4, 4)
        assert g.dx == 0.25 and g.dy == 0.25
        assert g.nx * g.ny == 16

    def test_rectangular(self):
        g = sl.make_grid(2, 1, 4, 2)
        assert g.dx == 0.5 and g.dy == 0.5

    @pytest.mark.parametrize("args", [(1, 1, 1, 4), (1, 1, 4, 1), (0, 1, 4, 4), (1, -2, 4, 4)])
    def test_invalid(self, args):
        with pytest.raises(sl.GridError):
            sl.make_grid(*args)

    def test_total_area(self):
        g = sl.make_grid(2.5, 1.5, 10, 6)
        assert g.cell_area * g.nx * g.ny == pytest.approx(2.5 * 1.5, rel=1e-14)


class TestScalarField:
    def test_water_nonnegative(self):
        g = grid()
        with pytest.raises(sl.WeightError):
            sl.ScalarField(g, -np.ones(g.shape), "water")

    def test_finite_required(self):
        g = grid()
        vals = np.ones(g.shape)
        vals[0, 0] = np.nan
        with pytest.raises(sl.GridError):
            sl.ScalarField(g, vals, "generic")

    def test_immutable(self):
        g = grid()
        f = sl.ScalarField(g, np.ones(g.shape))
        with pytest.raises(ValueError):
            f.values[0, 0] = 2.0


class TestGradient:
    def test_constant_is_zero(self):
        g = grid(12)
        f = sl.ScalarField(g, np.full(g.shape, 3.7))
        gr = sl.gradient(f)
        assert np.abs(gr.x).max() == 0.0
        assert np.abs(gr.y).max() == 0.0

    def test_affine_exact(self):
        g = grid(9)
        X, Y = g.meshgrid()
        f = sl.ScalarField(g, 3.0 * X + 2.0 * Y, "generic")
        gr = sl.gradient(f)
        assert np.abs(gr.x - 3.0).max() <= 1e-12
        # y-affine data is not periodic: the wrap rows see the jump
        assert np.abs(gr.y[:, 1:-1] - 2.0).max() <= 1e-12

    def test_affine_in_x_exact_everywhere(self):
        g = grid(9)
        X, _ = g.meshgrid()
        gr = sl.gradient(sl.ScalarField(g, 5.0 - 2.0 * X, "generic"))
        assert np.abs(gr.x + 2.0).max() <= 1e-12
        assert np.abs(gr.y).max() <= 1e-12

    def test_surface_ghost_affine(self):
        # a surface vanishing at x = W is reproduced exactly incl. last column
        g = grid(9)
        X, _ = g.meshgrid()
        f = sl.ScalarField(g, 4.0 * (g.width - X), "surface")
        gr = sl.gradient(f)
        assert np.abs(gr.x + 4.0).max() <= 1e-12

    def test_sin_convergence_second_order(self):
        errs = []
        ns = [16, 32, 64]
        for n in ns:
            g = grid(n)
            _, Y = g.meshgrid()
            f = sl.ScalarField(g, np.sin(2 * np.pi * Y / g.length))
            gr = sl.gradient(f)
            exact = (2 * np.pi / g.length) * np.cos(2 * np.pi * Y / g.length)
            errs.append(np.abs(gr.y - exact).max())
            assert np.abs(gr.x).max() <= 1e-12
        slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
        assert -slope >= 1.9

    def test_yshift_equivariance(self):
        g = grid(10)
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(g.shape)
        f = sl.ScalarField(g, vals)
        shifted = sl.ScalarField(g, np.roll(vals, 1, axis=1))
        a = sl.gradient(f)
        b = sl.gradient(shifted)
        assert np.array_equal(np.roll(a.x, 1, axis=1), b.x)
        assert np.array_equal(np.roll(a.y, 1, axis=1), b.y)


class TestDivergence:
    def test_zero(self):
        g = grid(6)
        q = sl.VectorField(g, np.zeros((g.nx + 1, g.ny)), np.zeros(g.shape), "face")
        assert np.abs(sl.divergence(q).values).max() == 0.0

    def test_affine_flux(self):
        # q = (x, 0) sampled at faces has divergence identically 1
        g = grid(7)
        xf = np.arange(g.nx + 1)[:, None] * g.dx * np.ones((1, g.ny))
        q = sl.VectorField(g, xf, np.zeros(g.shape), "face")
        assert np.abs(sl.divergence(q).values - 1.0).max() <= 1e-13

    def test_placement_error(self):
        g = grid(6)
        cell = sl.VectorField(g, np.zeros(g.shape), np.zeros(g.shape), "cell")
        with pytest.raises(sl.PlacementError):
            sl.divergence(cell)

    def test_divergence_theorem_random(self):
        g = sl.make_grid(1.3, 0.8, 12, 9)
        rng = np.random.default_rng(5)
        for _ in range(10):
            qx = rng.standard_normal((g.nx + 1, g.ny))
            qx[0, :] = 0.0
            qy = rng.standard_normal(g.shape)
            q = sl.VectorField(g, qx, qy, "face")
            total = np.sum(sl.divergence(q).values) * g.cell_area
            boundary = sl.boundary_face_flux(q)
            scale = max(abs(boundary), np.abs(qx).sum() * g.dy, 1e-30)
            assert abs(total - boundary) / scale <= 1e-12

    def test_yshift_equivariance(self):
        g = grid(8)
        rng = np.random.default_rng(9)
        qx = rng.standard_normal((g.nx + 1, g.ny))
        qy = rng.standard_normal(g.shape)
        q = sl.VectorField(g, qx, qy, "face")
        qs = sl.VectorField(g, np.roll(qx, 1, axis=1), np.roll(qy, 1, axis=1), "face")
        assert np.allclose(
            np.roll(sl.divergence(q).values, 1, axis=1),
            sl.divergence(qs).values, rtol=0, atol=1e-15,
        )


class TestSedimentFlux:
    def test_flat_surface(self):
        g = grid(8)
        H = sl.ScalarField(g, np.zeros(g.shape), "surface")
        h = sl.ScalarField(g, np.ones(g.shape), "water")
        q = sl.sediment_flux(H, h)
        assert np.abs(q.x).max() == 0.0 and np.abs(q.y).max() == 0.0

    def test_affine_slope_exact(self):
        # H = a (x - W), h = 1: flux (a^3, 0) on every face, |a|^2 a
        g = grid(10)
        X, _ = g.meshgrid()
        a = -1.7
        H = sl.ScalarField(g, a * (X - g.width), "surface")
        h = sl.ScalarField(g, np.ones(g.shape), "water")
        q = sl.sediment_flux(H, h)
        assert np.abs(q.x[1:, :] - a**3).max() <= 1e-12
        assert np.abs(q.y).max() <= 1e-12

    def test_ridge_top_sealed(self):
        g = grid(9)
        rng = np.random.default_rng(2)
        H = sl.ScalarField(g, rng.standard_normal(g.shape), "surface")
        h = sl.ScalarField(g, rng.uniform(0.1, 1.0, g.shape), "water")
        q = sl.sediment_flux(H, h)
        assert np.abs(q.x[0, :]).max() == 0.0

    def test_negative_water_rejected(self):
        g = grid(6)
        H = sl.ScalarField(g, np.zeros(g.shape), "surface")
        bad = sl.ScalarField(g, -np.ones(g.shape), "generic")
        with pytest.raises(sl.WeightError):
            sl.sediment_flux(H, bad)

    def test_ridge_flux_second_order(self):
        # compare interior x-face values against the closed-form flux
        p = oblique_params()
        errs = []
        ns = [16, 32, 64]
        for n in ns:
            g = grid(n)
            h, H0 = sl.ridge_fields(p, g)
            q = sl.sediment_flux(H0, h)
            xf = np.arange(1, g.nx)[:, None] * g.dx
            yc = (np.arange(g.ny)[None, :] + 0.5) * g.dy
            ell = p.a * (xf - p.x0) + p.b * (yc - p.y0)
            base = p.H1 ** (1 / p.c) - np.abs(ell)
            s = np.sign(ell)
            gx = p.c * base ** (p.c - 1) * (-s * p.a)
            gy = p.c * base ** (p.c - 1) * (-s * p.b)
            w = (p.h1 * base**p.d) ** CAPACITY_EXPONENT
            exact = w * (gx**2 + gy**2) * gx
            err = np.abs(q.x[1:-1, :] - exact)
            # ignore faces within 3 cells of the crest line
            dist = np.abs(ell) / np.hypot(p.a, p.b)
            err[dist < 3 * g.dx] = 0.0
            errs.append(err.max())
        slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
        assert -slope >= 1.9

    def test_yshift_equivariance(self):
        g = grid(8)
        rng = np.random.default_rng(11)
        Hv = rng.standard_normal(g.shape)
        hv = rng.uniform(0.2, 1.0, g.shape)
        q = sl.sediment_flux(sl.ScalarField(g, Hv, "surface"), sl.ScalarField(g, hv, "water"))
        qs = sl.sediment_flux(
            sl.ScalarField(g, np.roll(Hv, 1, axis=1), "surface"),
            sl.ScalarField(g, np.roll(hv, 1, axis=1), "water"),
        )
        assert np.allclose(np.roll(q.x, 1, axis=1), qs.x, rtol=0, atol=1e-14)
        assert np.allclose(np.roll(q.y, 1, axis=1), qs.y, rtol=0, atol=1e-14)


class TestFieldNorms:
    def test_zero_field(self):
        g = grid(6)
        z = sl.ScalarField(g, np.zeros(g.shape))
        h = sl.ScalarField(g, np.ones(g.shape), "water")
        norms = sl.field_norms(z, h)
        assert all(v == 0.0 for v in norms.values())

    def test_linear_energy(self):
        # f = a x on the unit square with h = 1: energy = a^4 / 4 exactly
        g = grid(16)
        X, _ = g.meshgrid()
        a = 1.3
        f = sl.ScalarField(g, a * X, "generic")
        h = sl.ScalarField(g, np.ones(g.shape), "water")
        norms = sl.field_norms(f, h)
        assert norms["energy"] == pytest.approx(a**4 / 4, rel=1e-12)

    def test_ridge_energy_oracle(self):
        p = oblique_params()
        g = grid(64)
        h, H0 = sl.ridge_fields(p, g)
        norms = sl.field_norms(H0, h)
        assert norms["energy"] == pytest.approx(ORACLE_ENERGY_OBLIQUE, rel=5e-4)

    def test_norm_convergence_second_order(self):
        vals = []
        ns = [16, 32, 64]
        for n in ns:
            g = grid(n)
            X, Y = g.meshgrid()
            f = sl.ScalarField(g, np.sin(2 * np.pi * Y) * (1 + X**2))
            h = sl.ScalarField(g, np.full(g.shape, 0.8), "water")
            vals.append(sl.field_norms(f, h)["energy"])
        errs = [abs(v - vals[-1]) for v in vals[:-1]]
        slope = np.polyfit(np.log(ns[:-1]), np.log(errs), 1)[0]
        assert -slope >= 1.9
