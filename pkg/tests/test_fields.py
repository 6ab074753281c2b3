"""Grid, field, norm, derivative and preset behaviour."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from mollab import (
    GridSpec,
    derivative,
    exponents,
    gen_sigma,
    gen_u,
    lq_norm,
    make_grid,
    sobolev_norm,
)
from mollab.errors import GridMismatchError
from mollab.fields import (
    ScalarField,
    VectorFieldM,
    constant_field,
    dealias_23,
    load_binary,
    parse_preset,
    power_singularity_lp_norm,
    save_binary,
    save_csv,
)


def rand_field(grid, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return ScalarField(grid, scale * rng.standard_normal(grid.shape))


class TestGrid:
    def test_spacing(self):
        g = make_grid(1, 64)
        assert g.h == 0.015625
        assert g.h * g.N == 1.0

    def test_point_count(self):
        assert make_grid(2, 32).npoints == 1024

    @pytest.mark.parametrize("d,N", [(1, 10), (0, 64), (4, 64), (1, 8), (2, 48)])
    def test_rejects_bad_grid(self, d, N):
        with pytest.raises(ValueError):
            make_grid(d, N)

    def test_signed_offsets_are_antisymmetric(self):
        g = make_grid(1, 32)
        z = g.signed_offsets(0)
        for n in range(1, 16):
            assert z[n] == -z[32 - n]
        assert z[16] == -0.5


class TestLqNorm:
    def test_constant(self):
        g = make_grid(1, 64)
        assert lq_norm(constant_field(g, 1.0), 3) == pytest.approx(1.0, abs=1e-14)

    def test_zero(self):
        g = make_grid(2, 16)
        for q in (1, 2, math.inf):
            assert lq_norm(constant_field(g, 0.0), q) == 0.0

    def test_sin_l2(self):
        g = make_grid(1, 256)
        f = ScalarField(g, np.sin(2 * np.pi * g.coords(0)))
        assert lq_norm(f, 2) == pytest.approx(math.sqrt(0.5), abs=1e-10)

    def test_rejects_small_q(self):
        g = make_grid(1, 16)
        with pytest.raises(ValueError):
            lq_norm(constant_field(g, 1.0), 0.5)

    @pytest.mark.parametrize("seed", range(5))
    def test_absolute_homogeneity(self, seed):
        g = make_grid(1, 64)
        f = rand_field(g, seed)
        c = 0.1 + 3.0 * seed
        for q in (1, 2, 3.5, math.inf):
            big = lq_norm(ScalarField(g, c * f.values), q)
            assert big == pytest.approx(c * lq_norm(f, q), rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_in_q(self, seed):
        g = make_grid(2, 16)
        f = rand_field(g, seed)
        qs = [1, 1.5, 2, 4, 8, math.inf]
        norms = [lq_norm(f, q) for q in qs]
        for a, b in zip(norms, norms[1:]):
            assert a <= b * (1 + 1e-12)


class TestDerivative:
    def test_sin_spectral(self):
        g = make_grid(1, 64)
        x = g.coords(0)
        df = derivative(ScalarField(g, np.sin(2 * np.pi * x)), 0)
        assert np.abs(df.values - 2 * np.pi * np.cos(2 * np.pi * x)).max() < 1e-10

    def test_constant_derivative_zero(self):
        g = make_grid(2, 16)
        df = derivative(constant_field(g, 4.2), 1)
        assert np.abs(df.values).max() < 1e-13

    def test_band_limited_exact(self):
        g = make_grid(2, 32)
        x1, x2 = g.coords(0), g.coords(1)
        f = ScalarField(g, np.sin(2 * np.pi * x1) * np.cos(4 * np.pi * x2))
        d2 = derivative(f, 1)
        exact = -4 * np.pi * np.sin(2 * np.pi * x1) * np.sin(4 * np.pi * x2)
        assert np.abs(d2.values - exact).max() < 1e-10

    @pytest.mark.parametrize("seed", range(4))
    def test_zero_mean(self, seed):
        g = make_grid(1, 128)
        f = rand_field(g, seed)
        assert abs(derivative(f, 0).mean()) < 1e-13

    def test_centered2_second_order(self):
        # difference against the spectral derivative shrinks like h^2
        errs = []
        for N in (64, 128, 256, 512):
            g = make_grid(1, N)
            x = g.coords(0)
            f = ScalarField(g, np.sin(2 * np.pi * x) + 0.3 * np.cos(6 * np.pi * x))
            ds = derivative(f, 0, "spectral")
            dc = derivative(f, 0, "centered2")
            errs.append(np.abs(ds.values - dc.values).max())
        slopes = np.diff(np.log(errs)) / np.diff(np.log([1 / 64, 1 / 128, 1 / 256, 1 / 512]))
        assert np.allclose(slopes, 2.0, atol=0.2)

    def test_axis_out_of_range(self):
        g = make_grid(1, 16)
        with pytest.raises(ValueError):
            derivative(constant_field(g, 1.0), 1)

    def test_unknown_backend(self):
        g = make_grid(1, 16)
        with pytest.raises(ValueError):
            derivative(constant_field(g, 1.0), 0, "upwind")


class TestSobolev:
    def test_constant(self):
        g = make_grid(1, 32)
        assert sobolev_norm(constant_field(g, -3.0), 2, 4) == pytest.approx(3.0, abs=1e-12)

    def test_sin_order1_sup(self):
        g = make_grid(1, 256)
        f = ScalarField(g, np.sin(2 * np.pi * g.coords(0)))
        assert sobolev_norm(f, 1, math.inf) == pytest.approx(1 + 2 * np.pi, abs=1e-8)

    def test_matches_term_by_term_oracle(self):
        # random trig polynomial with analytically known derivatives
        g = make_grid(1, 128)
        x = g.coords(0)
        rng = np.random.default_rng(11)
        coeff = rng.standard_normal(4)
        f = ScalarField(
            g,
            coeff[0] * np.sin(2 * np.pi * x)
            + coeff[1] * np.cos(2 * np.pi * x)
            + coeff[2] * np.sin(4 * np.pi * x)
            + coeff[3] * np.cos(4 * np.pi * x),
        )
        d1 = (
            2 * np.pi * coeff[0] * np.cos(2 * np.pi * x)
            - 2 * np.pi * coeff[1] * np.sin(2 * np.pi * x)
            + 4 * np.pi * coeff[2] * np.cos(4 * np.pi * x)
            - 4 * np.pi * coeff[3] * np.sin(4 * np.pi * x)
        )
        d2 = (
            -((2 * np.pi) ** 2) * coeff[0] * np.sin(2 * np.pi * x)
            - (2 * np.pi) ** 2 * coeff[1] * np.cos(2 * np.pi * x)
            - (4 * np.pi) ** 2 * coeff[2] * np.sin(4 * np.pi * x)
            - (4 * np.pi) ** 2 * coeff[3] * np.cos(4 * np.pi * x)
        )
        h = g.h
        oracle = sum(
            (h * (np.abs(v) ** 2).sum()) ** 0.5 for v in (f.values, d1, d2)
        )
        assert sobolev_norm(f, 2, 2) == pytest.approx(oracle, rel=1e-10)

    def test_rejects_bad_args(self):
        g = make_grid(1, 16)
        with pytest.raises(ValueError):
            sobolev_norm(constant_field(g, 1.0), 3, 2)
        with pytest.raises(ValueError):
            sobolev_norm(constant_field(g, 1.0), 1, 0.5)


class TestExponents:
    def test_examples(self):
        e = exponents(4, 2)
        assert (e.r1, e.r2) == (4.0, 8.0)
        e = exponents(2, 2)
        assert e.r1 == math.inf and e.r2 == math.inf
        e = exponents(2, 1)
        assert (e.r1, e.r2) == (2.0, 4.0)

    def test_rejects(self):
        with pytest.raises(ValueError):
            exponents(1.5, 1)
        with pytest.raises(ValueError):
            exponents(2, 3)
        with pytest.raises(ValueError):
            exponents(2, 0.5)

    @pytest.mark.parametrize("seed", range(20))
    def test_invariants(self, seed):
        rng = np.random.default_rng(seed)
        p = 2.0 + 8.0 * rng.random()
        q = 1.0 + (p - 1.0) * rng.random()
        e = exponents(p, q)
        if math.isfinite(e.r1):
            assert e.r2 == pytest.approx(2 * e.r1, rel=1e-12)
        # convexity remark: p/(p-q+1) <= q for all admissible pairs
        assert p / (p - q + 1) <= q + 1e-12


class TestPresets:
    def test_parse_preset_forms(self):
        assert parse_preset("constant 1") == ("constant", [1.0])
        assert parse_preset("fourier-decay 3") == ("fourier-decay", [3.0])
        assert parse_preset("box-indicator(0.25, 0.75)") == ("box-indicator", [0.25, 0.75])
        assert parse_preset("trig") == ("trig", [])
        with pytest.raises(ValueError):
            parse_preset("box-indicator(a,b)")

    def test_constant_sigma(self):
        g = make_grid(1, 32)
        s = gen_sigma("constant 1", g)
        assert np.all(s.comp(0, 0).values == 1.0)

    def test_trig_sigma_d2_formula(self):
        g = make_grid(2, 32)
        s = gen_sigma("trig", g)
        x1, x2 = g.coords(0), g.coords(1)
        assert np.allclose(s.comp(0, 0).values, np.sin(2 * np.pi * x1) * np.sin(2 * np.pi * x2))
        assert np.allclose(s.comp(1, 0).values, np.cos(2 * np.pi * x1))

    def test_div_free_sigma(self):
        g = make_grid(2, 64)
        s = gen_sigma("div-free-trig", g)
        div = derivative(s.comp(0, 0), 0) + derivative(s.comp(1, 0), 1)
        assert np.abs(div.values).max() < 1e-12

    def test_fourier_decay_deterministic(self):
        g = make_grid(2, 32)
        a = gen_sigma("fourier-decay 3", g, seed=7)
        b = gen_sigma("fourier-decay 3", g, seed=7)
        c = gen_sigma("fourier-decay 3", g, seed=8)
        assert np.array_equal(a.comp(0, 0).values, b.comp(0, 0).values)
        assert not np.array_equal(a.comp(0, 0).values, c.comp(0, 0).values)

    def test_unknown_presets(self):
        g = make_grid(1, 32)
        with pytest.raises(ValueError):
            gen_sigma("vortex", g)
        with pytest.raises(ValueError):
            gen_u("spike", g)

    def test_box_indicator_mass(self):
        g = make_grid(1, 256)
        u = gen_u("box-indicator", g)
        assert lq_norm(u, 1) == pytest.approx(0.5, abs=1e-12)

    def test_trig_u_band_limited(self):
        g = make_grid(1, 128)
        u = gen_u("trig", g)
        spec = np.abs(np.fft.fft(u.values))
        assert spec[3 : 128 - 2].max() < 1e-12 * spec.max()

    def test_power_singularity_flagged(self):
        g = make_grid(1, 64)
        with pytest.raises(ValueError, match="not L"):
            gen_u("power-singularity(0.6)", g, p=2.0)

    def test_power_singularity_norm_vs_quadrature(self):
        # oracle: adaptive quadrature of the capped closed form
        alpha, cap, p = 0.3, 1.0e6, 2.0
        r0 = cap ** (-1.0 / alpha)

        def integrand(x):
            d = abs(x - 0.5)
            return (cap if d <= r0 else d ** (-alpha)) ** p

        val, err = quad(integrand, 0.0, 1.0, points=[0.5], limit=200)
        oracle = val ** (1.0 / p)
        assert err < 1e-10
        assert power_singularity_lp_norm(alpha, p, cap) == pytest.approx(oracle, rel=1e-6)

    def test_power_singularity_sampled_field(self):
        g = make_grid(1, 1024)
        u = gen_u("power-singularity(0.3)", g, p=2.0)
        assert np.isfinite(u.values).all()
        assert u.values.max() == 1.0e6  # cap active at the on-grid center
        # away from the cap, the discrete norm tracks the continuum value
        interior = u.values[np.abs(g.coords(0) - 0.5) > 1e-3]
        assert interior.max() < 10.0


class TestContainers:
    def test_grid_mismatch(self):
        a = constant_field(make_grid(1, 32), 1.0)
        b = constant_field(make_grid(1, 64), 1.0)
        with pytest.raises(GridMismatchError):
            _ = a + b

    def test_rejects_nonfinite(self):
        g = make_grid(1, 16)
        v = np.zeros(g.shape)
        v[3] = np.inf
        with pytest.raises(ValueError):
            ScalarField(g, v)

    def test_vector_needs_shared_grid(self):
        a = constant_field(make_grid(1, 32), 1.0)
        b = constant_field(make_grid(1, 64), 1.0)
        with pytest.raises(GridMismatchError):
            VectorFieldM((a, b))

    def test_values_immutable(self):
        f = constant_field(make_grid(1, 16), 2.0)
        with pytest.raises(ValueError):
            f.values[0] = 3.0


class TestSerialization:
    def test_binary_roundtrip_scalar(self, tmp_path):
        g = make_grid(2, 16)
        f = rand_field(g, 3)
        path = tmp_path / "f.bin"
        save_binary(f, path)
        back = load_binary(path)
        assert back.grid == g
        assert np.array_equal(back.values, f.values)

    def test_binary_roundtrip_vector(self, tmp_path):
        g = make_grid(1, 32)
        vf = VectorFieldM((rand_field(g, 1), rand_field(g, 2)))
        path = tmp_path / "v.bin"
        save_binary(vf, path)
        back = load_binary(path)
        assert back.m == 2
        for k in range(2):
            assert np.array_equal(back[k].values, vf[k].values)

    def test_header_layout(self, tmp_path):
        g = make_grid(1, 16)
        path = tmp_path / "h.bin"
        save_binary(constant_field(g, 1.5), path)
        raw = path.read_bytes()
        d, N, ncomp = np.frombuffer(raw[:24], dtype="<i8")
        assert (d, N, ncomp) == (1, 16, 1)
        vals = np.frombuffer(raw[24:], dtype="<f8")
        assert np.all(vals == 1.5)

    def test_csv_dump(self, tmp_path):
        g = make_grid(2, 16)
        path = tmp_path / "f.csv"
        save_csv(rand_field(g, 4), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "i0,i1,value"
        assert len(lines) == 1 + g.npoints


class TestDealias:
    def test_truncates_high_modes(self):
        g = make_grid(1, 64)
        x = g.coords(0)
        f = ScalarField(g, np.cos(2 * np.pi * 30 * x) + np.sin(2 * np.pi * x))
        out = dealias_23(f)
        spec = np.fft.fft(out.values)
        assert abs(spec[30]) < 1e-10
        assert abs(spec[1]) > 1.0

    def test_leaves_low_modes(self):
        g = make_grid(1, 64)
        f = gen_u("trig", g)
        out = dealias_23(f)
        assert np.allclose(out.values, f.values, atol=1e-13)
