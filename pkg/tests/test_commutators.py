"""Error terms, double commutator, decomposition and width limits."""

import numpy as np
import pytest

from mollab import (
    analytic_limits,
    apply_K_scalar,
    apply_K_vector,
    decompose,
    double_commutator,
    e2,
    e3,
    gen_sigma,
    gen_u,
    limit_residuals,
    lq_norm,
    make_grid,
)
from mollab.commutators import dump_terms_csv, kj_bracket_scalar, kj_bracket_vector
from mollab.fields import ScalarField, SigmaField, VectorFieldM, constant_field
from mollab.mollifier import build_kernel, direct_convolve_field

TERMS = ("T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8")

# frozen reference: L2 norm of e2 for sigma=sin(2 pi x), u=cos(2 pi x),
# delta=1/16, N=512, d=m=1, measured once and locked as a regression anchor
E2_REFERENCE_L2 = 0.159030823607477


def sigma_sin(grid):
    x = grid.coords(0)
    return SigmaField(((ScalarField(grid, np.sin(2 * np.pi * x)),),))


class TestE2:
    def test_constant_sigma_annihilates(self):
        g = make_grid(1, 128)
        s = gen_sigma("constant 2.5", g)
        u = gen_u("trig", g)
        out = e2(s, u, 0.25)
        assert np.abs(out[0].values).max() <= 1e-12

    def test_zero_u(self):
        g = make_grid(1, 64)
        out = e2(gen_sigma("trig", g), constant_field(g, 0.0), 0.25)
        assert np.abs(out[0].values).max() == 0.0

    def test_both_branches_match_direct_quadrature(self):
        # reference case: sigma=sin, u=cos, delta=1/16 on N=512
        g = make_grid(1, 512)
        x = g.coords(0)
        s = sigma_sin(g)
        u = ScalarField(g, np.cos(2 * np.pi * x))
        kern = build_kernel("bump", 1.0 / 16.0, g)
        fast = e2(s, u, kern)

        def moll(f):
            return direct_convolve_field(kern.samples, f)

        jku = moll(apply_K_scalar(s, u)[0])
        kju = apply_K_scalar(s, moll(u))[0]
        ref = jku.values - kju.values
        assert np.abs(fast[0].values - ref).max() <= 1e-12
        assert lq_norm(fast[0], 2) == pytest.approx(E2_REFERENCE_L2, abs=1e-9)

    def test_kernel_precondition_propagates(self):
        g = make_grid(1, 64)
        from mollab.errors import KernelWidthError

        with pytest.raises(KernelWidthError):
            e2(gen_sigma("trig", g), gen_u("trig", g), 1.0 / 32.0)


class TestE3:
    def test_constant_sigma(self):
        # smooth u keeps the roundoff floor of the double composition
        # (~eps * ||KKu||) below the 1e-12 annihilation target; for
        # jump data the floor sits near 1e-11 and only e2 reaches 1e-12
        g = make_grid(1, 128)
        out = e3(gen_sigma("constant 1", g), gen_u("trig", g), 0.125)
        assert np.abs(out.values).max() <= 1e-12

    def test_constant_sigma_rough_u_floored(self):
        g = make_grid(1, 128)
        u = gen_u("box-indicator", g)
        out = e3(gen_sigma("constant 1", g), u, 0.125)
        from mollab.operators import apply_K_scalar as K
        kku = apply_K_vector(
            gen_sigma("constant 1", g), K(gen_sigma("constant 1", g), u)
        )
        floor = 1e-12 * max(np.abs(kku.values).max(), 1.0)
        assert np.abs(out.values).max() <= floor

    def test_operator_form_identity(self):
        # e3 = (K [K,J] u + [K,J] K u) / 2
        g = make_grid(1, 128)
        s = gen_sigma("trig", g)
        u = gen_u("trig", g)
        kern = build_kernel("bump", 0.125, g)
        direct = e3(s, u, kern)
        br_u = kj_bracket_scalar(s, u, kern)
        br_ku = kj_bracket_vector(s, apply_K_scalar(s, u), kern)
        ref = 0.5 * (apply_K_vector(s, br_u).values + br_ku.values)
        scale = max(np.abs(ref).max(), 1.0)
        assert np.abs(direct.values - ref).max() <= 1e-11 * scale

    def test_matches_direct_quadrature_rough_u(self):
        g = make_grid(1, 64)
        s = gen_sigma("trig", g)
        u = gen_u("box-indicator", g)
        kern = build_kernel("bump", 0.125, g)
        fast = e3(s, u, kern)

        def moll(f):
            return direct_convolve_field(kern.samples, f)

        kkju = apply_K_vector(s, apply_K_scalar(s, moll(u)))
        jkku = moll(apply_K_vector(s, apply_K_scalar(s, u)))
        ref = 0.5 * (kkju.values - jkku.values)
        scale = max(np.abs(ref).max(), 1.0)
        assert np.abs(fast.values - ref).max() <= 1e-12 * scale


class TestDoubleCommutator:
    def test_constant_sigma(self):
        g = make_grid(1, 128)
        out = double_commutator(gen_sigma("constant 1", g), gen_u("trig", g), 0.125)
        assert np.abs(out.values).max() <= 1e-12

    @pytest.mark.parametrize("d,N", [(1, 128), (2, 128)])
    def test_nested_equals_unpacked(self, d, N):
        g = make_grid(d, N)
        s = gen_sigma("trig", g)
        u = gen_u("trig", g)
        a = double_commutator(s, u, 0.125, form="unpacked")
        b = double_commutator(s, u, 0.125, form="nested")
        assert np.abs(a.values - b.values).max() <= 1e-11

    def test_unknown_form(self):
        g = make_grid(1, 64)
        with pytest.raises(ValueError):
            double_commutator(gen_sigma("trig", g), gen_u("trig", g), 0.25, form="expanded")

    def test_norms_decrease_for_rough_u(self):
        g = make_grid(1, 512)
        s = gen_sigma("trig", g)
        u = gen_u("box-indicator", g)
        norms = [lq_norm(double_commutator(s, u, 2.0 ** (-k)), 1) for k in range(2, 6)]
        assert all(b < a for a, b in zip(norms, norms[1:]))


class TestDecomposition:
    def test_reassembly_identity(self):
        for d, N in ((1, 64), (2, 64), (3, 32)):
            g = make_grid(d, N)
            s = gen_sigma("trig", g)
            u = gen_u("trig", g)
            dc = double_commutator(s, u, 0.25)
            terms = decompose(s, u, 0.25)
            resid = np.abs(terms.reassembled().values - dc.values).max()
            assert resid <= 1e-10 * np.abs(dc.values).max() + 1e-12

    def test_divergence_free_kills_t2_t5_t6(self):
        g = make_grid(2, 64)
        s = gen_sigma("div-free-trig", g)
        terms = decompose(s, gen_u("trig", g), 0.25)
        for name in ("T2", "T5", "T6"):
            assert np.abs(getattr(terms, name).values).max() <= 1e-11

    @pytest.mark.parametrize(
        "d,N,u_preset", [(1, 64, "box-indicator"), (1, 64, "trig"), (2, 32, "trig")]
    )
    def test_terms_match_literal_integral_oracle(self, d, N, u_preset):
        g = make_grid(d, N)
        s = gen_sigma("trig", g)
        u = gen_u(u_preset, g)
        fast = decompose(s, u, 0.25)
        slow = decompose(s, u, 0.25, conv=direct_convolve_field)
        for name in TERMS:
            a, b = getattr(fast, name).values, getattr(slow, name).values
            scale = max(np.abs(b).max(), 1.0)
            assert np.abs(a - b).max() <= 1e-12 * scale

    def test_group_definitions(self):
        g = make_grid(1, 64)
        terms = decompose(gen_sigma("trig", g), gen_u("trig", g), 0.25)
        assert np.array_equal(terms.I1.values, (terms.T2 - terms.T6).values)
        assert np.array_equal(terms.I2.values, (-terms.T4 - terms.T8).values)
        assert np.array_equal(
            terms.I3.values, (terms.T1 - terms.T3 - terms.T7).values
        )
        assert terms.standalone is terms.T5

    def test_ladder_boundedness(self):
        # Young-type bound: the grouped sums stay within a fixed factor
        # of their ladder median (measured in L^q)
        g = make_grid(1, 1024)
        s = gen_sigma("trig", g)
        u = gen_u("box-indicator", g)
        series = {"I1": [], "I2": [], "I3": [], "T5": []}
        for k in range(2, 7):
            t = decompose(s, u, 2.0 ** (-k))
            for name in series:
                series[name].append(lq_norm(getattr(t, name), 1))
        for name, vals in series.items():
            assert max(vals) <= 10.0 * float(np.median(vals))

    def test_terms_csv(self, tmp_path):
        g = make_grid(1, 32)
        s = gen_sigma("trig", g)
        u = gen_u("trig", g)
        terms = decompose(s, u, 0.25)
        dc = double_commutator(s, u, 0.25)
        path = tmp_path / "terms.csv"
        dump_terms_csv(terms, dc, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("i0,T1,T2")
        assert len(lines) == 33


class TestAnalyticLimits:
    def test_constant_sigma_all_zero(self):
        g = make_grid(1, 64)
        lim = analytic_limits(gen_sigma("constant 3", g), gen_u("trig", g))
        for f in (lim.L1, lim.L2, lim.L3, lim.L5):
            assert np.abs(f.values).max() <= 1e-12

    @pytest.mark.parametrize(
        "preset,d,m,seed",
        [
            ("trig", 1, 1, 0),
            ("trig", 2, 1, 0),
            ("trig", 3, 1, 0),
            ("div-free-trig", 2, 1, 0),
            ("fourier-decay 3", 2, 2, 7),
        ],
    )
    def test_pointwise_cancellation(self, preset, d, m, seed):
        g = make_grid(d, 32)
        s = gen_sigma(preset, g, m=m, seed=seed)
        u = gen_u("trig", g)
        lim = analytic_limits(s, u)
        scale = max(np.abs(lim.L1.values).max(), 1.0)
        assert np.abs(lim.total().values).max() <= 1e-10 * scale

    def test_l1_closed_form(self):
        # d = m = 1, sigma = sin(2 pi x), u = 1: L1 = 2 (2 pi cos)^2
        g = make_grid(1, 128)
        lim = analytic_limits(sigma_sin(g), constant_field(g, 1.0))
        x = g.coords(0)
        expect = 2.0 * (2 * np.pi * np.cos(2 * np.pi * x)) ** 2
        assert np.abs(lim.L1.values - expect).max() <= 1e-10 * expect.max()


class TestLimitResiduals:
    def test_constant_sigma_zero(self):
        g = make_grid(1, 128)
        res = limit_residuals(gen_sigma("constant 1", g), gen_u("trig", g), 0.125, 2)
        assert all(r <= 1e-12 for r in res)

    def test_smooth_data_second_order(self):
        # slope reference pinned by the sweep in calibration: the window
        # k=3..7 on N=1024 sits inside the asymptotic regime
        g = make_grid(1, 1024)
        s = gen_sigma("trig", g)
        u = gen_u("trig", g)
        deltas = [2.0 ** (-k) for k in range(3, 8)]
        rows = np.array([limit_residuals(s, u, dk, 2) for dk in deltas])
        for col in range(4):
            slope = np.polyfit(np.log(deltas), np.log(rows[:, col]), 1)[0]
            assert abs(slope - 2.0) <= 0.3

    def test_rough_u_monotone(self):
        g = make_grid(1, 1024)
        s = gen_sigma("trig", g)
        u = gen_u("box-indicator", g)
        rows = [limit_residuals(s, u, 2.0 ** (-k), 1) for k in range(2, 7)]
        for col in range(4):
            vals = [r[col] for r in rows]
            assert all(b < a for a, b in zip(vals, vals[1:]))
