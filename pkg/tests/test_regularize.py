import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jetext.envelope import EnvelopeSpec, envelope_grid
from jetext.fixtures import gen_three_point, random_c11_jets
from jetext.grid import make_grid
from jetext.jet import JetDataset, wg_constant
from jetext.modulus import Power, primitive
from jetext.regularize import (
    EXPERIMENTAL,
    InsertionError,
    brute_conv,
    glue,
    grad_fd,
    holder_of_gradient,
    inf_conv_quadratic,
    insert_c11,
    insert_general,
    lip_of_gradient,
    radial_partition,
    smoothstep,
    sup_conv_quadratic,
)

ID = Power(1.0)


def quad_kernel(t):
    return lambda d: d**2 / (2 * t)


grids = st.integers(1, 3).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(2, 9), min_size=n, max_size=n),
        st.integers(0, 2**31 - 1),
        st.floats(0.05, 3.0),
    )
)


def random_grid(dims, seed):
    rng = np.random.default_rng(seed)
    n = len(dims)
    return make_grid(-rng.uniform(0.5, 2, n), rng.uniform(0.5, 2, n), dims).with_values(
        rng.normal(size=dims) * 3)


class TestConvolutions:
    @given(grids)
    @settings(max_examples=60)
    def test_matches_brute_force(self, data):
        dims, seed, t = data
        g = random_grid(dims, seed)
        np.testing.assert_allclose(inf_conv_quadratic(g, t).values,
                                   brute_conv(g, quad_kernel(t), +1).values, atol=1e-12)
        np.testing.assert_allclose(sup_conv_quadratic(g, t).values,
                                   brute_conv(g, quad_kernel(t), -1).values, atol=1e-12)

    def test_constant(self):
        g = make_grid([-1, -1], [1, 1], 9, lambda p: np.full(len(p), 2.5))
        assert np.all(inf_conv_quadratic(g, 0.7).values == 2.5)
        assert np.all(sup_conv_quadratic(g, 0.7).values == 2.5)

    def test_quadratic_oracles(self):
        x = make_grid([-1], [1], 2001, lambda p: p[:, 0] ** 2 / 2)
        nodes = x.nodes()[:, 0]
        inner = np.abs(nodes) <= 0.5  # the minimizer x/2 stays inside the box
        err = np.abs(inf_conv_quadratic(x, 1.0).values - nodes**2 / 4)
        assert err[inner].max() <= x.spacing[0] ** 2
        neg = x.with_values(-x.values)
        err = np.abs(sup_conv_quadratic(neg, 1.0).values + nodes**2 / 4)
        assert err[inner].max() <= x.spacing[0] ** 2

    def test_bad_t(self):
        g = make_grid([0], [1], 3)
        for t in (0.0, -1.0, np.inf):
            with pytest.raises(ValueError):
                inf_conv_quadratic(g, t)

    @given(grids)
    @settings(max_examples=40)
    def test_double_envelope_domination(self, data):
        dims, seed, t = data
        g = random_grid(dims, seed)
        closing = inf_conv_quadratic(sup_conv_quadratic(g, t), t).values
        opening = sup_conv_quadratic(inf_conv_quadratic(g, t), t).values
        assert np.all(closing >= g.values - 1e-12)
        assert np.all(opening <= g.values + 1e-12)
        assert np.all(inf_conv_quadratic(g, t).values <= g.values)
        assert np.all(sup_conv_quadratic(g, t).values >= g.values)

    @given(grids, st.floats(0, 2))
    @settings(max_examples=40)
    def test_monotone(self, data, bump):
        dims, seed, t = data
        g1 = random_grid(dims, seed)
        rng = np.random.default_rng(seed + 1)
        g2 = g1.with_values(g1.values + bump * rng.uniform(size=g1.dims))
        for op in (
            lambda g: inf_conv_quadratic(g, t),
            lambda g: sup_conv_quadratic(g, t),
            lambda g: inf_conv_quadratic(sup_conv_quadratic(g, t), t),
            lambda g: sup_conv_quadratic(inf_conv_quadratic(g, t), t),
        ):
            assert np.all(op(g1).values <= op(g2).values + 1e-12)

    def test_fixed_point_on_semiconcave(self):
        g = make_grid([-2], [2], 4097, lambda p: -p[:, 0] ** 2 / 2)
        F = inf_conv_quadratic(sup_conv_quadratic(g, 1.0), 1.0)
        nodes = g.nodes()[:, 0]
        central = np.abs(nodes) <= 1.0  # the sup-conv maximizer 2x stays in the box
        assert np.abs(F.values - g.values)[central].max() <= 1e-6


class TestDiagnostics:
    def test_affine(self):
        g = make_grid([-1, -1], [1, 2], (11, 13), lambda p: 2 * p[:, 0] - p[:, 1] + 1)
        field = grad_fd(g)
        np.testing.assert_allclose(field[..., 0], 2.0, atol=1e-12)
        assert lip_of_gradient(field, g.spacing) <= 1e-10

    def test_half_square(self):
        g = make_grid([-1, -1], [1, 1], 41, lambda p: 0.5 * np.sum(p**2, axis=1))
        field = grad_fd(g)
        assert lip_of_gradient(field, g.spacing, g.interior_mask()) == pytest.approx(1.0, abs=1e-9)

    def test_holder(self):
        g = make_grid([-1], [1], 801, lambda p: (2 / 3) * np.abs(p[:, 0]) ** 1.5)
        field = grad_fd(g)
        c = holder_of_gradient(field, g.spacing, 0.5, g.interior_mask())
        assert 0.9 <= c <= 1.5  # |x|^{1/2} sign(x) has constant sqrt(2) at symmetric pairs

    def test_needs_three_nodes(self):
        with pytest.raises(ValueError):
            grad_fd(make_grid([0, 0], [1, 1], (2, 5)))


def envelopes(jets, lo, hi, dims, omega=ID):
    M = wg_constant(jets, omega).M
    eg = envelope_grid(EnvelopeSpec.from_modulus(jets, omega, M), lo, hi, dims)
    return eg, M


class TestInsertC11:
    def test_affine_fixed(self):
        g = make_grid([-1, -1], [1, 1], 33, lambda p: 0.5 * p[:, 0] - 0.25 * p[:, 1])
        res = insert_c11(g, g, M=1.0)
        inner = g.interior_mask(shell=4)
        assert np.abs(res.F.values - g.values)[inner].max() <= 1e-12
        assert np.all(res.F.values >= g.values - 1e-15)

    def test_negative_half_square_exact(self):
        g = make_grid([-2], [2], 4097, lambda p: -p[:, 0] ** 2 / 2)
        with pytest.warns(UserWarning, match="semiconvexity"):
            res = insert_c11(g, g, M=1 / 6, t=1.0, jets=None)
        central = np.abs(g.nodes()[:, 0]) <= 1.0
        assert np.abs(res.F.values - g.values)[central].max() <= 1e-6
        assert "t-beyond-semiconvexity-regime" in res.flags

    def test_three_point(self):
        jets = gen_three_point()
        eg, M = envelopes(jets, [-1.0], [3.0], 2049)
        assert M == 1.0
        res = insert_c11(eg.h, eg.H, M, jets=jets)
        d = res.diagnostics
        assert d["sandwich_violations"] == 0 and d["nodes_below_h"] == 0
        assert d["site_max_error"] <= 5 * d["spacing"] ** 2 * 7
        assert d["lip_grad"] <= 12 * M * (1 + 1e-6)

    def test_random_2d(self, rng):
        jets, F0 = random_c11_jets(rng, 2, 25)
        eg, M = envelopes(jets, [-2, -2], [2, 2], 129)
        res = insert_c11(eg.h, eg.H, M, jets=jets)
        d = res.diagnostics
        assert d["sandwich_violations"] == 0
        assert d["site_max_error"] <= d["site_budget"]
        assert d["lip_grad"] <= 30 * M

    def test_small_constant_steep_slope(self):
        # t = 1/(12M) is far larger than the box; the affine tilt keeps minimizers inside
        x = np.linspace(-1, 1, 9)[:, None]
        jets = JetDataset(x, 3 * x[:, 0] + 0.01 * x[:, 0] ** 2, 3 + 0.02 * x)
        eg, M = envelopes(jets, [-2.0], [2.0], 2049)
        assert M < 0.05
        res = insert_c11(eg.h, eg.H, M, jets=jets)
        d = res.diagnostics
        assert d["sandwich_violations"] == 0 and d["nodes_below_h"] == 0
        assert d["site_max_error"] <= d["site_budget"]
        untilted = insert_c11(eg.h, eg.H, M, jets=jets, tilt=None)
        assert untilted.diagnostics["sandwich_violations"] > 0

    def test_tilt_from_grid(self):
        x = np.linspace(-1, 1, 9)[:, None]
        jets = JetDataset(x, 3 * x[:, 0] + 0.01 * x[:, 0] ** 2, 3 + 0.02 * x)
        eg, M = envelopes(jets, [-2.0], [2.0], 2049)
        d = insert_c11(eg.h, eg.H, M).diagnostics
        assert d["sandwich_violations"] == 0

    def test_precondition(self, rng):
        jets, _ = random_c11_jets(rng, 1, 10)
        M = wg_constant(jets, ID).M
        eg = envelope_grid(EnvelopeSpec.from_modulus(jets, ID, M / 20), [-2], [2], 401)
        if eg.violations(1e-9 * (1 + np.abs(eg.H.values).max())):
            with pytest.raises(InsertionError):
                insert_c11(eg.h, eg.H, M / 20)

    def test_zero_constant(self):
        g = make_grid([0], [1], 5, lambda p: 3 * p[:, 0])
        res = insert_c11(g, g, 0.0)
        assert res.t_used == np.inf
        np.testing.assert_array_equal(res.F.values, g.values)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            insert_c11(make_grid([0], [1], 5), make_grid([0], [2], 5), 1.0)


class TestInsertGeneral:
    def test_matches_c11(self, rng):
        jets, _ = random_c11_jets(rng, 2, 6)
        eg, M = envelopes(jets, [-1.5, -1.5], [1.5, 1.5], 21)
        a = insert_c11(eg.h, eg.H, M, tilt=None)
        b = insert_general(eg.h, eg.H, ID, M)
        np.testing.assert_allclose(a.F.values, b.F.values, atol=1e-9)
        assert EXPERIMENTAL in b.flags

    def test_constant(self):
        g = make_grid([0, 0], [1, 1], 9, lambda p: np.full(len(p), -1.0))
        res = insert_general(g, g, Power(0.5), 1.0)
        np.testing.assert_allclose(res.F.values, -1.0, atol=1e-15)

    def test_sqrt_two_site(self):
        from jetext.jet import JetDataset

        jets = JetDataset([[-0.5, 0.0], [0.5, 0.2]], [0.0, 0.3], [[0.2, 0.0], [0.0, -0.1]])
        omega = Power(0.5)
        eg, M = envelopes(jets, [-1, -1], [1, 1], 64, omega)
        res = insert_general(eg.h, eg.H, omega, M, jets=jets)
        assert res.diagnostics["nodes_below_h"] == 0
        assert res.diagnostics["max_above_H"] <= 1e-12

    def test_requires_concave(self):
        g = make_grid([0], [1], 5)
        with pytest.raises(ValueError):
            insert_general(g, g, Power(2.0), 1.0)


class TestPartition:
    def test_single(self):
        p = radial_partition([1.0])
        assert np.all(p.psi(np.random.default_rng(0).normal(size=(10, 2))) == 1.0)

    @given(st.lists(st.floats(0.1, 5), min_size=1, max_size=6, unique=True))
    def test_sums_to_one(self, radii):
        p = radial_partition(sorted(radii))
        s = np.linspace(0, 40, 10_000)
        b = p.bumps(s)
        assert np.abs(b.sum(axis=0) - 1).max() <= 1e-12
        assert np.all(b >= -1e-15)

    def test_support(self):
        p = radial_partition([0.5, 1.0, 2.0])
        rho = np.linspace(0, 4, 4001)
        b = p.bumps(rho**2)
        for g in range(3):
            lo, hi = p.support(g)
            outside = (rho <= lo) | (rho >= hi)
            assert np.all(b[g][outside] == 0.0)

    def test_derivative(self):
        p = radial_partition([0.5, 1.0, 2.0])
        s = np.linspace(0.01, 5, 500)
        h = 1e-6
        fd = (p.bumps(s + h) - p.bumps(s - h)) / (2 * h)
        np.testing.assert_allclose(p.bump_derivatives(s), fd, atol=1e-5)
        assert np.abs(p.bump_derivatives(s)).max() < np.inf

    def test_smoothstep(self):
        assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0 and smoothstep(0.5) == 0.5

    def test_bad_radii(self):
        for r in ([], [1.0, 1.0], [2.0, 1.0], [0.0, 1.0]):
            with pytest.raises(ValueError):
                radial_partition(r)


class TestGlue:
    def test_single_piece(self):
        g = make_grid([-1], [1], 11, lambda p: p[:, 0] ** 3)
        res = glue([(g, [])], radial_partition([1.0]))
        np.testing.assert_array_equal(res.F.values, g.values)

    def test_agreeing_pieces(self):
        g = make_grid([-2, -2], [2, 2], 21, lambda p: np.sin(p[:, 0]) + p[:, 1])
        res = glue([(g, []), (g, [])], radial_partition([0.5, 1.5]))
        np.testing.assert_allclose(res.F.values, g.values, atol=1e-15)

    def test_three_point(self):
        jets = gen_three_point()
        part = radial_partition([0.5, 1.5])
        pieces = []
        for idx in ([0, 1], [1, 2]):
            sub = jets.subset(idx)
            eg, M = envelopes(sub, [-1.0], [3.0], 2049)
            pieces.append((insert_c11(eg.h, eg.H, M, jets=sub).F, idx))
        res = glue(pieces, part, jets)
        d = res.diagnostics
        assert d["site_max_error"] == 0.0
        assert d["site_max_grad_error"] <= 10 * d["spacing"]
        assert res.partition_sum_error <= 1e-12

    def test_uncovered_site(self):
        jets = gen_three_point()
        g = make_grid([-1.0], [3.0], 41)
        with pytest.raises(ValueError, match="site 2"):
            glue([(g, [0, 1]), (g, [1])], radial_partition([0.5, 1.5]), jets)

    def test_count_mismatch(self):
        g = make_grid([-1.0], [3.0], 41)
        with pytest.raises(ValueError):
            glue([(g, [])], radial_partition([0.5, 1.5]))
