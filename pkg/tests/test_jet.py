import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jetext.jet import (
    JetDataset,
    JetLoadError,
    concave_wg_modulus,
    lip_and_bound_stats,
    load_jets,
    save_jets,
    wg_constant,
    wg_constant_blocks,
    wtilde_profile,
)
from jetext.modulus import Modulus, Power, linear_capped


def three_point(n=1):
    e = np.zeros(n)
    e[0] = 1.0
    return JetDataset(np.stack([0 * e, e, 2 * e]), [0.0, 0.0, 1.0], np.zeros((3, n)))


def quadratic_jets(sites):
    sites = np.atleast_2d(sites)
    return JetDataset(sites, 0.5 * np.sum(sites**2, axis=1), sites)


def brute_wg(jets, omega):
    """Direct double loop over ordered pairs (oracle)."""
    mg = mt = 0.0
    for i, j in itertools.permutations(range(len(jets)), 2):
        x, y = jets.sites[i], jets.sites[j]
        d = np.linalg.norm(y - x)
        w = omega.eval(d)
        gn = np.linalg.norm(jets.grads[j] - jets.grads[i])
        tn = abs(jets.values[j] - jets.values[i] - jets.grads[i] @ (y - x))
        mg = max(mg, gn / w if w > 0 else (np.inf if gn > 0 else 0.0))
        mt = max(mt, tn / (w * d) if w > 0 else (np.inf if tn > 0 else 0.0))
    return mg, mt


# sites on a 1/64 lattice keep the brute-force oracle away from underflow
coord = st.integers(-192, 192).map(lambda k: k / 64)

jet_data = st.integers(1, 3).flatmap(
    lambda n: st.integers(2, 12).flatmap(
        lambda m: st.tuples(
            st.lists(st.lists(coord, min_size=n, max_size=n), min_size=m, max_size=m,
                     unique_by=lambda p: tuple(p)),
            st.lists(st.floats(-3, 3), min_size=m, max_size=m),
            st.lists(st.lists(st.floats(-3, 3), min_size=n, max_size=n), min_size=m, max_size=m),
        )
    )
)


def make(data):
    x, f, g = (np.array(a, dtype=float) for a in data)
    return JetDataset(x, f, g)


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError, match="distinct"):
            JetDataset([[0.0], [0.0]], [0, 1], [[0], [0]])
        with pytest.raises(ValueError, match="non-finite"):
            JetDataset([[np.nan]], [0], [[0]])
        j = three_point(2)
        with pytest.raises(ValueError):
            j.sites[0, 0] = 5.0

    def test_load_roundtrip(self, tmp_path):
        j = three_point(2)
        save_jets(j, tmp_path / "j.csv")
        k = load_jets(tmp_path / "j.csv")
        np.testing.assert_array_equal(k.sites, j.sites)
        np.testing.assert_array_equal(k.values, j.values)
        assert k.dim == 2 and len(k) == 3

    def test_single_row(self, tmp_path):
        p = tmp_path / "j.csv"
        p.write_text("x1,x2,f,g1,g2\n1,2,3,4,5\n")
        j = load_jets(p)
        assert len(j) == 1 and j.dim == 2

    @pytest.mark.parametrize("body,msg", [
        ("0,1,2\n0,3,4\n", "row 3: duplicate"),
        ("0,1,2\n1,nan,4\n", "row 3: NaN"),
        ("0,1,2\n1,2\n", "row 3: expected 3"),
        ("0,1,x\n", "row 2: non-numeric"),
    ])
    def test_load_errors(self, tmp_path, body, msg):
        p = tmp_path / "j.csv"
        p.write_text("x1,f,g1\n" + body)
        with pytest.raises(JetLoadError, match=msg):
            load_jets(p)


class TestWG:
    def test_single_site(self):
        r = wg_constant(JetDataset([[1.0, 2.0]], [3.0], [[1.0, 1.0]]), Power(1.0))
        assert r.M == 0.0 and r.argmax_taylor is None

    def test_three_point_pin(self):
        r = wg_constant(three_point(), Power(1.0))
        assert abs(r.M - 1.0) <= 1e-12
        assert r.M_grad == 0.0
        assert r.argmax_taylor == (1, 2)

    def test_three_point_ratio_table(self):
        j = three_point()
        ratios = {}
        for i, k in itertools.permutations(range(3), 2):
            d = abs(k - i)
            ratios[(i, k)] = abs(j.values[k] - j.values[i]) / d**2
        assert sorted(ratios.values()) == [0, 0, 0.25, 0.25, 1, 1]

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_half_norm_squared(self, n, rng):
        j = quadratic_jets(rng.normal(size=(40, n)))
        r = wg_constant(j, Power(1.0))
        assert r.M_grad == pytest.approx(1.0, rel=1e-9)
        assert r.M_taylor == pytest.approx(0.5, rel=1e-9)

    def test_infinite_when_modulus_vanishes(self):
        j = JetDataset([[0.0], [3.0]], [0.0, 0.0], [[0.0], [1.0]])
        r = wg_constant(j, linear_capped(1.0, cap=1.0).scaled(1.0))
        assert np.isfinite(r.M)
        from jetext.modulus import ZERO

        r = wg_constant(j, ZERO)
        assert r.M == np.inf and not r.finite and r.argmax_grad is not None
        assert wg_constant(JetDataset([[0.0], [1.0]], [1.0, 1.0], [[0.0], [0.0]]), ZERO).M == 0.0

    @given(jet_data)
    @settings(max_examples=40)
    def test_matches_brute_force(self, data):
        j = make(data)
        for omega in (Power(1.0), Power(0.5), linear_capped(2.0, cap=1.0)):
            r = wg_constant(j, omega)
            mg, mt = brute_wg(j, omega)
            assert r.M_grad == pytest.approx(mg, rel=1e-12, abs=1e-12)
            assert r.M_taylor == pytest.approx(mt, rel=1e-12, abs=1e-12)

    @given(jet_data)
    @settings(max_examples=40)
    def test_kernel_matches_blocks(self, data):
        j = make(data)
        for omega in (Power(1.0), Power(0.5), linear_capped(2.0, cap=1.0)):
            a, b = wg_constant(j, omega), wg_constant_blocks(j, omega)
            assert a.M_grad == pytest.approx(b.M_grad, rel=1e-12, abs=1e-300)
            assert a.M_taylor == pytest.approx(b.M_taylor, rel=1e-12, abs=1e-300)

    def test_generic_modulus_fallback(self):
        class Halved(Modulus):
            def eval(self, t):
                return 0.5 * np.asarray(t, dtype=float)

            def spec(self):
                return "halved"

        assert wg_constant(three_point(), Halved()).M == 2.0

    @given(jet_data, st.floats(0.1, 10))
    @settings(max_examples=30)
    def test_scale_covariance(self, data, c):
        j = make(data)
        a = wg_constant(j, Power(0.5)).M
        b = wg_constant(j, Power(0.5, c)).M
        assert b == pytest.approx(a / c, rel=1e-12)

    @given(jet_data)
    @settings(max_examples=30)
    def test_wtilde_bounded_by_wg(self, data):
        j = make(data)
        omega = Power(0.5)
        M = wg_constant(j, omega).M
        prof = wtilde_profile(j)
        assert np.all(prof.residual <= M * omega.eval(prof.distances) * (1 + 1e-9) + 1e-12)

    def test_sampled_from_c1omega(self, rng):
        # F(x) = (2/3)|x|^{3/2} sign-symmetric has F' = |x|^{1/2} sign(x), modulus sqrt(2) t^{1/2}
        x = rng.uniform(-2, 2, size=60)
        j = JetDataset(x[:, None], (2 / 3) * np.abs(x) ** 1.5, (np.sign(x) * np.sqrt(np.abs(x)))[:, None])
        assert wg_constant(j, Power(0.5, np.sqrt(2))).M <= 1 + 1e-9


class TestProfile:
    def test_linear_function(self, rng):
        x = rng.normal(size=(20, 2))
        a = np.array([1.0, -2.0])
        prof = wtilde_profile(JetDataset(x, x @ a, np.tile(a, (20, 1))))
        assert np.all(prof.residual <= 1e-12)

    def test_monotone_and_distinct(self, rng):
        prof = wtilde_profile(quadratic_jets(rng.normal(size=(15, 2))))
        assert np.all(np.diff(prof.distances) > 0)
        assert np.all(np.diff(prof.residual) >= 0)

    def test_integer_spacing(self):
        x = np.arange(1, 9, dtype=float)
        vals = np.where(x % 2 == 0, 0.0, (x + 1) / 2)
        prof = wtilde_profile(JetDataset(x[:, None], vals, np.zeros((8, 1))))
        assert prof.r(0.999) == 0.0
        assert prof.r(1.0) > 0

    def test_needs_two_sites(self):
        with pytest.raises(ValueError):
            wtilde_profile(JetDataset([[0.0]], [0.0], [[0.0]]))


class TestStats:
    def test_single_site(self):
        s = lip_and_bound_stats(JetDataset([[0.0, 0.0]], [2.0], [[3.0, 4.0]]), 1.0)
        assert s.lip == 0 and s.sup_grad == 5.0 and s.sup_value == 2.0

    def test_empty_ball(self):
        s = lip_and_bound_stats(JetDataset([[5.0]], [1.0], [[1.0]]), 1.0)
        assert s.empty and s.count == 0 and s.lip == 0

    def test_quadratic_ball(self, rng):
        j = quadratic_jets(rng.uniform(-2, 2, size=(50, 2)))
        s = lip_and_bound_stats(j, 1.5)
        norms = np.linalg.norm(j.sites, axis=1)
        assert s.sup_grad == pytest.approx(norms[norms <= 1.5].max())
        assert s.sup_grad <= 1.5

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            lip_and_bound_stats(three_point(), 0.0)

    @given(jet_data, st.floats(0.2, 5))
    @settings(max_examples=30)
    def test_bounded_concave_modulus_gives_lipschitz(self, data, K):
        # a bounded concave modulus with cap K: Lip(f) <= sup|G| + (K + 1) M
        j = make(data)
        omega = linear_capped(1.0, cap=K)
        M = wg_constant(j, omega).M
        s = lip_and_bound_stats(j, 10.0)
        assert s.lip <= s.sup_grad + (K + 1) * M + 1e-9 * (1 + s.lip)


class TestConcaveModulus:
    def test_three_point(self):
        c = concave_wg_modulus(three_point(3))
        assert c.modulus.t == (0.0, 1.0) and c.modulus.v == (0.0, 1.0) and c.modulus.tail == 0.0
        assert c.report.M <= 1 + 1e-9 and c.certified
        assert c.alpha.eval(1.0) == 1.0 and c.alpha.eval(2.0) == 1.0

    def test_linear(self, rng):
        x = rng.normal(size=(10, 3))
        a = np.ones(3)
        c = concave_wg_modulus(JetDataset(x, x @ a, np.tile(a, (10, 1))))
        # residuals are pure rounding noise
        assert c.certified and c.alpha.values.max() <= 1e-12

    @given(jet_data)
    @settings(max_examples=40)
    def test_certifies_and_concave(self, data):
        c = concave_wg_modulus(make(data))
        assert c.modulus.is_concave()
        assert c.report.M <= 1 + 1e-9

    def test_smooth_data_not_flagged(self, rng):
        c = concave_wg_modulus(quadratic_jets(rng.uniform(-1, 1, size=(200, 2))))
        assert c.verdict == "plausible" and not c.warning

    def test_nonvanishing_residual_flagged(self):
        # cross pairs with residual exactly 1/2 at every scale
        xs = np.geomspace(1e-3, 0.3, 25)
        top = np.stack([xs, xs**2], axis=1)
        bot = np.stack([xs, -(xs**2)], axis=1)
        sites = np.concatenate([top, bot])
        vals = np.concatenate([xs**2, 0 * xs])
        grads = np.concatenate([np.stack([2 * xs, 0 * xs], 1), np.zeros((25, 2))])
        j = JetDataset(sites, vals, grads)
        prof = wtilde_profile(j)
        assert np.all(prof.residual >= 0.5 - 1e-6)
        c = concave_wg_modulus(j)
        assert c.warning and c.verdict == "fails"
        assert c.to_dict()["warning"] == "W-tilde plausibly fails"
