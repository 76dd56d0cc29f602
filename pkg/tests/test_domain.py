import numpy as np
import pytest

from jetext.domain import (
    DisconnectedError,
    build_graph,
    inner_modulus,
    lattice_slack,
    lipschitz_from_bounded_gradient,
    qc_constant,
    select_sources,
    wg_from_quasiconvex,
)
from jetext.fixtures import gen_annulus, gen_box, gen_parabola_cusp, lattice
from jetext.jet import JetDataset
from jetext.modulus import Power

ID = Power(1.0)


def quadratic_jets(d):
    P = d.points
    return JetDataset(P, 0.5 * np.sum(P**2, axis=1), P)


class TestGraph:
    def test_two_points(self):
        d = build_graph([[0.0, 0.0], [0.5, 0.0]], epsilon=1.0)
        assert len(d.edges) == 1 and d.connected
        np.testing.assert_allclose(d.weights, [0.5])
        d = build_graph([[0.0, 0.0], [2.0, 0.0]], epsilon=1.0)
        assert len(d.edges) == 0 and not d.connected and d.n_components == 2

    def test_grid_connected(self):
        P = lattice([0, 0], [1, 1], 10)
        d = build_graph(P, epsilon=1.5 * 0.1)
        assert d.connected
        # 4-neighbours and diagonals on a 10 x 10 grid
        assert len(d.edges) == 2 * 10 * 9 + 2 * 9 * 9

    def test_default_epsilon(self):
        d = build_graph(lattice([0, 0], [1, 1], 8))
        assert d.spacing == pytest.approx(1 / 8)
        assert d.epsilon == pytest.approx(2 / 8)

    def test_weights_are_distances(self, rng):
        P = rng.uniform(size=(60, 3))
        d = build_graph(P, epsilon=0.4)
        a, b = d.edges.T
        np.testing.assert_allclose(d.weights, np.linalg.norm(P[a] - P[b], axis=1), rtol=1e-15)
        assert np.all(a < b)

    def test_severed(self):
        P = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        d = build_graph(P, 3.0, segment_ok=lambda A, B: np.abs(A[:, 1] + B[:, 1]) > 0)
        assert d.severed.tolist() == [[0, 1]]
        assert len(d.edges) == 2 and d.connected

    def test_errors(self):
        with pytest.raises(ValueError):
            build_graph([[0.0, 0.0]])
        with pytest.raises(ValueError):
            build_graph([[0.0], [1.0]], epsilon=0.0)
        with pytest.raises(ValueError):
            build_graph([[0.0], [np.nan]])

    def test_path(self):
        d = build_graph(lattice([0], [1], 10))
        assert d.path(0, 9).tolist() in ([0, 2, 4, 6, 8, 9], [0, 1, 3, 5, 7, 9])
        with pytest.raises(DisconnectedError):
            build_graph([[0.0], [5.0]], 1.0).path(0, 1)


class TestLatticeSlack:
    def test_oracle_2d(self):
        # offsets of length <= 2 span the 0 and 45 degree directions, so the
        # graph distance to (a, b), a >= b >= 0, is (a - b) + sqrt(2) b
        sl = lattice_slack(2, 1.0, 2.0, 30)
        a, b = np.meshgrid(np.arange(31), np.arange(31))
        hi, lo = np.maximum(a, b), np.minimum(a, b)
        ratio = ((hi - lo) + np.sqrt(2) * lo) / np.hypot(a, b).clip(1e-300)
        ratio[0, 0] = 0
        assert sl.worst + 1 == pytest.approx(ratio.max(), rel=1e-12)
        # the supremum over directions is sqrt(4 - 2 sqrt 2), reached at 22.5 degrees
        assert sl.worst + 1 <= np.sqrt(4 - 2 * np.sqrt(2))

    def test_monotone_in_distance(self):
        sl = lattice_slack(3, 1.0, 2.0, 12)
        d = np.linspace(1, 12, 50)
        assert np.all(np.diff(sl(d)) <= 0)
        assert sl(1.0) == sl.worst

    def test_longer_reach_smaller_slack(self):
        assert lattice_slack(2, 1.0, 3.0, 30).worst < lattice_slack(2, 1.0, 2.0, 30).worst


class TestQC:
    @pytest.mark.parametrize("dim,res", [(2, 24), (3, 8)])
    def test_convex(self, dim, res):
        d = gen_box([0] * dim, [1] * dim, res)
        q = qc_constant(d)
        assert q.connected and q.within(1.0)
        assert q.quantiles["q50"] >= 1.0 - 1e-12

    def test_all_ratios_at_least_one(self, rng):
        d = build_graph(rng.uniform(size=(300, 2)))
        src = np.arange(0, 300, 7)
        D = d.shortest_paths(src)
        E = np.linalg.norm(d.points[None] - d.points[src][:, None], axis=2)
        ok = (E > 0) & np.isfinite(D)
        assert np.all(D[ok] >= E[ok] * (1 - 1e-12))

    def test_monotone_in_epsilon(self):
        P = gen_annulus(resolution=24).points
        src = np.arange(0, len(P), 23)
        seg = lambda A, B: np.ones(len(A), bool)  # noqa: E731
        vals = [qc_constant(build_graph(P, e / 24, seg), sources=src).c_hat
                for e in (1.5, 2.0, 3.0, 4.0)]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))

    def test_disconnected(self):
        P = np.vstack([lattice([0, 0], [1, 1], 6), lattice([3, 0], [4, 1], 6)])
        q = qc_constant(build_graph(P))
        assert not q.connected and q.c_hat == np.inf
        assert all(np.isfinite(v) for v in q.component_c_hat.values())
        assert q.to_dict()["c_hat"] == "inf"

    def test_sources_include_severed(self):
        d = gen_parabola_cusp(0.05)[0]
        src = select_sources(d, 16)
        assert np.intersect1d(src, d.severed.ravel()).size >= 8

    def test_annulus(self):
        q = qc_constant(gen_annulus())
        assert q.within(2.0) and q.slack < 0.3
        # antipodal points near the inner circle need about half its length
        assert q.c_hat > 1.4


class TestInnerModulus:
    def test_linear(self):
        d = gen_box([0, 0], [1, 1], 16)
        a = np.array([0.7, 0.0])
        rep = inner_modulus(d, d.points @ a)
        x = rep.inner.corners()[0]
        np.testing.assert_allclose(rep.inner.eval(x), 0.7 * x, rtol=1e-12)
        np.testing.assert_allclose(rep.omega.eval(x), 0.7 * x, rtol=1e-12)
        assert rep.sandwich_ok and rep.subadditive_ok

    def test_constant(self):
        d = gen_box([0, 0], [1, 1], 8)
        rep = inner_modulus(d, np.full(len(d), 3.0))
        assert rep.omega.eval(1.0) == 0.0 and rep.sandwich_ok

    def test_smooth_sandwich(self):
        d = gen_annulus(resolution=24)
        P = d.points
        rep = inner_modulus(d, np.sin(3 * P[:, 0]) * P[:, 1])
        assert rep.sandwich_ok and rep.subadditive_ok
        x = rep.inner.distances
        assert np.all(rep.omega.eval(x) <= 2 * rep.inner.eval(x) * (1 + 1e-9))

    def test_vector_values(self):
        d = gen_box([0, 0], [1, 1], 8)
        rep = inner_modulus(d, 2.0 * d.points)
        np.testing.assert_allclose(rep.inner.values[-1], 2 * np.sqrt(2) * 7 / 8, rtol=1e-12)

    def test_errors(self):
        with pytest.raises(DisconnectedError):
            inner_modulus(build_graph([[0.0], [5.0]], 1.0), [0.0, 1.0])
        d = gen_box([0, 0], [1, 1], 4)
        with pytest.raises(ValueError):
            inner_modulus(d, np.zeros(3))


class TestCertificates:
    def test_convex_quadratic(self):
        d = gen_box([0, 0], [1, 1], 16)
        cert = wg_from_quasiconvex(d, quadratic_jets(d), ID, K=1.0)
        assert cert.M == pytest.approx(1.0, rel=1e-12) and cert.M <= 4
        assert cert.passed and cert.chain.ok

    def test_annulus_budget(self):
        d = gen_annulus(resolution=32)
        q = qc_constant(d)
        cert = wg_from_quasiconvex(d, quadratic_jets(d), ID, 1.0, q)
        assert cert.passed
        assert cert.M <= 4 * 2**3 * (1 + q.slack)

    def test_wrong_K(self):
        d = gen_box([0, 0], [1, 1], 8)
        cert = wg_from_quasiconvex(d, quadratic_jets(d), ID, K=0.5, chain=False)
        assert not cert.precondition_ok and not cert.passed

    def test_cusp_constant_diverges(self):
        # the Whitney constant blows up under refinement, and so does c_hat
        Ms, cs = [], []
        for scale in (0.1, 0.03, 0.01):
            d, jets = gen_parabola_cusp(scale)
            cert = wg_from_quasiconvex(d, jets, Power(0.5), K=2.0, chain=False)
            Ms.append(cert.M)
            cs.append(cert.c_hat)
        assert Ms[0] < Ms[1] < Ms[2] and cs[0] < cs[1] < cs[2]
        assert Ms[2] > 5 * Ms[0]

    def test_sites_must_match(self):
        d = gen_box([0, 0], [1, 1], 4)
        jets = quadratic_jets(gen_box([0, 0], [1, 1], 5))
        with pytest.raises(ValueError):
            wg_from_quasiconvex(d, jets, ID, 1.0)

    def test_lipschitz_linear(self):
        d = gen_box([0, 0], [1, 1], 12)
        a = np.array([0.3, -0.4])
        jets = JetDataset(d.points, d.points @ a, np.tile(a, (len(d), 1)))
        cert = lipschitz_from_bounded_gradient(d, jets)
        assert cert.lip == pytest.approx(0.5, rel=1e-12)
        assert cert.sup_grad == pytest.approx(0.5, rel=1e-15) and cert.passed

    def test_lipschitz_annulus(self):
        d = gen_annulus(resolution=24)
        cert = lipschitz_from_bounded_gradient(d, quadratic_jets(d))
        assert cert.passed and cert.lip <= 2 * cert.sup_grad * (1 + cert.slack)

    def test_lipschitz_disconnected(self):
        d = build_graph([[0.0], [5.0]], 1.0)
        with pytest.raises(DisconnectedError):
            lipschitz_from_bounded_gradient(d, JetDataset([[0.0], [5.0]], [0, 0], [[0], [0]]))
