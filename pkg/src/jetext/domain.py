"""Quasiconvexity analysis of point clouds sampled from open sets.

The inner metric of the set is approximated by shortest paths in an
epsilon-neighbourhood graph whose edges are straight segments inside the set.
The ratio of path length to chord length estimates the quasiconvexity
constant; it is inflated by the graph's own metric distortion, which is
measured on a reference lattice with the same spacing and radius and reported
as ``slack``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from .jet import JetDataset, lip_and_bound_stats, stable_norm, wg_constant
from .modulus import EmpiricalModulus, Modulus, empirical_modulus

DEFAULT_BUDGET = 200_000
MIN_SOURCES = 8
EDGE_RTOL = 1e-9
REFERENCE_NODES = 200_000
MAX_REACH = 4.0
CHECK_RTOL = 1e-9


class DisconnectedError(ValueError):
    """Raised when an operation needs a connected neighbourhood graph."""


@dataclass(frozen=True, eq=False)
class DomainSample:
    """Point cloud with its epsilon-graph.

    ``edges`` holds index pairs ``i < j`` with Euclidean ``weights``;
    ``severed`` holds pairs closer than ``epsilon`` whose segment leaves the
    set.  ``spacing`` is the median nearest-neighbour distance.
    """

    points: np.ndarray
    epsilon: float
    edges: np.ndarray
    weights: np.ndarray
    severed: np.ndarray
    spacing: float
    labels: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_components(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def connected(self) -> bool:
        return self.n_components == 1

    def matrix(self) -> csr_matrix:
        m = len(self)
        a, b = self.edges.T
        return coo_matrix((self.weights, (a, b)), shape=(m, m)).tocsr()

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=len(self))

    def shortest_paths(self, sources, return_predecessors=False):
        return dijkstra(self.matrix(), directed=False, indices=np.asarray(sources),
                        return_predecessors=return_predecessors)

    def path(self, i: int, j: int) -> np.ndarray:
        """Node indices of a shortest path from ``i`` to ``j``."""
        _, pred = self.shortest_paths([i], return_predecessors=True)
        if i != j and pred[0, j] < 0:
            raise DisconnectedError(f"points {i} and {j} lie in different components")
        nodes = [j]
        while nodes[-1] != i:
            nodes.append(int(pred[0, nodes[-1]]))
        return np.array(nodes[::-1])


def build_graph(points, epsilon: float | None = None, segment_ok=None) -> DomainSample:
    """Epsilon-neighbourhood graph with Euclidean weights.

    ``epsilon`` defaults to twice the median nearest-neighbour distance.
    ``segment_ok(P, Q)`` returns a boolean array marking segments contained in
    the set; rejected pairs are kept as ``severed``.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or len(P) < 2:
        raise ValueError("need an (m, n) array with at least two points")
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    tree = cKDTree(P)
    nn = tree.query(P, k=2)[0][:, 1]
    spacing = float(np.median(nn))
    eps = 2.0 * spacing if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    pairs = tree.query_pairs(eps * (1 + EDGE_RTOL), output_type="ndarray")
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))] if len(pairs) else np.empty((0, 2), int)
    if segment_ok is not None and len(pairs):
        ok = np.asarray(segment_ok(P[pairs[:, 0]], P[pairs[:, 1]]), dtype=bool)
        edges, severed = pairs[ok], pairs[~ok]
    else:
        edges, severed = pairs, np.empty((0, 2), int)
    weights = stable_norm(P[edges[:, 1]] - P[edges[:, 0]])
    m = len(P)
    adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(m, m))
    _, labels = connected_components(adj, directed=False)
    for arr in (P, edges, weights, severed, labels):
        arr.flags.writeable = False
    return DomainSample(P, eps, edges, weights, severed, spacing, labels)


# ------------------------------------------------------- lattice distortion

@lru_cache(maxsize=32)
def _lattice_profile(n: int, reach: float, cells: int):
    """Sorted offset lengths and suffix maxima of graph/chord ratios on ``Z^n``.

    Nodes are ``{0..cells}^n`` with edges along every integer offset of
    length at most ``reach``.  A shortest path to ``v`` in the positive orthant
    only uses offsets with nonnegative coordinates, so the box loses nothing.
    """
    r = int(np.floor(reach + 1e-9))
    offs = np.array([o for o in product(range(-r, r + 1), repeat=n)
                     if 0 < np.dot(o, o) <= reach**2 * (1 + EDGE_RTOL)])
    side = cells + 1
    idx = np.arange(side**n).reshape((side,) * n)
    coords = np.indices((side,) * n).reshape(n, -1).T
    rows, cols, w = [], [], []
    for o in offs:
        tgt = coords + o
        ok = np.all((tgt >= 0) & (tgt < side), axis=1)
        rows.append(idx.ravel()[ok])
        cols.append(idx[tuple(tgt[ok].T)])
        w.append(np.full(ok.sum(), np.linalg.norm(o)))
    A = csr_matrix((np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(side**n, side**n))
    dist = dijkstra(A, directed=True, indices=0)
    chord = np.linalg.norm(coords, axis=1)
    keep = chord > 0
    order = np.argsort(chord[keep], kind="stable")
    lengths = chord[keep][order]
    ratio = (dist[keep] / chord[keep])[order]
    suffix = np.maximum.accumulate(ratio[::-1])[::-1]
    return lengths, suffix


@dataclass(frozen=True)
class LatticeSlack:
    """Worst graph/chord ratio minus one over lattice offsets at least ``d`` long."""

    spacing: float
    lengths: np.ndarray
    suffix: np.ndarray

    def __call__(self, d):
        d = np.asarray(d, dtype=float) / self.spacing
        k = np.clip(np.searchsorted(self.lengths, d, side="left"), 0, len(self.lengths) - 1)
        out = self.suffix[k] - 1.0
        return float(out) if out.ndim == 0 else out

    @property
    def worst(self) -> float:
        return float(self.suffix[0] - 1.0)


def lattice_slack(dim: int, spacing: float, epsilon: float, extent: float) -> LatticeSlack:
    """Graph distortion of the cubic lattice with the given spacing and radius.

    ``extent`` is the largest chord of interest; the reference box is capped at
    about ``REFERENCE_NODES`` nodes.  The radius is clipped to
    ``[1, MAX_REACH]`` spacings; a shorter reach only overstates the distortion.
    """
    if not (spacing > 0 and epsilon > 0):
        raise ValueError("spacing and epsilon must be positive")
    reach = round(float(np.clip(epsilon / spacing, 1.0, MAX_REACH)), 9)
    cap = int(np.floor(REFERENCE_NODES ** (1.0 / dim))) - 1
    cells = int(max(2, min(cap, np.ceil(extent / spacing))))
    lengths, suffix = _lattice_profile(dim, reach, cells)
    return LatticeSlack(spacing, lengths, suffix)


# ------------------------------------------------------------ sources

def _farthest_points(P, candidates, k, chosen):
    """Greedy farthest-point sampling from ``candidates`` given ``chosen``."""
    candidates = np.asarray(candidates)
    if k <= 0 or len(candidates) == 0:
        return []
    C = P[candidates]
    if chosen:
        d = np.min(np.linalg.norm(C[:, None, :] - P[chosen][None, :, :], axis=2), axis=1)
    else:
        d = np.linalg.norm(C - P.mean(axis=0), axis=1)
    out = []
    for _ in range(min(k, len(candidates))):
        a = int(np.argmax(d))
        if d[a] <= 0 and (out or chosen):
            break
        out.append(int(candidates[a]))
        d = np.minimum(d, np.linalg.norm(C - C[a], axis=1))
    return out


def select_sources(d: DomainSample, count: int) -> np.ndarray:
    """Endpoints of severed pairs first, then spread-out boundary nodes."""
    count = min(count, len(d))
    chosen = []
    if len(d.severed):
        sev = np.unique(d.severed.ravel())
        chosen += _farthest_points(d.points, sev, count // 2, chosen)
    deg = d.degrees()
    boundary = np.flatnonzero(deg < deg.max())
    if len(boundary) == 0:
        boundary = np.arange(len(d))
    chosen += _farthest_points(d.points, boundary, count - len(chosen), chosen)
    if len(chosen) < count:
        rest = np.setdiff1d(np.arange(len(d)), chosen)
        chosen += _farthest_points(d.points, rest, count - len(chosen), chosen)
    return np.array(sorted(set(chosen)))


def _source_count(d: DomainSample, budget: int) -> int:
    if budget < 1:
        raise ValueError("pair budget must be positive")
    return int(min(len(d), max(MIN_SOURCES, budget // len(d))))


# ------------------------------------------------------- quasiconvexity

@dataclass
class QCReport:
    c_hat: float
    worst_pair: tuple
    worst_distance: float
    quantiles: dict
    connected: bool
    n_components: int
    component_c_hat: dict
    slack: float
    worst_slack: float
    n_pairs: int
    n_sources: int
    epsilon: float
    spacing: float

    def bound(self, c: float) -> float:
        return c + self.slack

    def within(self, c: float) -> bool:
        return bool(1.0 - CHECK_RTOL <= self.c_hat <= self.bound(c) * (1 + CHECK_RTOL))

    def to_dict(self):
        return {
            "c_hat": _num(self.c_hat),
            "worst_pair": list(self.worst_pair),
            "worst_distance": self.worst_distance,
            "quantiles": self.quantiles,
            "connected": self.connected,
            "n_components": self.n_components,
            "component_c_hat": {str(k): _num(v) for k, v in self.component_c_hat.items()},
            "slack": self.slack,
            "worst_slack": self.worst_slack,
            "pairs": self.n_pairs,
            "sources": self.n_sources,
            "epsilon": self.epsilon,
            "spacing": self.spacing,
        }


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else "inf"


def _source_rows(d: DomainSample, sources):
    D = d.shortest_paths(sources)
    E = stable_norm(d.points[None, :, :] - d.points[sources][:, None, :])
    return D, E


def qc_constant(d: DomainSample, pair_budget: int = DEFAULT_BUDGET, sources=None) -> QCReport:
    """Largest ratio of shortest-path length to chord over source-target pairs.

    Pairs in different components have ratio ``inf``; the largest finite ratio
    per component is reported alongside.
    """
    if sources is None:
        sources = select_sources(d, _source_count(d, pair_budget))
    sources = np.asarray(sources, dtype=int)
    D, E = _source_rows(d, sources)
    off = E > 0
    ratio = np.where(off, D / np.where(off, E, 1.0), -1.0)
    a, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    worst = (int(sources[a]), int(j))
    finite = ratio[off & np.isfinite(ratio)]
    qs = {f"q{q}": float(np.quantile(finite, q / 100)) for q in (50, 90, 99)} if len(finite) else {}
    comp = {}
    for lab in np.unique(d.labels[sources]):
        rows = d.labels[sources] == lab
        same = (d.labels[None, :] == lab) & off[rows]
        comp[int(lab)] = float(ratio[rows][same].max()) if same.any() else 1.0
    extent = float(E[np.isfinite(D) & off].max()) if np.any(np.isfinite(D) & off) else d.spacing
    sl = lattice_slack(d.dim, d.spacing, d.epsilon, extent)
    return QCReport(
        c_hat=float(ratio[a, j]),
        worst_pair=worst,
        worst_distance=float(E[a, j]),
        quantiles=qs,
        connected=d.connected,
        n_components=d.n_components,
        component_c_hat=comp,
        slack=sl.worst,
        worst_slack=sl(E[a, j]),
        n_pairs=int(off.sum()),
        n_sources=len(sources),
        epsilon=d.epsilon,
        spacing=d.spacing,
    )


# ---------------------------------------------------------- inner modulus

def _deviation(f, a, b):
    f = np.asarray(f, dtype=float)
    diff = f[a] - f[b]
    return np.abs(diff) if f.ndim == 1 else stable_norm(diff)


@dataclass
class InnerModulusReport:
    """Path-metric and Euclidean empirical moduli of ``f`` over the same pairs.

    ``omega`` is the least concave majorant of the path-metric modulus; the
    sandwich ``omega/2 <= w_f <= c_hat * omega`` is checked at the Euclidean
    sample abscissae.
    """

    inner: EmpiricalModulus
    euclid: EmpiricalModulus
    omega: Modulus
    c_hat: float
    lower_gap: float
    upper_gap: float
    subadditivity_gap: float
    tol: float

    @property
    def sandwich_ok(self) -> bool:
        return self.lower_gap <= self.tol and self.upper_gap <= self.tol

    @property
    def subadditive_ok(self) -> bool:
        return self.subadditivity_gap <= self.tol

    def to_dict(self):
        return {
            "c_hat": _num(self.c_hat),
            "omega": self.omega.spec(),
            "lower_gap": self.lower_gap,
            "upper_gap": self.upper_gap,
            "sandwich_ok": self.sandwich_ok,
            "subadditivity_gap": self.subadditivity_gap,
            "subadditive_ok": self.subadditive_ok,
        }


def inner_modulus(d: DomainSample, f, pair_budget: int = DEFAULT_BUDGET,
                  sources=None) -> InnerModulusReport:
    """Empirical modulus of ``f`` (scalar or vector valued) in the path metric.

    Pairs are the rows of a many-source shortest-path run plus every graph
    edge; the Euclidean modulus also sees all pairs closer than ``epsilon``,
    including severed ones.  Sub-additivity of the path-metric modulus is
    checked as ``w(a+b) <= w(a) + w(b + epsilon)``, the allowance covering the
    overshoot of a path node past the split point.
    """
    if not d.connected:
        raise DisconnectedError("inner modulus needs a connected graph")
    f = np.asarray(f, dtype=float)
    if f.shape[0] != len(d) or not np.all(np.isfinite(f)):
        raise ValueError("f must hold a finite value for every point")
    if sources is None:
        sources = select_sources(d, _source_count(d, pair_budget))
    sources = np.asarray(sources, dtype=int)
    D, E = _source_rows(d, sources)
    sa = np.repeat(sources, len(d))
    sb = np.tile(np.arange(len(d)), len(sources))
    D, E = D.ravel(), E.ravel()
    keep = E > 0
    ea, eb = d.edges.T
    near = np.concatenate([d.edges, d.severed]) if len(d.severed) else d.edges
    a = np.concatenate([sa[keep], ea])
    b = np.concatenate([sb[keep], eb])
    path = np.concatenate([D[keep], d.weights])
    chord = np.concatenate([E[keep], d.weights])
    dev = _deviation(f, a, b)
    inner = empirical_modulus(path, dev)
    near_chord = stable_norm(d.points[near[:, 1]] - d.points[near[:, 0]])
    euclid = empirical_modulus(np.concatenate([chord, near_chord]),
                               np.concatenate([dev, _deviation(f, near[:, 0], near[:, 1])]))
    omega = inner.concave_majorant()
    c_hat = float(np.max(path / chord))
    scale = max(1.0, float(inner.values.max()) if len(inner.values) else 1.0)
    tol = CHECK_RTOL * scale
    x = euclid.distances
    wf, om = euclid.eval(x), omega.eval(x)
    lower = float(np.max(0.5 * om - wf))
    upper = float(np.max(wf - c_hat * om))
    corners = inner.corners()[0]
    if len(corners) > 64:
        corners = corners[np.linspace(0, len(corners) - 1, 64).astype(int)]
    s, t = np.meshgrid(corners, corners)
    sub = inner.eval(s + t) - inner.eval(s) - inner.eval(t + d.epsilon)
    gap = float(sub.max()) if sub.size else 0.0
    return InnerModulusReport(inner, euclid, omega, c_hat, lower, upper, gap, tol)


# ----------------------------------------------------------- certificates

@dataclass
class ChainBound:
    """Taylor residual along a shortest path, split as in the chaining argument.

    ``taylor <= segments + drift`` is an identity-level bound; the
    aggregation claim is ``segments + drift <= 2 c omega_tilde(L) L``.
    """

    pair: tuple
    length: float
    hops: int
    taylor: float
    segments: float
    drift: float
    aggregate: float

    @property
    def ok(self) -> bool:
        lhs = self.segments + self.drift
        return (self.taylor <= lhs * (1 + CHECK_RTOL) + 1e-300
                and lhs <= self.aggregate * (1 + CHECK_RTOL))

    def to_dict(self):
        return {"pair": list(self.pair), "length": self.length, "hops": self.hops,
                "taylor": self.taylor, "segments": self.segments, "drift": self.drift,
                "aggregate_bound": self.aggregate, "ok": self.ok}


def chain_bound(d: DomainSample, jets: JetDataset, i: int, j: int,
                omega_tilde: Modulus, c_hat: float) -> ChainBound:
    path = d.path(i, j)
    X, f, G = jets.sites, jets.values, jets.grads
    steps = X[path[1:]] - X[path[:-1]]
    seg = np.abs(f[path[1:]] - f[path[:-1]] - np.einsum("ik,ik->i", G[path[:-1]], steps))
    drift = np.abs(np.einsum("ik,ik->i", G[path[:-1]] - G[i], steps))
    L = float(stable_norm(steps).sum())
    taylor = abs(f[j] - f[i] - G[i] @ (X[j] - X[i]))
    return ChainBound((int(i), int(j)), L, len(path) - 1, float(taylor), float(seg.sum()),
                      float(drift.sum()), float(2 * c_hat * omega_tilde.eval(L) * L))


def _check_cloud(d: DomainSample, jets: JetDataset):
    if len(jets) != len(d) or not np.array_equal(jets.sites, d.points):
        raise ValueError("jets must be sampled at the cloud points, in order")
    if not d.connected:
        raise DisconnectedError("certificate needs a connected graph")


@dataclass
class QCCertificate:
    M: float
    K: float
    K_measured: float
    c_hat: float
    slack: float
    budget: float
    worst_pair: tuple | None
    chain: ChainBound | None

    @property
    def precondition_ok(self) -> bool:
        return self.K_measured <= self.K * (1 + CHECK_RTOL)

    @property
    def passed(self) -> bool:
        chain = self.chain is None or self.chain.ok
        return self.precondition_ok and self.M <= self.budget and chain

    def to_dict(self):
        return {
            "M": _num(self.M), "K": self.K, "K_measured": _num(self.K_measured),
            "c_hat": _num(self.c_hat), "slack": self.slack, "budget": _num(self.budget),
            "worst_pair": None if self.worst_pair is None else list(self.worst_pair),
            "precondition_ok": self.precondition_ok,
            "chain": None if self.chain is None else self.chain.to_dict(),
            "passed": self.passed,
        }


def wg_from_quasiconvex(d: DomainSample, jets: JetDataset, omega: Modulus, K: float,
                        qc: QCReport | None = None, chain: bool = True) -> QCCertificate:
    """Check ``M <= 4 K c^3 (1 + slack)`` for jets of a function on the cloud.

    ``K`` is the claimed bound ``w_Df <= K omega``; the measured gradient ratio
    is reported as ``K_measured``.  With ``chain`` the worst Taylor pair is
    re-derived along its shortest path.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    _check_cloud(d, jets)
    qc = qc_constant(d) if qc is None else qc
    rep = wg_constant(jets, omega)
    budget = 4.0 * K * qc.c_hat**3 * (1.0 + qc.slack)
    cb = None
    if chain and rep.argmax_taylor is not None:
        om_t = inner_modulus(d, jets.grads).omega
        cb = chain_bound(d, jets, *rep.argmax_taylor, om_t, qc.c_hat)
    return QCCertificate(rep.M, float(K), rep.M_grad, qc.c_hat, qc.slack, budget,
                         rep.argmax_taylor, cb)


@dataclass
class LipCertificate:
    lip: float
    sup_grad: float
    c_hat: float
    slack: float

    @property
    def bound(self) -> float:
        return self.c_hat * self.sup_grad * (1.0 + self.slack)

    @property
    def passed(self) -> bool:
        return self.lip <= self.bound * (1 + CHECK_RTOL)

    def to_dict(self):
        return {"lip": self.lip, "sup_grad": self.sup_grad, "c_hat": _num(self.c_hat),
                "slack": self.slack, "bound": _num(self.bound), "passed": self.passed}


def lipschitz_from_bounded_gradient(d: DomainSample, jets: JetDataset,
                                    qc: QCReport | None = None) -> LipCertificate:
    """Check ``Lip(f) <= c sup|G| (1 + slack)`` by an exact pair scan."""
    _check_cloud(d, jets)
    qc = qc_constant(d) if qc is None else qc
    st = lip_and_bound_stats(jets)
    return LipCertificate(st.lip, st.sup_grad, qc.c_hat, qc.slack)
