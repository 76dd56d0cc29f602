"""Generators for reference jets and sampled domains.

Every generator is deterministic in its parameters.  Domains are sampled on
jitter-free cell-centred lattices clipped to the set, and each domain carries
an exact segment test so that graph edges never leave the set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import DomainSample, build_graph
from .jet import JetDataset
from .regularize import _smoothstep_d, smoothstep

FIXTURES = ("three_point", "slit_square", "parabola_cusp", "oscillating_domain",
            "annulus", "cone_shell", "integer_jet", "box")


# ---------------------------------------------------------------- jet data

def gen_three_point(n: int = 1) -> JetDataset:
    """Sites ``0, e, 2e`` with values ``0, 0, 1`` and zero gradients."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    e = np.zeros(n)
    e[0] = 1.0
    return JetDataset(np.stack([0 * e, e, 2 * e]), [0.0, 0.0, 1.0], np.zeros((3, n)))


def gen_integer_jet(N: int) -> JetDataset:
    """Sites ``1..2N`` on the line, ``f(2k-1) = k``, ``f(2k) = 0``, zero gradients."""
    if N < 2:
        raise ValueError("truncation N must be at least 2")
    x = np.arange(1, 2 * N + 1, dtype=float)
    f = np.where(x % 2 == 1, (x + 1) / 2, 0.0)
    return JetDataset(x[:, None], f, np.zeros((2 * N, 1)))


@dataclass(frozen=True)
class QuadraticSum:
    """``F(x) = sum_k (1/2) (x - c_k)^T A_k (x - c_k) + <b, x>``."""

    A: np.ndarray
    c: np.ndarray
    b: np.ndarray

    def __call__(self, x):
        x = np.atleast_2d(x)
        d = x[:, None, :] - self.c[None, :, :]
        return 0.5 * np.einsum("qki,kij,qkj->q", d, self.A, d) + x @ self.b

    def grad(self, x):
        x = np.atleast_2d(x)
        d = x[:, None, :] - self.c[None, :, :]
        return np.einsum("kij,qkj->qi", self.A, d) + self.b

    @property
    def hessian(self) -> np.ndarray:
        return self.A.sum(axis=0)

    @property
    def grad_lipschitz(self) -> float:
        return float(np.abs(np.linalg.eigvalsh(self.hessian)).max())


def random_quadratic_sum(rng, n: int, terms: int | None = None, scale=1.0) -> QuadraticSum:
    """Sum of up to five random (possibly indefinite) quadratics in ``n`` variables."""
    rng = np.random.default_rng(rng)
    k = int(rng.integers(1, 6)) if terms is None else terms
    B = rng.normal(size=(k, n, n))
    A = scale * 0.5 * (B + B.transpose(0, 2, 1)) / np.sqrt(n)
    return QuadraticSum(A, rng.uniform(-1, 1, size=(k, n)), rng.normal(size=n))


def random_c11_jets(rng, n: int, m: int, box=1.0, terms=None):
    """Jets of a random quadratic sum at ``m`` uniform sites in ``[-box, box]^n``."""
    rng = np.random.default_rng(rng)
    F = random_quadratic_sum(rng, n, terms)
    x = rng.uniform(-box, box, size=(m, n))
    return JetDataset(x, F(x), F.grad(x)), F


# ---------------------------------------------------------------- clouds

def lattice(lo, hi, resolution: int) -> np.ndarray:
    """Cell-centred lattice with ``resolution`` cells per unit length in the box."""
    if resolution < 1:
        raise ValueError("resolution must be positive")
    h = 1.0 / resolution
    axes = [l + h * (0.5 + np.arange(int(round((u - l) * resolution))))
            for l, u in zip(np.atleast_1d(lo), np.atleast_1d(hi))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def _quadratic_roots(c0, c1, c2):
    """Real roots of ``c2 s^2 + c1 s + c0`` per row, NaN where absent."""
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = c1**2 - 4 * c2 * c0
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        quad = c2 != 0
        r1 = np.where(quad, (-c1 - sq) / (2 * c2), np.where(c1 != 0, -c0 / c1, np.nan))
        r2 = np.where(quad, (-c1 + sq) / (2 * c2), np.nan)
    return r1, r2


def _segment_hits(A, B, polys, bad):
    """Whether each segment ``[A, B]`` meets a closed semialgebraic set.

    ``polys(A, D)`` lists coefficient triples ``(c0, c1, c2)`` of the
    polynomials in ``s`` whose signs define the set along ``A + s D``; the
    membership test ``bad(P)`` is then exact at all sign-change points and
    midpoints between them.
    """
    D = B - A
    cand = [np.zeros(len(A)), np.ones(len(A))]
    for c0, c1, c2 in polys(A, D):
        cand.extend(_quadratic_roots(c0, c1, c2))
    S = np.sort(np.clip(np.stack(cand, axis=1), 0.0, 1.0), axis=1)
    S = np.concatenate([S, 0.5 * (S[:, 1:] + S[:, :-1])], axis=1)
    hit = np.zeros(len(A), bool)
    for k in range(S.shape[1]):
        s = S[:, k]
        ok = np.isfinite(s)
        P = A + np.where(ok, s, 0.0)[:, None] * D
        hit |= ok & bad(P)
    return hit


def _dot(A, B):
    return np.einsum("ij,ij->i", A, B)


def gen_box(lo=(0.0, 0.0), hi=(1.0, 1.0), resolution: int = 32, epsilon=None) -> DomainSample:
    """Convex box cloud."""
    return build_graph(lattice(lo, hi, resolution), epsilon)


def gen_annulus(r: float = 0.5, R: float = 1.0, resolution: int = 64, dim: int = 2,
                epsilon=None) -> DomainSample:
    """Cloud of the shell ``r < |x| < R``."""
    if not 0 <= r < R:
        raise ValueError("need 0 <= r < R")
    P = lattice([-R] * dim, [R] * dim, int(np.ceil(resolution)))
    rad = np.linalg.norm(P, axis=1)
    P = P[(rad > r) & (rad < R)]

    def segment_ok(A, B):
        D = B - A
        dd = _dot(D, D)
        s = np.clip(-_dot(A, D) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
        return np.linalg.norm(A + s[:, None] * D, axis=1) > r

    return build_graph(P, epsilon, segment_ok)


# slit square: (0,3)^2 without the closed unit square [1,2]^2 and the slit (0,1) x {2}
SLIT_PROBES = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def slit_square_values(P):
    """Value and gradient of the slit-square function."""
    x, y = P[:, 0], P[:, 1]
    f = np.where(y > 2, 1.0, 0.0)
    right = (x > 2) & (y >= 1) & (y <= 2)
    f = np.where(right, np.sin(0.5 * np.pi * (y - 1)) ** 2, f)
    G = np.zeros_like(P)
    G[:, 1] = np.where(right, 0.5 * np.pi * np.sin(np.pi * (y - 1)), 0.0)
    return f, G


def _slit_segment_ok(A, B):
    D = B - A
    with np.errstate(divide="ignore", invalid="ignore"):
        # slab test against the closed square [1, 2]^2
        t0 = np.zeros(len(A))
        t1 = np.ones(len(A))
        for k in range(2):
            lo = (1.0 - A[:, k]) / D[:, k]
            hi = (2.0 - A[:, k]) / D[:, k]
            flat = D[:, k] == 0
            inside = (A[:, k] >= 1) & (A[:, k] <= 2)
            a, b = np.minimum(lo, hi), np.maximum(lo, hi)
            t0 = np.where(flat, np.where(inside, t0, 2.0), np.maximum(t0, a))
            t1 = np.where(flat, np.where(inside, t1, -1.0), np.minimum(t1, b))
        box = t0 <= t1
        s = (2.0 - A[:, 1]) / D[:, 1]
        xs = A[:, 0] + s * D[:, 0]
        slit = (s >= 0) & (s <= 1) & (xs > 0) & (xs < 1)
    return ~(box | slit)


def gen_slit_square(resolution: int = 32, probes=SLIT_PROBES):
    """Cloud, values and jets of the slit-square function.

    Probe pairs ``(0.5, 2 +- delta)`` straddle the slit at the given offsets.
    """
    if resolution < 16:
        raise ValueError("resolution must be at least 16 per unit")
    P = lattice([0, 0], [3, 3], resolution)
    x, y = P[:, 0], P[:, 1]
    P = P[~((x >= 1) & (x <= 2) & (y >= 1) & (y <= 2))]
    if len(probes):
        dl = np.asarray(probes, dtype=float)
        P = np.vstack([P, np.column_stack([np.full(2 * len(dl), 0.5),
                                           np.concatenate([2 + dl, 2 - dl])])])
    d = build_graph(P, 2.0 / resolution, _slit_segment_ok)
    f, G = slit_square_values(d.points)
    return d, f, JetDataset(d.points, f, G)


# parabola cusp: unit disk without {x >= 0, |y| <= x^2}
CUSP_OFFSET = 1e-9  # relative clearance of arc points from the removed set


def _cusp_polys(A, D):
    ax, ay, dx, dy = A[:, 0], A[:, 1], D[:, 0], D[:, 1]
    return [(ax, dx, 0 * dx),
            (ax**2 - ay, 2 * ax * dx - dy, dx**2),
            (ax**2 + ay, 2 * ax * dx + dy, dx**2)]


def _cusp_bad(P):
    return (P[:, 0] >= 0) & (np.abs(P[:, 1]) <= P[:, 0] ** 2)


def cusp_values(P):
    up = (P[:, 0] >= 0) & (P[:, 1] >= 0)
    f = np.where(up, P[:, 0] ** 2, 0.0)
    G = np.zeros_like(P)
    G[:, 0] = np.where(up, 2 * P[:, 0], 0.0)
    return f, G


def cusp_scales(resolution: int, cusp_scale: float) -> np.ndarray:
    """Abscissae of the arc points: a linear grid plus a geometric tail to the tip."""
    h = 1.0 / resolution
    lin = h * np.arange(1, int(0.75 * resolution) + 1)
    geo = h * 0.7 ** np.arange(1, 200)
    u = np.concatenate([lin, geo])
    return np.unique(u[u >= cusp_scale * (1 - 1e-12)])


def gen_parabola_cusp(cusp_scale: float = 0.01, resolution: int = 40):
    """Cloud and jets on the disk with a parabolic cusp removed.

    Arc points ``(u, +-u^2 (1 + eta))`` hug both sides of the cusp down to
    ``u = cusp_scale`` and tip points ``(-u, 0)`` close the paths around it.
    """
    if not 0 < cusp_scale <= 0.5:
        raise ValueError("cusp scale must lie in (0, 0.5]")
    P = lattice([-1, -1], [1, 1], resolution)
    P = P[(np.linalg.norm(P, axis=1) < 1) & ~_cusp_bad(P)]
    u = cusp_scales(resolution, cusp_scale)
    arc = u**2 * (1 + CUSP_OFFSET)
    tip = u[u < 0.5 / resolution]
    P = np.vstack([P, np.column_stack([u, arc]), np.column_stack([u, -arc]),
                   np.column_stack([-tip, 0 * tip])])
    d = build_graph(P, 2.0 / resolution,
                    lambda A, B: ~_segment_hits(A, B, _cusp_polys, _cusp_bad))
    f, G = cusp_values(d.points)
    return d, JetDataset(d.points, f, G)


def cross_cusp_pairs(d: DomainSample):
    """Index pairs ``(above, below)`` of arc points sharing an abscissa."""
    P = d.points
    x = P[:, 0]
    up = np.flatnonzero((x > 0) & np.isclose(P[:, 1], x**2 * (1 + CUSP_OFFSET), rtol=0, atol=0))
    dn = np.flatnonzero((x > 0) & np.isclose(P[:, 1], -x**2 * (1 + CUSP_OFFSET), rtol=0, atol=0))
    common, iu, idn = np.intersect1d(x[up], x[dn], return_indices=True)
    return np.column_stack([up[iu], dn[idn]])


# oscillating strip x^2 sin(1/x) < y < x^4 + x^2 sin(1/x), 0 < x < 1
def strip_floor(x):
    return x**2 * np.sin(1.0 / x)


def strip_width(x):
    return x**4


def _in_strip(P):
    x, y = P[:, 0], P[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = strip_floor(x)
        return (x > 0) & (x < 1) & (y > lo) & (y < lo + strip_width(x))


def gen_oscillating_domain(resolution: int = 200, x_min: float = 0.3, layers: int = 4,
                           checks: int = 33) -> DomainSample:
    """Cloud of the oscillating strip on ``x_min <= x < 1``.

    Columns at spacing ``1/resolution`` carry at least ``layers`` points
    across the strip width, and never sparser than the column spacing.  The boundary is transcendental, so edges are tested at
    ``checks`` equispaced points rather than exactly.
    """
    if not 0 < x_min < 1 or layers < 1:
        raise ValueError("need 0 < x_min < 1 and at least one layer")
    h = 1.0 / resolution
    cols = []
    for x in np.arange(x_min, 1.0, h):
        k = max(layers, int(np.ceil(strip_width(x) / h)))
        s = (np.arange(k) + 0.5) / k
        cols.append(np.column_stack([np.full(k, x), strip_floor(x) + s * strip_width(x)]))
    P = np.vstack(cols)
    grid = np.linspace(0, 1, checks)

    def segment_ok(A, B):
        ok = np.ones(len(A), bool)
        for t in grid:
            ok &= _in_strip(A + t * (B - A))
        return ok

    return build_graph(P, 4.0 * h, segment_ok)


# cone plus shell: U(0,2) \ B  union  U(0,2) cap C, C the open cone of half-angle asin(1/4)
CONE_PROFILE = {
    "phi": "smoothstep(1 - 2 s), quintic",
    "phi_quarter": 0.5,
    "phi_prime_bound": 3.75,
    "phi_second_bound": 40.0 / np.sqrt(3.0),
}


def cone_profile(s):
    """``phi(s) = S(1 - 2s)``: 1 for ``s <= 0``, 0 for ``s >= 1/2``, C^2."""
    return smoothstep(1.0 - 2.0 * np.asarray(s, dtype=float))


def cone_profile_d(s):
    return -2.0 * _smoothstep_d(1.0 - 2.0 * np.asarray(s, dtype=float))


def _in_cone(P):
    x1 = P[:, 0]
    perp = np.sum(P[:, 1:] ** 2, axis=1)
    return (x1 > 0) & (x1**2 > 15.0 * perp)


def _cone_polys(A, D):
    a1, d1 = A[:, 0], D[:, 0]
    ap, dp = A[:, 1:], D[:, 1:]
    return [(1 - _dot(A, A), -2 * _dot(A, D), -_dot(D, D)),
            (a1, d1, 0 * d1),
            (a1**2 - 15 * _dot(ap, ap), 2 * (a1 * d1 - 15 * _dot(ap, dp)),
             d1**2 - 15 * _dot(dp, dp))]


def _cone_bad(P):
    return (np.sum(P**2, axis=1) <= 1) & ~_in_cone(P)


def cone_shell_values(P):
    inside = _in_cone(P)
    f = np.where(inside, cone_profile(P[:, 0]), 0.0)
    G = np.zeros_like(P)
    G[:, 0] = np.where(inside, cone_profile_d(P[:, 0]), 0.0)
    return f, G


def gen_cone_shell(resolution: int = 32, dim: int = 2):
    """Cloud, values and jets of the cone-plus-shell set with its bump-like function."""
    if dim < 2:
        raise ValueError("cone_shell needs dimension at least 2")
    P = lattice([-2] * dim, [2] * dim, resolution)
    r2 = np.sum(P**2, axis=1)
    P = P[(r2 < 4) & ((r2 > 1) | _in_cone(P))]
    d = build_graph(P, None, lambda A, B: ~_segment_hits(A, B, _cone_polys, _cone_bad))
    f, G = cone_shell_values(d.points)
    return d, f, JetDataset(d.points, f, G)


# ---------------------------------------------------------------- catalog

EXPECTED = {
    "three_point": {"wg_constant_identity": 1.0, "wtilde_below_unit_distance": 0.0},
    "integer_jet": {"lipschitz": "N", "wtilde_below_unit_distance": 0.0},
    "slit_square": {"euclidean_modulus_small_scale": ">= 1", "inner_modulus_small_scale": "<= 0.1",
                    "quasiconvex": False},
    "parabola_cusp": {"cross_cusp_taylor_ratio": 0.5, "lipschitz": "<= 3",
                      "qc_constant": "diverges as the cusp scale shrinks", "quasiconvex": False},
    "oscillating_domain": {"qc_constant": "bounded under refinement", "quasiconvex": True},
    "annulus": {"qc_bound": 2.0, "quasiconvex": True},
    "cone_shell": {"qc_bound": 5.0, "wg_constant_identity": "finite", "quasiconvex": True},
    "box": {"qc_bound": 1.0, "quasiconvex": True},
}

DESCRIPTION = {
    "three_point": "sites 0, e, 2e with values 0, 0, 1 and zero gradients",
    "integer_jet": "sites 1..2N, f(2k-1) = k, f(2k) = 0, zero gradients",
    "slit_square": "(0,3)^2 minus [1,2]^2 and the slit (0,1)x{2}; f jumps across the slit",
    "parabola_cusp": "unit disk minus {x >= 0, |y| <= x^2}; f = x^2 on the upper right, else 0",
    "oscillating_domain": "strip x^2 sin(1/x) < y < x^4 + x^2 sin(1/x)",
    "annulus": "spherical shell r < |x| < R",
    "cone_shell": "shell 1 < |x| < 2 joined to the open cone of half-angle asin(1/4) around e1",
    "box": "axis-aligned box",
}

DEFAULTS = {
    "three_point": {"n": 1},
    "integer_jet": {"N": 4},
    "slit_square": {"resolution": 32},
    "parabola_cusp": {"cusp_scale": 0.01, "resolution": 40},
    "oscillating_domain": {"resolution": 200, "x_min": 0.3, "layers": 4},
    "annulus": {"r": 0.5, "R": 1.0, "resolution": 64, "dim": 2},
    "cone_shell": {"resolution": 32, "dim": 2},
    "box": {"lo": (0.0, 0.0), "hi": (1.0, 1.0), "resolution": 32},
}


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in FIXTURES:
            raise ValueError(f"unknown fixture {self.name!r}; choose from {', '.join(FIXTURES)}")
        unknown = set(self.params) - set(DEFAULTS[self.name])
        if unknown:
            raise ValueError(f"unknown parameters for {self.name}: {', '.join(sorted(unknown))}")

    @property
    def resolved(self) -> dict:
        return {**DEFAULTS[self.name], **self.params}

    def generate(self) -> "FixtureData":
        p = self.resolved
        gen = {
            "three_point": lambda: (None, None, gen_three_point(int(p["n"]))),
            "integer_jet": lambda: (None, None, gen_integer_jet(int(p["N"]))),
            "slit_square": lambda: gen_slit_square(int(p["resolution"])),
            "parabola_cusp": lambda: _with_values(*gen_parabola_cusp(float(p["cusp_scale"]),
                                                                     int(p["resolution"]))),
            "oscillating_domain": lambda: (gen_oscillating_domain(int(p["resolution"]),
                                                                  float(p["x_min"]),
                                                                  int(p["layers"])), None, None),
            "annulus": lambda: (gen_annulus(float(p["r"]), float(p["R"]), int(p["resolution"]),
                                            int(p["dim"])), None, None),
            "cone_shell": lambda: gen_cone_shell(int(p["resolution"]), int(p["dim"])),
            "box": lambda: (gen_box(_floats(p["lo"]), _floats(p["hi"]), int(p["resolution"])),
                            None, None),
        }[self.name]
        domain, values, jets = gen()
        return FixtureData(self, domain, values, jets)


def _floats(v):
    if isinstance(v, str):
        v = v.split(",")
    return tuple(float(x) for x in np.atleast_1d(v))


def _with_values(d, jets):
    return d, jets.values, jets


@dataclass(frozen=True)
class FixtureData:
    spec: FixtureSpec
    domain: DomainSample | None
    values: np.ndarray | None
    jets: JetDataset | None

    def manifest(self) -> dict:
        m = {
            "fixture": self.spec.name,
            "description": DESCRIPTION[self.spec.name],
            "params": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in self.spec.resolved.items()},
            "expected": EXPECTED[self.spec.name],
        }
        if self.spec.name == "cone_shell":
            m["profile"] = CONE_PROFILE
        if self.domain is not None:
            m["cloud"] = {"points": len(self.domain), "epsilon": self.domain.epsilon,
                          "spacing": self.domain.spacing, "connected": self.domain.connected}
        if self.jets is not None:
            m["jets"] = {"sites": len(self.jets), "dim": self.jets.dim}
        return m

    def write(self, out_dir) -> list[Path]:
        """Write ``cloud.csv`` and/or ``jets.csv`` plus ``manifest.json``."""
        from .jet import save_jets

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if self.domain is not None:
            path = out / "cloud.csv"
            write_cloud(path, self.domain.points, self.values,
                        None if self.jets is None else self.jets.grads)
            written.append(path)
        if self.jets is not None:
            path = out / "jets.csv"
            save_jets(self.jets, path)
            written.append(path)
        path = out / "manifest.json"
        path.write_text(json.dumps(self.manifest(), indent=2) + "\n")
        written.append(path)
        return written


def write_cloud(path, points, values=None, grads=None) -> None:
    """Point-cloud CSV ``x1..xn[,f][,g1..gn]``."""
    n = points.shape[1]
    header = [f"x{i + 1}" for i in range(n)]
    cols = [points]
    if values is not None:
        header.append("f")
        cols.append(np.asarray(values, dtype=float)[:, None])
        if grads is not None:
            header += [f"g{i + 1}" for i in range(n)]
            cols.append(grads)
    np.savetxt(path, np.hstack(cols), delimiter=",", header=",".join(header), comments="",
               fmt="%.17g")


def read_cloud(path):
    """Inverse of :func:`write_cloud`: ``(points, values or None, grads or None)``."""
    with Path(path).open() as fh:
        header = fh.readline().strip().split(",")
    n = sum(1 for h in header if h.startswith("x"))
    if n == 0 or header[:n] != [f"x{i + 1}" for i in range(n)]:
        raise ValueError("cloud header must start with x1..xn")
    rest = header[n:]
    if rest not in ([], ["f"], ["f"] + [f"g{i + 1}" for i in range(n)]):
        raise ValueError("cloud columns after x1..xn must be f and optionally g1..gn")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header) or not np.all(np.isfinite(data)):
        raise ValueError("cloud rows must be finite and match the header")
    P = data[:, :n]
    f = data[:, n] if rest else None
    G = data[:, n + 1:] if len(rest) > 1 else None
    return P, f, G
