"""Lower and upper envelopes built from 1-jets.

For a site ``z`` with value ``f_z`` and gradient ``g_z`` the touching functions
are

    h_z(x) = f_z + <g_z, x - z> - a * phi(|x - z|)
    H_z(x) = f_z + <g_z, x - z> + a * phi(|x - z|),      a = factor * M,

where ``phi`` is the primitive of the modulus.  ``h = max_z h_z`` is
semiconvex, ``H = min_z H_z`` is semiconcave, and on data satisfying the
Whitney-Glaeser condition with constant ``M`` and concave modulus, ``h <= H``
with equality ``f`` at every site.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridFunction, check_size, make_grid
from .jet import JetDataset, stable_norm
from .modulus import EmpiricalModulus, Modulus, Primitive, empirical_modulus, primitive

DEFAULT_FACTOR = 6.0
TIE_RTOL = 1e-12
CHUNK = 1 << 22  # query-site products per evaluation block


@dataclass(frozen=True)
class EnvelopeSpec:
    jets: JetDataset
    M: float
    phi: Primitive
    factor: float = DEFAULT_FACTOR

    def __post_init__(self):
        if not (np.isfinite(self.M) and self.M >= 0):
            raise ValueError("M must be finite and nonnegative")
        if not self.factor > 0:
            raise ValueError("kernel factor must be positive")

    @classmethod
    def from_modulus(cls, jets, omega: Modulus, M=None, factor=DEFAULT_FACTOR):
        """Spec with ``phi`` the primitive of ``omega``; ``M`` defaults to the WG constant."""
        if M is None:
            from .jet import wg_constant

            M = wg_constant(jets, omega).M
        return cls(jets, float(M), primitive(omega), factor)

    @property
    def kernel(self) -> float:
        return self.factor * self.M


def _terms(spec: EnvelopeSpec, x):
    """Affine parts and kernel values, each of shape ``(q, m)``."""
    j = spec.jets
    diff = x[:, None, :] - j.sites[None, :, :]
    affine = j.values[None, :] + np.einsum("qmk,mk->qm", diff, j.grads)
    return affine, spec.kernel * spec.phi.eval(stable_norm(diff))


def _as_points(spec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != spec.jets.dim:
        raise ValueError(f"points must have dimension {spec.jets.dim}")
    return x, single


def _reduce(spec, x, lower: bool):
    x, single = _as_points(spec, x)
    m = len(spec.jets)
    step = max(1, CHUNK // m)
    val = np.empty(len(x))
    idx = np.empty(len(x), dtype=np.intp)
    for s in range(0, len(x), step):
        affine, ker = _terms(spec, x[s:s + step])
        t = affine - ker if lower else affine + ker
        k = np.argmax(t, axis=1) if lower else np.argmin(t, axis=1)
        idx[s:s + step] = k
        val[s:s + step] = np.take_along_axis(t, k[:, None], axis=1)[:, 0]
    return (val[0], idx[0]) if single else (val, idx)


def h_eval(spec: EnvelopeSpec, x):
    """``max_z h_z(x)`` for a point or an ``(q, n)`` array of points."""
    return _reduce(spec, x, lower=True)[0]


def H_eval(spec: EnvelopeSpec, x):
    """``min_z H_z(x)`` for a point or an ``(q, n)`` array of points."""
    return _reduce(spec, x, lower=False)[0]


@dataclass(frozen=True)
class EnvelopeGrid:
    h: GridFunction
    H: GridFunction
    argmax: np.ndarray
    argmin: np.ndarray

    def violations(self, tol=0.0) -> int:
        return int(np.sum(self.h.values > self.H.values + tol))

    def write_csv(self, path) -> None:
        nodes = self.h.nodes()
        n = nodes.shape[1]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)] + ["h", "H", "argmax", "argmin"])
            for p, a, b, i, k in zip(nodes, self.h.values.ravel(), self.H.values.ravel(),
                                     self.argmax.ravel(), self.argmin.ravel()):
                w.writerow([*map(repr, map(float, p)), repr(float(a)), repr(float(b)), int(i), int(k)])


def envelope_grid(spec: EnvelopeSpec, lo, hi, dims, max_nodes=None) -> EnvelopeGrid:
    """Evaluate ``h`` and ``H`` at every node of the box grid ``[lo, hi]``."""
    g = make_grid(lo, hi, dims)
    if max_nodes is not None:
        check_size(g.dims, max_nodes=max_nodes)
    if not np.all(g.contains(spec.jets.sites)):
        warnings.warn("some jet sites lie outside the grid box", stacklevel=2)
    nodes = g.nodes()
    hv, imax = _reduce(spec, nodes, lower=True)
    Hv, imin = _reduce(spec, nodes, lower=False)
    return EnvelopeGrid(g.with_values(hv), g.with_values(Hv),
                        imax.reshape(g.dims), imin.reshape(g.dims))


TIE = "nonsmooth-tie"


def envelope_gradient(spec: EnvelopeSpec, x, which="h"):
    """Gradient of ``h`` (or ``H``) at ``x``, or ``"nonsmooth-tie"``.

    Valid where the extremal site is unique: the gradient of ``phi(|x - z|)``
    is ``omega(d) (x - z) / d`` and vanishes at ``x = z``.
    """
    if which not in ("h", "H"):
        raise ValueError("which must be 'h' or 'H'")
    x, _ = _as_points(spec, x)
    x = x[0]
    affine, ker = _terms(spec, x[None, :])
    sign = -1.0 if which == "h" else 1.0
    t = (affine + sign * ker)[0]
    order = np.argsort(-t if which == "h" else t, kind="stable")
    best = t[order[0]]
    if len(t) > 1 and abs(t[order[1]] - best) <= TIE_RTOL * (1.0 + abs(best)):
        return TIE
    z = order[0]
    d_vec = x - spec.jets.sites[z]
    d = float(stable_norm(d_vec))
    g = spec.jets.grads[z].copy()
    if d > 0:
        g += sign * spec.kernel * spec.phi.derivative(d) * d_vec / d
    return g


@dataclass
class SemiconvexityReport:
    max_margin: float
    tol: float
    worst: tuple | None

    @property
    def passed(self) -> bool:
        return self.max_margin <= self.tol

    def to_dict(self):
        return {"max_margin": self.max_margin, "tol": self.tol, "passed": self.passed}


def semiconvexity_check(fn, sigma: Modulus, lo, hi, trials=10_000, rng=None,
                        rtol=1e-10) -> SemiconvexityReport:
    """Largest value of ``fn(l x + (1-l) y) - l fn(x) - (1-l) fn(y) - l(1-l) sigma(d) d``.

    ``fn`` maps an ``(k, n)`` array to ``k`` values; triples are drawn
    uniformly from the box ``[lo, hi]``.  Passes when the margin is at most
    ``rtol`` times the value scale.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(rng)
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    x = rng.uniform(lo, hi, size=(trials, lo.size))
    y = rng.uniform(lo, hi, size=(trials, lo.size))
    lam = rng.uniform(0, 1, size=trials)
    mid = lam[:, None] * x + (1 - lam[:, None]) * y
    fx, fy, fm = fn(x), fn(y), fn(mid)
    d = np.linalg.norm(x - y, axis=1)
    margin = fm - lam * fx - (1 - lam) * fy - lam * (1 - lam) * sigma.eval(d) * d
    k = int(np.argmax(margin))
    scale = 1.0 + max(np.abs(fx).max(), np.abs(fy).max(), np.abs(fm).max())
    return SemiconvexityReport(float(margin[k]), rtol * scale,
                               (x[k].tolist(), y[k].tolist(), float(lam[k])))


def nu_gradient_modulus(phi: Primitive, dim: int, radius=1.0, samples=2000,
                        rng=None) -> tuple[EmpiricalModulus, Modulus]:
    """Empirical modulus of ``D nu`` for ``nu(x) = phi(|x|)`` on a ball, and its concave majorant.

    ``D nu(x) = omega(|x|) x / |x|``; the modulus is measured on random pairs
    (plus pairs through the origin, where the direction field is singular).
    """
    rng = np.random.default_rng(rng)
    pts = rng.normal(size=(samples, dim))
    pts *= (radius * rng.uniform(0, 1, size=(samples, 1)) ** (1 / dim)
            / np.linalg.norm(pts, axis=1, keepdims=True))
    pts = np.vstack([np.zeros(dim), pts, -pts[: samples // 4]])

    def grad(p):
        r = np.linalg.norm(p, axis=1, keepdims=True)
        return np.where(r > 0, phi.derivative(r) * p / np.where(r > 0, r, 1.0), 0.0)

    a = rng.integers(0, len(pts), size=20 * samples)
    b = rng.integers(0, len(pts), size=20 * samples)
    a = np.concatenate([a, np.zeros(len(pts), int)])
    b = np.concatenate([b, np.arange(len(pts))])
    G = grad(pts)
    d = np.linalg.norm(pts[a] - pts[b], axis=1)
    keep = d > 0
    emp = empirical_modulus(d[keep], np.linalg.norm(G[a] - G[b], axis=1)[keep])
    return emp, emp.concave_majorant()
