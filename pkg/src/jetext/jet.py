"""Finite 1-jet data (sites, values, gradients) and Whitney-type condition checks."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange

from .modulus import EmpiricalModulus, Modulus, PiecewiseLinear, Power, empirical_modulus

CERT_RTOL = 1e-9
BLOCK = 512


class JetLoadError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class JetDataset:
    sites: np.ndarray
    values: np.ndarray
    grads: np.ndarray

    def __post_init__(self):
        sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        values = np.asarray(self.values, dtype=float).ravel()
        grads = np.asarray(self.grads, dtype=float).reshape(sites.shape)
        if sites.shape[0] < 1 or values.shape[0] != sites.shape[0]:
            raise ValueError("need at least one site and one value per site")
        for name, arr in (("sites", sites), ("values", values), ("gradients", grads)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        if len(np.unique(sites, axis=0)) != len(sites):
            raise ValueError("sites must be pairwise distinct")
        for name, arr in (("sites", sites), ("values", values), ("grads", grads)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    def __len__(self):
        return self.sites.shape[0]

    def subset(self, idx) -> "JetDataset":
        idx = np.asarray(idx)
        return JetDataset(self.sites[idx], self.values[idx], self.grads[idx])

    def negated(self) -> "JetDataset":
        return JetDataset(self.sites, -self.values, -self.grads)

    @classmethod
    def from_function(cls, sites, f, grad) -> "JetDataset":
        sites = np.atleast_2d(np.asarray(sites, dtype=float))
        return cls(sites, f(sites), grad(sites))


def load_jets(path) -> JetDataset:
    """Read ``x1..xn,f,g1..gn`` rows; errors name the offending row."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise JetLoadError("empty jet file")
        width = len(header)
        if width < 3 or width % 2 == 0:
            raise JetLoadError(f"header must have 2n+1 columns, got {width}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise JetLoadError(f"row {lineno}: expected {width} fields, got {len(row)}")
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise JetLoadError(f"row {lineno}: non-numeric field") from None
            if not all(np.isfinite(vals)):
                raise JetLoadError(f"row {lineno}: NaN or infinite value")
            rows.append(vals)
    if not rows:
        raise JetLoadError("no data rows")
    arr = np.asarray(rows)
    n = (width - 1) // 2
    seen = set()
    for i, site in enumerate(map(tuple, arr[:, :n])):
        if site in seen:
            raise JetLoadError(f"row {i + 2}: duplicate site")
        seen.add(site)
    return JetDataset(arr[:, :n], arr[:, n], arr[:, n + 1:])


def save_jets(jets: JetDataset, path) -> None:
    n = jets.dim
    header = [f"x{i + 1}" for i in range(n)] + ["f"] + [f"g{i + 1}" for i in range(n)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, f, g in zip(jets.sites, jets.values, jets.grads):
            w.writerow([repr(float(a)) for a in (*x, f, *g)])


def stable_norm(v):
    """Euclidean norm over the last axis without underflow for tiny separations."""
    v = np.asarray(v, dtype=float)
    sq = np.einsum("...i,...i->...", v, v)
    out = np.sqrt(sq)
    # only nonzero vectors whose squared norm under- or overflows need rescaling
    redo = ((sq < 1e-280) & (np.einsum("...i->...", np.abs(v)) > 0)) | ~np.isfinite(sq)
    if out.ndim == 0:
        out, redo = out.reshape(1), redo.reshape(1)
        v = v.reshape(1, -1)
        return stable_norm(v)[0] if redo[0] else out[0]
    if np.any(redo):
        w = v[redo]
        scale = np.abs(w).max(axis=-1, keepdims=True)
        safe = np.where(scale > 0, scale, 1.0)
        out[redo] = scale[..., 0] * np.sqrt(np.sum((w / safe) ** 2, axis=-1))
    return out


def _pair_blocks(jets: JetDataset, block=BLOCK):
    """Yield ``(rows, dist, grad_num, taylor_num)`` for row blocks of ordered pairs.

    Entry ``[a, j]`` concerns the ordered pair ``x = sites[rows[a]]``,
    ``y = sites[j]``; diagonal entries have distance 0.
    """
    X, f, G = jets.sites, jets.values, jets.grads
    m = len(X)
    for start in range(0, m, block):
        rows = np.arange(start, min(start + block, m))
        diff = X[None, :, :] - X[rows, None, :]
        dist = stable_norm(diff)
        grad_num = stable_norm(G[None, :, :] - G[rows, None, :])
        lin = np.einsum("ijk,ik->ij", diff, G[rows])
        taylor_num = np.abs(f[None, :] - f[rows, None] - lin)
        yield rows, dist, grad_num, taylor_num


def _safe_ratio(num, den):
    """``num/den`` with ``0/0 = 0`` and ``x/0 = inf`` for ``x > 0``."""
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = np.inf
    return out


@dataclass
class WGReport:
    modulus: str
    M_grad: float
    M_taylor: float
    argmax_grad: tuple | None
    argmax_taylor: tuple | None

    @property
    def M(self) -> float:
        return max(self.M_grad, self.M_taylor)

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.M))

    def to_dict(self):
        return {
            "modulus": self.modulus,
            "M": _num(self.M),
            "M_grad": _num(self.M_grad),
            "M_taylor": _num(self.M_taylor),
            "argmax_grad": self.argmax_grad,
            "argmax_taylor": self.argmax_taylor,
            "finite": self.finite,
        }


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else "inf"


@njit(cache=True, inline="always")
def _scaled_norm(a, b, i, j):
    """``|a[j] - a[i]|`` with the scaling used by :func:`stable_norm`."""
    acc = 0.0
    for k in range(a.shape[1]):
        q = a[j, k] - a[i, k]
        acc += q * q
    if acc > 1e-280 and acc < np.inf:
        return np.sqrt(acc)
    sc = 0.0
    for k in range(a.shape[1]):
        sc = max(sc, abs(a[j, k] - a[i, k]))
    if sc == 0.0 or sc == np.inf:
        return sc
    acc = 0.0
    for k in range(a.shape[1]):
        q = (a[j, k] - a[i, k]) / sc
        acc += q * q
    return sc * np.sqrt(acc)


@njit(cache=True, inline="always")
def _omega(d, kind, alpha, scale, bt, bv, tail):
    if kind == 0:
        return scale * (d if alpha == 1.0 else d**alpha)
    last = bt.shape[0] - 1
    if d >= bt[last]:
        return bv[last] + tail * (d - bt[last])
    k = np.searchsorted(bt, d, side="right") - 1
    return bv[k] + (bv[k + 1] - bv[k]) / (bt[k + 1] - bt[k]) * (d - bt[k])


@njit(cache=True, inline="always")
def _ratio(num, den):
    if den > 0:
        return num / den
    return np.inf if num > 0 else 0.0


@njit(cache=True, parallel=True)
def _wg_scan(X, f, G, kind, alpha, scale, bt, bv, tail):
    m = X.shape[0]
    rg = np.zeros(m)
    rt = np.zeros(m)
    ag = np.full(m, -1)
    at = np.full(m, -1)
    for i in prange(m):
        for j in range(m):
            d = _scaled_norm(X, X, i, j)
            if d == 0.0:
                continue
            lin = 0.0
            for k in range(X.shape[1]):
                lin += (X[j, k] - X[i, k]) * G[i, k]
            w = _omega(d, kind, alpha, scale, bt, bv, tail)
            r = _ratio(_scaled_norm(G, G, i, j), w)
            if r > rg[i]:
                rg[i] = r
                ag[i] = j
            r = _ratio(abs(f[j] - f[i] - lin), w * d)
            if r > rt[i]:
                rt[i] = r
                at[i] = j
    return rg, ag, rt, at


@njit(cache=True, parallel=True)
def _lip_scan(X, f):
    m = X.shape[0]
    best = np.zeros(m)
    for i in prange(m):
        for j in range(i + 1, m):
            d = _scaled_norm(X, X, i, j)
            if d > 0.0:
                best[i] = max(best[i], abs(f[j] - f[i]) / d)
    return best.max() if m else 0.0


def _omega_args(omega: Modulus):
    if isinstance(omega, Power):
        return 0, omega.alpha, omega.scale, np.zeros(1), np.zeros(1), 0.0
    if isinstance(omega, PiecewiseLinear):
        return 1, 0.0, 0.0, np.asarray(omega.t), np.asarray(omega.v), omega.tail
    return None


def _best(r, a):
    i = int(np.argmax(r))
    return (float(r[i]), (i, int(a[i]))) if r[i] > 0 else (0.0, None)


def wg_constant(jets: JetDataset, omega: Modulus) -> WGReport:
    """Least M with ``|G(y)-G(x)| <= M w(|y-x|)`` and
    ``|f(y)-f(x)-<G(x),y-x>| <= M w(|y-x|) |y-x|`` over all ordered pairs."""
    args = _omega_args(omega)
    if args is not None:
        rg, ag, rt, at = _wg_scan(np.ascontiguousarray(jets.sites), np.ascontiguousarray(jets.values),
                                  np.ascontiguousarray(jets.grads), *args)
        (mg, pg), (mt, pt) = _best(rg, ag), _best(rt, at)
        return WGReport(omega.spec(), mg, mt, pg, pt)
    return wg_constant_blocks(jets, omega)


def wg_constant_blocks(jets: JetDataset, omega: Modulus) -> WGReport:
    """Vectorised reference implementation of :func:`wg_constant` for any modulus."""
    best = {"grad": (0.0, None), "taylor": (0.0, None)}
    for rows, dist, gnum, tnum in _pair_blocks(jets):
        off = dist > 0
        w = omega.eval(dist)
        for key, num, den in (("grad", gnum, w), ("taylor", tnum, w * dist)):
            ratio = np.where(off, _safe_ratio(num, den), -1.0)
            a, j = np.unravel_index(np.argmax(ratio), ratio.shape)
            if ratio[a, j] > best[key][0]:
                best[key] = (float(ratio[a, j]), (int(rows[a]), int(j)))
    return WGReport(omega.spec(), best["grad"][0], best["taylor"][0],
                    best["grad"][1], best["taylor"][1])


def _pair_moduli(jets: JetDataset):
    """Empirical moduli of gradient jumps, Taylor ratios and their maximum.

    Each row block is reduced to the corners of its running maximum before
    merging, which leaves the running maximum over all ordered pairs unchanged.
    """
    parts = {"grad": [], "taylor": [], "both": []}
    for _, dist, gnum, tnum in _pair_blocks(jets):
        off = dist > 0
        order = np.argsort(dist[off], kind="stable")
        d = dist[off][order]
        g = gnum[off][order]
        t = tnum[off][order] / d
        for key, v in (("grad", g), ("taylor", t), ("both", np.maximum(g, t))):
            run = np.maximum.accumulate(v)
            jump = np.concatenate([[True], run[1:] > run[:-1]])
            parts[key].append((d[jump], run[jump]))
    out = []
    for key in ("grad", "taylor", "both"):
        d = np.concatenate([c[0] for c in parts[key]]) if parts[key] else np.empty(0)
        v = np.concatenate([c[1] for c in parts[key]]) if parts[key] else np.empty(0)
        out.append(empirical_modulus(d, v))
    return tuple(out)


@dataclass
class WtildeProfile:
    """Running sup of ``|f(y)-f(x)-<G(x),y-x>| / |y-x|`` over pairs closer than delta."""

    distances: np.ndarray
    residual: np.ndarray
    g_mod: EmpiricalModulus

    def r(self, delta):
        return EmpiricalModulus(self.distances, self.residual).eval(delta)

    def to_dict(self, limit=64):
        idx = np.unique(np.linspace(0, len(self.distances) - 1,
                                    min(limit, len(self.distances))).astype(int))
        return {
            "pairs": int(len(self.distances)),
            "distances": self.distances[idx].tolist(),
            "residual": self.residual[idx].tolist(),
            "gradient_modulus": self.g_mod.values[
                np.searchsorted(self.g_mod.distances, self.distances[idx], side="right") - 1
            ].tolist() if len(self.g_mod.distances) else [],
        }


def wtilde_profile(jets: JetDataset) -> WtildeProfile:
    if len(jets) < 2:
        raise ValueError("profile needs at least two sites")
    g_mod, prof, _ = _pair_moduli(jets)
    return WtildeProfile(prof.distances, prof.values, g_mod)


@dataclass
class BallStats:
    lip: float
    sup_grad: float
    sup_value: float
    count: int
    empty: bool

    def to_dict(self):
        return {"lip": self.lip, "sup_grad": self.sup_grad, "sup_value": self.sup_value,
                "count": self.count, "empty": self.empty}


def lip_and_bound_stats(jets: JetDataset, radius: float = np.inf, center=None) -> BallStats:
    """Lipschitz constant of f, sup |G| and sup |f| over the sites in a closed ball."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    c = np.zeros(jets.dim) if center is None else np.asarray(center, dtype=float)
    inside = np.linalg.norm(jets.sites - c, axis=1) <= radius
    if not np.any(inside):
        return BallStats(0.0, 0.0, 0.0, 0, True)
    sub = jets.subset(np.flatnonzero(inside))
    X, f = sub.sites, sub.values
    lip = float(_lip_scan(np.ascontiguousarray(X), np.ascontiguousarray(f)))
    return BallStats(lip, float(np.linalg.norm(sub.grads, axis=1).max()),
                     float(np.abs(f).max()), int(inside.sum()), False)


@dataclass
class ConcaveWG:
    modulus: PiecewiseLinear
    alpha: EmpiricalModulus
    report: WGReport
    verdict: str
    warning: bool = field(default=False)

    @property
    def certified(self) -> bool:
        return self.report.M <= 1.0 + CERT_RTOL

    def to_dict(self):
        return {
            "breakpoints": [list(map(float, self.modulus.t)), list(map(float, self.modulus.v))],
            "tail": self.modulus.tail,
            "M": _num(self.report.M),
            "certified": self.certified,
            "wtilde_verdict": self.verdict,
            "warning": "W-tilde plausibly fails" if self.warning else None,
        }


def wtilde_verdict(alpha: EmpiricalModulus, decade_exponent=0.25) -> str:
    """Heuristic reading of whether ``alpha(delta) -> 0`` at sample scale.

    Compares the profile at the smallest realized distance with its value one
    decade higher: a smooth jet has apparent exponent near 1 there, a jet whose
    residuals do not shrink has exponent near 0.  Returns ``"plausible"``,
    ``"fails"`` or ``"undetermined"`` (fewer than one decade of distances).
    """
    d = alpha.distances
    if len(d) == 0:
        return "plausible"
    lo = alpha.eval(d[0])
    if lo == 0:
        return "plausible"
    if d[-1] < 10 * d[0]:
        return "undetermined"
    hi = alpha.eval(10 * d[0])
    exponent = np.log10(hi / lo)
    return "fails" if exponent < decade_exponent else "plausible"


def concave_wg_modulus(jets: JetDataset) -> ConcaveWG:
    """Concave modulus for which the jets satisfy the Whitney-Glaeser condition with M = 1.

    ``alpha(delta)`` is the largest gradient jump or normalized Taylor residual
    over pairs at distance at most delta; its least concave majorant dominates
    every pair ratio by construction.
    """
    if len(jets) < 2:
        raise ValueError("need at least two sites")
    alpha = _pair_moduli(jets)[2]
    omega = alpha.concave_majorant()
    report = wg_constant(jets, omega)
    verdict = wtilde_verdict(alpha)
    return ConcaveWG(omega, alpha, report, verdict, warning=verdict == "fails")
