"""Moduli of continuity: evaluation, concavity, majorants, primitives.

A modulus is a nondecreasing function on ``[0, inf)`` vanishing at 0.  Two
concrete families are supported:

* :class:`Power` -- ``t -> C * t**alpha``;
* :class:`PiecewiseLinear` -- linear interpolation through breakpoints
  ``(t_j, v_j)`` followed by a ray of slope ``tail``.

Everything here is exact on breakpoints so that the inequalities between
moduli can be checked without sampling error; the only sampled checks are
the ones that compare two different moduli on a verification grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RTOL = 1e-12
GRID_POINTS = 512


class DomainError(ValueError):
    """Raised when a modulus is evaluated at a negative argument."""


def leq(a, b, rtol=RTOL, atol=0.0):
    """Elementwise ``a <= b`` with relative slack ``rtol`` and absolute slack ``atol``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    return a <= b + rtol * scale + atol


def verification_grid(T, n=GRID_POINTS):
    """Log-spaced grid on ``[1e-6 T, T]``."""
    if T <= 0:
        raise ValueError("grid extent must be positive")
    return np.geomspace(1e-6 * T, T, n)


def _check_nonneg(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("modulus evaluated at a negative argument")
    return t


class Modulus:
    """Common interface; see :class:`Power` and :class:`PiecewiseLinear`."""

    kind: str

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        raise NotImplementedError

    def slope(self, t):
        """Right derivative at ``t`` (used for envelope gradients)."""
        raise NotImplementedError

    def is_concave(self) -> bool:
        raise NotImplementedError

    def is_subadditive(self) -> bool:
        raise NotImplementedError

    def extent(self) -> float:
        """A natural length scale used to size verification grids."""
        return 1.0

    def scaled(self, c: float) -> "Modulus":
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Power(Modulus):
    alpha: float
    scale: float = 1.0
    kind: str = field(default="power", init=False)

    def __post_init__(self):
        if not (self.alpha > 0 and self.scale > 0):
            raise ValueError("power modulus needs alpha > 0 and scale > 0")

    def eval(self, t):
        t = _check_nonneg(t)
        return self.scale * np.power(t, self.alpha)

    def slope(self, t):
        t = _check_nonneg(t)
        with np.errstate(divide="ignore"):
            return self.scale * self.alpha * np.power(t, self.alpha - 1.0)

    def is_concave(self):
        return self.alpha <= 1.0

    def is_subadditive(self):
        return self.alpha <= 1.0

    def scaled(self, c):
        return Power(self.alpha, self.scale * c)

    def spec(self):
        return f"pow:{self.alpha:g}:{self.scale:g}"


@dataclass(frozen=True)
class PiecewiseLinear(Modulus):
    """Breakpoints ``t`` (strictly increasing, starting at 0) and values ``v``."""

    t: tuple
    v: tuple
    tail: float = 0.0
    kind: str = "piecewise-linear"

    def __post_init__(self):
        t = tuple(float(x) for x in self.t)
        v = tuple(float(x) for x in self.v)
        if len(t) != len(v) or not t:
            raise ValueError("breakpoint arrays must be nonempty and of equal length")
        if t[0] != 0.0:
            t = (0.0,) + t
            v = (0.0,) + v
        if v[0] != 0.0:
            raise ValueError("modulus must vanish at 0")
        if not all(np.isfinite(t)) or not all(np.isfinite(v)):
            raise ValueError("breakpoints must be finite")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("modulus values must be nondecreasing")
        if not (np.isfinite(self.tail) and self.tail >= 0):
            raise ValueError("tail slope must be finite and nonnegative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "tail", float(self.tail))

    @property
    def slopes(self):
        """Segment slopes followed by the tail slope."""
        t = np.asarray(self.t)
        v = np.asarray(self.v)
        return np.append(np.diff(v) / np.diff(t), self.tail)

    def eval(self, t):
        t = _check_nonneg(t)
        bt = np.asarray(self.t)
        bv = np.asarray(self.v)
        out = np.interp(t, bt, bv)
        beyond = t > bt[-1]
        if np.ndim(out) == 0:
            return float(bv[-1] + self.tail * (t - bt[-1])) if beyond else float(out)
        out[beyond] = bv[-1] + self.tail * (t[beyond] - bt[-1])
        return out

    def slope(self, t):
        t = _check_nonneg(t)
        idx = np.searchsorted(np.asarray(self.t), t, side="right") - 1
        return self.slopes[np.clip(idx, 0, len(self.t) - 1)]

    def is_concave(self, rtol=RTOL):
        s = self.slopes
        if len(s) < 2:
            return True
        return bool(np.all(leq(s[1:], s[:-1], rtol, rtol * np.abs(s).max())))

    def is_subadditive(self, rtol=RTOL):
        return subadditivity_gap(self, rtol) is None

    def extent(self):
        # knots may sit near the top of the float range
        return max(min(2.0 * self.t[-1], np.finfo(float).max / 4), 1.0)

    def scaled(self, c):
        return PiecewiseLinear(self.t, tuple(c * x for x in self.v), c * self.tail, self.kind)

    def spec(self):
        return f"pwl:{len(self.t)} breakpoints, tail {self.tail:g}"


def linear_capped(slope: float, cap: float | None = None) -> PiecewiseLinear:
    """``t -> min(slope * t, cap)``; uncapped when ``cap`` is None."""
    if slope <= 0:
        raise ValueError("slope must be positive")
    if cap is None:
        return PiecewiseLinear((0.0, 1.0), (0.0, slope), slope, kind="linear-capped")
    if cap <= 0:
        raise ValueError("cap must be positive")
    return PiecewiseLinear((0.0, cap / slope), (0.0, cap), 0.0, kind="linear-capped")


ZERO = PiecewiseLinear((0.0,), (0.0,), 0.0)


def subadditivity_gap(m: PiecewiseLinear, rtol=RTOL):
    """Return a witness ``(s, t)`` with ``m(s+t) > m(s) + m(t)``, or None.

    ``D(s, t) = m(s) + m(t) - m(s+t)`` is linear on every cell of the
    arrangement cut out by the lines ``s = t_i``, ``t = t_j`` and
    ``s + t = t_k``, and constant along the recession directions of the
    unbounded cells, so its minimum over the quadrant is attained at an
    arrangement vertex.  Those vertices are enumerated here.
    """
    bt = np.asarray(m.t)
    a = bt[:, None]
    cand = np.concatenate([np.broadcast_to(bt[None, :], (len(bt), len(bt))),
                           bt[None, :] - a], axis=1)
    s = np.broadcast_to(a, cand.shape)
    with np.errstate(over="ignore"):
        # vertices beyond the float range are unreachable
        ok = (cand >= 0) & np.isfinite(s + cand)
    s, u = s[ok], cand[ok]
    lhs = m.eval(s + u)
    rhs = m.eval(s) + m.eval(u)
    bad = ~leq(lhs, rhs, rtol)
    if not np.any(bad):
        return None
    k = int(np.argmax(np.where(bad, lhs - rhs, -np.inf)))
    return float(s[k]), float(u[k])


def is_concave(m: Modulus) -> bool:
    return m.is_concave()


def is_subadditive(m: Modulus) -> bool:
    return m.is_subadditive()


def _upper_hull(points):
    """Upper hull of points sorted by abscissa (monotone chain)."""
    hull = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop hull[-1] unless it makes a strict right turn
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def _concave_hull_with_tail(t, v, tail):
    hull = _upper_hull(list(zip(t, v)))
    while len(hull) >= 2:
        (x1, y1), (x2, y2) = hull[-2], hull[-1]
        if (y2 - y1) / (x2 - x1) <= tail:
            hull.pop()
        else:
            break
    ht, hv = zip(*hull)
    return PiecewiseLinear(ht, hv, tail)


def least_concave_majorant(m: Modulus) -> Modulus:
    """Least concave modulus dominating ``m``."""
    if isinstance(m, Power):
        if m.alpha > 1:
            raise ValueError("power modulus with alpha > 1 has no concave majorant")
        return m
    if not isinstance(m, PiecewiseLinear):
        raise TypeError(f"unsupported modulus {m!r}")
    return _concave_hull_with_tail(m.t, m.v, m.tail)


@dataclass(frozen=True)
class MajorantReport:
    majorant: Modulus
    max_ratio: float
    within_factor_two: bool
    input_subadditive: bool


def majorant_report(m: Modulus, T: float | None = None) -> MajorantReport:
    """Majorant plus the pointwise ratio ``majorant / m`` on a verification grid.

    When ``m`` is subadditive the ratio never exceeds 2.
    """
    mt = least_concave_majorant(m)
    grid = verification_grid(T or m.extent())
    if isinstance(m, PiecewiseLinear):
        grid = np.union1d(grid, np.asarray(m.t)[1:])
    lo = m.eval(grid)
    hi = mt.eval(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lo > 0, hi / lo, np.where(hi > 0, np.inf, 1.0))
    return MajorantReport(mt, float(ratio.max()), bool(np.all(leq(hi, 2 * lo))),
                          m.is_subadditive())


def pointwise_max(moduli) -> PiecewiseLinear:
    """Exact pointwise maximum of piecewise-linear moduli."""
    moduli = list(moduli)
    knots = np.unique(np.concatenate([np.asarray(m.t) for m in moduli]))
    extra = []
    # crossings strictly inside each knot interval
    for a, b in zip(knots[:-1], knots[1:]):
        va = np.array([m.eval(a) for m in moduli])
        vb = np.array([m.eval(b) for m in moduli])
        for i in range(len(moduli)):
            for j in range(i + 1, len(moduli)):
                da, db = va[i] - va[j], vb[i] - vb[j]
                if da * db < 0:
                    extra.append(a + (b - a) * da / (da - db))
    # crossings of the tail rays beyond the last knot
    last = knots[-1]
    v_last = np.array([m.eval(last) for m in moduli])
    s_last = np.array([m.tail for m in moduli])
    for i in range(len(moduli)):
        for j in range(i + 1, len(moduli)):
            ds = s_last[j] - s_last[i]
            if ds != 0:
                with np.errstate(over="ignore"):
                    x = last + (v_last[i] - v_last[j]) / ds
                # crossings past the float range are never reached
                if last < x < np.inf:
                    extra.append(x)
    pts = np.union1d(knots, np.asarray(extra, dtype=float))
    vals = np.max([m.eval(pts) for m in moduli], axis=0)
    # past the last crossing the steepest ray dominates
    return PiecewiseLinear(pts, vals, float(s_last.max()))


@dataclass(frozen=True)
class Primitive:
    """``phi(t) = integral of the base modulus over [0, t]``."""

    base: Modulus

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = _check_nonneg(t)
        m = self.base
        if isinstance(m, Power):
            return m.scale * np.power(t, 1.0 + m.alpha) / (1.0 + m.alpha)
        bt = np.asarray(m.t)
        bv = np.asarray(m.v)
        slopes = m.slopes
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (bv[1:] + bv[:-1]) * np.diff(bt))])
        idx = np.clip(np.searchsorted(bt, t, side="right") - 1, 0, len(bt) - 1)
        dt = t - bt[idx]
        return cum[idx] + bv[idx] * dt + 0.5 * slopes[idx] * dt * dt

    def derivative(self, t):
        return self.base.eval(t)


def primitive(m: Modulus) -> Primitive:
    return Primitive(m)


@dataclass(frozen=True)
class EmpiricalModulus:
    """Least nondecreasing majorant of samples ``(distance, deviation)``.

    ``distances`` are sorted and ``values`` hold the running maximum, so the
    step function is ``delta -> values[last index with distances <= delta]``.
    """

    distances: np.ndarray
    values: np.ndarray

    def eval(self, delta):
        delta = _check_nonneg(delta)
        if len(self.distances) == 0:
            return np.zeros_like(delta) if np.ndim(delta) else 0.0
        idx = np.searchsorted(self.distances, delta, side="right") - 1
        vals = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return float(vals) if np.ndim(vals) == 0 else vals

    __call__ = eval

    def corners(self):
        """Abscissae where the step function jumps, with the new value."""
        if len(self.values) == 0:
            return np.empty(0), np.empty(0)
        jump = np.concatenate([[self.values[0] > 0], np.diff(self.values) > 0])
        return self.distances[jump], self.values[jump]

    def concave_majorant(self) -> PiecewiseLinear:
        """Least concave modulus above the step function (flat tail)."""
        d, v = self.corners()
        if len(d) == 0:
            return ZERO
        if d[0] == 0:
            raise ValueError("positive deviation at distance 0 has no concave majorant")
        return _concave_hull_with_tail(np.concatenate([[0.0], d]),
                                       np.concatenate([[0.0], v]), 0.0)


def empirical_modulus(distances, deviations) -> EmpiricalModulus:
    d = np.asarray(distances, dtype=float).ravel()
    v = np.asarray(deviations, dtype=float).ravel()
    if d.shape != v.shape:
        raise ValueError("distances and deviations must have the same length")
    if np.any(d < 0) or np.any(v < 0):
        raise ValueError("samples must be nonnegative")
    order = np.argsort(d, kind="stable")
    d, v = d[order], v[order]
    run = np.maximum.accumulate(v) if len(v) else v
    # collapse repeated abscissae onto their last (largest) running value
    keep = np.append(d[1:] != d[:-1], True) if len(d) else np.zeros(0, bool)
    return EmpiricalModulus(d[keep], run[keep])


def parse_modulus(text: str) -> Modulus:
    """Parse ``pow:<alpha>[:<scale>]``, ``lin:<slope>[:cap:<b>]``, ``pwl:<path>``."""
    head, _, rest = text.partition(":")
    try:
        if head == "pow":
            parts = rest.split(":")
            if len(parts) > 2 or not parts[0]:
                raise ValueError
            return Power(float(parts[0]), float(parts[1]) if len(parts) == 2 else 1.0)
        if head == "lin":
            parts = rest.split(":")
            if len(parts) == 1:
                return linear_capped(float(parts[0]))
            if len(parts) == 3 and parts[1] == "cap":
                return linear_capped(float(parts[0]), float(parts[2]))
            raise ValueError
        if head == "pwl":
            return read_pwl(rest)
    except ValueError as exc:
        raise ValueError(f"bad modulus spec {text!r}: {exc}") from None
    raise ValueError(f"bad modulus spec {text!r}")


def read_pwl(path) -> PiecewiseLinear:
    t, v, tail = [], [], None
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not "".join(row).strip():
                continue
            if row[0].strip() == "tail":
                tail = float(row[1])
                continue
            try:
                t.append(float(row[0]))
                v.append(float(row[1]))
            except ValueError:
                if t:  # a header is only allowed before data
                    raise
    if tail is None:
        raise ValueError("missing final 'tail,<slope>' row")
    return PiecewiseLinear(tuple(t), tuple(v), tail)


def write_pwl(m: PiecewiseLinear, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "v"])
        for a, b in zip(m.t, m.v):
            w.writerow([repr(a), repr(b)])
        w.writerow(["tail", repr(m.tail)])
