"""Insertion of a smooth function between a semiconvex and a semiconcave grid function.

The C^{1,1} mode composes quadratic sup- and inf-convolutions (the
Lasry-Lions double envelope).  For ``h`` that is ``c``-semiconvex and
``t = 1/(2c)`` the result is ``c``-semiconvex and ``1/t``-semiconcave, hence
has a ``2c``-Lipschitz gradient, and it stays between ``h`` and any
``1/(2t)``-semiconcave majorant ``H``.

Quadratic convolutions separate across axes and are evaluated exactly on the
grid with the linear-time lower envelope of parabolas.  The general-kernel
mode uses brute force.  Gluing combines local pieces with a radial partition
of unity in the variable ``|x|^2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .grid import GridFunction
from .jet import JetDataset
from .modulus import Modulus, Power, primitive

EXPERIMENTAL = "experimental: sandwich and smoothness verified numerically only"


class InsertionError(ValueError):
    """The lower function exceeds the upper one beyond tolerance."""


# ------------------------------------------------------------ convolutions

@njit(cache=True)
def _lower_envelope_1d(f, x, c, out, v, z):
    """``out[i] = min_j f[j] + c (x[i] - x[j])**2`` for increasing ``x``."""
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        fq = f[q] + c * x[q] * x[q]
        p = v[k]
        s = (fq - (f[p] + c * x[p] * x[p])) / (2.0 * c * (x[q] - x[p]))
        while s <= z[k]:
            k -= 1
            p = v[k]
            s = (fq - (f[p] + c * x[p] * x[p])) / (2.0 * c * (x[q] - x[p]))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for i in range(n):
        while z[k + 1] < x[i]:
            k += 1
        d = x[i] - x[v[k]]
        out[i] = f[v[k]] + c * d * d


@njit(cache=True)
def _lower_envelope_rows(rows, x, c):
    m, n = rows.shape
    out = np.empty_like(rows)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    for r in range(m):
        _lower_envelope_1d(rows[r], x, c, out[r], v, z)
    return out


def _check_t(t):
    if not (np.isfinite(t) and t > 0):
        raise ValueError("convolution parameter t must be positive and finite")


def inf_conv_quadratic(g: GridFunction, t: float) -> GridFunction:
    """``x -> min over nodes y of g(y) + |x - y|^2 / (2t)`` at every node."""
    _check_t(t)
    vals = np.array(g.values, dtype=float)
    c = 1.0 / (2.0 * t)
    for axis, x in enumerate(g.axes()):
        moved = np.moveaxis(vals, axis, -1)
        shape = moved.shape
        res = _lower_envelope_rows(np.ascontiguousarray(moved).reshape(-1, shape[-1]), x, c)
        vals = np.moveaxis(res.reshape(shape), -1, axis)
    return g.with_values(vals)


def sup_conv_quadratic(g: GridFunction, t: float) -> GridFunction:
    """``x -> max over nodes y of g(y) - |x - y|^2 / (2t)`` at every node."""
    neg = inf_conv_quadratic(g.with_values(-g.values), t)
    return g.with_values(-neg.values)


def brute_conv(g: GridFunction, kernel, sign: int, block=2048) -> GridFunction:
    """Direct ``min`` (``sign=+1``) or ``max`` (``sign=-1``) of ``g(y) + sign*kernel(|x-y|)``."""
    nodes = g.nodes()
    vals = g.values.ravel()
    out = np.empty(len(nodes))
    for s in range(0, len(nodes), block):
        d = np.linalg.norm(nodes[s:s + block, None, :] - nodes[None, :, :], axis=2)
        cand = vals[None, :] + sign * kernel(d)
        out[s:s + block] = cand.min(axis=1) if sign > 0 else cand.max(axis=1)
    return g.with_values(out)


# ------------------------------------------------------------ diagnostics

def grad_fd(g: GridFunction) -> np.ndarray:
    """Central-difference gradient, shape ``dims + (n,)`` (one-sided on the boundary)."""
    if any(d < 3 for d in g.dims):
        raise ValueError("need at least 3 nodes per axis for central differences")
    parts = np.gradient(g.values, *g.spacing)
    if g.ndim == 1:
        parts = [parts]
    return np.stack(parts, axis=-1)


def _offsets(n, scales):
    base = [np.array(o) for o in np.ndindex(*(3,) * n)]
    base = [o - 1 for o in base]
    # half of the neighbour stencil: the first nonzero entry is positive
    half = [o for o in base if np.any(o) and o[np.flatnonzero(o)[0]] > 0]
    return [s * o for s in scales for o in half]


def gradient_ratio(field: np.ndarray, spacing, omega: Modulus, mask=None, scales=(1,)) -> float:
    """``max |D(x) - D(y)| / omega(|x - y|)`` over node pairs ``y = x + k*o*spacing``.

    ``o`` runs over the unit neighbour stencil and ``k`` over ``scales``; both
    nodes must lie in ``mask``.
    """
    n = field.ndim - 1
    dims = field.shape[:-1]
    spacing = np.asarray(spacing, dtype=float)
    if mask is None:
        mask = np.ones(dims, dtype=bool)
    best = 0.0
    for off in _offsets(n, scales):
        if np.any(np.abs(off) >= np.asarray(dims)):
            continue
        src = tuple(slice(max(0, -o), d - max(0, o)) for o, d in zip(off, dims))
        dst = tuple(slice(max(0, o), d - max(0, -o)) for o, d in zip(off, dims))
        ok = mask[src] & mask[dst]
        if not ok.any():
            continue
        diff = np.linalg.norm(field[dst] - field[src], axis=-1)[ok]
        w = omega.eval(np.linalg.norm(off * spacing))
        best = max(best, float(diff.max() / w))
    return best


def lip_of_gradient(field: np.ndarray, spacing, mask=None) -> float:
    """Empirical Lipschitz constant of a gradient field over neighbouring nodes."""
    return gradient_ratio(field, spacing, Power(1.0), mask)


def holder_of_gradient(field: np.ndarray, spacing, alpha: float, mask=None) -> float:
    """Empirical ``alpha``-Hoelder constant over dyadic node separations."""
    dims = field.shape[:-1]
    scales = 2 ** np.arange(int(np.log2(max(2, min(dims) // 2))))
    return gradient_ratio(field, spacing, Power(alpha), mask, scales=tuple(scales))


# ------------------------------------------------------------ insertion

@dataclass
class InsertionResult:
    F: GridFunction
    t_used: float
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self):
        t = self.t_used if np.isfinite(self.t_used) else "inf"
        return {"t_used": t, "diagnostics": self.diagnostics, "flags": self.flags}


def _check_pair(h: GridFunction, H: GridFunction, rtol=1e-9):
    if not h.same_grid(H):
        raise ValueError("h and H must live on the same grid")
    scale = 1.0 + max(np.abs(h.values).max(), np.abs(H.values).max())
    gap = float((h.values - H.values).max())
    if gap > rtol * scale:
        raise InsertionError(f"h exceeds H by {gap:.3e}; M is below the WG constant")
    return scale


def diagnose(F: GridFunction, h: GridFunction, H: GridFunction, M: float, jets=None,
             omega: Modulus | None = None) -> dict:
    """Sandwich, site interpolation and gradient-regularity statistics recomputed from ``F``."""
    sp = float(F.spacing.max())
    eps_g = 5.0 * sp * (1.0 + 6.0 * M)
    inner = F.interior_mask()
    below = h.values - F.values
    above = F.values - H.values
    out = {
        "spacing": sp,
        "eps_g": eps_g,
        "max_below_h": float(below.max()),
        "max_above_H": float(above.max()),
        "sandwich_violations": int(np.sum((below > eps_g) | (above > eps_g))),
        # F >= h holds exactly up to rounding in the two sign flips
        "nodes_below_h": int(np.sum(below > 1e-12 * (1.0 + np.abs(h.values)))),
    }
    if all(d >= 3 for d in F.dims):
        field_ = grad_fd(F)
        out["lip_grad"] = lip_of_gradient(field_, F.spacing, inner)
        if omega is not None and not (isinstance(omega, Power) and omega.alpha == 1.0):
            out["omega_ratio_grad"] = gradient_ratio(field_, F.spacing, omega, inner,
                                                     scales=(1, 2, 4, 8))
    if jets is not None:
        inside = F.contains(jets.sites)
        err = np.abs(F.interpolate(jets.sites[inside]) - jets.values[inside])
        out["site_budget"] = 5.0 * sp**2 * (1.0 + 6.0 * M)
        out["site_max_error"] = float(err.max()) if err.size else 0.0
        out["sites_outside_box"] = int(np.sum(~inside))
    return out


def _tilt_slope(h: GridFunction, H: GridFunction, jets, tilt):
    if tilt is None:
        return np.zeros(h.ndim)
    if not isinstance(tilt, str):
        return np.broadcast_to(np.asarray(tilt, dtype=float), (h.ndim,)).copy()
    if tilt != "auto":
        raise ValueError("tilt must be 'auto', None or a slope vector")
    if jets is not None:
        return jets.grads.mean(axis=0)
    mid = h.with_values(0.5 * (h.values + H.values))
    return grad_fd(mid).reshape(-1, h.ndim).mean(axis=0)


def insert_c11(h: GridFunction, H: GridFunction, M: float, t: float | None = None,
               jets: JetDataset | None = None, tilt="auto") -> InsertionResult:
    """``F = inf_conv(sup_conv(h, t), t)`` with default ``t = 1/(12 M)``.

    Intended for envelopes built with the quadratic kernel ``6M |x-z|^2/2``,
    which are ``6M``-semiconvex (``h``) and ``6M``-semiconcave (``H``).

    The double envelope commutes with adding an affine function on the whole
    space but not on a bounded box, where the optimal displacement ``t * grad``
    may leave the grid.  An affine tilt (by default the mean data gradient) is
    removed before convolving and restored afterwards, so that only the
    curvature part of the envelopes drives the displacement.
    """
    _check_pair(h, H)
    if M < 0:
        raise ValueError("M must be nonnegative")
    flags = []
    if M == 0 and t is None:
        # both envelopes coincide with the same affine function
        F = h.with_values(0.5 * (h.values + H.values))
        t_used = np.inf
    else:
        t_used = 1.0 / (12.0 * M) if t is None else float(t)
        _check_t(t_used)
        if M > 0 and t_used >= 1.0 / (6.0 * M):
            warnings.warn("t >= 1/(6M): outside the semiconvexity regime", stacklevel=2)
            flags.append("t-beyond-semiconvexity-regime")
        a = _tilt_slope(h, H, jets, tilt)
        ell = (h.nodes() @ a).reshape(h.dims)
        closed = inf_conv_quadratic(sup_conv_quadratic(h.with_values(h.values - ell), t_used), t_used)
        F = h.with_values(closed.values + ell)
    return InsertionResult(F, t_used, diagnose(F, h, H, M, jets), flags)


def insert_general(h: GridFunction, H: GridFunction, omega: Modulus, M: float,
                   a: float | None = None, jets: JetDataset | None = None) -> InsertionResult:
    """Double envelope with kernel ``a * phi(|x - y|)``, ``phi`` the primitive of ``omega``.

    Brute force over node pairs; the default ``a = 12 M`` reduces to
    :func:`insert_c11` with ``tilt=None`` for ``omega(t) = t``.  No affine tilt
    is applied since it commutes with the convolutions only for quadratic kernels.
    """
    _check_pair(h, H)
    if not omega.is_concave():
        raise ValueError("general-kernel insertion needs a concave modulus")
    a = 12.0 * M if a is None else float(a)
    if not a > 0:
        raise ValueError("kernel scale must be positive")
    phi = primitive(omega)
    kernel = lambda d: a * phi.eval(d)  # noqa: E731
    S = brute_conv(h, kernel, sign=-1)
    F = brute_conv(S, kernel, sign=+1)
    return InsertionResult(F, 1.0 / a, diagnose(F, h, H, M, jets, omega), [EXPERIMENTAL])


# ------------------------------------------------------------ gluing

def smoothstep(u):
    """Quintic ``6u^5 - 15u^4 + 10u^3`` clipped to [0, 1]; C^2 with zero end derivatives."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (u * (6.0 * u - 15.0) + 10.0)


def _smoothstep_d(u):
    inside = (u > 0) & (u < 1)
    return np.where(inside, 30.0 * u**2 * (u - 1.0) ** 2, 0.0)


@dataclass(frozen=True)
class RadialPartition:
    """Bumps ``phi_1..phi_k`` in ``s = |x|^2`` with ``phi_g`` supported in ``(r_{g-1}, r_{g+1})``.

    With transitions ``U_g(s) = S((s - r_g^2) / (r_{g+1}^2 - r_g^2))`` the bumps
    are ``1 - U_1``, ``U_{g-1} - U_g`` and ``U_{k-1}``; they telescope to 1.
    """

    radii: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.radii)
        if not r or any(x <= 0 for x in r) or any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be positive and strictly increasing")
        object.__setattr__(self, "radii", r)

    @property
    def k(self) -> int:
        return len(self.radii)

    def _transitions(self, s):
        sq = np.square(self.radii)
        return [smoothstep((s - a) / (b - a)) for a, b in zip(sq[:-1], sq[1:])]

    def bumps(self, s) -> np.ndarray:
        """Values of every bump at ``s = |x|^2``, shape ``(k,) + s.shape``."""
        s = np.asarray(s, dtype=float)
        if self.k == 1:
            return np.ones((1,) + s.shape)
        U = self._transitions(s)
        out = [1.0 - U[0]] + [U[g - 1] - U[g] for g in range(1, self.k - 1)] + [U[-1]]
        return np.stack(out)

    def bump_derivatives(self, s) -> np.ndarray:
        """Derivatives ``d phi_g / ds``."""
        s = np.asarray(s, dtype=float)
        if self.k == 1:
            return np.zeros((1,) + s.shape)
        sq = np.square(self.radii)
        dU = [_smoothstep_d((s - a) / (b - a)) / (b - a) for a, b in zip(sq[:-1], sq[1:])]
        out = [-dU[0]] + [dU[g - 1] - dU[g] for g in range(1, self.k - 1)] + [dU[-1]]
        return np.stack(out)

    def psi(self, x) -> np.ndarray:
        """``psi_g(x) = phi_g(|x|^2)`` at points ``(q, n)``, shape ``(k, q)``."""
        x = np.atleast_2d(x)
        return self.bumps(np.sum(x**2, axis=1))

    def support(self, g: int):
        """Open radial interval outside which bump ``g`` (0-based) vanishes."""
        r = (-np.inf,) + self.radii + (np.inf,)
        return (r[g], r[g + 2]) if self.k > 1 else (-np.inf, np.inf)


def radial_partition(radii) -> RadialPartition:
    return RadialPartition(tuple(radii))


@dataclass
class GlueResult:
    F: GridFunction
    partition_sum_error: float
    diagnostics: dict = field(default_factory=dict)


def glue(pieces, partition: RadialPartition, jets: JetDataset | None = None,
         sum_tol=1e-12) -> GlueResult:
    """``F = sum_g psi_g F_g`` on a common grid.

    ``pieces`` is a list of ``(F_g, site_indices)``.  When ``jets`` is given,
    every site where some ``psi_g`` is nonzero must belong to that piece.
    """
    pieces = list(pieces)
    if len(pieces) != partition.k:
        raise ValueError(f"{partition.k} bumps but {len(pieces)} pieces")
    ref = pieces[0][0]
    if not all(p.same_grid(ref) for p, _ in pieces):
        raise ValueError("all pieces must share one grid")
    nodes = ref.nodes()
    psi = partition.psi(nodes)
    err = float(np.abs(psi.sum(axis=0) - 1.0).max())
    if err > sum_tol:
        raise ValueError(f"partition sums to 1 only within {err:.3e}")
    F = ref.with_values(np.sum([p * P.values.ravel() for p, (P, _) in zip(psi, pieces)], axis=0))
    diag = {"partition_sum_error": err}
    if jets is not None:
        psi_sites = partition.psi(jets.sites)
        members = [set(int(i) for i in idx) for _, idx in pieces]
        for i in range(len(jets)):
            active = np.flatnonzero(psi_sites[:, i] > 0)
            if len(active) == 0:
                raise ValueError(f"site {i} is not covered by any piece")
            for g in active:
                if i not in members[g]:
                    raise ValueError(f"site {i} lies in the support of piece {g} "
                                     "but not in its site subset")
        inside = F.contains(jets.sites)
        if inside.any():
            diag["site_max_error"] = float(np.abs(
                F.interpolate(jets.sites[inside]) - jets.values[inside]).max())
        if all(d >= 3 for d in F.dims) and inside.any():
            G = grad_fd(F)
            gi = np.stack([F.with_values(G[..., k]).interpolate(jets.sites[inside])
                           for k in range(F.ndim)], axis=1)
            diag["site_max_grad_error"] = float(
                np.linalg.norm(gi - jets.grads[inside], axis=1).max())
        diag["spacing"] = float(F.spacing.max())
    return GlueResult(F, err, diag)
