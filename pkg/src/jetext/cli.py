"""Command-line front end: ``jetext <subcommand> [options]``.

Every run prints a JSON report (or a table with ``--pretty``) whose
``certificates`` list records each asserted inequality with a stable anchor
name.  Exit status is 0 when all certificates pass, 1 when one fails and 2 on
usage or input errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .domain import (
    DEFAULT_BUDGET,
    DisconnectedError,
    build_graph,
    inner_modulus,
    lipschitz_from_bounded_gradient,
    qc_constant,
    wg_from_quasiconvex,
)
from .envelope import DEFAULT_FACTOR, EnvelopeSpec, envelope_grid, h_eval, H_eval
from .fixtures import EXPECTED, FIXTURES, FixtureSpec, read_cloud
from .grid import MAX_NODES, check_size, make_grid, write_grid
from .jet import (
    CERT_RTOL,
    JetDataset,
    JetLoadError,
    concave_wg_modulus,
    lip_and_bound_stats,
    load_jets,
    wg_constant,
    wtilde_profile,
)
from .modulus import PiecewiseLinear, majorant_report, parse_modulus, primitive, write_pwl
from .regularize import InsertionError, glue, insert_c11, insert_general, radial_partition

SUBCOMMANDS = ("check", "envelope", "extend", "glue", "domain", "modulus", "fixture")
DEFAULT_NODES = {1: 2049, 2: 129, 3: 33, 4: 17}
GENERAL_MAX_NODES = 20_000  # the general kernel is a brute-force pair scan
ENVELOPE_SAMPLES = 10_000

# neutral anchor names tying each certificate to the statement it checks
ANCHORS = {
    "wg_finite": "whitney-glaeser-constant",
    "wg_within_M": "whitney-glaeser-constant",
    "concave_recertified": "concave-modulus-from-profile",
    "envelope_sandwich": "envelope-sandwich",
    "envelope_interpolation": "envelope-interpolation",
    "insertion_sandwich": "insertion-between-envelopes",
    "insertion_sites": "insertion-interpolates",
    "insertion_lip_grad": "insertion-gradient-lipschitz",
    "glue_partition": "radial-partition-of-unity",
    "glue_sites": "glued-extension-interpolates",
    "glue_gradients": "glued-extension-gradients",
    "domain_connected": "inner-metric-finite",
    "qc_bound": "quasiconvexity-constant",
    "inner_sandwich": "inner-modulus-sandwich",
    "qc_wg_budget": "quasiconvex-whitney-glaeser-budget",
    "qc_lipschitz": "lipschitz-from-bounded-gradient",
    "stechkin_factor_two": "concave-majorant-factor-two",
    "primitive_bound": "primitive-lower-bound",
}


class UsageError(ValueError):
    """Bad flags, config keys or inputs; maps to exit status 2."""


@dataclass
class RunConfig:
    subcommand: str = "check"
    jets: str | None = None
    cloud: str | None = None
    fixture: str | None = None
    params: dict = field(default_factory=dict)
    modulus: str = "pow:1"
    lo: tuple | None = None
    hi: tuple | None = None
    resolution: tuple | None = None
    M: float | None = None
    t: float | None = None
    factor: float = DEFAULT_FACTOR
    K: float | None = None
    radii: tuple | None = None
    method: str = "c11"
    qc_bound: float | None = None
    epsilon: float | None = None
    budget: int = DEFAULT_BUDGET
    tol: float = CERT_RTOL
    max_nodes: int = 1 << 22
    out: str | None = None
    seed: int = 0
    pretty: bool = False

    def validate(self) -> "RunConfig":
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        for name in ("tol", "factor", "budget", "max_nodes"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        for name in ("M", "t", "K", "qc_bound", "epsilon"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError(f"{name} must be positive")
        if self.max_nodes > MAX_NODES:
            raise UsageError(f"max_nodes is capped at {MAX_NODES}")
        if self.method not in ("c11", "general"):
            raise UsageError("method must be 'c11' or 'general'")
        if self.resolution is not None and any(r < 3 for r in self.resolution):
            raise UsageError("resolution must be at least 3 nodes per axis")
        if self.fixture is not None and self.fixture not in FIXTURES:
            raise UsageError(f"unknown fixture {self.fixture!r}; choose from {', '.join(FIXTURES)}")
        return self


# ------------------------------------------------------------ parsing

def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)


def _ints(text) -> tuple:
    return tuple(int(x) for x in _floats(text))


def _params(items) -> dict:
    if isinstance(items, dict):
        return dict(items)
    out = {}
    for item in items if isinstance(items, list) else str(items).split(";"):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"fixture parameter {item!r} is not key=value")
        out[key.strip()] = value.strip()
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


CONVERTERS = {
    "subcommand": str, "jets": str, "cloud": str, "fixture": str, "params": _params,
    "modulus": str, "lo": _floats, "hi": _floats, "resolution": _ints, "M": float,
    "t": float, "factor": float, "K": float, "radii": _floats, "method": str,
    "qc_bound": float, "epsilon": float, "budget": int, "tol": float, "max_nodes": int,
    "out": str, "seed": int, "pretty": _bool,
}


def read_config(path) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise UsageError(f"config line {lineno}: expected key = value")
        if key not in CONVERTERS or key == "subcommand":
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value.strip(), f"config line {lineno}")
    return out


def _convert(key, value, where):
    try:
        return CONVERTERS[key](value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{where}: bad value for {key}: {exc}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jetext", description="Whitney-type extension of finite 1-jets.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS
    help_ = {
        "check": "Whitney-Glaeser constant, residual profile, Lipschitz stats, concave modulus",
        "envelope": "evaluate the lower and upper envelopes on a grid",
        "extend": "full pipeline: check, envelopes, insertion, diagnostics",
        "glue": "glue per-piece extensions with a radial partition of unity",
        "domain": "quasiconvexity constant, inner modulus and certificates for a point cloud",
        "modulus": "concave majorant and primitive of a modulus",
        "fixture": "generate a named fixture",
    }
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=help_[name], argument_default=S)
        s.add_argument("--config", help="key = value file; flags take precedence")
        s.add_argument("--pretty", action="store_true", help="human-readable table")
        s.add_argument("--out", help="output directory for report.json and artifacts")
        s.add_argument("--tol", help="relative certificate tolerance")
        if name in ("check", "envelope", "extend", "glue", "domain", "fixture"):
            s.add_argument("--fixture", help=f"one of {', '.join(FIXTURES)}")
            s.add_argument("--param", dest="params", action="append",
                           help="fixture parameter key=value (repeatable)")
        if name in ("check", "envelope", "extend", "glue", "domain"):
            s.add_argument("--jets", help="jet CSV x1..xn,f,g1..gn")
        if name != "fixture":
            s.add_argument("--modulus", help="pow:<a>[:<s>], lin:<s>[:cap:<b>] or pwl:<path>")
        if name == "check":
            s.add_argument("--M", help="claimed Whitney-Glaeser constant to certify")
        if name in ("envelope", "extend", "glue"):
            s.add_argument("--lo", help="grid box lower corner, comma separated")
            s.add_argument("--hi", help="grid box upper corner, comma separated")
            s.add_argument("--resolution", help="nodes per axis, one value or one per axis")
            s.add_argument("--max-nodes", dest="max_nodes", help="grid size cap")
            s.add_argument("--M", help="override the Whitney-Glaeser constant")
            s.add_argument("--factor", help="envelope kernel factor")
        if name in ("extend", "glue"):
            s.add_argument("--t", help="convolution parameter (default 1/(12M))")
        if name == "extend":
            s.add_argument("--method", help="c11 (default) or general")
        if name == "envelope":
            s.add_argument("--seed", help="seed for off-grid sandwich samples")
        if name == "glue":
            s.add_argument("--radii", help="partition radii, comma separated")
        if name == "domain":
            s.add_argument("--cloud", help="point-cloud CSV x1..xn[,f[,g1..gn]]")
            s.add_argument("--epsilon", help="neighbourhood radius")
            s.add_argument("--budget", help="pair budget for the shortest-path scan")
            s.add_argument("--K", help="gradient constant for the budget certificate")
            s.add_argument("--qc-bound", dest="qc_bound", help="claimed quasiconvexity constant")
    return p


def parse_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    values = read_config(ns.pop("config")) if "config" in ns else {}
    for key, raw in ns.items():
        values[key] = raw if key == "subcommand" or isinstance(raw, bool) else \
            _convert(key, raw, f"--{key}")
    cfg = RunConfig()
    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in values.items():
        if key not in allowed:
            raise UsageError(f"unknown key {key!r}")
        setattr(cfg, key, value)
    return cfg.validate()


# ------------------------------------------------------------ helpers

def _num(x):
    x = float(x)
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


def _cert(name, passed, value=None, bound=None, reason=None):
    c = {"name": name, "anchor": ANCHORS[name], "passed": bool(passed)}
    if value is not None:
        c["value"] = _num(value) if np.isscalar(value) else value
    if bound is not None:
        c["bound"] = _num(bound)
    if not passed and reason:
        c["reason"] = reason
    return c


def _le(value, bound, tol):
    return bool(value <= bound * (1.0 + tol))


def _fixture(cfg: RunConfig):
    try:
        return FixtureSpec(cfg.fixture, cfg.params).generate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _load_jets(cfg: RunConfig, required=True) -> JetDataset | None:
    if cfg.jets is not None and cfg.fixture is not None:
        raise UsageError("give either --jets or --fixture, not both")
    if cfg.jets is not None:
        try:
            return load_jets(cfg.jets)
        except (OSError, JetLoadError) as exc:
            raise UsageError(f"cannot load jets: {exc}") from None
    if cfg.fixture is not None:
        jets = _fixture(cfg).jets
        if jets is None and required:
            raise UsageError(f"fixture {cfg.fixture!r} carries no jets")
        return jets
    if required:
        raise UsageError("no input: give --jets or --fixture")
    return None


def _modulus(cfg: RunConfig):
    try:
        return parse_modulus(cfg.modulus)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _box(cfg: RunConfig, jets: JetDataset):
    n = jets.dim
    if (cfg.lo is None) != (cfg.hi is None):
        raise UsageError("give both lo and hi, or neither")
    if cfg.lo is None:
        a, b = jets.sites.min(axis=0), jets.sites.max(axis=0)
        pad = 0.25 * max(float((b - a).max()), 1.0)
        lo, hi = a - pad, b + pad
    else:
        lo, hi = np.asarray(cfg.lo, float), np.asarray(cfg.hi, float)
        if lo.shape != (n,) or hi.shape != (n,):
            raise UsageError(f"box corners need {n} coordinates")
        if np.any(hi <= lo):
            raise UsageError("box needs hi > lo on every axis")
    if cfg.resolution is None:
        if n not in DEFAULT_NODES:
            raise UsageError(f"no default resolution in dimension {n}")
        dims = (DEFAULT_NODES[n],) * n
    elif len(cfg.resolution) in (1, n):
        dims = tuple(np.broadcast_to(cfg.resolution, (n,)).tolist())
    else:
        raise UsageError(f"resolution needs 1 or {n} values")
    try:
        check_size(dims, max_nodes=cfg.max_nodes)
    except (MemoryError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return lo, hi, dims


def _envelope_spec(cfg: RunConfig, jets: JetDataset, omega):
    M = wg_constant(jets, omega).M if cfg.M is None else cfg.M
    if not np.isfinite(M):
        return None, M
    return EnvelopeSpec(jets, float(M), primitive(omega), cfg.factor), float(M)


def _out_dir(cfg: RunConfig) -> Path | None:
    if cfg.out is None:
        return None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------ subcommands

def cmd_check(cfg: RunConfig) -> dict:
    jets = _load_jets(cfg)
    omega = _modulus(cfg)
    wg = wg_constant(jets, omega)
    rep = {"sites": len(jets), "dim": jets.dim, "wg": wg.to_dict(),
           "stats": lip_and_bound_stats(jets).to_dict()}
    certs = [_cert("wg_finite", wg.finite, wg.M, reason="modulus vanishes where the data jumps")]
    if cfg.M is not None:
        certs.append(_cert("wg_within_M", _le(wg.M, cfg.M, cfg.tol), wg.M, cfg.M,
                           "measured constant exceeds the given M"))
    if len(jets) >= 2:
        rep["wtilde"] = wtilde_profile(jets).to_dict()
        cw = concave_wg_modulus(jets)
        rep["concave_modulus"] = cw.to_dict()
        certs.append(_cert("concave_recertified", cw.certified, cw.report.M, 1.0,
                           "constructed modulus does not recertify"))
    rep["certificates"] = certs
    return rep


def cmd_envelope(cfg: RunConfig) -> dict:
    jets = _load_jets(cfg)
    omega = _modulus(cfg)
    lo, hi, dims = _box(cfg, jets)
    spec, M = _envelope_spec(cfg, jets, omega)
    rep = {"sites": len(jets), "M": _num(M), "kernel": _num(cfg.factor * M), "dims": list(dims)}
    if spec is None:
        rep["certificates"] = [_cert("wg_finite", False, M, reason="Whitney-Glaeser constant is infinite")]
        return rep
    eg = envelope_grid(spec, lo, hi, dims, max_nodes=cfg.max_nodes)
    scale = 1.0 + max(np.abs(eg.h.values).max(), np.abs(eg.H.values).max())
    rng = np.random.default_rng(cfg.seed)
    Q = rng.uniform(lo, hi, size=(ENVELOPE_SAMPLES, jets.dim))
    gap_grid = float((eg.h.values - eg.H.values).max())
    gap_rand = float((h_eval(spec, Q) - H_eval(spec, Q)).max())
    gap = max(gap_grid, gap_rand)
    site_err = float(max(np.abs(h_eval(spec, jets.sites) - jets.values).max(),
                         np.abs(H_eval(spec, jets.sites) - jets.values).max()))
    rep.update({"lo": lo.tolist(), "hi": hi.tolist(), "max_gap_grid": gap_grid,
                "max_gap_samples": gap_rand, "samples": ENVELOPE_SAMPLES, "seed": cfg.seed,
                "violations": eg.violations(cfg.tol * scale), "site_max_error": site_err})
    rep["certificates"] = [
        _cert("envelope_sandwich", gap <= cfg.tol * scale, gap, cfg.tol * scale,
              "lower envelope exceeds upper envelope"),
        _cert("envelope_interpolation", site_err == 0.0, site_err, 0.0,
              "envelopes miss the data at some site"),
    ]
    out = _out_dir(cfg)
    if out is not None:
        write_grid(eg.h, out / "h.grid")
        write_grid(eg.H, out / "H.grid")
        rep["written"] = ["h.grid", "H.grid"]
    return rep


def _insert(cfg, jets, omega, lo, hi, dims):
    """Envelopes and insertion for one jet set; returns (F, M, report, certificates)."""
    spec, M = _envelope_spec(cfg, jets, omega)
    if spec is None:
        return None, M, {"M": _num(M)}, [
            _cert("wg_finite", False, M, reason="Whitney-Glaeser constant is infinite")]
    eg = envelope_grid(spec, lo, hi, dims, max_nodes=cfg.max_nodes)
    try:
        if cfg.method == "general":
            if np.prod(dims) > GENERAL_MAX_NODES:
                raise UsageError(f"general kernel is limited to {GENERAL_MAX_NODES} nodes")
            res = insert_general(eg.h, eg.H, omega, M, None if cfg.t is None else 1.0 / cfg.t,
                                 jets=jets)
        else:
            res = insert_c11(eg.h, eg.H, M, cfg.t, jets=jets)
    except InsertionError as exc:
        return None, M, {"M": _num(M)}, [_cert("envelope_sandwich", False, reason=str(exc))]
    d = res.diagnostics
    rep = {"M": _num(M), "method": cfg.method, **res.to_dict()}
    certs = [
        _cert("insertion_sandwich", d["sandwich_violations"] == 0, d["sandwich_violations"], 0,
              "extension leaves the envelope band"),
        _cert("insertion_sites", d["site_max_error"] <= d["site_budget"], d["site_max_error"],
              d["site_budget"], "extension misses a site value"),
    ]
    if cfg.method == "c11" and "lip_grad" in d:
        # with M = 0 the extension is affine and its gradient is constant
        bound = 30.0 * M if M > 0 else cfg.tol
        certs.append(_cert("insertion_lip_grad", d["lip_grad"] <= bound, d["lip_grad"], bound,
                           "gradient Lipschitz constant above budget"))
    return res.F, M, rep, certs


def cmd_extend(cfg: RunConfig) -> dict:
    jets = _load_jets(cfg)
    omega = _modulus(cfg)
    lo, hi, dims = _box(cfg, jets)
    F, M, rep, certs = _insert(cfg, jets, omega, lo, hi, dims)
    rep = {"sites": len(jets), "lo": lo.tolist(), "hi": hi.tolist(), "dims": list(dims), **rep,
           "certificates": certs}
    out = _out_dir(cfg)
    if out is not None and F is not None:
        write_grid(F, out / "F.grid")
        rep["written"] = ["F.grid"]
    return rep


def cmd_glue(cfg: RunConfig) -> dict:
    jets = _load_jets(cfg)
    omega = _modulus(cfg)
    if cfg.radii is None:
        raise UsageError("glue needs radii")
    try:
        part = radial_partition(cfg.radii)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    lo, hi, dims = _box(cfg, jets)
    active = part.psi(jets.sites) > 0
    pieces, reports, certs = [], [], []
    for g in range(part.k):
        idx = np.flatnonzero(active[g])
        if len(idx) == 0:
            # a bump with no sites carries no data; any smooth piece will do
            F = make_grid(lo, hi, dims)
            reports.append({"piece": g, "sites": 0})
        else:
            F, M, rep, c = _insert(cfg, jets.subset(idx), omega, lo, hi, dims)
            reports.append({"piece": g, "sites": idx.tolist(), **rep})
            certs += [{**x, "piece": g} for x in c]
            if F is None:
                return {"pieces": reports, "certificates": certs}
        pieces.append((F, idx))
    res = glue(pieces, part, jets)
    d = res.diagnostics
    sp = d["spacing"]
    site_err = d.get("site_max_error", 0.0)
    grad_err = d.get("site_max_grad_error", 0.0)
    certs += [
        _cert("glue_partition", res.partition_sum_error <= 1e-12, res.partition_sum_error, 1e-12,
              "bumps do not sum to one"),
        _cert("glue_sites", site_err <= 5.0 * sp**2, site_err, 5.0 * sp**2,
              "glued extension misses a site value"),
        _cert("glue_gradients", grad_err <= 10.0 * sp, grad_err, 10.0 * sp,
              "glued gradient misses a site gradient"),
    ]
    rep = {"sites": len(jets), "radii": list(part.radii), "lo": lo.tolist(), "hi": hi.tolist(),
           "dims": list(dims), "pieces": reports, "diagnostics": d, "certificates": certs}
    out = _out_dir(cfg)
    if out is not None:
        write_grid(res.F, out / "F.grid")
        rep["written"] = ["F.grid"]
    return rep


def _domain_input(cfg: RunConfig):
    if (cfg.cloud is None) == (cfg.fixture is None):
        raise UsageError("give exactly one of --cloud or --fixture")
    if cfg.fixture is not None:
        fd = _fixture(cfg)
        if fd.domain is None:
            raise UsageError(f"fixture {cfg.fixture!r} has no point cloud")
        bound = EXPECTED[cfg.fixture].get("qc_bound")
        return fd.domain, fd.values, fd.jets, bound if isinstance(bound, float) else None
    try:
        P, f, G = read_cloud(cfg.cloud)
        d = build_graph(P, cfg.epsilon)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load cloud: {exc}") from None
    jets = JetDataset(P, f, G) if G is not None else None
    return d, f, jets, None


def cmd_domain(cfg: RunConfig) -> dict:
    d, f, jets, expected = _domain_input(cfg)
    q = qc_constant(d, cfg.budget)
    rep = {"points": len(d), "dim": d.dim, "qc": q.to_dict()}
    certs = [_cert("domain_connected", q.connected, q.n_components, 1,
                   "the neighbourhood graph is disconnected")]
    bound = cfg.qc_bound if cfg.qc_bound is not None else expected
    if bound is not None:
        certs.append(_cert("qc_bound", q.within(bound), q.c_hat, q.bound(bound),
                           "measured constant outside [1, c + slack]"))
    if f is not None and q.connected:
        im = inner_modulus(d, f, cfg.budget)
        rep["inner_modulus"] = im.to_dict()
        # the lower half of the sandwich needs densely sampled long pairs, so
        # only the upper half is asserted; both gaps are in the report
        if bound is not None:
            certs.append(_cert("inner_sandwich", im.upper_gap <= im.tol, im.upper_gap, im.tol,
                               "Euclidean modulus exceeds c_hat times the inner majorant"))
    if jets is not None and q.connected:
        omega = _modulus(cfg)
        K = cfg.K
        if K is None:
            K = wg_constant(jets, omega).M_grad * (1.0 + cfg.tol)
            rep["K_source"] = "measured"
        try:
            qcc = wg_from_quasiconvex(d, jets, omega, K, q)
            lip = lipschitz_from_bounded_gradient(d, jets, q)
        except DisconnectedError as exc:
            raise UsageError(str(exc)) from None
        rep["wg_certificate"] = qcc.to_dict()
        rep["lipschitz_certificate"] = lip.to_dict()
        certs += [
            _cert("qc_wg_budget", qcc.passed, qcc.M, qcc.budget,
                  "precondition fails or constant exceeds the budget"),
            _cert("qc_lipschitz", lip.passed, lip.lip, lip.bound,
                  "Lipschitz constant exceeds the inner-metric bound"),
        ]
    rep["certificates"] = certs
    return rep


def cmd_modulus(cfg: RunConfig) -> dict:
    m = _modulus(cfg)
    mr = majorant_report(m)
    phi = primitive(m)
    T = m.extent()
    t = np.linspace(0.0, T, 257)
    gap = t * m.eval(t) - 2.0 * phi.eval(t)
    rep = {
        "modulus": m.spec(),
        "concave": m.is_concave(),
        "subadditive": mr.input_subadditive,
        "majorant": mr.majorant.spec(),
        "majorant_ratio_max": _num(mr.max_ratio),
        "extent": T,
        "primitive": {"t": t[::32].tolist(), "phi": phi.eval(t[::32]).tolist()},
    }
    certs = []
    if mr.input_subadditive:
        certs.append(_cert("stechkin_factor_two", mr.within_factor_two, mr.max_ratio, 2.0,
                           "majorant exceeds twice the modulus"))
    if rep["concave"]:
        worst = float(gap.max())
        ok = bool(np.all(gap <= 1e-12 * (1.0 + np.abs(2.0 * phi.eval(t)))))
        certs.append(_cert("primitive_bound", ok, worst, 0.0, "t w(t) exceeds 2 phi(t)"))
    rep["certificates"] = certs
    out = _out_dir(cfg)
    if out is not None and isinstance(mr.majorant, PiecewiseLinear):
        write_pwl(mr.majorant, out / "majorant.csv")
        rep["written"] = ["majorant.csv"]
    return rep


def cmd_fixture(cfg: RunConfig) -> dict:
    if cfg.fixture is None:
        raise UsageError("fixture needs --fixture")
    fd = _fixture(cfg)
    rep = {"manifest": fd.manifest(), "certificates": []}
    out = _out_dir(cfg)
    if out is not None:
        rep["written"] = [p.name for p in fd.write(out)]
    return rep


COMMANDS = {"check": cmd_check, "envelope": cmd_envelope, "extend": cmd_extend,
            "glue": cmd_glue, "domain": cmd_domain, "modulus": cmd_modulus,
            "fixture": cmd_fixture}


# ------------------------------------------------------------ output

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return _num(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def render_table(report: dict) -> str:
    """Two-column summary of scalar fields followed by the certificate list."""
    lines = []
    for key, value in report.items():
        if key in ("certificates", "status", "reasons"):
            continue
        if isinstance(value, dict):
            for k, v in value.items():
                if not isinstance(v, (dict, list)):
                    lines.append(f"{key + '.' + k:<28} {v}")
        elif not isinstance(value, list):
            lines.append(f"{key:<28} {value}")
    lines.append("")
    for c in report.get("certificates", []):
        mark = "PASS" if c["passed"] else "FAIL"
        tail = f"  {c.get('value', '')}" + (f" <= {c['bound']}" if "bound" in c else "")
        name = c["name"] + (f"[{c['piece']}]" if "piece" in c else "")
        lines.append(f"{mark}  {name:<24} ({c['anchor']}){tail}")
    lines.append(f"status: {report['status']}")
    return "\n".join(lines)


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = parse_config(list(sys.argv[1:] if argv is None else argv))
        report = COMMANDS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"jetext: error: {exc}", file=stderr)
        return 2
    certs = report.get("certificates", [])
    failed = [c for c in certs if not c["passed"]]
    report = _jsonable({"subcommand": cfg.subcommand, "version": __version__, **report,
                        "status": "fail" if failed else "pass",
                        "reasons": [c.get("reason", c["name"]) for c in failed]})
    text = json.dumps(report, indent=2, sort_keys=False)
    out = _out_dir(cfg)
    if out is not None:
        (out / "report.json").write_text(text + "\n")
    print(render_table(report) if cfg.pretty else text, file=stdout)
    return 1 if failed else 0


def main() -> None:
    sys.exit(run())
