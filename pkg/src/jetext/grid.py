"""Regular box grids and their binary file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

MAGIC = b"JGRD"
VERSION = 1
MAX_DIM = 4
MAX_NODES = 2**24


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a scalar function at the nodes of a box grid.

    ``values`` has shape ``dims`` and is indexed ``[i_1, ..., i_n]`` with node
    coordinates ``lo + i * spacing`` (row-major, last axis fastest).
    """

    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if lo.shape != hi.shape or values.ndim != lo.size:
            raise ValueError("box and value array dimensions disagree")
        if np.any(hi <= lo):
            raise ValueError("box must have hi > lo on every axis")
        if any(d < 2 for d in values.shape):
            raise ValueError("need at least 2 nodes per axis")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        for name, arr in (("lo", lo), ("hi", hi), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dims(self) -> tuple:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.asarray(self.dims) - 1)

    def axes(self):
        return [np.linspace(a, b, d) for a, b, d in zip(self.lo, self.hi, self.dims)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(N, n)`` in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.lo, self.hi, np.asarray(values).reshape(self.dims))

    def interpolate(self, points) -> np.ndarray:
        """Multilinear interpolation at points inside the box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        f = RegularGridInterpolator(self.axes(), self.values, method="linear",
                                    bounds_error=True)
        return f(pts)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def interior_mask(self, shell=1) -> np.ndarray:
        mask = np.zeros(self.dims, dtype=bool)
        mask[tuple(slice(shell, d - shell) for d in self.dims)] = True
        return mask

    def same_grid(self, other: "GridFunction") -> bool:
        return (self.dims == other.dims and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))


def make_grid(lo, hi, dims, fn=None) -> GridFunction:
    """Grid on the box ``[lo, hi]``; ``fn`` maps ``(N, n)`` nodes to values."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    dims = tuple(int(d) for d in np.broadcast_to(dims, lo.shape))
    check_size(dims)
    g = GridFunction(lo, hi, np.zeros(dims))
    if fn is None:
        return g
    return g.with_values(fn(g.nodes()))


def check_size(dims, max_nodes=MAX_NODES, max_dim=MAX_DIM):
    if len(dims) > max_dim:
        raise ValueError(f"grid dimension {len(dims)} exceeds cap {max_dim}")
    total = int(np.prod(dims, dtype=np.int64))
    if total > max_nodes:
        raise MemoryError(f"grid of {total} nodes exceeds cap {max_nodes}")


def write_grid(g: GridFunction, path) -> None:
    """Header ``JGRD``, version, n, dims, lo, hi, spacing; then float64 values."""
    n = g.ndim
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, n))
        fh.write(struct.pack(f"<{n}Q", *g.dims))
        fh.write(struct.pack(f"<{3 * n}d", *g.lo, *g.hi, *g.spacing))
        fh.write(np.ascontiguousarray(g.values, dtype="<f8").tobytes())


def read_grid(path) -> GridFunction:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a grid file")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported grid version {version}")
    off = 12
    dims = struct.unpack_from(f"<{n}Q", data, off)
    off += 8 * n
    box = np.array(struct.unpack_from(f"<{3 * n}d", data, off))
    off += 24 * n
    values = np.frombuffer(data, dtype="<f8", offset=off).reshape(dims)
    return GridFunction(box[:n], box[n:2 * n], values.copy())
