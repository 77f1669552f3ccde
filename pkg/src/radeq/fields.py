"""Cartesian grids, scalar fields on them, and field file formats.

Binary grid format (little endian)::

    8 bytes   magic b"RADQGRD1"
    3 x int32 dims (nx, ny, nz)
    3 x f64   origin
    1 x f64   spacing
    nx*ny*nz  f64 values, row-major (x slowest, z fastest)
    nx*ny*nz  uint8 inside mask, same order
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import IoError, MissingField
from .geometry import ConvexDomain

MAGIC = b"RADQGRD1"


@dataclass(frozen=True)
class Grid:
    """Uniform lattice with isotropic spacing ``h``."""

    origin: tuple
    spacing: float
    dims: tuple

    @classmethod
    def for_domain(cls, domain: ConvexDomain, n: int) -> "Grid":
        """Lattice with ``n`` nodes across the longest axis of the bounding box."""
        if n < 3:
            raise ValueError("need at least 3 nodes per axis")
        h = domain.diameter / (n - 1)
        dims = tuple(int(np.ceil(2 * a / h - 1e-9)) + 1 for a in domain.semi_axes)
        origin = tuple(c - 0.5 * (m - 1) * h for c, m in zip(domain.center, dims))
        return cls(origin=origin, spacing=float(h), dims=dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def axes(self) -> list[np.ndarray]:
        return [o + self.spacing * np.arange(m) for o, m in zip(self.origin, self.dims)]

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``dims + (3,)``."""
        X, Y, Z = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([X, Y, Z], axis=-1)


def inside_mask(grid: Grid, domain: ConvexDomain) -> np.ndarray:
    return domain.contains(grid.nodes())


def nearest_inside_index(mask: np.ndarray) -> np.ndarray:
    """Flat index of the nearest inside node for every node of the grid."""
    if not mask.any():
        raise ValueError("mask has no inside nodes")
    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    return np.ravel_multi_index(tuple(idx), mask.shape).reshape(mask.shape)


@dataclass
class ScalarField:
    """Node values on a grid, zero outside ``mask``."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.dims)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(self.grid.dims)
        self.values = np.where(self.mask, self.values, 0.0)

    @classmethod
    def from_function(cls, grid: Grid, domain: ConvexDomain, fn) -> "ScalarField":
        mask = inside_mask(grid, domain)
        return cls(grid, fn(grid.nodes()), mask)

    @classmethod
    def constant(cls, grid: Grid, domain: ConvexDomain, value: float) -> "ScalarField":
        return cls.from_function(grid, domain, lambda p: np.full(p.shape[:-1], float(value)))

    def inside(self) -> np.ndarray:
        return self.values[self.mask]

    def with_inside(self, vals) -> "ScalarField":
        v = np.zeros(self.grid.dims)
        v[self.mask] = vals
        return ScalarField(self.grid, v, self.mask)

    def extended(self) -> np.ndarray:
        """Copy where outside nodes carry their nearest inside value.

        Used for interpolation in cut cells; the stored values keep the
        zero-outside convention.
        """
        return self.values.ravel()[nearest_inside_index(self.mask)]

    def sup(self) -> float:
        return float(np.max(np.abs(self.inside()))) if self.mask.any() else 0.0

    def map(self, fn) -> "ScalarField":
        return self.with_inside(fn(self.inside()))


def trilinear(values: np.ndarray, grid: Grid, points) -> np.ndarray:
    """Trilinear interpolation with index clamping (matches the compiled kernel)."""
    p = (np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(grid.origin)) / grid.spacing
    dims = np.asarray(grid.dims)
    i = np.clip(np.floor(p).astype(int), 0, dims - 2)
    f = np.clip(p - i, 0.0, 1.0)
    out = np.zeros(len(p))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1 - f[:, 2]
                out += wx * wy * wz * values[i[:, 0] + dx, i[:, 1] + dy, i[:, 2] + dz]
    return out


# ---------------------------------------------------------------------------
# IO


def _fmt(v: float) -> str:
    return repr(float(v)) if np.isfinite(v) else "nan"


def write_csv(field: ScalarField, path, inside_only: bool = False) -> None:
    """Rows ``x,y,z,value`` with 17 significant digits, LF line endings."""
    nodes = field.grid.nodes().reshape(-1, 3)
    vals = field.values.ravel()
    keep = field.mask.ravel() if inside_only else np.ones(len(vals), bool)
    buf = io.StringIO()
    buf.write("x,y,z,value\n")
    for (x, y, z), v in zip(nodes[keep], vals[keep]):
        buf.write(f"{x:.17g},{y:.17g},{z:.17g},{v:.17g}\n")
    _write_text(path, buf.getvalue())


def read_csv(path, domain: ConvexDomain) -> ScalarField:
    """Inverse of :func:`write_csv` (full-grid files); the mask is rebuilt from ``domain``."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise MissingField(str(exc)) from exc
    axes = [np.unique(data[:, i]) for i in range(3)]
    dims = tuple(len(a) for a in axes)
    if np.prod(dims) != len(data):
        raise IoError("CSV rows do not form a full lattice")
    h = float(axes[0][1] - axes[0][0]) if dims[0] > 1 else 1.0
    grid = Grid(origin=tuple(float(a[0]) for a in axes), spacing=h, dims=dims)
    idx = [np.rint((data[:, i] - axes[i][0]) / h).astype(int) for i in range(3)]
    vals = np.zeros(dims)
    vals[idx[0], idx[1], idx[2]] = data[:, 3]
    return ScalarField(grid, vals, inside_mask(grid, domain))


def write_binary(field: ScalarField, path) -> None:
    g = field.grid
    head = MAGIC + struct.pack("<3i4d", *g.dims, *g.origin, g.spacing)
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    mask = np.ascontiguousarray(field.mask, dtype=np.uint8).tobytes()
    try:
        Path(path).write_bytes(head + payload + mask)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_binary(path) -> ScalarField:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise MissingField(str(exc)) from exc
    if raw[:8] != MAGIC:
        raise IoError("not a radeq binary grid file")
    nx, ny, nz, ox, oy, oz, h = struct.unpack_from("<3i4d", raw, 8)
    off = 8 + struct.calcsize("<3i4d")
    n = nx * ny * nz
    vals = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(nx, ny, nz)
    mask = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off + 8 * n).reshape(nx, ny, nz)
    return ScalarField(Grid((ox, oy, oz), h, (nx, ny, nz)), vals.copy(), mask.astype(bool))


def write_vtk(field: ScalarField, path, name: str = "value") -> None:
    """Legacy ASCII structured-points file (x varies fastest)."""
    g = field.grid
    lines = [
        "# vtk DataFile Version 3.0",
        f"radeq {name}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS {} {} {}".format(*g.dims),
        "ORIGIN {:.17g} {:.17g} {:.17g}".format(*g.origin),
        f"SPACING {g.spacing:.17g} {g.spacing:.17g} {g.spacing:.17g}",
        f"POINT_DATA {g.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    body = "\n".join(f"{v:.17g}" for v in field.values.ravel(order="F"))
    _write_text(path, "\n".join(lines) + "\n" + body + "\n")


def read_field(path, domain: ConvexDomain | None = None) -> ScalarField:
    """Load a field from a binary grid file or a CSV (the latter needs ``domain``)."""
    p = Path(path)
    if not p.exists():
        raise MissingField(f"field file {p} not found")
    if p.read_bytes()[:8] == MAGIC:
        return read_binary(p)
    if domain is None:
        raise IoError("reading a CSV field requires the domain")
    return read_csv(p, domain)


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(str(exc)) from exc
