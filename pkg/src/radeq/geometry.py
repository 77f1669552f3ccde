"""Convex analytic domains, ray exits and quadrature on the sphere and along chords."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    NonUnitDirection,
    NotOnBoundary,
    PointOutsideDomain,
    UnsupportedOrder,
)

UNIT_TOL = 1e-9
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class ConvexDomain:
    """Ball or axis-aligned ellipsoid.

    Parameters
    ----------
    kind : {"ball", "ellipsoid"}
    center : array_like, shape (3,)
    semi_axes : array_like, shape (3,)
        Positive semi-axes. For a ball all three are equal.
    """

    kind: str
    center: tuple
    semi_axes: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.center, dtype=float).reshape(3))
        a = tuple(float(v) for v in np.asarray(self.semi_axes, dtype=float).reshape(3))
        if self.kind not in ("ball", "ellipsoid"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if min(a) <= 0 or not np.all(np.isfinite(a)):
            raise ValueError("semi-axes must be positive and finite")
        if self.kind == "ball" and not (a[0] == a[1] == a[2]):
            raise ValueError("a ball needs three equal semi-axes")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "semi_axes", a)

    @classmethod
    def ball(cls, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> "ConvexDomain":
        return cls("ball", tuple(center), (radius, radius, radius))

    @classmethod
    def ellipsoid(cls, semi_axes, center=(0.0, 0.0, 0.0)) -> "ConvexDomain":
        return cls("ellipsoid", tuple(center), tuple(semi_axes))

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.semi_axes)

    @property
    def diameter(self) -> float:
        return 2.0 * max(self.semi_axes)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * np.pi * float(np.prod(self.semi_axes))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.c - self.a, self.c + self.a

    def level(self, x) -> np.ndarray:
        """Implicit function ``sum(((x-c)/a)^2) - 1``; negative inside."""
        q = (np.asarray(x, dtype=float) - self.c) / self.a
        return np.sum(q * q, axis=-1) - 1.0

    def contains(self, x, strict: bool = True) -> np.ndarray:
        lv = self.level(x)
        return lv < 0.0 if strict else lv <= 0.0

    def projected_area(self, n) -> np.ndarray:
        """Area of the shadow of the body on a plane orthogonal to ``n``."""
        n = np.asarray(n, dtype=float)
        a = self.a
        return np.pi * np.prod(a) * np.sqrt(np.sum((n / a) ** 2, axis=-1))


def _check_unit(n: np.ndarray) -> None:
    norm = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise NonUnitDirection("direction vectors must have unit length")


def exit_lengths(domain: ConvexDomain, x, n) -> np.ndarray:
    """Vectorized backward exit length without argument checks.

    ``x`` and ``n`` broadcast against each other (shape ``(..., 3)``). The
    returned ``s`` solves ``level(x - s n) = 0`` with ``s >= 0``.
    """
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    inv = 1.0 / domain.a
    p = (x - domain.c) * inv
    d = n * inv
    A = np.sum(d * d, axis=-1)
    B = np.sum(p * d, axis=-1)
    C = np.sum(p * p, axis=-1) - 1.0
    disc = np.maximum(B * B - A * C, 0.0)
    root = np.sqrt(disc)
    # s = (B + sqrt(B^2 - AC)) / A, written to avoid cancellation when B < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s_plus = np.where(B >= 0.0, (B + root) / A, -C / (root - B))
    s_plus = np.where(np.isfinite(s_plus), s_plus, 0.0)
    return np.maximum(s_plus, 0.0)


def exit_length(domain: ConvexDomain, x, n) -> float:
    """Length of the backward chord from ``x`` along ``-n`` to the boundary.

    Raises
    ------
    PointOutsideDomain
        If ``x`` is not strictly interior.
    NonUnitDirection
        If ``|n|`` differs from one by more than 1e-9.
    """
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    if not np.all(domain.contains(x)):
        raise PointOutsideDomain(f"point {x} is not inside the domain")
    _check_unit(n)
    s = exit_lengths(domain, x, n)
    return float(s) if np.ndim(s) == 0 else s


def boundary_point(domain: ConvexDomain, x, n) -> np.ndarray:
    """Backward exit point ``y(x, n) = x - s(x, n) n``."""
    s = exit_length(domain, x, n)
    return np.asarray(x, dtype=float) - np.asarray(s)[..., None] * np.asarray(n, dtype=float)


def outward_normal(domain: ConvexDomain, y) -> np.ndarray:
    """Unit outward normal at a boundary point (gradient of the level set)."""
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(domain.level(y)) > BOUNDARY_TOL):
        raise NotOnBoundary(f"point {y} is not on the boundary")
    g = (y - domain.c) / domain.a**2
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes and weights on the unit sphere.

    Attributes
    ----------
    nodes : ndarray, shape (D, 3)
    weights : ndarray, shape (D,)
    order : int
        Polynomial degree integrated exactly.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> np.ndarray:
        """Weighted sum over the last axis of ``values``."""
        return np.asarray(values) @ self.weights


def build_sphere_quadrature(order: int) -> SphereQuadrature:
    """Product Gauss-Legendre (polar cosine) by uniform azimuth rule.

    Uses ``ceil((order+1)/2)`` polar nodes and twice as many azimuths at
    half-step offsets, which makes the node set antipodally symmetric and
    exact for spherical polynomials of degree ``order``.
    """
    if int(order) != order or order < 2:
        raise UnsupportedOrder(f"sphere quadrature order must be an integer >= 2, got {order}")
    n_p = (int(order) + 2) // 2
    n_a = 2 * n_p
    mu, w_mu = np.polynomial.legendre.leggauss(n_p)
    phi = (np.arange(n_a) + 0.5) * (2.0 * np.pi / n_a)
    sin_t = np.sqrt(1.0 - mu**2)
    nodes = np.stack(
        [
            np.outer(sin_t, np.cos(phi)).ravel(),
            np.outer(sin_t, np.sin(phi)).ravel(),
            np.repeat(mu, n_a),
        ],
        axis=1,
    )
    weights = np.repeat(w_mu, n_a) * (2.0 * np.pi / n_a)
    return SphereQuadrature(nodes=nodes, weights=weights, order=int(order))


def chord_samples(domain: ConvexDomain, x, n, step: float) -> np.ndarray:
    """Abscissae ``0 = t_0 < ... < t_M = s(x, n)`` with uniform spacing and a clamped tail."""
    if step <= 0:
        raise ValueError("step must be positive")
    s = exit_length(domain, x, n)
    return chord_abscissae(s, step)


def chord_abscissae(s: float, step: float) -> np.ndarray:
    m = max(int(np.ceil(s / step - 1e-12)), 1)
    t = np.minimum(np.arange(m + 1) * step, s)
    t[-1] = s
    return t


def sample_sphere_points(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniform random unit vectors, used by tests and random scans."""
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_interior_points(domain: ConvexDomain, rng: np.random.Generator, count: int,
                           shrink: float = 0.95) -> np.ndarray:
    """Uniform points inside the shrunken body, by rejection."""
    out: list[np.ndarray] = []
    lo, hi = domain.bounding_box()
    while sum(len(o) for o in out) < count:
        p = rng.uniform(lo, hi, size=(2 * count + 8, 3))
        q = domain.c + (p - domain.c) / shrink
        out.append(p[domain.contains(q)])
    return np.concatenate(out)[:count]


__all__: Sequence[str] = [
    "ConvexDomain",
    "SphereQuadrature",
    "exit_length",
    "exit_lengths",
    "boundary_point",
    "outward_normal",
    "build_sphere_quadrature",
    "chord_samples",
    "chord_abscissae",
]
