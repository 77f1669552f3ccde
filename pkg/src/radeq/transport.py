"""Pure emission-absorption transport operators in polar (direction, chord) form.

Every operator here integrates along backward chords ``x - t n`` with the
optical depth accumulated once per chord. Bulk emission terms are written as
``sum_k avg(source) (E_k - E_{k+1})`` with ``E = exp(-tau)``, the discrete
counterpart of ``-d/dr exp(-tau)``; this keeps the Planckian closure
``bulk + boundary = u`` exact for constant data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import EpsilonExceedsGrid, SegmentLeavesDomain
from .fields import Grid, ScalarField, inside_mask, nearest_inside_index
from .geometry import ConvexDomain, SphereQuadrature, build_sphere_quadrature, exit_lengths
from .physics import (
    FrequencyQuadrature,
    RadiativeModel,
    SpectralMap,
    T_from_u,
    planck,
)

FOUR_PI = 4.0 * np.pi


@dataclass
class Discretization:
    """Grid, sphere rule, chord step and frequency rule for one domain.

    Precomputes the inside nodes, the nearest-inside fill map used for
    interpolation in cut cells, and the exit lengths for every
    (inside node, direction) pair.
    """

    domain: ConvexDomain
    grid: Grid
    quad: SphereQuadrature
    step: float
    freq: Optional[FrequencyQuadrature] = None
    mask: np.ndarray = field(init=False, repr=False)
    points: np.ndarray = field(init=False, repr=False)
    slen: np.ndarray = field(init=False, repr=False)
    _fill: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mask = inside_mask(self.grid, self.domain)
        self.points = self.grid.nodes()[self.mask]
        pos = np.full(self.grid.size, -1, dtype=np.int64)
        pos[np.flatnonzero(self.mask.ravel())] = np.arange(len(self.points))
        self._fill = pos[nearest_inside_index(self.mask).ravel()]
        self.slen = self.exit_lengths(self.points)

    @classmethod
    def build(cls, domain: ConvexDomain, n: int = 24, sphere_order: int = 8,
              step: Optional[float] = None, freq: Optional[FrequencyQuadrature] = None,
              ) -> "Discretization":
        grid = Grid.for_domain(domain, n)
        quad = build_sphere_quadrature(sphere_order)
        return cls(domain, grid, quad, float(step or grid.spacing), freq)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def exit_lengths(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return exit_lengths(self.domain, pts[:, None, :], self.quad.nodes[None, :, :])

    def extend(self, vals) -> np.ndarray:
        """Inside-node values ``(..., P)`` to full-grid arrays with nearest-inside fill."""
        vals = np.asarray(vals, dtype=float)
        out = vals[..., self._fill]
        return np.ascontiguousarray(out.reshape(vals.shape[:-1] + tuple(self.grid.dims)))

    def to_field(self, vals) -> ScalarField:
        v = np.zeros(self.grid.dims)
        v[self.mask] = vals
        return ScalarField(self.grid, v, self.mask)

    def inside(self, f) -> np.ndarray:
        if isinstance(f, ScalarField):
            return f.values[self.mask]
        f = np.asarray(f, dtype=float)
        if f.ndim == 0:
            return np.full(self.n_points, float(f))
        return f.reshape(-1) if f.size == self.n_points else f[self.mask]

    def spectral_map(self, model: RadiativeModel) -> SpectralMap:
        return SpectralMap.from_model(model, self.freq or model.frequency_quadrature())

    def frequency(self, model: RadiativeModel) -> FrequencyQuadrature:
        return self.freq or model.frequency_quadrature()


# ---------------------------------------------------------------------------
# generic sweep


def sweep(disc: Discretization, A, S, src, *, ka, ks=None, wa=None, ws=None, same=None, group=None,
          cw=None, bw=None, n_groups: int = 1, points=None, dirs=None, slen=None):
    """Run the chord kernel; returns ``(bulk, bnd)`` each shaped ``(G, P, D)``."""
    ka = np.atleast_1d(np.asarray(ka, dtype=float))
    C = len(ka)
    z = np.zeros(C)
    ks = z if ks is None else np.atleast_1d(np.asarray(ks, dtype=float))
    wa = ka if wa is None else np.atleast_1d(np.asarray(wa, dtype=float))
    ws = ks if ws is None else np.atleast_1d(np.asarray(ws, dtype=float))
    if same is None:
        same = np.array([bool(wa[c] == ka[c] and ws[c] == ks[c]) for c in range(C)])
    group = np.zeros(C, dtype=np.int64) if group is None else np.asarray(group, dtype=np.int64)
    cw = np.ones(C) if cw is None else np.atleast_1d(np.asarray(cw, dtype=float))
    if points is None:
        points, slen = disc.points, disc.slen
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    dirs = disc.quad.nodes if dirs is None else np.ascontiguousarray(np.atleast_2d(dirs), dtype=float)
    if slen is None:
        slen = exit_lengths(disc.domain, points[:, None, :], dirs[None, :, :])
    D = len(dirs)
    bw = np.zeros((C, D)) if bw is None else np.broadcast_to(np.asarray(bw, dtype=float), (C, D))
    src = np.asarray(src, dtype=float)
    if src.ndim == 3:
        src = src[None, None]
    elif src.ndim == 4:
        src = src[:, None]
    out_bulk = np.zeros((n_groups, len(points), D))
    out_bnd = np.zeros((n_groups, len(points), D))
    S = np.zeros_like(A) if S is None else S
    _kernels.chord_sweep(np.ascontiguousarray(A, dtype=float), np.ascontiguousarray(S, dtype=float),
                         np.ascontiguousarray(src), points, dirs, np.ascontiguousarray(slen),
                         float(disc.step), ka, ks, wa, ws, np.asarray(same, dtype=np.bool_), group, cw,
                         np.ascontiguousarray(bw), np.asarray(disc.grid.origin, dtype=float),
                         float(disc.grid.spacing), out_bulk, out_bnd)
    return out_bulk, out_bnd


# ---------------------------------------------------------------------------
# coefficient fields


def temperature(u_inside, model: RadiativeModel, smap: Optional[SpectralMap] = None) -> np.ndarray:
    """``T`` from ``u``: Grey inverse or the pseudo-Grey bisection when ``smap`` is given."""
    u = np.maximum(np.asarray(u_inside, dtype=float), 0.0)
    if smap is None:
        return np.asarray(T_from_u(u, model.constants))
    return np.asarray(smap.F_inverse(u))


@dataclass
class Coefficients:
    """Extended coefficient arrays and node temperatures for one iterate."""

    T: np.ndarray
    A: np.ndarray
    S: np.ndarray


def coefficient_fields(disc: Discretization, model: RadiativeModel, u_inside,
                       smap: Optional[SpectralMap] = None, eps: float = 0.0,
                       extension: str = "zero", scattering: bool = True) -> Coefficients:
    T = temperature(u_inside, model, smap)
    a = np.asarray(model.alpha_a(T), dtype=float) * np.ones_like(T)
    s = np.asarray(model.alpha_s(T), dtype=float) * np.ones_like(T) if scattering else np.zeros_like(T)
    if eps > 0:
        A = mollify(disc.to_field(a), eps, extension).extended()
        S = mollify(disc.to_field(s), eps, extension).extended() if scattering else np.zeros(disc.grid.dims)
    else:
        A = disc.extend(a)
        S = disc.extend(s)
    return Coefficients(T=T, A=A, S=S)


# ---------------------------------------------------------------------------
# segments


def optical_depth(field: ScalarField, x, eta, step: Optional[float] = None,
                  domain: Optional[ConvexDomain] = None) -> float:
    """Trapezoid line integral of the interpolated field over ``[x, eta]``."""
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if domain is not None:
        if np.any(domain.level(np.stack([x, eta])) > 1e-9):
            raise SegmentLeavesDomain("segment endpoints must lie in the closed domain")
    step = field.grid.spacing if step is None else step
    return float(_kernels.segment_integral(field.extended(), np.asarray(field.grid.origin, float),
                                           float(field.grid.spacing), x, eta, float(step)))


def attenuation(field: ScalarField, x, eta, Q: float = 1.0, **kw) -> float:
    if Q < 0:
        raise ValueError("frequency weight must be nonnegative")
    if Q == 0:
        return 1.0
    return float(np.exp(-Q * optical_depth(field, x, eta, **kw)))


# ---------------------------------------------------------------------------
# Grey operators


def _grey_gamma(disc, model, u_inside, gamma):
    if gamma is None:
        T = temperature(u_inside, model)
        return disc.extend(np.asarray(model.alpha_a(T), dtype=float) * np.ones_like(T))
    if isinstance(gamma, ScalarField):
        return gamma.extended()
    return disc.extend(disc.inside(gamma))


def _points(disc, points):
    if points is None:
        return None, None
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(disc.domain.contains(pts, strict=False)):
        from .errors import PointOutsideDomain
        raise PointOutsideDomain("evaluation points must lie in the domain")
    return pts, disc.exit_lengths(pts)


def grey_absorption_terms(disc: Discretization, u_inside, A, G_dirs, points=None, slen=None):
    """Angular bulk and boundary intensities ``(P, D)`` for the Grey operators."""
    src = disc.extend(u_inside)
    bulk, bnd = sweep(disc, A, None, src, ka=1.0, same=[True], cw=1.0 / FOUR_PI,
                      bw=G_dirs[None, :], points=points, slen=slen)
    return bulk[0], bnd[0]


def bulk_operator_grey(u, model: RadiativeModel, disc: Discretization, points=None, gamma=None):
    """``(1/4pi) int dn int_0^s gamma u exp(-tau) dr`` at ``points`` (default: inside nodes)."""
    ui = disc.inside(u)
    A = _grey_gamma(disc, model, ui, gamma)
    pts, sl = _points(disc, points)
    b, _ = grey_absorption_terms(disc, ui, A, np.zeros(disc.quad.size), pts, sl)
    return b @ disc.quad.weights


def boundary_operator_grey(u, model: RadiativeModel, disc: Discretization, points=None, gamma=None,
                           G=None):
    """``int dn G(n) exp(-tau(x -> y(x, n)))`` at ``points``."""
    ui = disc.inside(u)
    A = _grey_gamma(disc, model, ui, gamma)
    Gd = model.G(disc.quad.nodes) if G is None else np.broadcast_to(np.asarray(G, float), (disc.quad.size,))
    pts, sl = _points(disc, points)
    _, c = grey_absorption_terms(disc, np.zeros_like(ui), A, Gd, pts, sl)
    return c @ disc.quad.weights


# ---------------------------------------------------------------------------
# pseudo-Grey operators


def pseudo_emission(smap: SpectralMap, T) -> np.ndarray:
    """``f_q = B_q(T)`` at every frequency node; shape ``(Nq, P)``."""
    return smap.emission(np.asarray(T, dtype=float))


def pseudo_absorption_terms(disc: Discretization, model: RadiativeModel, smap: SpectralMap, T, A,
                            points=None, slen=None, weights=None, boundary: bool = True):
    """Frequency-summed angular bulk and boundary terms ``(P, D)``.

    ``weights`` defaults to ``w_q Q_a(nu_q)``, which yields the right-hand
    side of the u-equation after the sphere sum.
    """
    freq = smap.freq
    Qa = np.asarray(model.Q_a(freq.nodes), dtype=float) * np.ones(freq.size)
    wts = freq.weights * Qa if weights is None else np.asarray(weights, dtype=float)
    f = disc.extend(pseudo_emission(smap, T))
    if boundary:
        g = model.boundary.g(freq.nodes, disc.quad.nodes, model.constants)
    else:
        g = np.zeros((freq.size, disc.quad.size))
    bulk, bnd = sweep(disc, A, None, f, ka=Qa, same=np.ones(freq.size, bool), cw=wts,
                      bw=wts[:, None] * g, points=points, slen=slen)
    return bulk[0], bnd[0]


def bulk_operator_pseudo(u, model: RadiativeModel, disc: Discretization, points=None, gamma=None):
    """``int d nu Q int dn int f_nu(u) (-d/dr) exp(-Q tau) dr`` by frequency quadrature."""
    smap = disc.spectral_map(model)
    ui = disc.inside(u)
    T = temperature(ui, model, smap)
    A = disc.extend(np.asarray(model.alpha_a(T), float) * np.ones_like(T)) if gamma is None else \
        _grey_gamma(disc, model, ui, gamma)
    pts, sl = _points(disc, points)
    b, _ = pseudo_absorption_terms(disc, model, smap, T, A, pts, sl, boundary=False)
    return b @ disc.quad.weights


def boundary_operator_pseudo(u, model: RadiativeModel, disc: Discretization, points=None, gamma=None):
    """``int d nu Q int dn g_nu(n) exp(-Q tau)`` by frequency quadrature."""
    smap = disc.spectral_map(model)
    ui = disc.inside(u)
    T = temperature(ui, model, smap)
    A = disc.extend(np.asarray(model.alpha_a(T), float) * np.ones_like(T)) if gamma is None else \
        _grey_gamma(disc, model, ui, gamma)
    pts, sl = _points(disc, points)
    _, c = pseudo_absorption_terms(disc, model, smap, T, A, pts, sl)
    return c @ disc.quad.weights


# ---------------------------------------------------------------------------
# mollifier


def bump_kernel(eps: float, h: float) -> np.ndarray:
    """Normalized radial bump ``exp(-1 / (1 - (r/eps)^2))`` sampled on the lattice."""
    m = int(np.floor(eps / h))
    o = np.arange(-m, m + 1) * h
    X, Y, Z = np.meshgrid(o, o, o, indexing="ij")
    r2 = (X**2 + Y**2 + Z**2) / eps**2
    with np.errstate(divide="ignore", over="ignore"):
        k = np.where(r2 < 1.0, np.exp(-1.0 / (1.0 - np.minimum(r2, 1.0 - 1e-300))), 0.0)
    return k / k.sum()


def mollify(field: ScalarField, eps: float, extension: str = "zero") -> ScalarField:
    """Convolve with a compactly supported bump of radius ``eps``.

    ``extension="zero"`` convolves the zero-extended field; the support grows
    by up to ``eps``. ``extension="renormalized"`` divides by the convolved
    indicator, which keeps constants exactly and does not grow the support.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return field
    h = field.grid.spacing
    if eps < h:
        warnings.warn(f"mollifier radius {eps} is below the grid spacing {h}; field unchanged",
                      EpsilonExceedsGrid, stacklevel=2)
        return field
    k = bump_kernel(eps, h)
    chi = field.mask.astype(float)
    num = ndimage.convolve(field.values, k, mode="constant", cval=0.0)
    if extension == "zero":
        support = ndimage.convolve(chi, (k > 0).astype(float), mode="constant", cval=0.0) > 0
        vals = np.where(support, np.maximum(num, 0.0), 0.0)
        return ScalarField(field.grid, vals, support)
    if extension == "renormalized":
        den = ndimage.convolve(chi, k, mode="constant", cval=0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(field.mask, num / den, 0.0)
        return ScalarField(field.grid, vals, field.mask)
    raise ValueError(f"unknown mollifier extension {extension!r}")


# ---------------------------------------------------------------------------
# characteristics: intensity and flux


def reconstruct_intensity(u, model: RadiativeModel, disc: Discretization, x, n, nu,
                          pseudo: bool = False) -> float:
    """Spectral intensity ``I_nu(x, n)`` without scattering, by one chord integral."""
    ui = disc.inside(u)
    smap = disc.spectral_map(model) if pseudo else None
    T = temperature(ui, model, smap)
    A = disc.extend(np.asarray(model.alpha_a(T), float) * np.ones_like(T))
    x = np.atleast_2d(np.asarray(x, float))
    n = np.atleast_2d(np.asarray(n, float))
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    Bf = disc.extend(np.asarray(planck(nu, T, model.constants), dtype=float) * np.ones_like(T))
    Q = float(model.Q_a(nu)) if pseudo else 1.0
    g = float(model.boundary.g(np.array([nu]), n, model.constants)[0, 0])
    bulk, bnd = sweep(disc, A, None, Bf, ka=Q, same=[True], bw=np.array([[g]]), points=x, dirs=n)
    return float(bulk[0, 0, 0] + bnd[0, 0, 0])


@dataclass
class FluxResult:
    flux: np.ndarray           # (P, 3) at inside nodes
    divergence: np.ndarray     # full grid, NaN where not computed
    residual: float            # max |div F| / max(alpha_a u)


def central_divergence(disc: Discretization, F_inside: np.ndarray) -> np.ndarray:
    """Central-difference divergence at nodes whose six neighbours are inside."""
    grid_F = np.zeros((3,) + tuple(disc.grid.dims))
    for i in range(3):
        grid_F[i][disc.mask] = F_inside[:, i]
    m = disc.mask
    ok = np.zeros_like(m)
    ok[1:-1, 1:-1, 1:-1] = (m[1:-1, 1:-1, 1:-1] & m[2:, 1:-1, 1:-1] & m[:-2, 1:-1, 1:-1]
                            & m[1:-1, 2:, 1:-1] & m[1:-1, :-2, 1:-1]
                            & m[1:-1, 1:-1, 2:] & m[1:-1, 1:-1, :-2])
    div = np.full(disc.grid.dims, np.nan)
    h2 = 2.0 * disc.grid.spacing
    d = ((grid_F[0][2:, 1:-1, 1:-1] - grid_F[0][:-2, 1:-1, 1:-1])
         + (grid_F[1][1:-1, 2:, 1:-1] - grid_F[1][1:-1, :-2, 1:-1])
         + (grid_F[2][1:-1, 1:-1, 2:] - grid_F[2][1:-1, 1:-1, :-2])) / h2
    inner = div[1:-1, 1:-1, 1:-1]
    inner[ok[1:-1, 1:-1, 1:-1]] = d[ok[1:-1, 1:-1, 1:-1]]
    return div


def flux_from_angular(disc: Discretization, J: np.ndarray) -> np.ndarray:
    """``sum_d w_d n_d J(x, n_d)`` for an angular array ``(P, D)``."""
    return J @ (disc.quad.weights[:, None] * disc.quad.nodes)


def flux_and_divergence(u, model: RadiativeModel, disc: Discretization, pseudo: bool = False,
                        scattering=None) -> FluxResult:
    """Radiative flux at inside nodes, its divergence and the relative residual.

    ``scattering`` may carry a callable returning the total angular intensity
    ``(P, D)``; by default the no-scattering intensity is used.
    """
    ui = disc.inside(u)
    if scattering is not None:
        J = scattering(ui)
        T = temperature(ui, model, disc.spectral_map(model) if pseudo else None)
    elif pseudo:
        smap = disc.spectral_map(model)
        T = temperature(ui, model, smap)
        A = disc.extend(np.asarray(model.alpha_a(T), float) * np.ones_like(T))
        b, c = pseudo_absorption_terms(disc, model, smap, T, A, weights=smap.freq.weights)
        J = b + c
    else:
        T = temperature(ui, model)
        A = disc.extend(np.asarray(model.alpha_a(T), float) * np.ones_like(T))
        b, c = grey_absorption_terms(disc, ui, A, model.G(disc.quad.nodes))
        J = b + c
    F = flux_from_angular(disc, J)
    div = central_divergence(disc, F)
    emis = np.asarray(model.alpha_a(T), float) * ui
    scale = FOUR_PI * max(float(np.max(emis)) / FOUR_PI, 1e-300) if emis.size else 1.0
    res = float(np.nanmax(np.abs(div)) / scale) if np.any(np.isfinite(div)) else 0.0
    return FluxResult(F, div, res)
