"""Emission, absorption and elastic scattering through collision-order iteration.

The angular intensity is built as ``J = sum_i S^i (J0_bulk + J0_bnd)`` where
``S`` is one scattering event followed by attenuated transport along the
backward chord. Each term is one chord sweep over a stored angular field.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import MaxPrincipleViolation, TailToleranceUnreachable
from .geometry import ConvexDomain
from .physics import RadiativeModel, SpectralMap, kernel_matrix, planck
from .transport import (
    FOUR_PI,
    Coefficients,
    Discretization,
    coefficient_fields,
    sweep,
    temperature,
)

MAX_PRINCIPLE_SLACK = 1e-6


def theta_bound(model: RadiativeModel, domain: ConvexDomain, pseudo: bool = False) -> float:
    """``1 - exp(-(alpha_a_max + alpha_s_max) D)``.

    With ``pseudo`` the bounds are multiplied by the sup-norms of the
    frequency profiles, covering every frequency channel.
    """
    qa, qs = (model.Q_a.sup, model.Q_s.sup) if pseudo else (1.0, 1.0)
    tot = qa * model.alpha_a_bounds[1] + qs * model.alpha_s_bounds[1]
    return float(-math.expm1(-tot * domain.diameter))


@dataclass
class OrderRecord:
    order: int
    sup_angular: float
    sup_scalar: float
    ratio: float
    runtime: float


@dataclass
class CollisionSeriesConfig:
    """Truncation control of the collision series.

    ``truncation="adaptive"`` stops once ``||S^i J0|| theta_d / (1 - theta_d)``
    is below ``tail_tolerance * ||J0||``, with ``theta_d = sup S(1)`` the
    measured discrete contraction. ``truncation="analytic"`` uses the fixed
    order ``ceil(log(tol (1 - theta)) / log theta)`` from the bound ``theta``.
    ``max_order`` caps both.
    """

    max_order: int = 400
    tail_tolerance: float = 1e-6
    truncation: str = "adaptive"
    records: list = field(default_factory=list)

    def __post_init__(self):
        if self.max_order < 1:
            raise ValueError("max_order must be at least 1")
        if not self.tail_tolerance > 0:
            raise ValueError("tail_tolerance must be positive")
        if self.truncation not in ("adaptive", "analytic", "fixed"):
            raise ValueError(f"unknown truncation rule {self.truncation!r}")

    def analytic_order(self, theta: float) -> int:
        if theta <= 0:
            return 0
        n = math.ceil(math.log(self.tail_tolerance * (1.0 - theta)) / math.log(theta))
        return max(n, 1)

    def records_json(self) -> str:
        return json.dumps([asdict(r) for r in self.records], sort_keys=False)


@dataclass
class AngularField:
    """Values on (direction, inside node), shape ``(D, P)``."""

    disc: Discretization
    values: np.ndarray
    frequency: Optional[float] = None

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def scalar(self) -> np.ndarray:
        """Sphere integral at every node."""
        return self.disc.quad.weights @ self.values

    def to_csv(self, path, direction: int) -> None:
        from .fields import write_csv
        write_csv(self.disc.to_field(self.values[direction]), path, inside_only=True)


# ---------------------------------------------------------------------------
# one frequency channel of the collision machinery


@dataclass
class ScatterContext:
    """Coefficient arrays and kernel matrix frozen for one iterate and one channel."""

    disc: Discretization
    coeffs: Coefficients
    Kmat: np.ndarray
    isotropic: bool
    qa: float = 1.0
    qs: float = 1.0

    @classmethod
    def build(cls, disc: Discretization, model: RadiativeModel, coeffs: Coefficients,
              qa: float = 1.0, qs: float = 1.0) -> "ScatterContext":
        return cls(disc, coeffs, kernel_matrix(model.kernel, disc.quad), model.kernel.is_isotropic,
                   float(qa), float(qs))

    def _source(self, J: np.ndarray) -> np.ndarray:
        """Scattering gain ``int K(w, n') J(., n') dn'`` extended to the grid."""
        if self.isotropic:
            phi = (self.disc.quad.weights @ J) / FOUR_PI
            return self.disc.extend(phi)[None, None]
        return self.disc.extend(self.Kmat @ J)[None]

    def scatter(self, J: np.ndarray) -> np.ndarray:
        if self.qs == 0.0 or not np.any(self.coeffs.S):
            return np.zeros_like(J)
        b, _ = sweep(self.disc, self.coeffs.A, self.coeffs.S, self._source(J),
                     ka=self.qa, ks=self.qs, wa=0.0, ws=self.qs, same=[False])
        return b[0].T.copy()

    def zeroth(self, src_grid: Optional[np.ndarray], cw: float, G_dirs: Optional[np.ndarray],
               with_contraction: bool = True):
        """Zeroth-order bulk and boundary fields plus ``S(1)``.

        Returns ``(J0_bulk, J0_bnd, S1)``, each ``(D, P)``.
        """
        D = self.disc.quad.size
        shape = tuple(self.disc.grid.dims)
        src = [np.zeros(shape) if src_grid is None else src_grid]
        ka, ks, wa, ws, cws, group = [self.qa], [self.qs], [self.qa], [0.0], [cw], [0]
        bw = [np.zeros(D) if G_dirs is None else G_dirs]
        if with_contraction:
            src.append(np.ones(shape))
            ka.append(self.qa)
            ks.append(self.qs)
            wa.append(0.0)
            ws.append(self.qs)
            cws.append(1.0)
            group.append(1)
            bw.append(np.zeros(D))
        b, c = sweep(self.disc, self.coeffs.A, self.coeffs.S, np.stack(src), ka=ka, ks=ks, wa=wa,
                     ws=ws, same=[False] * len(ka), group=group, cw=cws, bw=np.stack(bw),
                     n_groups=len(ka))
        S1 = b[1].T.copy() if with_contraction else None
        return b[0].T.copy(), c[0].T.copy(), S1


def run_series(ctx: ScatterContext, J0: np.ndarray, cfg: CollisionSeriesConfig, theta: float,
               theta_d: Optional[float] = None, orders: Optional[int] = None):
    """Sum ``S^i J0`` for ``i = 0..N``; returns ``(total, terms_sup, records)``.

    With ``orders`` given, exactly that many scattering orders are applied.
    """
    w = ctx.disc.quad.weights
    total = J0.copy()
    scale = float(np.max(np.abs(J0))) if J0.size else 0.0
    recs = [OrderRecord(0, scale, float(np.max(np.abs(w @ J0))) if J0.size else 0.0, float("nan"), 0.0)]
    if orders is not None:
        n_max = orders
    elif cfg.truncation in ("analytic", "fixed"):
        n_max = cfg.analytic_order(theta) if cfg.truncation == "analytic" else cfg.max_order
        if n_max > cfg.max_order:
            raise TailToleranceUnreachable(
                f"analytic truncation needs {n_max} orders, cap is {cfg.max_order}")
    else:
        n_max = cfg.max_order
    if scale == 0.0 or (theta_d is not None and theta_d == 0.0 and orders is None):
        return total, recs
    td = theta if theta_d is None else min(theta_d, theta)
    term = J0
    for i in range(1, n_max + 1):
        t0 = time.perf_counter()
        nxt = ctx.scatter(term)
        s_ang = float(np.max(np.abs(nxt)))
        prev = recs[-1].sup_angular
        recs.append(OrderRecord(i, s_ang, float(np.max(np.abs(w @ nxt))),
                                s_ang / prev if prev > 0 else 0.0, time.perf_counter() - t0))
        total += nxt
        term = nxt
        if orders is None and cfg.truncation == "adaptive":
            bound = s_ang * td / (1.0 - td) if td < 1 else np.inf
            if bound <= cfg.tail_tolerance * scale:
                break
        if s_ang == 0.0 and orders is None:
            break
    else:
        if orders is None and cfg.truncation == "adaptive":
            bound = recs[-1].sup_angular * td / (1.0 - td)
            if bound > cfg.tail_tolerance * scale:
                raise TailToleranceUnreachable(
                    f"tail bound {bound:.3e} above tolerance after {n_max} orders")
    return total, recs


# ---------------------------------------------------------------------------
# public operators


def _context(disc, model, u_inside, smap=None, eps=0.0, extension="zero", qa=1.0, qs=1.0):
    coeffs = coefficient_fields(disc, model, u_inside, smap, eps, extension, scattering=True)
    return ScatterContext.build(disc, model, coeffs, qa, qs)


def scatter_step(J: AngularField, model: RadiativeModel, u, disc: Optional[Discretization] = None
                 ) -> AngularField:
    """One collision-order advance ``(S J)(x, w)``."""
    disc = disc or J.disc
    ctx = _context(disc, model, disc.inside(u))
    return AngularField(disc, ctx.scatter(np.asarray(J.values, dtype=float)))


def zeroth_order_bulk(u, model: RadiativeModel, disc: Discretization) -> AngularField:
    """Direct emission ``(1/4pi) int alpha_a u exp(-tau_total) dr`` reaching each (x, w)."""
    ui = disc.inside(u)
    ctx = _context(disc, model, ui)
    jb, _, _ = ctx.zeroth(disc.extend(ui), 1.0 / FOUR_PI, None, with_contraction=False)
    return AngularField(disc, jb)


def zeroth_order_boundary(model: RadiativeModel, u, disc: Discretization) -> AngularField:
    """Attenuated influx ``G(w) exp(-tau_total(x -> y(x, w)))``."""
    ui = disc.inside(u)
    ctx = _context(disc, model, ui)
    _, jc, _ = ctx.zeroth(None, 0.0, model.G(disc.quad.nodes), with_contraction=False)
    return AngularField(disc, jc)


@dataclass
class SeriesResult:
    rhs: np.ndarray                 # u-units, inside nodes
    angular: Optional[np.ndarray]   # (D, P) total intensity (Grey) or None
    records: list                   # per-channel lists of OrderRecord
    theta: float
    theta_discrete: float
    orders: int


def full_rhs(u, model: RadiativeModel, disc: Discretization, cfg: Optional[CollisionSeriesConfig] = None,
             eps: float = 0.0, extension: str = "zero", keep_angular: bool = False) -> SeriesResult:
    """Grey right-hand side ``sum_i int dw S^i (J0_bulk + J0_bnd)``."""
    cfg = cfg or CollisionSeriesConfig()
    ui = disc.inside(u)
    ctx = _context(disc, model, ui, None, eps, extension)
    theta = theta_bound(model, disc.domain)
    jb, jc, S1 = ctx.zeroth(disc.extend(ui), 1.0 / FOUR_PI, model.G(disc.quad.nodes))
    theta_d = float(np.max(S1)) if S1.size else 0.0
    total, recs = run_series(ctx, jb + jc, cfg, theta, theta_d)
    cfg.records = recs
    return SeriesResult(disc.quad.weights @ total, total if keep_angular else None, [recs], theta,
                        theta_d, len(recs) - 1)


def full_rhs_pseudo(u, model: RadiativeModel, disc: Discretization,
                    cfg: Optional[CollisionSeriesConfig] = None, eps: float = 0.0,
                    extension: str = "zero", keep_angular: bool = False) -> SeriesResult:
    """Pseudo-Grey right-hand side: one collision series per frequency node.

    ``keep_angular`` returns the frequency-integrated intensity (unweighted by
    ``Q_a``), which is what the radiative flux needs.
    """
    cfg = cfg or CollisionSeriesConfig()
    smap = disc.spectral_map(model)
    freq = smap.freq
    ui = disc.inside(u)
    coeffs = coefficient_fields(disc, model, ui, smap, eps, extension, scattering=True)
    Kmat = kernel_matrix(model.kernel, disc.quad)
    Qa = np.asarray(model.Q_a(freq.nodes), float) * np.ones(freq.size)
    Qs = np.asarray(model.Q_s(freq.nodes), float) * np.ones(freq.size)
    pseudo_f = smap.emission(coeffs.T)
    g = model.boundary.g(freq.nodes, disc.quad.nodes, model.constants)
    theta = theta_bound(model, disc.domain, pseudo=True)
    rhs = np.zeros(disc.n_points)
    ang = np.zeros((disc.quad.size, disc.n_points)) if keep_angular else None
    all_recs, theta_d, orders = [], 0.0, 0
    for q in range(freq.size):
        ctx = ScatterContext(disc, coeffs, Kmat, model.kernel.is_isotropic, Qa[q], Qs[q])
        jb, jc, S1 = ctx.zeroth(disc.extend(pseudo_f[q]), 1.0, g[q])
        td = float(np.max(S1)) if S1.size else 0.0
        total, recs = run_series(ctx, jb + jc, cfg, theta, td)
        rhs += freq.weights[q] * Qa[q] * (disc.quad.weights @ total)
        if keep_angular:
            ang += freq.weights[q] * total
        all_recs.append(recs)
        theta_d = max(theta_d, td)
        orders = max(orders, len(recs) - 1)
    cfg.records = all_recs[-1] if all_recs else []
    return SeriesResult(rhs, ang, all_recs, theta, theta_d, orders)


def h_field(model: RadiativeModel, u, disc: Discretization, cfg: Optional[CollisionSeriesConfig] = None,
            frequency_index: Optional[int] = None, pseudo: bool = False, eps: float = 0.0,
            extension: str = "zero", check: bool = True) -> AngularField:
    """Absorbed-fraction field ``H = sum_i S^i H0`` with ``H0 = int alpha_a exp(-tau)``.

    Raises
    ------
    MaxPrincipleViolation
        If ``max H > theta + 1e-6``.
    """
    cfg = cfg or CollisionSeriesConfig()
    ui = disc.inside(u)
    smap = disc.spectral_map(model) if pseudo else None
    coeffs = coefficient_fields(disc, model, ui, smap, eps, extension, scattering=True)
    qa = qs = 1.0
    nu = None
    if pseudo and frequency_index is not None:
        nu = float(smap.freq.nodes[frequency_index])
        qa, qs = float(model.Q_a(nu)), float(model.Q_s(nu))
    ctx = ScatterContext.build(disc, model, coeffs, qa, qs)
    shape = tuple(disc.grid.dims)
    h0, _, S1 = ctx.zeroth(np.ones(shape), 1.0, None)
    theta = theta_bound(model, disc.domain, pseudo=pseudo)
    H, _ = run_series(ctx, h0, cfg, theta, float(np.max(S1)) if S1.size else 0.0)
    out = AngularField(disc, H, nu)
    if check and H.size and (H.max() > theta + MAX_PRINCIPLE_SLACK or H.min() < -MAX_PRINCIPLE_SLACK):
        raise MaxPrincipleViolation(f"H in [{H.min():.3e}, {H.max():.6f}] violates [0, theta={theta:.6f}]")
    return out


def _direction_source(ctx: ScatterContext, model: RadiativeModel, J: np.ndarray, n: np.ndarray):
    """Gain term for an arbitrary outgoing direction ``n`` from a stored field."""
    quad = ctx.disc.quad
    k = model.kernel(np.clip(quad.nodes @ n, -1.0, 1.0)) * quad.weights
    k = k / k.sum()
    return ctx.disc.extend(k @ J)


def reconstruct_intensity_scatter(u, model: RadiativeModel, disc: Discretization, x, n, nu,
                                  cfg: Optional[CollisionSeriesConfig] = None,
                                  pseudo: bool = False) -> float:
    """Spectral intensity ``I_nu(x, n)`` with scattering.

    The collision series for frequency ``nu`` is stored on the grid; the last
    leg to ``(x, n)`` is a single chord integral of emission plus the
    scattering gain toward ``n``.
    """
    cfg = cfg or CollisionSeriesConfig()
    ui = disc.inside(u)
    smap = disc.spectral_map(model) if pseudo else None
    coeffs = coefficient_fields(disc, model, ui, smap, scattering=True)
    qa, qs = (float(model.Q_a(nu)), float(model.Q_s(nu))) if pseudo else (1.0, 1.0)
    ctx = ScatterContext.build(disc, model, coeffs, qa, qs)
    Bf = disc.extend(np.asarray(planck(nu, coeffs.T, model.constants), float) * np.ones(disc.n_points))
    g_dirs = model.boundary.g(np.array([nu]), disc.quad.nodes, model.constants)[0]
    jb, jc, S1 = ctx.zeroth(Bf, 1.0, g_dirs)
    J, _ = run_series(ctx, jb + jc, cfg, theta_bound(model, disc.domain, pseudo), float(np.max(S1)))
    x = np.atleast_2d(np.asarray(x, float))
    n = np.asarray(n, float).reshape(3)
    n = n / np.linalg.norm(n)
    phi = _direction_source(ctx, model, J, n)
    g = float(model.boundary.g(np.array([nu]), n[None], model.constants)[0, 0])
    b, c = sweep(disc, coeffs.A, coeffs.S, np.stack([Bf, phi]), ka=[qa, qa], ks=[qs, qs],
                 wa=[qa, 0.0], ws=[0.0, qs], same=[False, False], bw=np.array([[g], [0.0]]),
                 points=x, dirs=n[None])
    return float(b[0, 0, 0] + c[0, 0, 0])


def duhamel_orders(u, model: RadiativeModel, disc: Discretization, chain: str = "boundary",
                   orders: int = 30) -> list:
    """Per-order records of one chain (``bulk`` or ``boundary``) for a fixed order count."""
    ui = disc.inside(u)
    ctx = _context(disc, model, ui)
    if chain == "boundary":
        _, J0, _ = ctx.zeroth(None, 0.0, model.G(disc.quad.nodes), with_contraction=False)
    else:
        J0, _, _ = ctx.zeroth(disc.extend(ui), 1.0 / FOUR_PI, None, with_contraction=False)
    _, recs = run_series(ctx, J0, CollisionSeriesConfig(max_order=max(orders, 1)),
                         theta_bound(model, disc.domain), orders=orders)
    return recs
