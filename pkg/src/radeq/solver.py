"""Picard iteration ``u <- RHS(u)`` for the radiative-equilibrium fixed point.

The discrete right-hand side is a contraction in the sup norm, so its fixed
point is unique at the discrete level even though the continuous problem is
only known to have a solution (existence by compactness).
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BoundViolation, NoConvergence
from .fields import ScalarField
from .geometry import ConvexDomain
from .physics import CoefficientLaw, RadiativeModel, SpectralMap, T_from_u
from .scattering import CollisionSeriesConfig, full_rhs, full_rhs_pseudo, h_field, theta_bound
from .transport import (
    FOUR_PI,
    Discretization,
    central_divergence,
    coefficient_fields,
    flux_from_angular,
    grey_absorption_terms,
    pseudo_absorption_terms,
)

MODES = ("grey_absorption", "pseudo_absorption", "grey_full", "pseudo_full")
INITIAL_GUESSES = ("boundary", "zero", "apriori", "constant")
BOUND_SLACK = 1e-8
APRIORI_MARGIN = 1e-3


@dataclass
class SolverConfig:
    """Numerical controls of a solve.

    ``grid_n`` is the node count across the longest bounding-box axis;
    ``chord_step`` defaults to the grid spacing.
    """

    mode: str = "grey_absorption"
    grid_n: int = 24
    sphere_order: int = 8
    chord_step: Optional[float] = None
    freq_panels: int = 12
    freq_per_panel: int = 8
    tol: float = 1e-8
    max_iter: int = 500
    initial_guess: str = "boundary"
    initial_value: float = 0.0
    mollifier_eps: float = 0.0
    mollifier_extension: str = "zero"
    collision: CollisionSeriesConfig = field(default_factory=CollisionSeriesConfig)
    seed: Optional[int] = None
    compute_h: bool = True
    compute_flux: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.initial_guess not in INITIAL_GUESSES:
            raise ValueError(f"initial_guess must be one of {INITIAL_GUESSES}")
        if self.mollifier_eps < 0:
            raise ValueError("mollifier radius must be nonnegative")

    @property
    def pseudo(self) -> bool:
        return self.mode.startswith("pseudo")

    @property
    def full(self) -> bool:
        return self.mode.endswith("full")

    def discretization(self, domain: ConvexDomain, model: RadiativeModel) -> Discretization:
        freq = model.frequency_quadrature(self.freq_panels, self.freq_per_panel) if self.pseudo else None
        return Discretization.build(domain, self.grid_n, self.sphere_order, self.chord_step, freq)


@dataclass
class SolveReport:
    mode: str
    converged: bool
    iterations: int
    diffs: list
    ratios: list
    apriori_K: float
    theta: float
    contraction_bound: float
    max_principle_margin: Optional[float]
    flux_residual: Optional[float]
    fixed_point_residual: Optional[float]
    iterate_min: list
    iterate_max: list
    collision_orders: list
    wall_time: float
    grid_n: int
    n_points: int
    sphere_nodes: int
    freq_nodes: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2, **kw)


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# bounds


def boundary_l1(model: RadiativeModel, disc: Optional[Discretization] = None, pseudo: bool = False) -> float:
    """``int dn int d nu Q_a g`` (``Q_a`` dropped in Grey mode)."""
    if not pseudo:
        return model.G_l1()
    freq = disc.frequency(model) if disc is not None else model.frequency_quadrature()
    spec = model.boundary.spectrum(freq.nodes, model.constants)
    qa = np.asarray(model.Q_a(freq.nodes), float) * np.ones(freq.size)
    return float(np.sum(freq.weights * qa * spec)) * model.boundary.shape.l1_norm()


def boundary_sup(model: RadiativeModel, disc: Optional[Discretization] = None, pseudo: bool = False) -> float:
    if not pseudo:
        return model.G_sup()
    return boundary_l1(model, disc, pseudo) / model.boundary.shape.l1_norm() * model.boundary.shape.sup \
        if model.boundary.spectrum.kind != "zero" else 0.0


def apriori_bound(model: RadiativeModel, domain: ConvexDomain, mode: str = "grey_absorption",
                  disc: Optional[Discretization] = None) -> float:
    """Radius ``K`` of the invariant box ``[0, K]``.

    Absorption modes: ``||G||_L1 exp(D alpha_max) (1 + 1e-3)``.
    Full modes: ``4 pi ||G||_inf / (1 - theta) (1 + 1e-3)``.
    """
    pseudo = mode.startswith("pseudo")
    D = domain.diameter
    if mode.endswith("full"):
        th = theta_bound(model, domain, pseudo)
        return FOUR_PI * boundary_sup(model, disc, pseudo) / (1.0 - th) * (1.0 + APRIORI_MARGIN)
    amax = model.alpha_max * (model.Q_a.sup if pseudo else 1.0)
    return boundary_l1(model, disc, pseudo) * math.exp(D * amax) * (1.0 + APRIORI_MARGIN)


def absorption_contraction_bound(model: RadiativeModel, domain: ConvexDomain, pseudo: bool = False) -> float:
    """``1 - exp(-alpha_a_max D)``, the sup-norm contraction factor of the bulk operator."""
    amax = model.alpha_max * (model.Q_a.sup if pseudo else 1.0)
    return float(-math.expm1(-amax * domain.diameter))


# ---------------------------------------------------------------------------
# right-hand side


class RightHandSide:
    """``u -> RHS(u)`` on inside nodes for one mode, model and discretization."""

    def __init__(self, cfg: SolverConfig, model: RadiativeModel, disc: Discretization):
        self.cfg = cfg
        self.model = model
        self.disc = disc
        self.smap: Optional[SpectralMap] = disc.spectral_map(model) if cfg.pseudo else None
        self.G_dirs = model.G(disc.quad.nodes) if not cfg.pseudo else None
        self.last_orders = 0

    def __call__(self, u: np.ndarray, keep_angular: bool = False):
        cfg, disc, model = self.cfg, self.disc, self.model
        eps, ext = cfg.mollifier_eps, cfg.mollifier_extension
        w = disc.quad.weights
        if cfg.mode == "grey_absorption":
            co = coefficient_fields(disc, model, u, None, eps, ext, scattering=False)
            b, c = grey_absorption_terms(disc, u, co.A, self.G_dirs)
            self.last_orders = 0
            return (b + c) @ w, ((b + c).T if keep_angular else None)
        if cfg.mode == "pseudo_absorption":
            co = coefficient_fields(disc, model, u, self.smap, eps, ext, scattering=False)
            b, c = pseudo_absorption_terms(disc, model, self.smap, co.T, co.A)
            ang = None
            if keep_angular:
                bb, cc = pseudo_absorption_terms(disc, model, self.smap, co.T, co.A,
                                                 weights=self.smap.freq.weights)
                ang = (bb + cc).T
            self.last_orders = 0
            return (b + c) @ w, ang
        fn = full_rhs if cfg.mode == "grey_full" else full_rhs_pseudo
        res = fn(u, model, disc, cfg.collision, eps, ext, keep_angular)
        self.last_orders = res.orders
        return res.rhs, res.angular


def _initial(cfg: SolverConfig, rhs: RightHandSide, K: float) -> np.ndarray:
    P = rhs.disc.n_points
    if cfg.initial_guess == "zero":
        return np.zeros(P)
    if cfg.initial_guess == "apriori":
        return np.full(P, K)
    if cfg.initial_guess == "constant":
        return np.full(P, float(cfg.initial_value))
    return rhs(np.zeros(P))[0]


def _check_box(u: np.ndarray, K: float, k: int) -> None:
    lo, hi = float(np.min(u)), float(np.max(u))
    slack = BOUND_SLACK * max(K, 1e-300)
    if lo < -slack or hi > K + slack:
        raise BoundViolation(f"iterate {k} has range [{lo:.6e}, {hi:.6e}] outside [0, K={K:.6e}]")


def solve(config: SolverConfig, model: RadiativeModel, domain: ConvexDomain,
          disc: Optional[Discretization] = None,
          callback: Optional[Callable[[int, np.ndarray], None]] = None):
    """Iterate ``u_{k+1} = RHS(u_k)`` until ``sup|u_{k+1} - u_k| <= tol max(1, sup u_k)``.

    Returns
    -------
    (ScalarField, SolveReport)

    Raises
    ------
    NoConvergence
        Iteration cap reached with the last ratio ``>= 1 - 1e-4``.
    BoundViolation
        An iterate leaves ``[0, K]`` by more than ``1e-8 K``.
    """
    t0 = time.perf_counter()
    cfg = config
    disc = disc or cfg.discretization(domain, model)
    rhs = RightHandSide(cfg, model, disc)
    K = apriori_bound(model, domain, cfg.mode, disc)
    theta = theta_bound(model, domain, cfg.pseudo)
    u = _initial(cfg, rhs, K)
    _check_box(u, K, 0)
    if callback:
        callback(0, u)
    diffs: list = []
    ratios: list = []
    lo_hist, hi_hist, orders = [float(u.min(initial=0))], [float(u.max(initial=0))], []
    converged = False
    k = 0
    for k in range(1, cfg.max_iter + 1):
        new, _ = rhs(u)
        _check_box(new, K, k)
        orders.append(rhs.last_orders)
        d = float(np.max(np.abs(new - u))) if u.size else 0.0
        if diffs:
            ratios.append(d / diffs[-1] if diffs[-1] > 0 else 0.0)
        diffs.append(d)
        scale = max(1.0, float(np.max(np.abs(u))) if u.size else 0.0)
        u = new
        lo_hist.append(float(u.min(initial=0)))
        hi_hist.append(float(u.max(initial=0)))
        if callback:
            callback(k, u)
        if d <= cfg.tol * scale:
            converged = True
            break
    if not converged:
        if ratios and ratios[-1] >= 1.0 - 1e-4:
            raise NoConvergence(f"no convergence after {k} iterations (last ratio {ratios[-1]:.6f})")
        warnings.warn(f"iteration cap {cfg.max_iter} reached before tolerance", RuntimeWarning,
                      stacklevel=2)

    margin = None
    if cfg.compute_h:
        margin = max_principle_margin(model, u, disc, cfg)
    flux_res = None
    if cfg.compute_flux:
        flux_res = flux_residual(rhs, u)
    report = SolveReport(
        mode=cfg.mode, converged=converged, iterations=k, diffs=diffs, ratios=ratios, apriori_K=K,
        theta=theta, contraction_bound=absorption_contraction_bound(model, domain, cfg.pseudo),
        max_principle_margin=margin, flux_residual=flux_res, fixed_point_residual=None,
        iterate_min=lo_hist, iterate_max=hi_hist, collision_orders=orders,
        wall_time=time.perf_counter() - t0, grid_n=cfg.grid_n, n_points=disc.n_points,
        sphere_nodes=disc.quad.size, freq_nodes=disc.freq.size if disc.freq is not None else 0)
    return disc.to_field(u), report


def max_principle_margin(model: RadiativeModel, u: np.ndarray, disc: Discretization,
                         cfg: SolverConfig) -> float:
    """``theta - max H`` for the mode's physics (scattering dropped in absorption modes)."""
    m = model if cfg.full else dataclasses.replace(model, alpha_s=CoefficientLaw.constant(0.0))
    H = h_field(m, u, disc, cfg.collision, pseudo=False, eps=cfg.mollifier_eps,
                extension=cfg.mollifier_extension, check=False)
    theta = theta_bound(m, disc.domain)
    return float(theta - H.values.max()) if H.values.size else theta


def flux_residual(rhs: RightHandSide, u: np.ndarray) -> float:
    """``max |div F| / max(alpha_a u)`` from central differences of the sphere-summed flux."""
    _, J = rhs(u, keep_angular=True)
    disc, model = rhs.disc, rhs.model
    F = flux_from_angular(disc, J.T)
    div = central_divergence(disc, F)
    T = T_from_u(np.maximum(u, 0), model.constants) if rhs.smap is None else rhs.smap.F_inverse(u)
    emis = float(np.max(np.asarray(model.alpha_a(T), float) * u)) if u.size else 0.0
    if emis <= 0 or not np.any(np.isfinite(div)):
        return 0.0
    return float(np.nanmax(np.abs(div)) / emis)


@dataclass
class EquilibriumResidual:
    fixed_point: float
    flux_divergence: float

    @property
    def value(self) -> float:
        return self.fixed_point


def equilibrium_residual(u, model: RadiativeModel, domain: ConvexDomain,
                         config: Optional[SolverConfig] = None,
                         disc: Optional[Discretization] = None) -> EquilibriumResidual:
    """Fixed-point residual ``sup|u - RHS(u)| / max(1, sup u)`` plus the flux-divergence residual."""
    cfg = config or SolverConfig()
    disc = disc or cfg.discretization(domain, model)
    rhs = RightHandSide(cfg, model, disc)
    ui = disc.inside(u)
    r, J = rhs(ui, keep_angular=True)
    fp = float(np.max(np.abs(ui - r)) / max(1.0, float(np.max(np.abs(ui))))) if ui.size else 0.0
    F = flux_from_angular(disc, J.T)
    div = central_divergence(disc, F)
    T = T_from_u(np.maximum(ui, 0), model.constants) if rhs.smap is None else rhs.smap.F_inverse(ui)
    emis = float(np.max(np.asarray(model.alpha_a(T), float) * ui)) if ui.size else 0.0
    fd = float(np.nanmax(np.abs(div)) / emis) if emis > 0 and np.any(np.isfinite(div)) else 0.0
    return EquilibriumResidual(fp, fd)


def epsilon_independence_check(config: SolverConfig, model: RadiativeModel, domain: ConvexDomain,
                               eps_values: Optional[Sequence[float]] = None) -> dict:
    """Converged fields for each mollifier radius and their sup-norm spread to ``eps = 0``.

    ``eps_values`` defaults to two and four grid spacings.
    """
    disc = config.discretization(domain, model)
    if eps_values is None:
        eps_values = [2.0 * disc.grid.spacing, 4.0 * disc.grid.spacing]
    eps_values = sorted(float(e) for e in eps_values)
    if 0.0 not in eps_values:
        eps_values = [0.0] + eps_values
    sols = {}
    for e in eps_values:
        cfg = dataclasses.replace(config, mollifier_eps=e, compute_h=False, compute_flux=False)
        u, _ = solve(cfg, model, domain, disc)
        sols[e] = disc.inside(u)
    ref = sols[0.0]
    spreads = {e: float(np.max(np.abs(sols[e] - ref))) for e in eps_values}
    positive = [e for e in eps_values if e > 0]
    halving = []
    for a, b in zip(positive[:-1], positive[1:]):
        halving.append(spreads[b] / spreads[a] if spreads[a] > 0 else float("nan"))
    return {
        "eps": eps_values,
        "spread": [spreads[e] for e in eps_values],
        "relative_spread": [spreads[e] / max(1e-300, float(np.max(np.abs(ref)))) for e in eps_values],
        "successive_ratio": halving,
        "spacing": disc.grid.spacing,
        "solutions": sols,
    }


def solution_temperature(u: ScalarField, model: RadiativeModel, cfg: SolverConfig,
                         disc: Discretization) -> ScalarField:
    ui = disc.inside(u)
    if cfg.pseudo:
        T = disc.spectral_map(model).F_inverse(np.maximum(ui, 0.0))
    else:
        T = T_from_u(np.maximum(ui, 0.0), model.constants)
    return disc.to_field(T)


__all__ = [
    "SolverConfig",
    "SolveReport",
    "apriori_bound",
    "solve",
    "equilibrium_residual",
    "epsilon_independence_check",
]
