"""Analog Monte Carlo photon transport for Grey problems on ellipsoids.

Photons are launched from the boundary (direction and entry point
distributed like the influx ``G(n) |n . nu|``) and from the bulk (position
distributed like the emission density ``alpha_a(T) u(T)``, isotropic
direction). Each flight samples an optical depth ``-log U``; the collision
absorbs with probability ``alpha_a / (alpha_a + alpha_s)`` and otherwise
scatters with the normalized kernel. Leaving the domain terminates.

Tallies are kept per cell of a uniform box lattice, split by launch
stratum, so standard errors follow from per-photon second moments.
Random numbers come from one Philox stream per fixed-size photon batch;
results do not depend on the number of worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import DegeneratePowers, NonphysicalInput, SeedMissing
from .fields import ScalarField, trilinear
from .geometry import ConvexDomain, build_sphere_quadrature
from .physics import RadiativeModel, ScatteringKernel, u_from_T
from ._kernels import _interp, _stencil

BATCH = 8192
SHAPE_CODES = {"isotropic": 0, "linear": 1, "beam": 2}


@dataclass
class McConfig:
    """Photon budget, seed and tally lattice.

    ``tally_n`` cells per axis cover the bounding box of the domain;
    ``min_count`` is the smallest number of scored events for a cell to be
    included in z-score summaries.
    """

    photons: int = 1_000_000
    seed: Optional[int] = None
    tally_n: int = 8
    threads: int = 1
    step: Optional[float] = None
    min_count: int = 30
    subsamples: int = 16

    def __post_init__(self):
        if self.photons < 1:
            raise NonphysicalInput("photon count must be at least 1")
        if self.seed is None:
            raise SeedMissing("a Monte Carlo run needs an explicit seed")
        if self.tally_n < 1:
            raise NonphysicalInput("tally resolution must be positive")


# ---------------------------------------------------------------------------
# compiled pieces


@njit(cache=True, inline="always")
def _exit_distance(x0, x1, x2, n0, n1, n2, c, a):
    """Forward distance to the ellipsoid surface from an interior point."""
    y0 = (x0 - c[0]) / a[0]
    y1 = (x1 - c[1]) / a[1]
    y2 = (x2 - c[2]) / a[2]
    m0 = n0 / a[0]
    m1 = n1 / a[1]
    m2 = n2 / a[2]
    A = m0 * m0 + m1 * m1 + m2 * m2
    B = y0 * m0 + y1 * m1 + y2 * m2
    C = y0 * y0 + y1 * y1 + y2 * y2 - 1.0
    if C > 0.0:
        C = 0.0
    root = math.sqrt(max(B * B - A * C, 0.0))
    if B >= 0.0:
        den = B + root
        return -C / den if den > 0.0 else 0.0
    return (root - B) / A


@njit(cache=True, inline="always")
def _unit_vector(rng):
    z = 2.0 * rng.random() - 1.0
    phi = 2.0 * math.pi * rng.random()
    r = math.sqrt(max(1.0 - z * z, 0.0))
    return r * math.cos(phi), r * math.sin(phi), z


@njit(cache=True, inline="always")
def _basis(n0, n1, n2):
    if abs(n2) < 0.9:
        e0, e1, e2 = -n1, n0, 0.0
    else:
        e0, e1, e2 = 0.0, -n2, n1
    s = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
    e0 /= s
    e1 /= s
    e2 /= s
    f0 = n1 * e2 - n2 * e1
    f1 = n2 * e0 - n0 * e2
    f2 = n0 * e1 - n1 * e0
    return e0, e1, e2, f0, f1, f2


@njit(cache=True, inline="always")
def _shape(code, d, offset, strength, kappa, n0, n1, n2):
    mu = n0 * d[0] + n1 * d[1] + n2 * d[2]
    if code == 0:
        return 1.0
    if code == 1:
        return offset + strength * mu
    return math.exp(kappa * (mu - 1.0))


@njit(cache=True, inline="always")
def _scatter_direction(rng, n0, n1, n2, iso, mu_table):
    if iso:
        return _unit_vector(rng)
    m = mu_table.shape[0] - 1
    v = rng.random() * m
    i = min(int(v), m - 1)
    mu = mu_table[i] + (v - i) * (mu_table[i + 1] - mu_table[i])
    mu = min(max(mu, -1.0), 1.0)
    phi = 2.0 * math.pi * rng.random()
    st = math.sqrt(max(1.0 - mu * mu, 0.0))
    e0, e1, e2, f0, f1, f2 = _basis(n0, n1, n2)
    c = st * math.cos(phi)
    s = st * math.sin(phi)
    r0 = mu * n0 + c * e0 + s * f0
    r1 = mu * n1 + c * e1 + s * f1
    r2 = mu * n2 + c * e2 + s * f2
    q = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
    return r0 / q, r1 / q, r2 / q


@njit(cache=True)
def _flight(A, S, origin, h, x0, x1, x2, n0, n1, n2, s_exit, xi, step, const, kconst):
    """Distance to the next collision, or ``-1`` if the photon leaves first."""
    if const:
        if kconst <= 0.0:
            return -1.0
        s = xi / kconst
        return s if s < s_exit else -1.0
    nx, ny, nz = A.shape
    inv_h = 1.0 / h
    i, j, k, fx, fy, fz = _stencil(x0, x1, x2, origin[0], origin[1], origin[2], inv_h, nx, ny, nz)
    kprev = _interp(A, i, j, k, fx, fy, fz) + _interp(S, i, j, k, fx, fy, fz)
    tau = 0.0
    t_prev = 0.0
    while t_prev < s_exit:
        t = min(t_prev + step, s_exit)
        i, j, k, fx, fy, fz = _stencil(x0 + t * n0, x1 + t * n1, x2 + t * n2,
                                       origin[0], origin[1], origin[2], inv_h, nx, ny, nz)
        kap = _interp(A, i, j, k, fx, fy, fz) + _interp(S, i, j, k, fx, fy, fz)
        dtau = 0.5 * (kprev + kap) * (t - t_prev)
        if tau + dtau >= xi and dtau > 0.0:
            return t_prev + (xi - tau) / dtau * (t - t_prev)
        tau += dtau
        kprev = kap
        t_prev = t
    return -1.0


@njit(cache=True, inline="always")
def _cell(x0, x1, x2, to, th, tn):
    i = min(max(int(math.floor((x0 - to[0]) / th)), 0), tn - 1)
    j = min(max(int(math.floor((x1 - to[1]) / th)), 0), tn - 1)
    k = min(max(int(math.floor((x2 - to[2]) / th)), 0), tn - 1)
    return (i * tn + j) * tn + k


@njit(cache=True, nogil=True)
def _run_batch(rng, start, stop, n_bnd, w_b, w_v, c, a, A, S, E, origin, h, step, const, kconst,
               rconst, Emax, lo, hi, shape_code, shape_dir, offset, strength, kappa, shape_sup,
               area_sup, iso, mu_table, to, th, tn, out):
    """Transport photons ``start <= i < stop``; ``out`` is ``(2, 5, cells)``.

    Rows per stratum: absorbed weight, absorbed weight squared, paired
    difference sum, paired difference square sum, event count.
    """
    nx, ny, nz = A.shape
    inv_h = 1.0 / h
    rb = max(a[0], max(a[1], a[2]))
    abc = a[0] * a[1] * a[2]
    for p in range(start, stop):
        boundary = p < n_bnd
        e_cell = -1
        if boundary:
            w = w_b
            while True:
                n0, n1, n2 = _unit_vector(rng)
                ap = math.pi * abc * math.sqrt((n0 / a[0]) ** 2 + (n1 / a[1]) ** 2 + (n2 / a[2]) ** 2)
                gval = _shape(shape_code, shape_dir, offset, strength, kappa, n0, n1, n2)
                if rng.random() * shape_sup * area_sup <= gval * ap:
                    break
            e0, e1, e2, f0, f1, f2 = _basis(n0, n1, n2)
            while True:
                r = rb * math.sqrt(rng.random())
                phi = 2.0 * math.pi * rng.random()
                cp = r * math.cos(phi)
                sp = r * math.sin(phi)
                p0 = c[0] + cp * e0 + sp * f0
                p1 = c[1] + cp * e1 + sp * f1
                p2 = c[2] + cp * e2 + sp * f2
                y0 = (p0 - c[0]) / a[0]
                y1 = (p1 - c[1]) / a[1]
                y2 = (p2 - c[2]) / a[2]
                m0 = n0 / a[0]
                m1 = n1 / a[1]
                m2 = n2 / a[2]
                qa = m0 * m0 + m1 * m1 + m2 * m2
                qb = y0 * m0 + y1 * m1 + y2 * m2
                qc = y0 * y0 + y1 * y1 + y2 * y2 - 1.0
                disc = qb * qb - qa * qc
                if disc > 0.0:
                    root = math.sqrt(disc)
                    t_in = (-qb - root) / qa
                    t_out = (-qb + root) / qa
                    break
            x0 = p0 + t_in * n0
            x1 = p1 + t_in * n1
            x2 = p2 + t_in * n2
            s_exit = t_out - t_in
        else:
            w = w_v
            while True:
                x0 = lo[0] + (hi[0] - lo[0]) * rng.random()
                x1 = lo[1] + (hi[1] - lo[1]) * rng.random()
                x2 = lo[2] + (hi[2] - lo[2]) * rng.random()
                lev = ((x0 - c[0]) / a[0]) ** 2 + ((x1 - c[1]) / a[1]) ** 2 + ((x2 - c[2]) / a[2]) ** 2
                if lev >= 1.0:
                    continue
                i, j, k, fx, fy, fz = _stencil(x0, x1, x2, origin[0], origin[1], origin[2], inv_h,
                                               nx, ny, nz)
                if rng.random() * Emax < _interp(E, i, j, k, fx, fy, fz):
                    break
            n0, n1, n2 = _unit_vector(rng)
            e_cell = _cell(x0, x1, x2, to, th, tn)
            s_exit = _exit_distance(x0, x1, x2, n0, n1, n2, c, a)
        a_cell = -1
        while True:
            xi = -math.log(1.0 - rng.random())
            s = _flight(A, S, origin, h, x0, x1, x2, n0, n1, n2, s_exit, xi, step, const, kconst)
            if s < 0.0:
                break
            x0 += s * n0
            x1 += s * n1
            x2 += s * n2
            if const:
                ratio = rconst
            else:
                i, j, k, fx, fy, fz = _stencil(x0, x1, x2, origin[0], origin[1], origin[2], inv_h,
                                               nx, ny, nz)
                av = _interp(A, i, j, k, fx, fy, fz)
                bv = _interp(S, i, j, k, fx, fy, fz)
                ratio = av / (av + bv) if av + bv > 0.0 else 0.0
            if rng.random() < ratio:
                a_cell = _cell(x0, x1, x2, to, th, tn)
                break
            n0, n1, n2 = _scatter_direction(rng, n0, n1, n2, iso, mu_table)
            s_exit = _exit_distance(x0, x1, x2, n0, n1, n2, c, a)
        st = 0 if boundary else 1
        if a_cell >= 0:
            out[st, 0, a_cell] += w
            out[st, 1, a_cell] += w * w
            out[st, 2, a_cell] += w
            out[st, 4, a_cell] += 1.0
        if e_cell >= 0:
            out[st, 2, e_cell] -= w
            out[st, 4, e_cell] += 1.0
        if a_cell != e_cell:
            if a_cell >= 0:
                out[st, 3, a_cell] += w * w
            if e_cell >= 0:
                out[st, 3, e_cell] += w * w


# ---------------------------------------------------------------------------
# python driver


def _mu_table(kernel: ScatteringKernel, size: int = 8193) -> np.ndarray:
    """Inverse CDF of ``mu = n . n'`` sampled at equally spaced probabilities."""
    mu = np.linspace(-1.0, 1.0, 200001)
    f = kernel.profile(mu)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(mu))])
    cdf /= cdf[-1]
    return np.interp(np.linspace(0.0, 1.0, size), cdf, mu)


def _rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(batch)])))


@dataclass
class TallyField:
    """Per-cell Monte Carlo tallies with deterministic reference integrals.

    Densities are energies per unit cell volume (cell volume clipped to the
    domain). ``emitted`` is the quadrature value of the emission density;
    ``paired`` holds the Monte Carlo estimate of absorbed minus emitted
    energy with its standard error.
    """

    centers: np.ndarray
    volume: np.ndarray
    absorbed: np.ndarray
    stderr: np.ndarray
    emitted: np.ndarray
    paired: np.ndarray
    paired_stderr: np.ndarray
    counts: np.ndarray
    seed: int
    photons: int
    powers: dict = field(default_factory=dict)
    min_count: int = 30

    @property
    def active(self) -> np.ndarray:
        return (self.volume > 0) & (self.counts >= self.min_count)

    def to_csv(self, path) -> None:
        cols = ["x", "y", "z", "volume", "absorbed", "stderr", "emitted", "paired", "paired_stderr", "count"]
        lines = [",".join(cols)]
        for i in range(len(self.volume)):
            vals = list(self.centers[i]) + [self.volume[i], self.absorbed[i], self.stderr[i], self.emitted[i],
                                            self.paired[i], self.paired_stderr[i]]
            lines.append(",".join(f"{v:.17g}" for v in vals) + f",{int(self.counts[i])}")
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def summary(self) -> dict:
        return {"seed": self.seed, "photons": self.photons, "cells": int(np.sum(self.volume > 0)),
                "active_cells": int(np.sum(self.active)), "powers": self.powers,
                "mean_relative_stderr": float(np.mean(self.stderr[self.active] /
                                                      np.maximum(self.absorbed[self.active], 1e-300)))
                if np.any(self.active) else float("nan")}


def _emission_field(model: RadiativeModel, T: ScalarField):
    Tin = T.inside()
    if np.any(Tin < 0):
        raise NonphysicalInput("temperature must be nonnegative")
    u = u_from_T(Tin, model.constants)
    em = np.asarray(model.alpha_a(Tin), float) * np.ones_like(Tin) * u
    A = np.asarray(model.alpha_a(Tin), float) * np.ones_like(Tin)
    Sv = np.asarray(model.alpha_s(Tin), float) * np.ones_like(Tin)

    def ext(v):
        return T.with_inside(v).extended()

    return ext(A), ext(Sv), ext(em)


def _cell_quadrature(domain: ConvexDomain, E: np.ndarray, T: ScalarField, tn: int, sub: int):
    lo, hi = domain.bounding_box()
    th = float(np.max(hi - lo)) / tn
    to = 0.5 * (lo + hi) - 0.5 * tn * th
    off = (np.arange(sub) + 0.5) / sub * th
    base = np.stack(np.meshgrid(off, off, off, indexing="ij"), axis=-1).reshape(-1, 3)
    ncell = tn**3
    vol = np.zeros(ncell)
    emi = np.zeros(ncell)
    cen = np.zeros((ncell, 3))
    dv = (th / sub) ** 3
    for ci in range(ncell):
        i, r = divmod(ci, tn * tn)
        j, k = divmod(r, tn)
        corner = to + th * np.array([i, j, k], dtype=float)
        cen[ci] = corner + 0.5 * th
        pts = corner + base
        ins = domain.level(pts) < 0
        if not np.any(ins):
            continue
        vol[ci] = ins.sum() * dv
        emi[ci] = float(np.sum(trilinear(E, T.grid, pts[ins]))) * dv
    return to, th, vol, emi, cen


def boundary_power(model: RadiativeModel, domain: ConvexDomain, order: int = 48) -> float:
    """``int G(n) A_perp(n) dn``: energy entering through the boundary per unit time."""
    q = build_sphere_quadrature(order)
    return float(q.integrate(model.G(q.nodes) * domain.projected_area(q.nodes)))


def simulate(model: RadiativeModel, domain: ConvexDomain, T: ScalarField, mc: McConfig) -> TallyField:
    """Run the photon transport and return per-cell tallies."""
    if mc.seed is None:
        raise SeedMissing("a Monte Carlo run needs an explicit seed")
    A, S, E = _emission_field(model, T)
    to, th, vol, emi, cen = _cell_quadrature(domain, E, T, mc.tally_n, mc.subsamples)
    P_v = float(emi.sum())
    P_b = boundary_power(model, domain)
    if P_b + P_v <= 0:
        raise DegeneratePowers("boundary and bulk emission are both zero")
    N = int(mc.photons)
    n_bnd = int(round(N * P_b / (P_b + P_v)))
    if P_v <= 0:
        n_bnd = N
    elif P_b <= 0:
        n_bnd = 0
    w_b = P_b / n_bnd if n_bnd else 0.0
    w_v = P_v / (N - n_bnd) if N > n_bnd else 0.0

    shape = model.boundary.shape
    const = bool(np.ptp(A) == 0 and np.ptp(S) == 0)
    kconst = float(A.flat[0] + S.flat[0])
    rconst = float(A.flat[0] / kconst) if kconst > 0 else 0.0
    lo, hi = domain.bounding_box()
    area_sup = math.pi * float(np.prod(domain.a)) / float(np.min(domain.a))
    step = float(mc.step or T.grid.spacing)
    iso = bool(model.kernel.is_isotropic)
    mu_table = _mu_table(model.kernel) if not iso else np.zeros(2)
    origin = np.asarray(T.grid.origin, float)
    Emax = float(np.max(E)) if P_v > 0 else 1.0
    ncell = mc.tally_n**3
    args = (np.asarray(domain.c, float), np.asarray(domain.a, float), A, S, E, origin,
            float(T.grid.spacing), step, const, kconst, rconst, Emax, np.asarray(lo, float),
            np.asarray(hi, float), SHAPE_CODES[shape.kind], np.asarray(shape.direction, float),
            float(shape.offset), float(shape.strength), float(shape.kappa), float(shape.sup), area_sup,
            iso, mu_table, np.asarray(to, float), th, mc.tally_n)

    n_batches = (N + BATCH - 1) // BATCH

    def work(b):
        out = np.zeros((2, 5, ncell))
        _run_batch(_rng(mc.seed, b), b * BATCH, min((b + 1) * BATCH, N), n_bnd, w_b, w_v, *args, out)
        return out

    if mc.threads > 1:
        with ThreadPoolExecutor(mc.threads) as ex:
            parts = list(ex.map(work, range(n_batches)))
    else:
        parts = [work(b) for b in range(n_batches)]
    tot = np.zeros((2, 5, ncell))
    for part in parts:
        tot += part

    ns = np.array([n_bnd, N - n_bnd], dtype=float)
    var_abs = np.zeros(ncell)
    var_pair = np.zeros(ncell)
    for st in range(2):
        if ns[st] == 0:
            continue
        var_abs += np.maximum(tot[st, 1] - tot[st, 0] ** 2 / ns[st], 0.0)
        var_pair += np.maximum(tot[st, 3] - tot[st, 2] ** 2 / ns[st], 0.0)
    safe = np.where(vol > 0, vol, 1.0)
    absorbed = np.where(vol > 0, tot[:, 0].sum(axis=0) / safe, 0.0)
    return TallyField(
        centers=cen, volume=vol, absorbed=absorbed, stderr=np.sqrt(var_abs) / safe,
        emitted=np.where(vol > 0, emi / safe, 0.0), paired=tot[:, 2].sum(axis=0) / safe,
        paired_stderr=np.sqrt(var_pair) / safe, counts=tot[:, 4].sum(axis=0), seed=int(mc.seed),
        photons=N, powers={"boundary": P_b, "bulk": P_v, "boundary_photons": n_bnd},
        min_count=mc.min_count)


@dataclass
class EquilibriumScore:
    """Per-cell z-scores of absorbed minus emitted energy and their summary."""

    z: np.ndarray
    z_reference: np.ndarray
    active: np.ndarray
    fraction_above_3: float
    fraction_reference_above_3: float
    chi2_per_cell: float

    def to_dict(self) -> dict:
        return {"active_cells": int(self.active.sum()), "fraction_above_3": self.fraction_above_3,
                "fraction_reference_above_3": self.fraction_reference_above_3,
                "chi2_per_cell": self.chi2_per_cell,
                "max_abs_z": float(np.max(np.abs(self.z[self.active]))) if self.active.any() else 0.0}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def equilibrium_score(tally: TallyField, model: Optional[RadiativeModel] = None,
                      T: Optional[ScalarField] = None) -> EquilibriumScore:
    """z-scores of the paired estimator and of absorbed vs quadrature emission.

    ``z`` uses ``(absorbed - emitted) / stderr`` with both sides from the
    same photons; ``z_reference`` compares the absorbed tally with the
    deterministic cell integral of ``alpha_a u``. ``model`` and ``T`` are
    accepted for interface symmetry; the tally already carries the
    reference integrals.
    """
    act = tally.active & (tally.paired_stderr > 0) & (tally.stderr > 0)
    z = np.zeros_like(tally.paired)
    z[act] = tally.paired[act] / tally.paired_stderr[act]
    zr = np.zeros_like(tally.paired)
    zr[act] = (tally.absorbed[act] - tally.emitted[act]) / tally.stderr[act]
    n = max(int(act.sum()), 1)
    return EquilibriumScore(z=z, z_reference=zr, active=act,
                            fraction_above_3=float(np.sum(np.abs(z[act]) > 3) / n),
                            fraction_reference_above_3=float(np.sum(np.abs(zr[act]) > 3) / n),
                            chi2_per_cell=float(np.sum(z[act] ** 2) / n))


# ---------------------------------------------------------------------------
# sampler probes


@njit(cache=True)
def _free_paths(rng, count, A, S, origin, h, x, n, s_exit, step, const, kconst):
    out = np.empty(count)
    for i in range(count):
        xi = -math.log(1.0 - rng.random())
        out[i] = _flight(A, S, origin, h, x[0], x[1], x[2], n[0], n[1], n[2], s_exit, xi, step, const,
                         kconst)
    return out


def sample_free_paths(alpha: float, count: int, seed: int, march: bool = True, step: float = 0.1,
                      length: float = 200.0) -> np.ndarray:
    """Free paths in a constant medium through the same flight routine as :func:`simulate`.

    With ``march`` the inhomogeneous optical-depth inversion is used on a
    constant grid; paths that would exceed ``length`` are returned as ``-1``.
    """
    A = np.full((2, 2, 2), float(alpha))
    S = np.zeros((2, 2, 2))
    return _free_paths(_rng(seed, 0), int(count), A, S, np.zeros(3), 1.0, np.zeros(3),
                       np.array([0.0, 0.0, 1.0]), float(length), float(step), not march, float(alpha))


@njit(cache=True)
def _scatter_cosines(rng, count, n, iso, mu_table):
    out = np.empty(count)
    for i in range(count):
        r0, r1, r2 = _scatter_direction(rng, n[0], n[1], n[2], iso, mu_table)
        out[i] = r0 * n[0] + r1 * n[1] + r2 * n[2]
    return out


def sample_scatter_cosines(kernel: ScatteringKernel, count: int, seed: int, n=(0.3, -0.4, 0.866)) -> np.ndarray:
    """Cosines ``n . n'`` of scattered directions drawn by the transport sampler."""
    n = np.asarray(n, float)
    n = n / np.linalg.norm(n)
    table = _mu_table(kernel) if not kernel.is_isotropic else np.zeros(2)
    return _scatter_cosines(_rng(seed, 0), int(count), n, bool(kernel.is_isotropic), table)


__all__ = [
    "McConfig",
    "TallyField",
    "EquilibriumScore",
    "simulate",
    "equilibrium_score",
    "boundary_power",
    "sample_free_paths",
    "sample_scatter_cosines",
]
