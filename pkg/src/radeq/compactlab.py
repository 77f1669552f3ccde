"""Fourier-side checks of line-integral operators on the periodic torus ``[-L, L)^3``.

Conventions: ``phi(x) = sum_k a_k exp(i k.x)`` with ``k`` in ``(pi / L) Z^3``;
samples live at ``x_j = -L + j (2L / N)``. Multipliers are applied to the
discrete transform; Nyquist planes are zeroed so outputs stay real.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import BadInterval, BoundViolated, NonUnitDirection
from .geometry import SphereQuadrature, build_sphere_quadrature

MEASURE_TOL = 1e-6


def _safe_sinc_ratio(num_scale: float, q: np.ndarray) -> np.ndarray:
    """``sin(num_scale q) / q`` with the limit ``num_scale`` at ``q = 0``."""
    out = np.empty_like(q)
    small = np.abs(q) < 1e-12
    out[~small] = np.sin(num_scale * q[~small]) / q[~small]
    out[small] = num_scale
    return out


@dataclass
class PeriodicField:
    """Real samples of a periodic function on ``N^3`` points of ``[-L, L)^3``."""

    L: float
    samples: np.ndarray
    M: Optional[float] = None
    _spec: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 3 or len(set(s.shape)) != 1:
            raise ValueError("samples must be an N x N x N array")
        self.samples = s
        if self.M is None:
            self.M = float(np.max(np.abs(s))) if s.size else 0.0

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** 3

    def grid_axis(self) -> np.ndarray:
        return -self.L + np.arange(self.N) * (2.0 * self.L / self.N)

    def grid_points(self) -> np.ndarray:
        a = self.grid_axis()
        X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    # spectral data -------------------------------------------------------

    def integer_modes(self) -> list[np.ndarray]:
        m = np.fft.fftfreq(self.N, 1.0 / self.N)
        return [m[:, None, None], m[None, :, None], m[None, None, :]]

    def wavevectors(self) -> list[np.ndarray]:
        return [(math.pi / self.L) * m for m in self.integer_modes()]

    def spectrum(self) -> np.ndarray:
        """Raw DFT of the samples (cached)."""
        if self._spec is None:
            self._spec = np.fft.fftn(self.samples)
        return self._spec

    def coefficients(self) -> np.ndarray:
        """Fourier coefficients ``a_k`` on the full index grid (FFT layout)."""
        m1, m2, m3 = self.integer_modes()
        sign = np.where(((m1 + m2 + m3).astype(int) % 2) == 0, 1.0, -1.0)
        return sign * self.spectrum() / self.N**3

    @classmethod
    def from_coefficients(cls, L: float, coeffs: np.ndarray, M: Optional[float] = None) -> "PeriodicField":
        N = coeffs.shape[0]
        m = np.fft.fftfreq(N, 1.0 / N)
        sign = np.where(((m[:, None, None] + m[None, :, None] + m[None, None, :]).astype(int) % 2) == 0,
                        1.0, -1.0)
        samples = np.real(np.fft.ifftn(sign * coeffs)) * N**3
        return cls(L, samples, M)

    def nyquist_mask(self) -> np.ndarray:
        m1, m2, m3 = self.integer_modes()
        half = self.N // 2
        return (np.abs(m1) == half) | (np.abs(m2) == half) | (np.abs(m3) == half)

    def evaluate(self, points, tol: float = 0.0) -> np.ndarray:
        """Direct trigonometric sum ``Re sum a_k exp(i k.x)`` at arbitrary points."""
        a = self.coefficients()
        keep = np.abs(a) > tol
        keep &= ~self.nyquist_mask() if self.N % 2 == 0 else keep
        k1, k2, k3 = self.wavevectors()
        K = np.stack(np.broadcast_arrays(k1, k2, k3), axis=-1)[keep]
        amp = a[keep]
        pts = np.atleast_2d(points)
        out = np.empty(len(pts))
        for i0 in range(0, len(pts), 256):
            ph = pts[i0:i0 + 256] @ K.T
            out[i0:i0 + 256] = np.real(np.exp(1j * ph) @ amp)
        return out

    def apply(self, multiplier: np.ndarray) -> "PeriodicField":
        """Field with spectrum multiplied by ``multiplier`` (Nyquist planes dropped)."""
        spec = self.spectrum() * multiplier
        spec[self.nyquist_mask()] = 0.0
        return PeriodicField(self.L, np.real(np.fft.ifftn(spec)))

    def normalized(self) -> "PeriodicField":
        """Same coefficients on ``[-1, 1)^3`` with ``M = 1``."""
        M = self.M if self.M else 1.0
        return PeriodicField(1.0, self.samples / M, 1.0)

    def l2_mean_square(self) -> float:
        return float(np.mean(self.samples**2))


def _check_unit(n) -> np.ndarray:
    n = np.asarray(n, dtype=float).reshape(3)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise NonUnitDirection("direction must be a unit vector")
    return n


def line_multiplier(field: PeriodicField, n) -> np.ndarray:
    """``2 sin(L k.n) / (k.n)`` (``2L`` at ``k.n = 0``)."""
    k1, k2, k3 = field.wavevectors()
    q = k1 * n[0] + k2 * n[1] + k3 * n[2]
    return _safe_sinc_ratio(field.L, np.broadcast_to(q, (field.N,) * 3).copy()) * 2.0


def segment_multiplier(field: PeriodicField, n, s: float, t: float) -> np.ndarray:
    """``int_s^t exp(-i lambda k.n) d lambda``."""
    k1, k2, k3 = field.wavevectors()
    q = np.broadcast_to(k1 * n[0] + k2 * n[1] + k3 * n[2], (field.N,) * 3).copy()
    half = 0.5 * (t - s)
    return np.exp(-0.5j * (t + s) * q) * 2.0 * _safe_sinc_ratio(half, q)


def line_operator(field: PeriodicField, n) -> PeriodicField:
    """``L_n[phi](x) = int_{-L}^{L} phi(x - lambda n) d lambda`` computed spectrally."""
    n = _check_unit(n)
    out = field.apply(line_multiplier(field, n))
    out.M = 2.0 * field.L * field.M
    return out


def segment_operator(field: PeriodicField, n, s: float, t: float) -> PeriodicField:
    """``int_s^t phi(x - lambda n) d lambda`` for ``0 <= s < t <= L/2``."""
    n = _check_unit(n)
    if not (0.0 <= s < t <= field.L / 2 + 1e-15):
        raise BadInterval(f"need 0 <= s < t <= L/2, got s={s}, t={t}")
    return field.apply(segment_multiplier(field, n, s, t))


def t_m_operators(field: PeriodicField, ms: Sequence[int], quad: SphereQuadrature) -> dict:
    """``T_m[phi] = int dn (L_n phi)^m`` for several ``m`` from one pass over directions."""
    if any(m < 1 for m in ms):
        raise ValueError("m must be at least 1")
    acc = {m: np.zeros(field.samples.shape) for m in ms}
    spec = field.spectrum()
    nyq = field.nyquist_mask()
    for n, w in zip(quad.nodes, quad.weights):
        s = spec * line_multiplier(field, n)
        s[nyq] = 0.0
        ln = np.real(np.fft.ifftn(s))
        p = np.ones_like(ln)
        for m in range(1, max(ms) + 1):
            p = p * ln
            if m in acc:
                acc[m] += w * p
    return {m: PeriodicField(field.L, v) for m, v in acc.items()}


def t_m_operator(field: PeriodicField, m: int, order: int = 16,
                 quad: Optional[SphereQuadrature] = None) -> PeriodicField:
    quad = quad or build_sphere_quadrature(order)
    return t_m_operators(field, [m], quad)[m]


# ---------------------------------------------------------------------------
# auxiliary measures


@dataclass
class AuxiliaryMeasure:
    """Atoms ``(direction, mass)`` on the sphere above the cutoff ``R``."""

    R: float
    directions: np.ndarray
    masses: np.ndarray
    wavevectors: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))

    def __len__(self) -> int:
        return len(self.masses)


def auxiliary_measures(field: PeriodicField, R: float, n=None, interval: Optional[tuple] = None,
                       atol: float = 1e-26) -> AuxiliaryMeasure:
    """``mu^R`` (no direction) or ``nu_n^R`` (with ``n``) from the Fourier coefficients.

    ``mu^R`` places ``|a_k|^2`` at ``k/|k|`` for ``|k| > R``; ``nu_n^R``
    multiplies by ``|line multiplier|^2`` (``4 |sin(k.n)/(k.n)|^2`` at
    ``L = 1``), or by the squared segment multiplier when ``interval`` is set.
    Atoms with ``|a_k|^2 <= atol`` are dropped.
    """
    if R < 0:
        raise ValueError("R must be nonnegative")
    a = field.coefficients()
    k1, k2, k3 = field.wavevectors()
    K = np.stack(np.broadcast_arrays(k1, k2, k3), axis=-1)
    norm = np.linalg.norm(K, axis=-1)
    sel = (norm > R) & ~field.nyquist_mask()
    mass = np.abs(a[sel]) ** 2
    # atoms below ``atol`` are transform roundoff (~1e-34 for unit fields)
    keep = mass > atol
    Ks = K[sel][keep]
    mass = mass[keep]
    dirs = Ks / np.linalg.norm(Ks, axis=1, keepdims=True) if len(Ks) else np.zeros((0, 3))
    if n is not None:
        n = _check_unit(n)
        q = Ks @ n
        if interval is None:
            mass = mass * (2.0 * _safe_sinc_ratio(field.L, q)) ** 2
        else:
            s, t = interval
            mass = mass * (2.0 * _safe_sinc_ratio(0.5 * (t - s), q)) ** 2
    return AuxiliaryMeasure(float(R), dirs, mass, Ks)


def high_pass(field: PeriodicField, R: float) -> PeriodicField:
    k1, k2, k3 = field.wavevectors()
    norm = np.sqrt(k1**2 + k2**2 + k3**2)
    return field.apply((norm > R).astype(float))


# ---------------------------------------------------------------------------
# scans


def measure_bounds_scan(fields: Iterable[PeriodicField], kappas: Sequence[float] = (0.05, 0.1, 0.2),
                        Rs: Sequence[float] = (math.pi, 2 * math.pi, 4 * math.pi), order: int = 24,
                        raise_on_violation: bool = True) -> dict:
    """Check ``int dn nu_n^R(|w.n| < kappa) <= 128 pi kappa`` and
    ``int dn nu_n^R(|w.n| >= kappa) <= 128 pi / (R kappa)^2`` on normalized fields.
    """
    quad = build_sphere_quadrature(order)
    rows = []
    for fi, f in enumerate(fields):
        g = f.normalized() if (f.L != 1.0 or (f.M and abs(f.M - 1.0) > 0)) else f
        for R in Rs:
            mu = auxiliary_measures(g, R)
            if len(mu):
                q = mu.wavevectors @ quad.nodes.T                  # (atoms, dirs)
                nu = mu.masses[:, None] * (2.0 * np.sin(q) / np.where(q == 0, 1.0, q)) ** 2
                nu = np.where(q == 0, 4.0 * mu.masses[:, None], nu)
                cosang = np.abs(mu.directions @ quad.nodes.T)
                nu_total = float(np.max(nu.sum(axis=0)))
            for kappa in kappas:
                if len(mu):
                    near = (nu * (cosang < kappa)).sum(axis=0) @ quad.weights
                    far = (nu * (cosang >= kappa)).sum(axis=0) @ quad.weights
                else:
                    near = far = 0.0
                    nu_total = 0.0
                b1 = 128 * math.pi * kappa
                b2 = 128 * math.pi / (R**2 * kappa**2)
                rows.append({"field": fi, "R": R, "kappa": kappa, "near": float(near), "near_bound": b1,
                             "far": float(far), "far_bound": b2, "near_margin": b1 - float(near),
                             "far_margin": b2 - float(far), "mu_total": mu.total,
                             "nu_max_total": nu_total})
    worst_near = min((r["near_margin"] for r in rows), default=math.inf)
    worst_far = min((r["far_margin"] for r in rows), default=math.inf)
    ok = worst_near >= -MEASURE_TOL and worst_far >= -MEASURE_TOL
    report = {"rows": rows, "worst_near_margin": worst_near, "worst_far_margin": worst_far,
              "max_nu_total": max((r["nu_max_total"] for r in rows), default=0.0), "passed": ok}
    if raise_on_violation and not ok:
        raise BoundViolated(f"measure bound violated: margins {worst_near:.3e}, {worst_far:.3e}")
    return report


def chain_constant(m: int) -> float:
    """``C_m = 8^2 4 pi m 2^(m-1)``."""
    return 64.0 * 4.0 * math.pi * m * 2 ** (m - 1)


def translation_energy(field: PeriodicField, h) -> float:
    """``int |phi(x) - phi(x + h)|^2 dx`` via the phase factor ``1 - exp(i k.h)``."""
    a = field.coefficients()
    a = np.where(field.nyquist_mask(), 0.0, a)
    k1, k2, k3 = field.wavevectors()
    ph = k1 * h[0] + k2 * h[1] + k3 * h[2]
    return float(field.volume * np.sum(np.abs(a) ** 2 * np.abs(1.0 - np.exp(1j * ph)) ** 2))


def line_translation_energy(field: PeriodicField, h, quad: SphereQuadrature) -> float:
    """``int dn int dx |L_n phi(x) - L_n phi(x + h)|^2`` spectrally."""
    a = field.coefficients()
    a = np.where(field.nyquist_mask(), 0.0, a)
    k1, k2, k3 = field.wavevectors()
    ph = k1 * h[0] + k2 * h[1] + k3 * h[2]
    base = np.abs(a) ** 2 * np.abs(1.0 - np.exp(1j * ph)) ** 2
    tot = 0.0
    for n, w in zip(quad.nodes, quad.weights):
        tot += w * float(np.sum(base * line_multiplier(field, n) ** 2))
    return field.volume * tot


def equiintegrability_scan(fields: Iterable[PeriodicField], ms: Sequence[int] = (1, 2, 3),
                           hs: Optional[Sequence] = None, order: int = 16,
                           raise_on_violation: bool = True) -> dict:
    """Chain inequality ``||T_m phi - tau_h T_m phi||^2 <= C_m int dn ||L_n phi - tau_h L_n phi||^2``.

    ``hs`` are translation vectors (default: ``|h|`` in {0.2, 0.1, 0.05}
    along a fixed oblique direction). Reports the ratio to ``C_m`` and to
    ``C_m^2`` and whether both sides decrease as ``|h|`` decreases.
    """
    quad = build_sphere_quadrature(order)
    if hs is None:
        d = np.array([1.0, 2.0, 2.0]) / 3.0
        hs = [r * d for r in (0.2, 0.1, 0.05)]
    hs = [np.asarray(h, dtype=float) for h in hs]
    rows = []
    monotone = True
    for fi, f in enumerate(fields):
        g = f.normalized() if (f.L != 1.0 or (f.M and abs(f.M - 1.0) > 0)) else f
        T = t_m_operators(g, list(ms), quad)
        rhs_vals = [line_translation_energy(g, h, quad) for h in hs]
        for m in ms:
            Cm = chain_constant(m)
            lhs_vals = [translation_energy(T[m], h) for h in hs]
            for h, lhs, rhs in zip(hs, lhs_vals, rhs_vals):
                rows.append({"field": fi, "m": m, "h": float(np.linalg.norm(h)), "lhs": lhs, "rhs": rhs,
                             "C_m": Cm, "margin": Cm * rhs - lhs, "margin_squared_form": Cm**2 * rhs - lhs,
                             "lhs_over_rhs": lhs / rhs if rhs > 0 else 0.0})
            order_idx = np.argsort([-np.linalg.norm(h) for h in hs])
            seq_l = [lhs_vals[i] for i in order_idx]
            seq_r = [rhs_vals[i] for i in order_idx]
            monotone &= all(b <= a * (1 + 1e-12) for a, b in zip(seq_r, seq_r[1:]))
            monotone &= all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(seq_l, seq_l[1:]))
    worst = min((r["margin"] for r in rows), default=math.inf)
    ok = worst >= 0.0 and monotone
    report = {"rows": rows, "worst_margin": worst,
              "max_lhs_over_rhs": max((r["lhs_over_rhs"] for r in rows), default=0.0),
              "monotone": bool(monotone), "passed": bool(ok)}
    if raise_on_violation and not ok:
        raise BoundViolated("equi-integrability chain inequality or monotonicity failed")
    return report


# ---------------------------------------------------------------------------
# random fields and report output


def random_band_limited(count: int, N: int = 64, L: float = 1.0, band: int = 8, M: float = 1.0,
                        seed: int = 0, decay: float = 1.0) -> list[PeriodicField]:
    """Real fields with integer modes ``|m| <= band``, rescaled so ``max|phi| = M``."""
    rng = np.random.default_rng(seed)
    m = np.fft.fftfreq(N, 1.0 / N)
    mm = np.sqrt(m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2)
    half = N // 2
    nyq = (np.abs(m[:, None, None]) == half) | (np.abs(m[None, :, None]) == half) | (
        np.abs(m[None, None, :]) == half)
    out = []
    for _ in range(count):
        c = (rng.normal(size=(N, N, N)) + 1j * rng.normal(size=(N, N, N))) / (1.0 + mm) ** decay
        c[(mm > band) | nyq] = 0.0
        c[0, 0, 0] = rng.normal()
        s = np.real(np.fft.ifftn(c))
        s *= M / np.max(np.abs(s))
        out.append(PeriodicField(L, s, M))
    return out


def rows_to_csv(rows: list, columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([f"{r[c]:.17g}" if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2)
