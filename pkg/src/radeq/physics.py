"""Blackbody radiometry, coefficient laws, frequency profiles and scattering kernels.

Units are nondimensional (h = k = c = 1) unless CODATA constants are chosen.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    NegativeInput,
    NegativeProfile,
    NonIntegrableProfile,
    NonphysicalInput,
    OutOfRange,
)
from .geometry import SphereQuadrature

# ---------------------------------------------------------------------------
# constants and Planck function


@dataclass(frozen=True)
class PhysicalConstants:
    h: float = 1.0
    k: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if min(self.h, self.k, self.c) <= 0:
            raise NonphysicalInput("physical constants must be positive")

    @classmethod
    def codata(cls) -> "PhysicalConstants":
        return cls(h=6.62607015e-34, k=1.380649e-23, c=299792458.0)

    @property
    def sigma(self) -> float:
        """Stefan-Boltzmann constant 2 pi^4 k^4 / (15 h^3 c^2)."""
        return 2.0 * math.pi**4 * self.k**4 / (15.0 * self.h**3 * self.c**2)


NONDIM = PhysicalConstants()


def planck(nu, T, const: PhysicalConstants = NONDIM):
    """Spectral radiance ``B_nu(T) = 2 h nu^3 / c^2 / (exp(h nu / k T) - 1)``.

    Zero where ``T == 0``. Broadcasts over ``nu`` and ``T``.
    """
    nu = np.asarray(nu, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(nu < 0) or np.any(T < 0):
        raise NonphysicalInput("frequency and temperature must be nonnegative")
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        x = const.h * nu / (const.k * T)
        b = 2.0 * const.h * nu**3 / const.c**2 / np.expm1(x)
    b = np.where((T > 0) & (nu > 0) & np.isfinite(b), b, 0.0)
    return b if b.ndim else float(b)


def _planck_zeta(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = z**3 / np.expm1(z)
    return np.where(z > 0, np.nan_to_num(r, nan=0.0, posinf=0.0), 0.0)


def composite_gauss_legendre(breaks, n_per_panel: int):
    """Nodes/weights of composite Gauss-Legendre over consecutive ``breaks``."""
    x, w = np.polynomial.legendre.leggauss(n_per_panel)
    breaks = np.asarray(breaks, dtype=float)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


@functools.lru_cache(maxsize=None)
def planck_zeta_integral(zeta_max: float = 120.0, panels: int = 60, n: int = 16) -> float:
    """Numerical value of the dimensionless integral of z^3/(e^z - 1) over [0, zeta_max]."""
    nodes, weights = composite_gauss_legendre(np.linspace(0.0, zeta_max, panels + 1), n)
    return float(np.sum(weights * _planck_zeta(nodes)))


def stefan_integral(T, const: PhysicalConstants = NONDIM):
    """Total emission ``int B_nu(T) d nu`` by quadrature in ``zeta = h nu / k T``."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise NonphysicalInput("temperature must be nonnegative")
    scale = 2.0 * const.k**4 / (const.h**3 * const.c**2)
    out = scale * planck_zeta_integral() * T**4
    return out if out.ndim else float(out)


def u_from_T(T, const: PhysicalConstants = NONDIM):
    """Grey change of variables ``u = 4 pi sigma T^4``."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise NegativeInput("temperature must be nonnegative")
    out = 4.0 * np.pi * const.sigma * T**4
    return out if out.ndim else float(out)


def T_from_u(u, const: PhysicalConstants = NONDIM):
    """Inverse of :func:`u_from_T`."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise NegativeInput("u must be nonnegative")
    out = (u / (4.0 * np.pi * const.sigma)) ** 0.25
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# coefficient laws alpha(T)


@dataclass(frozen=True)
class CoefficientLaw:
    """Temperature-dependent coefficient from a built-in family.

    kind ``constant``: ``value``.
    kind ``power``: ``a * T**p + c`` with ``a, c >= 0``.
    kind ``rational``: ``(a + b T) / (1 + c T)`` with ``a, b, c >= 0``.

    Bounds are declared over ``[0, T_max]``.
    """

    kind: str = "constant"
    value: float = 0.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "power", "rational"):
            raise ValueError(f"unknown coefficient family {self.kind!r}")
        if self.kind == "constant" and self.value < 0:
            raise NonphysicalInput("coefficients must be nonnegative")
        if self.kind in ("power", "rational") and min(self.a, self.b, self.c) < 0:
            raise NonphysicalInput("coefficient parameters must be nonnegative")
        if self.kind == "power" and self.p < 0:
            raise NonphysicalInput("power-law exponent must be nonnegative")

    @classmethod
    def constant(cls, value: float) -> "CoefficientLaw":
        return cls(kind="constant", value=float(value))

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        if self.kind == "constant":
            out = np.full(T.shape, self.value)
        elif self.kind == "power":
            out = self.a * np.power(T, self.p) + self.c
        else:
            out = (self.a + self.b * T) / (1.0 + self.c * T)
        return out if out.ndim else float(out)

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "power":
            return self.a == 0 or self.p == 0
        return self.b == self.a * self.c

    def bounds(self, T_max: float) -> tuple[float, float]:
        """Declared ``(min, max)`` over ``[0, T_max]`` (all families are monotone)."""
        lo, hi = float(self(0.0)), float(self(T_max))
        return min(lo, hi), max(lo, hi)


# ---------------------------------------------------------------------------
# frequency profiles Q(nu) and spectral boundary data


@dataclass(frozen=True)
class FrequencyProfile:
    """Positive bounded profile of frequency.

    kind ``constant``: ``value``;
    kind ``exponential``: ``value * exp(-nu / scale)``;
    kind ``line``: ``value * (1 + amplitude * exp(-(nu - center)^2 / (2 width^2)))``.
    """

    kind: str = "constant"
    value: float = 1.0
    scale: float = 1.0
    amplitude: float = 0.0
    center: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "line"):
            raise ValueError(f"unknown frequency profile {self.kind!r}")
        if self.value <= 0 or self.scale <= 0 or self.width <= 0 or self.amplitude < 0:
            raise NonphysicalInput("frequency profile parameters must be positive")

    def __call__(self, nu):
        nu = np.asarray(nu, dtype=float)
        if self.kind == "constant":
            out = np.full(nu.shape, self.value)
        elif self.kind == "exponential":
            out = self.value * np.exp(-nu / self.scale)
        else:
            out = self.value * (1.0 + self.amplitude * np.exp(-((nu - self.center) ** 2) / (2 * self.width**2)))
        return out if out.ndim else float(out)

    @property
    def is_unit(self) -> bool:
        return self.kind == "constant" and self.value == 1.0

    @property
    def sup(self) -> float:
        return self.value * (1.0 + self.amplitude if self.kind == "line" else 1.0)


@dataclass(frozen=True)
class FrequencyQuadrature:
    """Composite Gauss-Legendre rule in ``zeta = h nu / (k T_ref)`` mapped back to ``nu``."""

    nodes: np.ndarray
    weights: np.ndarray
    T_ref: float
    nu_max: float

    @property
    def size(self) -> int:
        return len(self.nodes)

    def integrate(self, values) -> np.ndarray:
        """Weighted sum over the first axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values, dtype=float), axes=(0, 0))


def build_frequency_quadrature(T_ref: float, panels: int = 12, per_panel: int = 8,
                               zeta_max: float = 42.0,
                               const: PhysicalConstants = NONDIM) -> FrequencyQuadrature:
    """Frequency rule whose Planck tail at ``T_ref`` is below ~1e-12.

    Panels are graded cubically toward zero, where the integrand of cooler
    temperatures concentrates; the default rule resolves the Stefan integral
    to ~1e-10 down to ``T_ref / 16``.
    """
    if T_ref <= 0:
        raise NonphysicalInput("reference temperature must be positive")
    breaks = zeta_max * (np.arange(panels + 1) / panels) ** 3
    z, w = composite_gauss_legendre(breaks, per_panel)
    scale = const.k * T_ref / const.h
    return FrequencyQuadrature(nodes=z * scale, weights=w * scale, T_ref=float(T_ref),
                               nu_max=float(zeta_max * scale))


@dataclass(frozen=True)
class AngularShape:
    """Directional factor of the boundary influx.

    kind ``isotropic``: 1;
    kind ``linear``: ``offset + strength * n.d``;
    kind ``beam``: ``exp(kappa (n.d - 1))``.
    """

    kind: str = "isotropic"
    direction: tuple = (0.0, 0.0, 1.0)
    offset: float = 1.0
    strength: float = 0.0
    kappa: float = 10.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        d = d / np.linalg.norm(d)
        object.__setattr__(self, "direction", tuple(float(v) for v in d))
        if self.kind not in ("isotropic", "linear", "beam"):
            raise ValueError(f"unknown angular shape {self.kind!r}")
        if self.kind == "linear" and self.offset < abs(self.strength):
            raise NegativeProfile("linear angular factor must stay nonnegative")

    def __call__(self, n) -> np.ndarray:
        n = np.atleast_2d(np.asarray(n, dtype=float))
        mu = n @ np.asarray(self.direction)
        if self.kind == "isotropic":
            return np.ones(len(n))
        if self.kind == "linear":
            return self.offset + self.strength * mu
        return np.exp(self.kappa * (mu - 1.0))

    @property
    def sup(self) -> float:
        if self.kind == "linear":
            return self.offset + abs(self.strength)
        return 1.0

    def l1_norm(self) -> float:
        """Exact integral over the sphere."""
        if self.kind == "isotropic":
            return 4.0 * np.pi
        if self.kind == "linear":
            return 4.0 * np.pi * self.offset
        k = self.kappa
        return 2.0 * np.pi * (-np.expm1(-2.0 * k)) / k


@dataclass(frozen=True)
class BoundarySpectrum:
    """Spectral factor of the influx.

    kind ``zero``; kind ``planck``: ``B_nu(T0)``;
    kind ``exponential``: ``amplitude * exp(-nu / scale)``.
    """

    kind: str = "planck"
    T0: float = 1.0
    amplitude: float = 1.0
    scale: float = 1.0

    def __call__(self, nu, const: PhysicalConstants = NONDIM):
        nu = np.asarray(nu, dtype=float)
        if self.kind == "zero":
            return np.zeros(nu.shape)
        if self.kind == "planck":
            return np.asarray(planck(nu, self.T0, const))
        return self.amplitude * np.exp(-nu / self.scale)


@dataclass(frozen=True)
class BoundaryInflux:
    """Separable spectral influx ``g_nu(n) = spectrum(nu) * shape(n)``."""

    spectrum: BoundarySpectrum = field(default_factory=BoundarySpectrum)
    shape: AngularShape = field(default_factory=AngularShape)

    def g(self, nu, n, const: PhysicalConstants = NONDIM) -> np.ndarray:
        """Array of shape ``(len(nu), len(n))``."""
        s = np.atleast_1d(self.spectrum(nu, const))
        return np.outer(s, self.shape(n))


def spectral_total(influx: BoundaryInflux, freq: Optional[FrequencyQuadrature] = None,
                   const: PhysicalConstants = NONDIM, tol: float = 1e-10) -> float:
    """``int spectrum(nu) d nu`` by frequency quadrature with a tail check.

    The tail beyond the last panel is estimated as ``g(nu_max) * nu_scale``
    (exact for an exponential tail); it must stay below ``tol`` relative.
    """
    sp = influx.spectrum
    if sp.kind == "zero":
        return 0.0
    if sp.kind == "planck":
        nu_scale = const.k * sp.T0 / const.h
    else:
        nu_scale = sp.scale
    if freq is None:
        freq = build_frequency_quadrature(nu_scale * const.h / const.k, const=const)
    total = float(np.sum(freq.weights * np.atleast_1d(sp(freq.nodes, const))))
    tail = float(np.atleast_1d(sp(np.array([freq.nu_max]), const))[0]) * nu_scale
    if total > 0 and tail > tol * total:
        raise NonIntegrableProfile(f"frequency tail estimate {tail:.3e} exceeds tolerance")
    return total


def boundary_G(influx: BoundaryInflux, n, freq: Optional[FrequencyQuadrature] = None,
               const: PhysicalConstants = NONDIM, tol: float = 1e-10) -> np.ndarray:
    """Frequency-integrated influx ``G(n)`` at the directions ``n``."""
    return spectral_total(influx, freq, const, tol) * influx.shape(n)


# ---------------------------------------------------------------------------
# scattering kernel


@dataclass(frozen=True)
class ScatteringKernel:
    """Rotation-invariant phase function ``K(n, n') = profile(n . n') / Z``.

    kind ``isotropic``; ``linear`` (``1 + b mu``); ``rayleigh`` (``1 + mu^2``);
    ``hg`` (Henyey-Greenstein with asymmetry ``g``).
    """

    kind: str = "isotropic"
    b: float = 0.0
    g: float = 0.0
    norm: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.kind not in ("isotropic", "linear", "rayleigh", "hg"):
            raise ValueError(f"unknown kernel profile {self.kind!r}")
        if self.kind == "hg" and not -1 < self.g < 1:
            raise NegativeProfile("Henyey-Greenstein asymmetry must be in (-1, 1)")
        mu = np.linspace(-1.0, 1.0, 2001)
        if np.any(self.profile(mu) < 0):
            raise NegativeProfile("kernel profile must be nonnegative on [-1, 1]")
        if self.norm == 0.0:
            object.__setattr__(self, "norm", self._mass())

    def profile(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind == "isotropic":
            return np.ones_like(mu)
        if self.kind == "linear":
            return 1.0 + self.b * mu
        if self.kind == "rayleigh":
            return 1.0 + mu * mu
        g = self.g
        return (1.0 - g * g) / (1.0 + g * g - 2.0 * g * mu) ** 1.5

    def _mass(self) -> float:
        # closed forms of 2 pi int_{-1}^{1} profile(mu) d mu
        if self.kind in ("isotropic", "linear"):
            return 4.0 * np.pi
        if self.kind == "rayleigh":
            return 2.0 * np.pi * (2.0 + 2.0 / 3.0)
        return 4.0 * np.pi

    def __call__(self, mu):
        return self.profile(mu) / self.norm

    @property
    def is_isotropic(self) -> bool:
        return self.kind == "isotropic" or (self.kind == "linear" and self.b == 0.0) or (
            self.kind == "hg" and self.g == 0.0)


def kernel_normalize(kind: str = "isotropic", **params) -> ScatteringKernel:
    """Build a normalized kernel from a named profile."""
    return ScatteringKernel(kind=kind, **params)


def kernel_eval(kernel: ScatteringKernel, n, n_prime):
    """``K(n, n')`` for unit vectors (broadcasting over leading axes)."""
    mu = np.sum(np.asarray(n, dtype=float) * np.asarray(n_prime, dtype=float), axis=-1)
    return kernel(np.clip(mu, -1.0, 1.0))


def kernel_matrix(kernel: ScatteringKernel, quad: SphereQuadrature) -> np.ndarray:
    """Row-stochastic matrix ``K(n_i, n_j) w_j`` with rows rescaled to sum to one."""
    mu = np.clip(quad.nodes @ quad.nodes.T, -1.0, 1.0)
    M = kernel(mu) * quad.weights[None, :]
    return M / M.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# radiative model


@dataclass(frozen=True)
class RadiativeModel:
    """Coefficients, spectral profiles, kernel and boundary data of a problem."""

    alpha_a: CoefficientLaw = field(default_factory=lambda: CoefficientLaw.constant(1.0))
    alpha_s: CoefficientLaw = field(default_factory=lambda: CoefficientLaw.constant(0.0))
    Q_a: FrequencyProfile = field(default_factory=FrequencyProfile)
    Q_s: FrequencyProfile = field(default_factory=FrequencyProfile)
    kernel: ScatteringKernel = field(default_factory=ScatteringKernel)
    boundary: BoundaryInflux = field(default_factory=BoundaryInflux)
    T_max: float = 4.0
    constants: PhysicalConstants = NONDIM

    def __post_init__(self):
        lo, _ = self.alpha_a.bounds(self.T_max)
        if lo <= 0 and not (self.alpha_a.kind == "constant" and self.alpha_a.value == 0):
            raise NonphysicalInput("absorption coefficient must be strictly positive")

    @property
    def alpha_a_bounds(self) -> tuple[float, float]:
        return self.alpha_a.bounds(self.T_max)

    @property
    def alpha_s_bounds(self) -> tuple[float, float]:
        return self.alpha_s.bounds(self.T_max)

    @property
    def alpha_min(self) -> float:
        return self.alpha_a_bounds[0]

    @property
    def alpha_max(self) -> float:
        return self.alpha_a_bounds[1]

    @property
    def is_grey_spectrum(self) -> bool:
        return self.Q_a.is_unit and self.Q_s.is_unit

    def frequency_quadrature(self, panels: int = 12, per_panel: int = 8) -> FrequencyQuadrature:
        return build_frequency_quadrature(self.T_max, panels, per_panel, const=self.constants)

    def G(self, n, freq: Optional[FrequencyQuadrature] = None) -> np.ndarray:
        return boundary_G(self.boundary, n, freq=freq, const=self.constants)

    def G_sup(self, freq: Optional[FrequencyQuadrature] = None) -> float:
        return spectral_total(self.boundary, freq, self.constants) * self.boundary.shape.sup

    def G_l1(self, freq: Optional[FrequencyQuadrature] = None) -> float:
        return spectral_total(self.boundary, freq, self.constants) * self.boundary.shape.l1_norm()


# ---------------------------------------------------------------------------
# pseudo-Grey map u = F(T) = 4 pi sum_q w_q Q_a(nu_q) B_q(T)


@dataclass(frozen=True)
class SpectralMap:
    """Discrete ``F(T) = 4 pi int Q_a(nu) B_nu(T) d nu`` and its inverse."""

    freq: FrequencyQuadrature
    Q: np.ndarray
    T_max: float
    const: PhysicalConstants = NONDIM

    @classmethod
    def from_model(cls, model: RadiativeModel, freq: FrequencyQuadrature) -> "SpectralMap":
        return cls(freq=freq, Q=np.asarray(model.Q_a(freq.nodes), dtype=float) * np.ones(freq.size),
                   T_max=model.T_max, const=model.constants)

    def emission(self, T) -> np.ndarray:
        """``B_q(T)`` at every frequency node; shape ``(Nq,) + T.shape``."""
        T = np.asarray(T, dtype=float)
        return np.asarray(planck(self.freq.nodes.reshape((-1,) + (1,) * T.ndim), T[None, ...], self.const))

    def F(self, T):
        T = np.asarray(T, dtype=float)
        if np.any(T < 0):
            raise NegativeInput("temperature must be nonnegative")
        wq = (self.freq.weights * self.Q).reshape((-1,) + (1,) * T.ndim)
        out = 4.0 * np.pi * np.sum(wq * self.emission(T), axis=0)
        return out if out.ndim else float(out)

    def F_inverse(self, u, rtol: float = 1e-13):
        """Bracketing bisection on ``[0, T_max]`` (vectorized)."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise NegativeInput("u must be nonnegative")
        top = self.F(self.T_max)
        if np.any(u > top * (1 + 1e-12)):
            raise OutOfRange(f"u exceeds F(T_max) = {top:.6g}")
        lo = np.zeros(u.shape)
        hi = np.full(u.shape, float(self.T_max))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.F(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= rtol * np.maximum(hi, 1e-300)):
                break
        out = np.where(u > 0, 0.5 * (lo + hi), 0.0)
        return out if out.ndim else float(out)


def F_map(T, model: RadiativeModel, freq: Optional[FrequencyQuadrature] = None):
    freq = freq or model.frequency_quadrature()
    return SpectralMap.from_model(model, freq).F(T)


def F_inverse(u, model: RadiativeModel, freq: Optional[FrequencyQuadrature] = None):
    freq = freq or model.frequency_quadrature()
    return SpectralMap.from_model(model, freq).F_inverse(u)


def spectral_table(model: RadiativeModel, T: float,
                   freq: Optional[FrequencyQuadrature] = None) -> np.ndarray:
    """Columns ``(nu, B_nu(T), Q_a, Q_s)`` at the frequency nodes."""
    freq = freq or model.frequency_quadrature()
    nu = freq.nodes
    return np.column_stack([nu, planck(nu, T, model.constants), np.broadcast_to(model.Q_a(nu), nu.shape),
                            np.broadcast_to(model.Q_s(nu), nu.shape)])


CoefficientFn = Callable[[np.ndarray], np.ndarray]
