import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from radeq.errors import NegativeInput, NegativeProfile, NonIntegrableProfile, NonphysicalInput, OutOfRange
from radeq.geometry import build_sphere_quadrature
from radeq.physics import (
    NONDIM,
    AngularShape,
    BoundaryInflux,
    BoundarySpectrum,
    CoefficientLaw,
    FrequencyProfile,
    PhysicalConstants,
    RadiativeModel,
    ScatteringKernel,
    SpectralMap,
    F_inverse,
    F_map,
    T_from_u,
    boundary_G,
    build_frequency_quadrature,
    kernel_eval,
    kernel_matrix,
    kernel_normalize,
    planck,
    planck_zeta_integral,
    spectral_table,
    stefan_integral,
    u_from_T,
)

SIGMA = 2 * math.pi**4 / 15


def test_planck_examples():
    assert planck(3.0, 0.0) == 0.0
    assert planck(1.0, 1.0) == pytest.approx(2 / (math.e - 1), rel=1e-15)
    assert planck(1.0, 1.0) == pytest.approx(1.16395, abs=1e-5)
    assert planck(1.0, 2.0) > planck(1.0, 1.0)
    with pytest.raises(NonphysicalInput):
        planck(-1.0, 1.0)
    with pytest.raises(NonphysicalInput):
        planck(1.0, -1.0)


def test_planck_monotone_in_temperature():
    nu = np.geomspace(1e-3, 80, 60)[:, None]
    T = np.linspace(0.05, 6, 80)[None, :]
    B = planck(nu, T)
    assert np.all(np.diff(B, axis=1) > 0)


def test_zeta_integral_value():
    assert planck_zeta_integral() == pytest.approx(math.pi**4 / 15, rel=1e-13)
    assert math.pi**4 / 15 == pytest.approx(6.49394, abs=1e-5)


def test_stefan_law():
    assert NONDIM.sigma == pytest.approx(SIGMA, rel=1e-15)
    assert SIGMA == pytest.approx(12.9879, abs=1e-4)
    T = np.array([0.5, 1.0, 2.0, 4.0])
    np.testing.assert_allclose(stefan_integral(T) / T**4, SIGMA, rtol=1e-9)
    assert stefan_integral(0.0) == 0.0
    si = PhysicalConstants.codata()
    assert si.sigma * math.pi == pytest.approx(5.670374419e-8, rel=1e-9)


def test_u_T_round_trip():
    assert u_from_T(0.0) == 0.0 and T_from_u(0.0) == 0.0
    assert u_from_T(1.0) == pytest.approx(4 * math.pi * SIGMA)
    assert T_from_u(u_from_T(1.7)) == pytest.approx(1.7, abs=1e-12)
    with pytest.raises(NegativeInput):
        u_from_T(-1.0)
    with pytest.raises(NegativeInput):
        T_from_u(-1.0)


@pytest.mark.parametrize("T", [0.25, 0.5, 1.0, 2.0, 4.0])
def test_frequency_rule_against_adaptive_quadrature(T):
    fr = build_frequency_quadrature(4.0)
    num = float(fr.integrate(planck(fr.nodes, T)))
    ref = quad(lambda v: float(planck(v, T)), 0, np.inf, epsabs=0, epsrel=1e-13, limit=400)[0]
    assert num == pytest.approx(ref, rel=1e-9)


def test_F_map_grey_reduction_and_round_trip():
    m = RadiativeModel()
    # the default rule is tuned for T >= T_max / 16
    T = np.linspace(0.25, 3.9, 25)
    np.testing.assert_allclose(F_map(T, m), u_from_T(T), rtol=1e-9)
    mq = RadiativeModel(Q_a=FrequencyProfile("line", amplitude=2.0, center=3.0, width=0.7))
    assert float(F_inverse(F_map(2.3, mq), mq)) == pytest.approx(2.3, abs=1e-8)
    vals = F_map(T, mq)
    assert np.all(np.diff(vals) > 0)
    np.testing.assert_allclose(F_inverse(vals, mq), T, atol=1e-8)
    with pytest.raises(OutOfRange):
        F_inverse(1.01 * F_map(mq.T_max, mq), mq)


def test_F_map_exponential_profile_closed_form():
    # 4 pi int e^{-v} 2 v^3 / (e^v - 1) dv = 48 pi (zeta(4) - 1)
    m = RadiativeModel(Q_a=FrequencyProfile("exponential", scale=1.0))
    exact = 48 * math.pi * (math.pi**4 / 90 - 1)
    adaptive = 4 * math.pi * quad(lambda v: math.exp(-v) * float(planck(v, 1.0)), 0, np.inf, epsrel=1e-13)[0]
    assert adaptive == pytest.approx(exact, rel=1e-11)
    assert float(F_map(1.0, m)) == pytest.approx(exact, rel=1e-8)


def test_spectral_map_vectorized_shapes():
    m = RadiativeModel(Q_a=FrequencyProfile("exponential", scale=2.0))
    sm = SpectralMap.from_model(m, m.frequency_quadrature())
    T = np.array([[0.5, 1.0], [2.0, 3.0]])
    assert sm.F(T).shape == (2, 2)
    assert sm.emission(T).shape == (m.frequency_quadrature().size, 2, 2)
    tab = spectral_table(m, 1.0)
    assert tab.shape[1] == 4 and np.all(tab[:, 1] >= 0)


def test_kernels():
    q = build_sphere_quadrature(12)
    iso = kernel_normalize("isotropic")
    assert iso(0.3) == pytest.approx(1 / (4 * math.pi))
    for k in [kernel_normalize("linear", b=1.0), kernel_normalize("rayleigh"), kernel_normalize("hg", g=0.3)]:
        mass = kernel_eval(k, q.nodes[:, None, :], q.nodes[None, :, :]).T @ q.weights
        np.testing.assert_allclose(mass, 1.0, atol=1e-8 if k.kind != "hg" else 1e-3)
        K = kernel_eval(k, q.nodes[:, None, :], q.nodes[None, :, :])
        assert np.array_equal(K, K.T)
    Km = kernel_matrix(kernel_normalize("hg", g=0.6), q)
    np.testing.assert_allclose(Km.sum(axis=1), 1.0, atol=1e-14)
    with pytest.raises(NegativeProfile):
        ScatteringKernel("linear", b=1.5)


def test_hg_normalization_converges():
    k = kernel_normalize("hg", g=0.3)
    exact = 2 * math.pi * quad(lambda mu: float(k(mu)), -1, 1, epsabs=1e-14)[0]
    assert exact == pytest.approx(1.0, abs=1e-12)


def test_boundary_G_examples():
    q = build_sphere_quadrature(6)
    planck_in = BoundaryInflux(BoundarySpectrum("planck", T0=1.5))
    np.testing.assert_allclose(boundary_G(planck_in, q.nodes), SIGMA * 1.5**4, rtol=1e-10)
    zero = BoundaryInflux(BoundarySpectrum("zero"))
    assert np.all(boundary_G(zero, q.nodes) == 0)
    lin = BoundaryInflux(BoundarySpectrum("exponential", scale=1.0),
                         AngularShape("linear", direction=(0, 0, 1), offset=0.5, strength=0.5))
    np.testing.assert_allclose(boundary_G(lin, q.nodes), (1 + q.nodes[:, 2]) / 2, atol=1e-10)


def test_boundary_G_tail_check():
    wide = BoundaryInflux(BoundarySpectrum("exponential", scale=50.0))
    fr = build_frequency_quadrature(1.0)
    with pytest.raises(NonIntegrableProfile):
        boundary_G(wide, np.array([[0, 0, 1.0]]), freq=fr)


def test_coefficient_laws():
    law = CoefficientLaw("power", a=0.5, c=0.1, p=2.0)
    assert law.bounds(4.0) == pytest.approx((0.1, 8.1))
    rat = CoefficientLaw("rational", a=1.0, b=2.0, c=0.5)
    assert rat(0.0) == pytest.approx(1.0)
    assert rat.bounds(4.0)[1] == pytest.approx(3.0)
    with pytest.raises(NonphysicalInput):
        CoefficientLaw.constant(-1.0)
    with pytest.raises(NonphysicalInput):
        RadiativeModel(alpha_a=CoefficientLaw("power", a=1.0, c=0.0, p=1.0))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 3.9))
def test_F_inverse_property(T):
    m = RadiativeModel(Q_a=FrequencyProfile("line", amplitude=1.0, center=2.0, width=0.5))
    assert float(F_inverse(F_map(T, m), m)) == pytest.approx(T, abs=1e-8)
