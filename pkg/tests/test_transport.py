import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad

from radeq.errors import EpsilonExceedsGrid, SegmentLeavesDomain
from radeq.fields import ScalarField
from radeq.geometry import ConvexDomain, exit_lengths
from radeq.physics import (
    AngularShape,
    BoundaryInflux,
    BoundarySpectrum,
    CoefficientLaw,
    FrequencyProfile,
    RadiativeModel,
    F_map,
    planck,
    u_from_T,
)
from radeq.transport import (
    FOUR_PI,
    Discretization,
    attenuation,
    boundary_operator_grey,
    boundary_operator_pseudo,
    bulk_operator_grey,
    bulk_operator_pseudo,
    flux_and_divergence,
    mollify,
    optical_depth,
    reconstruct_intensity,
)

BALL = ConvexDomain.ball(1.0)
SIGMA = 2 * math.pi**4 / 15


@pytest.fixture(scope="module")
def disc():
    return Discretization.build(BALL, n=21, sphere_order=8)


def planck_model(T0=1.0, **kw):
    return RadiativeModel(boundary=BoundaryInflux(BoundarySpectrum("planck", T0=T0)), **kw)


# optical depth and attenuation


def test_optical_depth_examples(disc):
    f = disc.to_field(np.full(disc.n_points, 2.5))
    assert optical_depth(f, [-0.3, 0.1, 0.0], [0.4, 0.1, 0.0]) == pytest.approx(2.5 * 0.7, abs=1e-10)
    assert optical_depth(f, [0.2, 0.2, 0.2], [0.2, 0.2, 0.2]) == 0.0
    with pytest.raises(SegmentLeavesDomain):
        optical_depth(f, [0, 0, 0], [1.5, 0, 0], domain=BALL)


def test_optical_depth_quadratic_field_converges_second_order():
    errs = []
    for n in (21, 41, 81):
        d = Discretization.build(BALL, n=n, sphere_order=2)
        f = d.to_field(np.sum(d.points**2, axis=1))
        errs.append(abs(optical_depth(f, [0, 0, 0], [1, 0, 0], step=d.grid.spacing / 4) - 1 / 3))
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_attenuation_examples(disc):
    one = disc.to_field(np.ones(disc.n_points))
    assert attenuation(one, [0.1, 0, 0], [0.1, 0, 0]) == 1.0
    assert attenuation(one, [-0.5, 0, 0], [0.5, 0, 0]) == pytest.approx(math.exp(-1), rel=1e-10)
    assert attenuation(one, [-0.5, 0, 0], [0.5, 0, 0], Q=0.0) == 1.0


# Grey operators


def test_bulk_constant_fields_center(disc):
    m = RadiativeModel(alpha_a=CoefficientLaw.constant(0.7))
    u0 = 3.0
    val = bulk_operator_grey(np.full(disc.n_points, u0), m, disc, points=[0, 0, 0])
    assert val[0] == pytest.approx(u0 * (1 - math.exp(-0.7)), rel=1e-13)
    assert bulk_operator_grey(np.full(disc.n_points, u0), m, disc, gamma=np.zeros(disc.n_points)).max() == 0


def test_bulk_constant_fields_off_center(disc):
    m = RadiativeModel(alpha_a=CoefficientLaw.constant(1.3))
    x = np.array([[0.25, -0.1, 0.4]])
    s = exit_lengths(BALL, x[:, None, :], disc.quad.nodes[None])[0]
    expect = 2.0 / FOUR_PI * disc.quad.integrate(1 - np.exp(-1.3 * s))
    assert bulk_operator_grey(np.full(disc.n_points, 2.0), m, disc, points=x)[0] == pytest.approx(expect,
                                                                                                  rel=1e-13)


def _linear_field_reference():
    x = np.array([0.0, 0.0, 0.3])

    def inner(phi, mu):
        st_ = math.sqrt(1 - mu * mu)
        n = np.array([st_ * math.cos(phi), st_ * math.sin(phi), mu])
        b = x @ n
        s = b + math.sqrt(b * b - (x @ x - 1))
        # int_0^s (1 + x_z - r n_z) e^{-r} dr
        return (1 + x[2]) * (1 - math.exp(-s)) - n[2] * (1 - math.exp(-s) * (1 + s))

    return dblquad(inner, -1, 1, 0, 2 * math.pi, epsabs=1e-13, epsrel=1e-12)[0] / FOUR_PI


def test_bulk_linear_field_matches_adaptive_reference():
    ref = _linear_field_reference()
    assert ref == pytest.approx(0.7630934730009233, rel=1e-12)
    m = RadiativeModel()
    errs = []
    for n in (21, 41, 61):
        d = Discretization.build(BALL, n=n, sphere_order=16)
        d = Discretization(BALL, d.grid, d.quad, d.grid.spacing / 4)
        v = bulk_operator_grey(1 + d.points[:, 2], m, d, points=[0, 0, 0.3], gamma=np.ones(d.n_points))[0]
        errs.append(abs(v - ref) / ref)
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 1e-4


def test_boundary_operator_examples(disc):
    g = 0.8
    m = RadiativeModel(boundary=BoundaryInflux(BoundarySpectrum("exponential", amplitude=g)))
    u = np.ones(disc.n_points)
    c = boundary_operator_grey(u, m, disc, gamma=np.zeros(disc.n_points))
    np.testing.assert_allclose(c, FOUR_PI * g, rtol=1e-12)
    z = RadiativeModel(boundary=BoundaryInflux(BoundarySpectrum("zero")))
    assert np.all(boundary_operator_grey(u, z, disc) == 0)


@pytest.mark.parametrize("alpha", [CoefficientLaw.constant(1.0), CoefficientLaw("power", a=0.5, c=0.2, p=1.5)])
def test_planckian_closure_grey(disc, alpha):
    m = planck_model(1.2, alpha_a=alpha)
    u0 = u_from_T(1.2)
    u = np.full(disc.n_points, u0)
    rhs = bulk_operator_grey(u, m, disc) + boundary_operator_grey(u, m, disc)
    assert np.max(np.abs(rhs - u0)) / u0 < 1e-10


def test_pseudo_reduces_to_grey(disc):
    m = planck_model(1.0, alpha_a=CoefficientLaw("power", a=0.5, c=0.2, p=1.0))
    d = Discretization(BALL, disc.grid, disc.quad, disc.step, m.frequency_quadrature())
    rng = np.random.default_rng(4)
    u = u_from_T(rng.uniform(0.5, 1.5, d.n_points))
    bg, bp = bulk_operator_grey(u, m, d), bulk_operator_pseudo(u, m, d)
    cg, cp = boundary_operator_grey(u, m, d), boundary_operator_pseudo(u, m, d)
    assert np.max(np.abs(bg - bp)) / np.max(bg) < 1e-10
    assert np.max(np.abs(cg - cp)) / np.max(cg) < 1e-10


def test_pseudo_planckian_closure(disc):
    m = planck_model(1.0, Q_a=FrequencyProfile("line", amplitude=1.5, center=2.0, width=0.6))
    d = Discretization(BALL, disc.grid, disc.quad, disc.step, m.frequency_quadrature())
    u0 = float(F_map(1.0, m, d.freq))
    u = np.full(d.n_points, u0)
    rhs = bulk_operator_pseudo(u, m, d) + boundary_operator_pseudo(u, m, d)
    assert np.max(np.abs(rhs - u0)) / u0 < 1e-10


def test_pseudo_center_matches_adaptive_reference(disc):
    m = RadiativeModel(Q_a=FrequencyProfile("exponential", scale=1.0),
                       boundary=BoundaryInflux(BoundarySpectrum("zero")))
    ref = 4 * math.pi * quad(lambda v: math.exp(-v) * float(planck(v, 1.0)) * (1 - math.exp(-math.exp(-v))),
                             0, np.inf, epsrel=1e-13)[0]
    assert ref == pytest.approx(2.5042078275546467, rel=1e-12)
    d = Discretization(BALL, disc.grid, disc.quad, disc.step, m.frequency_quadrature())
    u0 = float(F_map(1.0, m, d.freq))
    v = bulk_operator_pseudo(np.full(d.n_points, u0), m, d, points=[0, 0, 0])[0]
    assert v == pytest.approx(ref, rel=1e-4)


# invariants on random fields


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, 3.0))
def test_contraction_and_monotonicity(disc, seed, amax):
    rng = np.random.default_rng(seed)
    gamma = rng.uniform(0.05, amax, disc.n_points)
    u1 = rng.uniform(0, 5, disc.n_points)
    u2 = u1 + rng.uniform(0, 2, disc.n_points)
    m = RadiativeModel()
    b1 = bulk_operator_grey(u1, m, disc, gamma=gamma)
    b2 = bulk_operator_grey(u2, m, disc, gamma=gamma)
    assert b1.max() <= (1 - math.exp(-gamma.max() * BALL.diameter)) * u1.max() + 1e-12
    assert np.all(b1 >= 0) and np.all(b1 <= b2 + 1e-12)
    mb = RadiativeModel(boundary=BoundaryInflux(BoundarySpectrum("exponential"),
                                                AngularShape("beam", direction=(0.2, 0.3, 0.9), kappa=4.0)))
    c = boundary_operator_grey(u1, mb, disc, gamma=gamma)
    assert np.all(c >= 0) and c.max() <= FOUR_PI * mb.G_sup() + 1e-12


# mollifier


def test_mollifier(disc):
    f = disc.to_field(np.full(disc.n_points, 2.0))
    assert mollify(f, 0.0) is f
    h = disc.grid.spacing
    with pytest.warns(EpsilonExceedsGrid):
        assert mollify(f, 0.5 * h) is f
    r = mollify(f, 2 * h, "renormalized")
    np.testing.assert_allclose(r.inside(), 2.0, rtol=1e-14)
    z = mollify(f, 2 * h, "zero")
    # constant in the eroded interior
    deep = BALL.level(z.grid.nodes()) < (1 - 2.5 * h) ** 2 - 1
    np.testing.assert_allclose(z.values[deep], 2.0, rtol=1e-13)
    assert z.mask.sum() >= f.mask.sum()
    rng = np.random.default_rng(0)
    g = disc.to_field(rng.uniform(0, 3, disc.n_points))
    for ext in ("zero", "renormalized"):
        out = mollify(g, 3 * h, ext)
        assert out.values.max() <= g.values.max() + 1e-12 and out.values.min() >= 0


# intensity and flux


def test_reconstruct_intensity(disc):
    nu = 1.3
    transparent = RadiativeModel(alpha_a=CoefficientLaw.constant(0.0),
                                 boundary=BoundaryInflux(BoundarySpectrum("exponential", scale=2.0)))
    u = np.full(disc.n_points, 5.0)
    I = reconstruct_intensity(u, transparent, disc, [0.1, 0.2, 0.0], [0, 0, 1], nu)
    assert I == pytest.approx(math.exp(-nu / 2.0), rel=1e-14)
    m = planck_model(1.4, alpha_a=CoefficientLaw.constant(0.9))
    u0 = u_from_T(1.4)
    I = reconstruct_intensity(np.full(disc.n_points, u0), m, disc, [0.3, -0.2, 0.1], [0.6, 0.0, 0.8], nu)
    assert I == pytest.approx(float(planck(nu, 1.4)), rel=1e-12)
    dark = RadiativeModel(alpha_a=CoefficientLaw.constant(0.9), boundary=BoundaryInflux(BoundarySpectrum("zero")))
    I = reconstruct_intensity(np.full(disc.n_points, u0), dark, disc, [0, 0, 0], [0, 1, 0], nu)
    assert I == pytest.approx(float(planck(nu, 1.4)) * (1 - math.exp(-0.9)), rel=1e-12)


def test_flux_isothermal_is_zero(disc):
    m = planck_model(1.0)
    res = flux_and_divergence(np.full(disc.n_points, u_from_T(1.0)), m, disc)
    assert np.max(np.abs(res.flux)) < 1e-10 * u_from_T(1.0)
    assert res.residual < 1e-10


def test_flux_free_streaming(disc):
    d = np.array([0.0, 0.0, 1.0])
    m = RadiativeModel(alpha_a=CoefficientLaw.constant(1e-12),
                       boundary=BoundaryInflux(BoundarySpectrum("exponential"),
                                               AngularShape("linear", direction=d, offset=1.0, strength=1.0)))
    res = flux_and_divergence(np.zeros(disc.n_points), m, disc)
    # int n (1 + n.d) dn = 4 pi d / 3
    np.testing.assert_allclose(res.flux, np.tile(4 * math.pi / 3 * d, (disc.n_points, 1)), atol=1e-9)
    assert np.nanmax(np.abs(res.divergence)) < 1e-8


def test_field_zero_outside_mask(disc):
    f = disc.to_field(np.ones(disc.n_points))
    assert np.all(f.values[~f.mask] == 0)
    assert isinstance(f, ScalarField)
