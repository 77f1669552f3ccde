import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radeq.errors import MaxPrincipleViolation, TailToleranceUnreachable
from radeq.geometry import ConvexDomain
from radeq.physics import (
    AngularShape,
    BoundaryInflux,
    BoundarySpectrum,
    CoefficientLaw,
    RadiativeModel,
    ScatteringKernel,
    u_from_T,
)
from radeq.scattering import (
    AngularField,
    CollisionSeriesConfig,
    duhamel_orders,
    full_rhs,
    full_rhs_pseudo,
    h_field,
    reconstruct_intensity_scatter,
    scatter_step,
    theta_bound,
)
from radeq.transport import FOUR_PI, Discretization, boundary_operator_grey, bulk_operator_grey, reconstruct_intensity
from radeq.physics import planck

BALL = ConvexDomain.ball(1.0)
TIGHT = CollisionSeriesConfig(tail_tolerance=1e-12)


@pytest.fixture(scope="module")
def disc():
    # odd n puts a node at the center
    return Discretization.build(BALL, n=17, sphere_order=8)


def beam_model(**kw):
    return RadiativeModel(boundary=BoundaryInflux(BoundarySpectrum("exponential", scale=1.5),
                                                  AngularShape("beam", direction=(0.3, 0.1, 0.95), kappa=3.0)),
                          **kw)


def test_theta_bound():
    m = RadiativeModel(alpha_a=CoefficientLaw.constant(0.4), alpha_s=CoefficientLaw.constant(0.6))
    assert theta_bound(m, BALL) == pytest.approx(1 - math.exp(-2.0))


def test_no_scattering_collapses_to_absorption(disc):
    m = beam_model(alpha_a=CoefficientLaw("power", a=0.5, c=0.3, p=1.0))
    u = u_from_T(np.random.default_rng(1).uniform(0.3, 1.5, disc.n_points))
    full = full_rhs(u, m, disc, TIGHT).rhs
    ref = bulk_operator_grey(u, m, disc) + boundary_operator_grey(u, m, disc)
    assert np.max(np.abs(full - ref)) / np.max(ref) < 1e-9


def test_scatter_of_constant_at_center(disc):
    a_a, a_s = 0.3, 0.7
    m = RadiativeModel(alpha_a=CoefficientLaw.constant(a_a), alpha_s=CoefficientLaw.constant(a_s))
    J = AngularField(disc, np.ones((disc.quad.size, disc.n_points)))
    out = scatter_step(J, m, np.ones(disc.n_points))
    c = int(np.argmin(np.linalg.norm(disc.points, axis=1)))
    assert np.linalg.norm(disc.points[c]) < 1e-12
    k = a_a + a_s
    np.testing.assert_allclose(out.values[:, c], a_s / k * (1 - math.exp(-k)), rtol=1e-12)


@pytest.mark.parametrize("kernel", [ScatteringKernel("isotropic"), ScatteringKernel("hg", g=0.5),
                                    ScatteringKernel("rayleigh")])
def test_planckian_closure_with_scattering(disc, kernel):
    m = RadiativeModel(alpha_a=CoefficientLaw("power", a=0.6, c=0.2, p=1.0),
                       alpha_s=CoefficientLaw.constant(0.8), kernel=kernel,
                       boundary=BoundaryInflux(BoundarySpectrum("planck", T0=1.1)))
    u0 = u_from_T(1.1)
    r = full_rhs(np.full(disc.n_points, u0), m, disc, TIGHT)
    assert np.max(np.abs(r.rhs - u0)) / u0 < 1e-9
    assert r.theta_discrete <= r.theta + 1e-12


def test_pseudo_full_with_unit_profiles_equals_grey(disc):
    m = beam_model(alpha_a=CoefficientLaw.constant(0.5), alpha_s=CoefficientLaw.constant(0.5))
    small = Discretization.build(BALL, n=11, sphere_order=4)
    d = Discretization(BALL, small.grid, small.quad, small.step, m.frequency_quadrature())
    u = u_from_T(np.random.default_rng(2).uniform(0.3, 1.2, d.n_points))
    g = full_rhs(u, m, d, TIGHT).rhs
    p = full_rhs_pseudo(u, m, d, TIGHT).rhs
    assert np.max(np.abs(g - p)) / np.max(g) < 1e-10


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.0, 1.5), st.floats(-0.8, 0.8), st.integers(0, 1000))
def test_weak_maximum_principle(disc, a, s, g, seed):
    m = RadiativeModel(alpha_a=CoefficientLaw("power", a=a, c=0.05, p=1.0), alpha_s=CoefficientLaw.constant(s),
                       kernel=ScatteringKernel("hg", g=g))
    u = u_from_T(np.random.default_rng(seed).uniform(0.1, 1.0, disc.n_points))
    H = h_field(m, u, disc, TIGHT)
    assert H.values.min() >= 0
    assert H.values.max() <= theta_bound(m, BALL) + 1e-6


def test_h_field_violation_raises(disc, monkeypatch):
    import radeq.scattering as sc

    m = RadiativeModel(alpha_a=CoefficientLaw.constant(1.0), alpha_s=CoefficientLaw.constant(0.5))
    monkeypatch.setattr(sc, "theta_bound", lambda *a, **k: 0.01)
    with pytest.raises(MaxPrincipleViolation):
        h_field(m, np.ones(disc.n_points), disc, CollisionSeriesConfig(max_order=50, tail_tolerance=1e-3))


def test_duhamel_decay_and_tail_bound(disc):
    m = beam_model(alpha_a=CoefficientLaw.constant(0.2), alpha_s=CoefficientLaw.constant(0.8))
    theta = theta_bound(m, BALL)
    recs = duhamel_orders(np.zeros(disc.n_points), m, disc, "boundary", orders=60)
    ratios = [r.ratio for r in recs[1:]]
    assert max(ratios) <= theta + 1e-6
    Gs = m.G_sup()
    scal = np.array([r.sup_scalar for r in recs])
    for N in (2, 5, 10, 20):
        assert scal[N + 1:].sum() <= FOUR_PI * Gs * theta**N / (1 - theta)
    bulk = duhamel_orders(np.ones(disc.n_points), m, disc, "bulk", orders=10)
    assert all(r.ratio <= theta + 1e-6 for r in bulk[1:])


def test_truncation_rules():
    cfg = CollisionSeriesConfig(tail_tolerance=1e-6)
    theta = 0.5
    n = cfg.analytic_order(theta)
    assert theta**n / (1 - theta) <= 1e-6 < theta ** (n - 1) / (1 - theta)
    with pytest.raises(ValueError):
        CollisionSeriesConfig(truncation="never")


def test_tail_tolerance_unreachable(disc):
    m = beam_model(alpha_a=CoefficientLaw.constant(0.05), alpha_s=CoefficientLaw.constant(3.0))
    with pytest.raises(TailToleranceUnreachable):
        full_rhs(np.zeros(disc.n_points), m, disc, CollisionSeriesConfig(max_order=2, tail_tolerance=1e-12))


def test_intensity_with_scattering(disc):
    nu = 0.8
    m = RadiativeModel(alpha_a=CoefficientLaw.constant(0.5), alpha_s=CoefficientLaw.constant(0.7),
                       boundary=BoundaryInflux(BoundarySpectrum("planck", T0=1.0)))
    u = np.full(disc.n_points, u_from_T(1.0))
    I = reconstruct_intensity_scatter(u, m, disc, [0.1, 0.2, -0.3], [0, 0.6, 0.8], nu, TIGHT)
    assert I == pytest.approx(float(planck(nu, 1.0)), rel=1e-9)
    m0 = RadiativeModel(alpha_a=CoefficientLaw.constant(0.5), boundary=beam_model().boundary)
    x, n = [0.1, 0.0, 0.2], [0.0, 0.0, 1.0]
    a = reconstruct_intensity_scatter(u, m0, disc, x, n, nu, TIGHT)
    b = reconstruct_intensity(u, m0, disc, x, n, nu)
    assert a == pytest.approx(b, rel=1e-10)
