import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad

from radeq.compactlab import (
    PeriodicField,
    auxiliary_measures,
    chain_constant,
    equiintegrability_scan,
    high_pass,
    line_operator,
    measure_bounds_scan,
    random_band_limited,
    rows_to_csv,
    segment_operator,
    t_m_operator,
    translation_energy,
)
from radeq.errors import BadInterval, BoundViolated, NonUnitDirection
from radeq.geometry import build_sphere_quadrature

GL_X, GL_W = np.polynomial.legendre.leggauss(64)


def grid(N, L=1.0):
    a = -L + np.arange(N) * 2 * L / N
    return np.meshgrid(a, a, a, indexing="ij")


def cos_field(N=16, k=(1, 0, 0), L=1.0):
    X, Y, Z = grid(N, L)
    return PeriodicField(L, np.cos(math.pi / L * (k[0] * X + k[1] * Y + k[2] * Z)))


def segment_oracle(f, x, n, s, t):
    # Gauss-Legendre in lambda over [s, t] of the trigonometric interpolant
    lam = 0.5 * (t - s) * GL_X + 0.5 * (t + s)
    pts = x[None, :] - lam[:, None] * n[None, :]
    return 0.5 * (t - s) * GL_W @ f.evaluate(pts)


@pytest.fixture(scope="module")
def fields():
    return random_band_limited(3, N=24, band=4, seed=5)


def test_round_trip(fields):
    f = fields[0]
    back = PeriodicField.from_coefficients(1.0, f.coefficients())
    assert np.max(np.abs(back.samples - f.samples)) < 1e-10
    assert np.max(np.abs(f.samples)) <= f.M + 1e-15
    pts = f.grid_points().reshape(-1, 3)[::97]
    np.testing.assert_allclose(f.evaluate(pts), f.samples.reshape(-1)[::97], atol=1e-10)


def test_line_operator_examples():
    X, _, _ = grid(16)
    c = PeriodicField(1.0, np.full((16, 16, 16), 0.7))
    n = np.array([0.6, 0.0, 0.8])
    np.testing.assert_allclose(line_operator(c, n).samples, 1.4, atol=1e-13)
    g = cos_field(k=(0, 1, 0))
    np.testing.assert_allclose(line_operator(g, (1.0, 0, 0)).samples, 2 * g.samples, atol=1e-12)
    z = line_operator(cos_field(k=(1, 0, 0)), (1.0, 0, 0))
    assert np.max(np.abs(z.samples)) < 1e-12
    # direct trapezoid along the line agrees with the zero multiplier
    lam = np.linspace(-1, 1, 2001)
    vals = np.cos(math.pi * (0.3 - lam))
    trap = np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(lam))
    assert abs(trap) < 1e-8
    with pytest.raises(NonUnitDirection):
        line_operator(c, (1.0, 1.0, 0.0))


def test_line_operator_scaling_with_L():
    f = PeriodicField(2.5, np.full((8, 8, 8), 1.0))
    np.testing.assert_allclose(line_operator(f, (0, 0, 1.0)).samples, 5.0, atol=1e-12)


def test_line_and_segment_match_real_space(fields):
    f = fields[1]
    rng = np.random.default_rng(1)
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    x = rng.uniform(-1, 1, (5, 3))
    Ln = line_operator(f, n)
    ref = [segment_oracle(f, xi, n, -1.0, 1.0) for xi in x]
    np.testing.assert_allclose(Ln.evaluate(x), ref, atol=1e-8)
    Sn = segment_operator(f, n, 0.1, 0.4)
    ref = [segment_oracle(f, xi, n, 0.1, 0.4) for xi in x]
    np.testing.assert_allclose(Sn.evaluate(x), ref, atol=1e-8)
    assert np.max(np.abs(Ln.samples)) <= 2 * f.M + 1e-9


def test_segment_examples():
    c = PeriodicField(1.0, np.full((8, 8, 8), 2.0))
    np.testing.assert_allclose(segment_operator(c, (0, 1.0, 0), 0.1, 0.35).samples, 0.5, atol=1e-13)
    f = random_band_limited(1, N=16, band=3, seed=2)[0]
    sups = [np.max(np.abs(segment_operator(f, (0, 0, 1.0), 0.0, t).samples)) for t in (1e-1, 1e-3, 1e-5)]
    assert sups[0] > sups[1] > sups[2] and sups[2] < 1e-4
    for s, t in [(0.2, 0.1), (-0.1, 0.2), (0.0, 0.6)]:
        with pytest.raises(BadInterval):
            segment_operator(f, (0, 0, 1.0), s, t)


def test_t_m_examples():
    c = PeriodicField(1.0, np.full((8, 8, 8), 0.3))
    np.testing.assert_allclose(t_m_operator(c, 1).samples, 8 * math.pi * 0.3, rtol=1e-12)
    zero = PeriodicField(1.0, np.zeros((8, 8, 8)))
    assert np.all(t_m_operator(zero, 2).samples == 0)
    f = random_band_limited(1, N=16, band=3, seed=3)[0]
    for m in (1, 2, 3):
        assert np.max(np.abs(t_m_operator(f, m, order=8).samples)) <= 4 * math.pi * 2**m + 1e-9


def test_t2_matches_nested_quadrature():
    f = cos_field()
    T2 = t_m_operator(f, 2, order=24)
    pts = np.random.default_rng(0).uniform(-1, 1, (10, 3))

    def line(x, n):
        return GL_W @ np.cos(math.pi * (x[0] - GL_X * n[0]))

    for x in pts:
        def integrand(mu, ph):
            s = math.sqrt(1 - mu * mu)
            return line(x, (s * math.cos(ph), s * math.sin(ph), mu)) ** 2

        ref = dblquad(integrand, 0, 2 * math.pi, -1, 1, epsabs=1e-11, epsrel=1e-11)[0]
        assert T2.evaluate(x[None])[0] == pytest.approx(ref, abs=1e-6)


def test_measures(fields):
    f = fields[2]
    R = 2 * math.pi
    mu = auxiliary_measures(f, R)
    assert np.all(mu.masses >= 0) and mu.total == pytest.approx(mu.masses.sum())
    hp = high_pass(f, R)
    # Parseval: mean square of the high-pass field equals the coefficient mass
    assert hp.l2_mean_square() == pytest.approx(mu.total, rel=1e-10)
    assert mu.total <= 8
    rng = np.random.default_rng(4)
    for _ in range(5):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        nu = auxiliary_measures(f, R, n)
        assert np.all(nu.masses <= 4 * mu.masses * (1 + 1e-12))
        assert nu.total <= 32
        seg = auxiliary_measures(f, R, n, interval=(0.1, 0.3))
        assert np.all(seg.masses <= 0.2**2 * mu.masses * (1 + 1e-12))
    n = np.array([0.0, 0.0, 1.0])
    nu = auxiliary_measures(f, R, n)
    orth = np.abs(nu.wavevectors @ n) < 1e-12
    assert orth.any()
    np.testing.assert_allclose(nu.masses[orth], 4 * mu.masses[orth], rtol=1e-14)
    empty = auxiliary_measures(f, 100.0)
    assert len(empty) == 0 and empty.total == 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_nu_bounded_by_four_mu(seed, band):
    f = random_band_limited(1, N=12, band=band, seed=seed)[0]
    mu = auxiliary_measures(f, 0.0)
    n = np.random.default_rng(seed).normal(size=3)
    nu = auxiliary_measures(f, 0.0, n / np.linalg.norm(n))
    assert np.all(nu.masses <= 4 * mu.masses * (1 + 1e-12))


def test_measure_scan(fields):
    rep = measure_bounds_scan(fields, order=12)
    assert rep["passed"] and rep["max_nu_total"] <= 32
    low = random_band_limited(1, N=16, band=1, seed=0)
    rep = measure_bounds_scan(low, Rs=(4 * math.pi,), order=8)
    assert all(r["near"] == 0 and r["far"] == 0 for r in rep["rows"])
    csv = rows_to_csv(rep["rows"], ["field", "R", "kappa", "near", "far"])
    assert csv.splitlines()[0] == "field,R,kappa,near,far"


def test_chain_constant():
    assert chain_constant(1) == pytest.approx(256 * math.pi)
    assert chain_constant(3) == pytest.approx(64 * 4 * math.pi * 3 * 4)


def test_translation_zero_shift(fields):
    f = fields[0]
    assert translation_energy(f, np.zeros(3)) == 0.0
    rep = equiintegrability_scan(fields[:1], ms=(1,), hs=[np.zeros(3)], order=6, raise_on_violation=False)
    assert all(r["lhs"] == 0 and r["rhs"] == 0 for r in rep["rows"])


@pytest.mark.parametrize("m, betas", [(1, {1: 1.0}), (2, {2: 0.5}), (3, {1: 0.75, 3: 0.25})])
def test_single_mode_closed_form(m, betas):
    f = cos_field(N=16, k=(0, 0, 1))
    k0 = math.pi

    def mult(mu):
        return 2 * math.sin(k0 * mu) / (k0 * mu) if mu else 2.0

    cm = 2 * math.pi * quad(lambda mu: mult(mu) ** m, -1, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    T = t_m_operator(f, m, order=40)
    h = np.array([0.1, 0.2, 0.15])
    closed = cm**2 * 8 * sum(b**2 / 2 * abs(1 - np.exp(1j * j * k0 * h[2])) ** 2 for j, b in betas.items())
    assert translation_energy(T, h) == pytest.approx(closed, rel=1e-10)


def test_equiintegrability_scan(fields):
    rep = equiintegrability_scan(fields, order=8)
    assert rep["passed"] and rep["monotone"]
    assert rep["worst_margin"] > 0
    assert all(r["margin_squared_form"] >= r["margin"] for r in rep["rows"])


def test_scan_violation_raises(fields, monkeypatch):
    import radeq.compactlab as cl

    monkeypatch.setattr(cl, "chain_constant", lambda m: 1e-9)
    with pytest.raises(BoundViolated):
        cl.equiintegrability_scan(fields[:1], ms=(1,), order=6)
