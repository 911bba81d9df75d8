from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from conftest import t1_triple, torus_spec
from deform.convolution import (
    PointCache, bundle_convolve, convolve, evaluate_e0, evaluate_et, fiber_integrate, groupoid_convolve,
    haar_invariance_defect, kernel_composition_oracle, m_rc, separated, sup_relative_error,
)
from deform.cutoffs import plateau
from deform.families import bundle_gaussian, gaussian, hermite_gaussian, windowed_polynomial
from deform.groupoids import groupoid_from_key, tangent_groupoid
from deform.quadrature import QuadratureSpec
from deform.schwartz_fields import BundleSchwartzField, SchwartzDncField, conic_support_check
from deform.supports import ConicBox, ConicCompactSet


def two_var_gaussian(t_factor=None):
    """``F(x, eta, xi, t) = exp(-eta^2 - xi^2)`` as a field over units ``(x, eta)``."""

    def func(u, xi, t):
        val = np.exp(-u[..., 1] ** 2 - xi[..., 0] ** 2)
        return val if t_factor is None else val * t_factor(t)

    return SchwartzDncField(func, 2, 1)


def test_fiber_integrate_gaussian():
    out = fiber_integrate(two_var_gaussian(), None, [[0.3]], [[0.0], [1.0]], 0.0)
    assert out[0] == pytest.approx(math.sqrt(math.pi), rel=1e-13)
    assert out[1] == pytest.approx(math.sqrt(math.pi) * math.exp(-1), rel=1e-13)
    assert float(out[0]) == pytest.approx(1.772453851, abs=1e-9)


def test_fiber_integrate_zero():
    zero = SchwartzDncField(lambda u, xi, t: 0 * xi[..., 0], 2, 1)
    assert np.all(fiber_integrate(zero, None, [[0.0]], [[0.5]], 0.05) == 0)


def test_fiber_integrate_bump_matches_adaptive_reference():
    def bump(s):
        return plateau(s, 0.5, 1.0)

    support = ConicCompactSet([ConicBox.cone((-1.0, -1.0), (1.0, 1.0), (-1.0,), (1.0,))], 2, 1)
    F = SchwartzDncField(lambda u, xi, t: bump(xi[..., 0]) * np.cos(xi[..., 0] + u[..., 1]), 2, 1, support)
    got = float(fiber_integrate(F, None, [[0.0]], [[0.2]], 1.0)[0])
    ref, _ = integrate.quad(lambda s: float(bump(s)) * math.cos(s + 0.2), -1, 1, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert got == pytest.approx(ref, abs=1e-8)


def test_m_rc_on_abelian_line(abelian):
    f = gaussian(abelian, a=1.0)
    tg = tangent_groupoid(abelian)
    val = float(m_rc(separated(f, f, tg))(np.zeros((1, 0)), [[0.0]], 0.0)[0])
    assert val == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert val == pytest.approx(1.253314137, abs=1e-9)


def test_m_rc_is_linear(pair_r1, rng):
    tg = tangent_groupoid(pair_r1)
    f, g, h = (gaussian(pair_r1, a=a, x_rate=0.2) for a in (1.0, 0.6, 1.4))
    A, B = separated(f, g, tg), separated(h, g, tg)
    x, xi = rng.uniform(-1, 1, (20, 1)), rng.uniform(-2, 2, (20, 1))
    for t in (0.0, 0.5):
        combo = m_rc(A.scale(2.0) + B.scale(-0.5))(x, xi, t)
        parts = 2.0 * m_rc(A)(x, xi, t) - 0.5 * m_rc(B)(x, xi, t)
        assert sup_relative_error(combo, parts) < 1e-12


def test_m_rc_preserves_t_support(pair_r1):
    tg = tangent_groupoid(pair_r1)
    base = gaussian(pair_r1, a=1.0)
    late = ConicCompactSet([ConicBox.cone((-10.0,), (10.0,), (-10.0,), (10.0,), 0.0, 0.5)], 1, 1)
    cut = SchwartzDncField(lambda x, xi, t: base.func(x, xi, t) * (t <= 0.5), 1, 1, late, chart=base.chart)
    out = convolve(cut, cut, tg)
    assert np.all(out([[0.0], [0.3]], [[0.2], [-1.0]], 0.75) == 0)


def test_closed_form_at_origin(pair_r1):
    f = gaussian(pair_r1, a=1.0)
    val = convolve(f, f, tangent_groupoid(pair_r1))([[0.4]], [[0.0]], 0.5)
    assert float(val[0]) == pytest.approx(1.253314137, abs=1e-9)


def test_zero_annihilates(pair_r1):
    f = gaussian(pair_r1, a=1.0)
    zero = 0.0 * f
    out = convolve(f, zero, tangent_groupoid(pair_r1))([[0.0], [0.5]], [[0.1], [1.0]], 0.3)
    assert np.all(out == 0)


def test_abelian_self_convolution(abelian):
    f = gaussian(abelian, a=0.5)
    val = convolve(f, f, tangent_groupoid(abelian))(np.zeros((1, 0)), [[0.0]], 0.0)
    assert float(val[0]) == pytest.approx(1.772453851, abs=1e-9)


def test_mixed_instances_rejected(pair_r1, pair_t1):
    with pytest.raises(TypeError):
        convolve(gaussian(pair_r1), gaussian(pair_t1, a=100.0), tangent_groupoid(pair_r1))


@pytest.mark.parametrize(
    "build",
    [
        lambda G: hermite_gaussian(G, a=1.0, degree=2, x_rate=0.2),
        lambda G: windowed_polynomial(G, coeffs=(1.0, 0.5, -0.25), x_rate=0.1),
    ],
)
def test_other_families_associate(pair_r1, rng, build):
    tg = tangent_groupoid(pair_r1)
    f, g, h = build(pair_r1), gaussian(pair_r1, a=0.8), gaussian(pair_r1, a=1.2, center=0.3)
    x, xi = rng.uniform(-1, 1, (20, 1)), rng.uniform(-2, 2, (20, 1))
    for t in (0.0, 0.5):
        left = convolve(convolve(f, g, tg), h, tg)(x, xi, t)
        right = convolve(f, convolve(g, h, tg), tg)(x, xi, t)
        assert sup_relative_error(left, right) < 1e-6


def test_product_support_contains_product(pair_r1):
    tg = tangent_groupoid(pair_r1)
    prod = convolve(gaussian(pair_r1, a=1.0), gaussian(pair_r1, a=0.5), tg)
    assert conic_support_check(prod, n_samples=200).passed


# -- evaluation morphisms -----------------------------------------------------


def test_e0_substitutes_zero(pair_r1):
    f = gaussian(pair_r1, a=1.0, t_rate=1.0)
    e0 = evaluate_e0(f)
    xi = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(e0(np.zeros((9, 1)), xi), np.exp(-xi[:, 0] ** 2))
    np.testing.assert_allclose(evaluate_e0(2.0 * f)(np.zeros((9, 1)), xi), 2 * e0(np.zeros((9, 1)), xi))


def test_et_restricts_pointwise(pair_r1):
    f = gaussian(pair_r1, a=1.0, x_rate=0.3)
    e1 = evaluate_et(f, 1.0)
    x, v = np.array([[0.2], [0.7]]), np.array([[0.5], [-1.0]])
    np.testing.assert_array_equal(e1.chart_eval(x, v), f(x, v, 1.0))


def test_et_of_field_vanishing_early_is_zero(pair_r1):
    base = gaussian(pair_r1, a=1.0)
    late = SchwartzDncField(lambda x, xi, t: base.func(x, xi, t) * (t >= 0.25), 1, 1)
    e = evaluate_et(late, 0.1)
    assert np.all(e.chart_eval(np.zeros((5, 1)), np.linspace(-1, 1, 5)[:, None]) == 0)


def test_et_rejects_outside_interval(pair_r1):
    with pytest.raises(ValueError):
        evaluate_et(gaussian(pair_r1), 1.5)


def test_et_homomorphism_at_half(pair_r1, rng):
    f, g = gaussian(pair_r1, a=1.0, x_rate=0.3), gaussian(pair_r1, a=0.7, center=0.4)
    tg = tangent_groupoid(pair_r1)
    x, xi = rng.uniform(-1, 1, (40, 1)), rng.uniform(-2, 2, (40, 1))
    lhs = convolve(f, g, tg)(x, xi, 0.5)
    rhs = groupoid_convolve(evaluate_et(f, 0.5), evaluate_et(g, 0.5), pair_r1, 2.0,
                            QuadratureSpec(npos=96)).chart_eval(x, 0.5 * xi)
    assert sup_relative_error(lhs, rhs) < 1e-8


def test_e0_homomorphism(pair_r1, rng):
    f, g = gaussian(pair_r1, a=1.0, x_rate=0.3), gaussian(pair_r1, a=0.7, center=0.4)
    x, xi = rng.uniform(-1, 1, (40, 1)), rng.uniform(-2, 2, (40, 1))
    lhs = convolve(f, g, tangent_groupoid(pair_r1))(x, xi, 0.0)
    rhs = bundle_convolve(evaluate_e0(f), evaluate_e0(g), QuadratureSpec(n0=96))(x, xi)
    assert sup_relative_error(lhs, rhs) < 1e-8


# -- fiberwise convolution on bundles -----------------------------------------------


def test_bundle_gaussian_closed_form():
    f = bundle_gaussian(1, 1, a=0.5)
    val = float(bundle_convolve(f, f)([[0.3]], [[2.0]])[0])
    assert val == pytest.approx(math.sqrt(math.pi) * math.exp(-1), rel=1e-13)
    assert val == pytest.approx(0.652049, abs=1e-6)


def test_bundle_delta_approximant():
    sigma = 1e-3
    f = BundleSchwartzField(lambda x, xi: np.exp(-xi[..., 0] ** 2) * np.cos(xi[..., 0]), 1, 1)
    delta = BundleSchwartzField(
        lambda x, xi: np.exp(-xi[..., 0] ** 2 / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi)), 1, 1
    )
    xi = np.linspace(-1.5, 1.5, 7)[:, None]
    got = bundle_convolve(f, delta, QuadratureSpec(t0_radius=12 * sigma))(np.zeros((7, 1)), xi)
    assert np.max(np.abs(got - f(np.zeros((7, 1)), xi))) < 1e-5


def test_bundle_convolution_commutes(rng):
    f = bundle_gaussian(1, 1, a=0.5, center=0.3)
    g = BundleSchwartzField(lambda x, xi: (1 + xi[..., 0]) * np.exp(-xi[..., 0] ** 2), 1, 1)
    x, xi = rng.uniform(0, 1, (30, 1)), rng.uniform(-2, 2, (30, 1))
    assert np.max(np.abs(bundle_convolve(f, g)(x, xi) - bundle_convolve(g, f)(x, xi))) < 1e-10


def test_point_cache_is_bounded():
    cache = PointCache(2)
    for i in range(3):
        cache.put(i, i)
    assert cache.get(0) is None and cache.get(2) == 2


# -- Haar system and the dense kernel oracle ----------------------------------------------


@pytest.mark.parametrize("key", ["pair-r1", "pair-t1", "abelian-q1", "bundle-t1-q1"])
def test_haar_left_invariance(key):
    G = groupoid_from_key(key)
    rng = np.random.default_rng(3)

    def F(arrows):
        x, v = G.chart(arrows)
        s = np.sum(np.sin(2 * np.pi * x), axis=-1) if G.p else 0.0
        # periodic in v on circle fibers, so the wrap at |v| = 1/2 is smooth
        r2 = np.sum(np.sin(np.pi * v) ** 2, axis=-1) if G.periodic_fiber else np.sum(v * v, axis=-1)
        return np.exp(-4 * r2) * (1.5 + s)

    bounds = None if G.periodic_fiber else (np.full(G.q, -8.0), np.full(G.q, 8.0))
    scale = 0.4 if G.periodic_fiber else 1.0
    eta = G.chart_inv(G.random_units(rng, 4), rng.uniform(-scale, scale, (4, G.q)))
    assert haar_invariance_defect(G, F, eta, QuadratureSpec(npos=256), bounds) < 1e-6


def test_kernel_oracle_zero_fields(pair_t1):
    zero = 0.0 * gaussian(pair_t1, a=100.0)
    assert kernel_composition_oracle(zero, zero, 0.3, 64, tangent_groupoid(pair_t1)) == 0.0


def test_kernel_oracle_guards(pair_r1, pair_t1):
    f = gaussian(pair_t1, a=100.0)
    with pytest.raises(ValueError):
        kernel_composition_oracle(f, f, 0.3, 32)
    with pytest.raises(TypeError):
        kernel_composition_oracle(gaussian(pair_r1), gaussian(pair_r1), 0.3, 64, tangent_groupoid(pair_r1))


def test_kernel_oracle_converges(pair_t1):
    f, g, _ = t1_triple(pair_t1)
    tg = tangent_groupoid(pair_t1)
    devs = [kernel_composition_oracle(f, g, 0.3, n, tg, torus_spec(), rows=16) for n in (128, 256, 512)]
    # already at rounding level from 128 on; allow a factor 2 of noise
    for a, b in zip(devs, devs[1:]):
        assert b <= 2 * a + 1e-15
    assert devs[-1] < 1e-6
