"""Numbered acceptance criteria.

Each test carries an ``acceptance(n)`` marker; the conftest hook prints one
``criterion n: PASS|FAIL`` line per criterion at the end of the session.
Run alone with ``python tests/test_acceptance.py`` or ``pytest tests/test_acceptance.py``.
"""

from __future__ import annotations

import dataclasses
import math
import time

import numpy as np
import pytest

from conftest import r1_triple, t1_triple, torus_spec
from deform.convolution import (
    bundle_convolve, convolve, evaluate_e0, evaluate_et, groupoid_convolve, kernel_composition_oracle,
    sup_relative_error,
)
from deform.dnc_atlas import PairMorphism, smoothness_probe
from deform.families import gaussian
from deform.groupoids import groupoid_from_key, tangent_groupoid
from deform.quadrature import QuadratureSpec
from deform.scenarios import BUILTIN_SCENARIOS, _Context, continuity_metrics, fourier_defect, loglog_slope
from deform.schwartz_fields import (
    FiberLattice, conic_support_check, multi_indices, partition_decompose, pullback, seminorm_estimate,
    two_chart_partition,
)

T_ASSOC = (0.0, 0.1, 0.5, 1.0)


def _points(base, rng, n, xi_scale):
    lo, hi = (0.0, 1.0) if base.periodic_units else (-1.0, 1.0)
    return rng.uniform(lo, hi, (n, 1)), rng.uniform(-xi_scale, xi_scale, (n, 1))


def _setup(key):
    base = groupoid_from_key(key)
    if key == "pair-t1":
        return base, t1_triple(base), torus_spec(), 0.2
    return base, r1_triple(base), QuadratureSpec(), 2.0


@pytest.mark.acceptance(1)
@pytest.mark.parametrize("key", ["pair-r1", "pair-t1"])
def test_associativity_of_gaussian_triple(key):
    base, (f, g, h), spec, xi_scale = _setup(key)
    assert spec.n0 == spec.npos == 128
    tg = tangent_groupoid(base)
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for t in T_ASSOC:
        x, xi = _points(base, rng, 100, xi_scale)
        left = convolve(convolve(f, g, tg, spec), h, tg, spec)(x, xi, t)
        right = convolve(f, convolve(g, h, tg, spec), tg, spec)(x, xi, t)
        worst = max(worst, sup_relative_error(left, right))
    elapsed = time.perf_counter() - start
    print(f"associativity {key}: max rel error {worst:.3e}, {elapsed:.1f}s")
    assert worst < 1e-6
    assert elapsed < 120


@pytest.mark.acceptance(2)
@pytest.mark.parametrize("key", ["pair-r1", "pair-t1"])
@pytest.mark.parametrize("t", [0.0, 0.25, 1.0])
def test_evaluation_is_a_homomorphism(key, t):
    base, (f, g, _), spec, xi_scale = _setup(key)
    other = spec.replace(n0=192, npos=192)
    tg = tangent_groupoid(base)
    x, xi = _points(base, np.random.default_rng(11), 100, xi_scale)
    lhs_field = convolve(f, g, tg, spec)
    if t == 0:
        lhs = lhs_field(x, xi, 0.0)
        rhs = bundle_convolve(evaluate_e0(f), evaluate_e0(g), other)(x, xi)
    else:
        v = xi * t
        lhs = lhs_field(x, xi, t)
        rhs = groupoid_convolve(evaluate_et(f, t), evaluate_et(g, t), base, t ** -base.q, other).chart_eval(x, v)
    err = sup_relative_error(lhs, rhs)
    print(f"homomorphism {key} t={t}: {err:.3e}")
    assert err < 1e-6


@pytest.mark.acceptance(3)
@pytest.mark.parametrize("t", [0.0, 0.1, 0.25, 0.5, 1.0])
def test_unit_gaussian_self_convolution_closed_form(t):
    base = groupoid_from_key("pair-r1")
    f = gaussian(base, a=1.0)
    rng = np.random.default_rng(3)
    x, xi = rng.uniform(-2, 2, (50, 1)), rng.uniform(-3, 3, (50, 1))
    got = convolve(f, f, tangent_groupoid(base))(x, xi, t)
    want = math.sqrt(math.pi / 2) * np.exp(-xi[:, 0] ** 2 / 2)
    err = float(np.max(np.abs(got - want)))
    print(f"closed form t={t}: max abs error {err:.3e}")
    assert err < 1e-8


@pytest.mark.acceptance(4)
def test_dense_kernel_composition_on_circle():
    base = groupoid_from_key("pair-t1")
    f, g, _ = t1_triple(base)
    dev = kernel_composition_oracle(f, g, 0.3, 256, tangent_groupoid(base), torus_spec())
    print(f"kernel oracle N=256: {dev:.3e}")
    assert dev < 1e-6


@pytest.mark.acceptance(5)
@pytest.mark.parametrize("key", ["pair-r1", "abelian-q1"])
def test_fiberwise_fourier_turns_convolution_into_product(key):
    base = groupoid_from_key(key)
    f, g, _ = r1_triple(base)
    x = np.linspace(-0.5, 0.5, 3)[:, None] if base.p else np.zeros((1, 0))
    err = fourier_defect(f, g, tangent_groupoid(base), QuadratureSpec(), x, FiberLattice(256, 12.0))
    print(f"fourier {key}: {err:.3e}")
    assert err < 1e-6


@pytest.mark.acceptance(6)
@pytest.mark.parametrize(
    "name, f2, expected",
    [
        ("sin", lambda x, v: np.sin(v), 0.0),
        ("xi+xi^2", lambda x, v: v + v**2, 1.0),
        ("exp(x)xi", lambda x, v: np.exp(x) * v, 0.0),
    ],
)
def test_transition_map_t_derivative(name, f2, expected):
    F = PairMorphism(1, 1, 1, 1, lambda x, v: x, f2, name=name)
    report = smoothness_probe(F, [0.0], [1.0])
    print(f"probe {name}: derivative {float(report.derivative[0]):.3e}, order {report.observed_order}")
    assert report.observed_order >= 1.9
    assert abs(float(report.derivative[0]) - expected) < 1e-6


def _sinh_shear():
    inv = PairMorphism(1, 1, 1, 1, lambda x, v: x - 0.1 * np.arcsinh(v), lambda x, v: np.arcsinh(v), name="shear-inv")
    fwd = PairMorphism(1, 1, 1, 1, lambda x, v: x + 0.1 * v, lambda x, v: np.sinh(v), name="shear")
    return fwd.with_inverse(inv)


@pytest.mark.acceptance(7)
def test_pullback_stays_schwartz_with_conic_support():
    base = groupoid_from_key("pair-r1")
    pb = pullback(gaussian(base, a=1.0, x_rate=0.3), _sinh_shear())
    worst = 0.0
    for k, m, l, alpha in multi_indices(1, 1, 3):
        rep = seminorm_estimate(pb, k, m, l, alpha)
        assert rep.bounded, (k, m, l, alpha)
        worst = max(worst, rep.estimate)
    print(f"pullback: largest seminorm {worst:.3e}")
    assert worst < 1e6
    assert conic_support_check(pb).passed


@pytest.mark.acceptance(8)
def test_partition_reconstructs_field():
    base = groupoid_from_key("pair-r1")
    f = gaussian(base, a=1.0, x_rate=0.3)
    parts, tail = partition_decompose(f, two_chart_partition())
    rng = np.random.default_rng(8)
    x, xi = rng.uniform(-3, 3, (500, 1)), rng.uniform(-4, 4, (500, 1))
    t = rng.uniform(0, 1, 500)
    t[:100] = 0.0
    rec = sum(p(x, xi, t) for p in parts) + tail(x, xi, t)
    err = float(np.max(np.abs(rec - f(x, xi, t))))
    print(f"partition reconstruction: {err:.3e}")
    assert err < 1e-12
    for piece in parts + [tail]:
        assert conic_support_check(piece).passed


@pytest.mark.acceptance(9)
def test_deformation_is_continuous_at_zero():
    sc = BUILTIN_SCENARIOS["gaussian-pair-r1"]
    ts = [float(v) for v in np.geomspace(1e-3, 0.3, 8)]
    sc = dataclasses.replace(sc, options={**sc.options, "continuity_t": ts})
    pairs = continuity_metrics(_Context(sc, "continuity"))
    slope = loglog_slope(*zip(*pairs))
    print(f"continuity slope {slope:.4f}")
    assert slope >= 0.9


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
