from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deform.cutoffs import plateau
from deform.dnc_atlas import PairMorphism, identity_morphism
from deform.errors import NonInvertibleError, ResolutionError, UncoveredRegionError
from deform.families import gaussian
from deform.schwartz_fields import (
    BundleSchwartzField, FiberLattice, PartitionOfUnity, SchwartzDncField, SeminormGrid, conic_support_check,
    fd_step_for_order, fourier_fiber_transform, lattice_transform, multi_indices, partition_decompose,
    plancherel_defect, pullback, seminorm_estimate, two_chart_partition, write_seminorm_csv,
)
from deform.supports import ConicBox, ConicCompactSet


def field_1d(func, support=None, **kw):
    return SchwartzDncField(lambda x, xi, t: func(x[..., 0], xi[..., 0], t), 1, 1, support, **kw)


def box(L=5.0):
    return ConicCompactSet([ConicBox.cone((-2.0,), (2.0,), (-L,), (L,))], 1, 1)


def bump_gaussian():
    return field_1d(lambda x, xi, t: np.exp(-xi**2) * plateau(x, 1.0, 2.0))


# -- seminorms ---------------------------------------------------------------


def test_sup_of_normalized_product_is_one():
    rep = seminorm_estimate(bump_gaussian(), 0, 0)
    assert rep.estimate == pytest.approx(1.0) and rep.bounded


def test_weighted_gaussian_sup_attained_at_origin():
    # (1 + xi^2) exp(-xi^2) has derivative (1 - (1 + xi^2)) 2 xi exp(-xi^2) -> max at 0
    rep = seminorm_estimate(field_1d(lambda x, xi, t: np.exp(-xi**2)), 1, 0)
    assert rep.estimate == pytest.approx(1.0, abs=1e-12)


def test_slow_decay_is_reported_unbounded():
    rep = seminorm_estimate(field_1d(lambda x, xi, t: 1 / (1 + xi**2)), 2, 0)
    assert not rep.bounded


@pytest.mark.parametrize(
    "l, alpha, m, expected",
    [
        ((0,), (1,), 0, math.sqrt(2) * math.exp(-0.5)),  # max |2 xi e^{-xi^2}|
        ((0,), (2,), 0, 2.0),  # |(4 xi^2 - 2) e^{-xi^2}| at 0
        ((0,), (0,), 1, 1.0),  # d/dt of t e^{-xi^2}
    ],
)
def test_derivative_seminorms_match_calculus(l, alpha, m, expected):
    f = field_1d(lambda x, xi, t: np.exp(-xi**2) * (t if m else 1.0))
    # fine core so the interior maximum sits close to a sample
    rep = seminorm_estimate(f, 0, m, l, alpha, grid=SeminormGrid(n_core=601))
    assert rep.estimate == pytest.approx(expected, rel=1e-4)


def test_seminorm_order_budget():
    with pytest.raises(ValueError):
        seminorm_estimate(bump_gaussian(), 5, 2)


def test_certificate_within_tolerance(tmp_path):
    f = field_1d(lambda x, xi, t: np.exp(-xi**2), certificate={(1, 0, (0,), (0,)): 1.0})
    rep = seminorm_estimate(f, 1, 0)
    assert rep.within_certificate
    path = tmp_path / "s.csv"
    write_seminorm_csv([rep], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["k", "m", "l", "alpha", "estimate", "grid_size"] and len(rows) == 2


@pytest.mark.parametrize("order", range(0, 7))
def test_fd_step_rule(order):
    h = fd_step_for_order(order)
    assert h >= 1e-4
    assert h == pytest.approx(max(1e-4, 10 ** (-16 / (order + 2))))


def test_multi_indices_count():
    # p = q = 1: four slots, compositions of totals 0..2
    assert len(list(multi_indices(1, 1, 2))) == 1 + 4 + 10


# -- support checks -----------------------------------------------------------


def test_windowed_field_passes_support_check(pair_r1):
    assert conic_support_check(gaussian(pair_r1, a=0.5)).passed


def test_global_gaussian_fails_with_witness():
    f = field_1d(lambda x, xi, t: np.exp(-xi**2 - x**2), support=box(1.0))
    rep = conic_support_check(f)
    assert not rep.passed
    x, xi, t, val = rep.witness
    assert val != 0 and not bool(f.support_contains([x[0]], [xi[0]], t))


def test_zero_field_passes():
    assert conic_support_check(field_1d(lambda x, xi, t: 0 * xi, support=box())).passed


def test_support_check_requires_support():
    with pytest.raises(ValueError):
        conic_support_check(bump_gaussian())


# -- pullback ------------------------------------------------------------------


def test_identity_pullback_is_pointwise_equal(pair_r1):
    f = gaussian(pair_r1, a=0.8, x_rate=0.2)
    pb = pullback(f, identity_morphism(1, 1))
    rng = np.random.default_rng(0)
    x, xi, t = rng.normal(size=(50, 1)), rng.normal(size=(50, 1)), rng.uniform(0, 1, 50)
    # (t xi) / t may differ from xi in the last bit
    np.testing.assert_allclose(pb(x, xi, t), f(x, xi, t), rtol=1e-15, atol=0)


def test_linear_scaling_pullback():
    F = PairMorphism(1, 1, 1, 1, lambda x, v: x, lambda x, v: 2 * v, name="double")
    pb = pullback(field_1d(lambda x, xi, t: np.exp(-xi**2)), F)
    assert float(pb([0.0], [1.0], 0.0)) == pytest.approx(math.exp(-4))


def test_sine_pullback_value():
    F = PairMorphism(1, 1, 1, 1, lambda x, v: x, lambda x, v: np.sin(v), name="sin")
    pb = pullback(field_1d(lambda x, xi, t: np.exp(-xi**2)), F)
    want = math.exp(-(math.sin(1.0) / 0.5) ** 2)
    assert float(pb([0.0], [2.0], 0.5)) == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(0.05888, abs=5e-6)


def test_pullback_detects_singular_jacobian():
    flat = PairMorphism(1, 1, 1, 1, lambda x, v: 0 * x, lambda x, v: v, name="collapse")
    flat = flat.with_inverse(identity_morphism(1, 1))
    with pytest.raises(NonInvertibleError):
        pullback(field_1d(lambda x, xi, t: np.exp(-xi**2), support=box()), flat)


# -- partitions of unity -------------------------------------------------------


def test_single_chart_partition_is_trivial():
    one = PartitionOfUnity((lambda x, v, t: np.ones(np.shape(t)),), lambda x, v, t: np.zeros(np.shape(t)),
                           (((-1e300,), (1e300,)),), 1.0)
    f = field_1d(lambda x, xi, t: np.exp(-xi**2) * plateau(x, 1, 2), support=box())
    parts, tail = partition_decompose(f, one)
    rng = np.random.default_rng(1)
    x, xi, t = rng.uniform(-3, 3, (100, 1)), rng.normal(size=(100, 1)), rng.uniform(0, 1, 100)
    np.testing.assert_array_equal(parts[0](x, xi, t), f(x, xi, t))
    assert np.all(tail(x, xi, t) == 0)


@given(st.floats(-3, 3), st.floats(-6, 6), st.floats(0, 1))
def test_two_chart_partition_sums_to_one(x, xi, t):
    P = two_chart_partition()
    assert float(P.total(np.array([x]), np.array([xi]), np.array(t))) == pytest.approx(1.0, abs=1e-12)


def test_tail_vanishes_below_threshold(pair_r1):
    _, tail = partition_decompose(gaussian(pair_r1, a=1.0), two_chart_partition())
    rng = np.random.default_rng(4)
    x, xi = rng.uniform(-3, 3, (300, 1)), rng.uniform(-30, 30, (300, 1))
    t = rng.uniform(0, 0.25, 300)
    assert np.all(tail(x, xi, t) == 0)


def test_uncovered_region_raises(pair_r1):
    broken = PartitionOfUnity((lambda x, v, t: 0.5 * np.ones(np.shape(t)),), lambda x, v, t: np.zeros(np.shape(t)),
                              (((-1e300,), (1e300,)),), 1.0)
    with pytest.raises(UncoveredRegionError) as exc:
        partition_decompose(gaussian(pair_r1, a=1.0), broken)
    assert exc.value.witness is not None


# -- fiberwise Fourier transform --------------------------------------------------


def _bundle(func):
    return BundleSchwartzField(lambda x, xi: func(xi[..., 0]) + 0 * x[..., 0], 1, 1)


def test_gaussian_transform_at_origin():
    T = fourier_fiber_transform(_bundle(lambda xi: np.exp(-xi**2 / 2)), [[0.0]], FiberLattice(256, 12.0))
    centre = T.values[0, 128]
    assert T.eta[128] == 0
    assert centre.real == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)
    want = math.sqrt(2 * math.pi) * np.exp(-T.eta**2 / 2)
    assert np.max(np.abs(T.values[0] - want)) < 1e-12


def test_zero_transform():
    T = fourier_fiber_transform(_bundle(lambda xi: 0 * xi), [[0.0]])
    assert np.all(T.values == 0)


def test_shift_changes_phase_only():
    lat = FiberLattice(256, 12.0)
    a = fourier_fiber_transform(_bundle(lambda xi: np.exp(-xi**2 / 2)), [[0.0]], lat).values
    b = fourier_fiber_transform(_bundle(lambda xi: np.exp(-(xi - 1) ** 2 / 2)), [[0.0]], lat).values
    assert np.max(np.abs(np.abs(a) - np.abs(b))) < 1e-12


def test_plancherel():
    lat = FiberLattice(256, 12.0)
    samples = np.exp(-lat.points() ** 2)
    assert plancherel_defect(samples, lattice_transform(samples, lat, 1), lat) < 1e-12


def test_lattice_too_small_raises():
    with pytest.raises(ResolutionError):
        fourier_fiber_transform(_bundle(lambda xi: np.exp(-xi**2 / 200)), [[0.0]], FiberLattice(64, 4.0))


def test_lattice_too_coarse_raises():
    with pytest.raises(ResolutionError):
        fourier_fiber_transform(_bundle(lambda xi: np.exp(-50 * xi**2)), [[0.0]], FiberLattice(32, 12.0))


def test_extended_precision_transform():
    T = fourier_fiber_transform(_bundle(lambda xi: np.exp(-xi**2 / 2)), [[0.0]], FiberLattice(256, 12.0),
                                dtype=np.longdouble)
    assert T.values.real.dtype == np.longdouble


def test_lattice_validation():
    with pytest.raises(ValueError):
        FiberLattice(100, 1.0)
