from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deform.cutoffs import plateau, plateau_nd, smoothstep
from deform.supports import ConicBox, ConicCompactSet


def cone_set(L=2.0):
    return ConicCompactSet([ConicBox.cone((-1.0,), (1.0,), (-L,), (L,))], 1, 1)


@given(st.floats(-2, 3))
def test_smoothstep_range_and_symmetry(u):
    s = float(smoothstep(u))
    assert 0.0 <= s <= 1.0
    assert s + float(smoothstep(1 - u)) == pytest.approx(1.0)


def test_smoothstep_keeps_extended_precision():
    u = np.asarray([0.25, 0.5], dtype=np.longdouble)
    assert smoothstep(u).dtype == np.longdouble
    assert smoothstep(np.longdouble(0.5)) == pytest.approx(0.5)


@pytest.mark.parametrize("s, expected", [(0.0, 1.0), (0.5, 1.0), (1.0, 0.0), (3.0, 0.0), (-0.5, 1.0)])
def test_plateau_values(s, expected):
    assert float(plateau(s, 0.5, 1.0)) == expected


def test_plateau_rejects_bad_radii():
    with pytest.raises(ValueError):
        plateau(0.0, 1.0, 0.5)


def test_plateau_nd_empty_axis_is_one():
    assert plateau_nd(np.zeros((3, 0)), 0.5, 1.0).tolist() == [1.0, 1.0, 1.0]


def test_box_touching_zero_needs_zero_offset():
    with pytest.raises(ValueError):
        ConicBox((0.0,), (1.0,), (-0.1,), (0.1,), (0.0,), (0.0,), 0.0, 1.0)


def test_unbounded_box_rejected():
    with pytest.raises(ValueError):
        ConicBox.cone((0.0,), (np.inf,), (-1.0,), (1.0,))


@given(st.floats(-3, 3), st.floats(1e-3, 1.0))
def test_cone_membership_is_xi_bound(xi, t):
    K = cone_set(2.0)
    assert bool(K.contains_dnc([0.0], [xi], t)) == (abs(xi) <= 2.0)


def test_trace_at_zero_lies_in_units():
    K = cone_set().union(ConicCompactSet([ConicBox.slab((0.0,), (1.0,), (-0.3,), (0.3,), 0.5)], 1, 1))
    assert K.trace_at_zero_in_v()


def test_v_hull_scales_with_t():
    lo, hi = cone_set(2.0).v_hull(np.array([[0.0], [5.0]]), np.array([0.25, 0.25]))
    assert lo[0, 0] == pytest.approx(-0.5) and hi[0, 0] == pytest.approx(0.5)
    assert np.isinf(lo[1, 0]) and np.isinf(hi[1, 0])


def test_intersection_of_cone_and_slab():
    slab = ConicCompactSet([ConicBox.slab((-1.0,), (1.0,), (-0.3,), (0.3,), 0.1)], 1, 1)
    both = cone_set(2.0).intersect(slab)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.5, 1.5, (2000, 1))
    v = rng.uniform(-3, 3, (2000, 1))
    t = rng.uniform(0, 1, 2000)
    want = cone_set(2.0).contains(x, v, t) & slab.contains(x, v, t)
    np.testing.assert_array_equal(both.contains(x, v, t), want)


def test_restrictions():
    K = cone_set()
    assert K.restrict_t(0.5).t_range() == (0.5, 1.0)
    assert K.restrict_x((2.0,), (3.0,)).is_empty
    assert ConicCompactSet.empty(1, 1).is_empty
