from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deform.errors import ConfigError, QuadratureToleranceError
from deform.quadrature import (
    QuadratureSpec, compact_rule, decay_rule, gauss_hermite, gauss_legendre, pairwise_sum, refine_integrate,
)


@pytest.mark.parametrize("n", [16, 64, 128])
@pytest.mark.parametrize("k", [0, 1, 3, 6])
def test_hermite_moments(n, k):
    # weights carry exp(x^2): integrate x^{2k} exp(-x^2)
    x, w = gauss_hermite(n)
    got = np.sum(w * np.exp(-x * x) * x ** (2 * k))
    assert got == pytest.approx(math.gamma(k + 0.5), rel=1e-13)


def test_hermite_extended_precision_beats_double():
    x, w = gauss_hermite(64, "extended")
    assert x.dtype == np.longdouble
    pi = 4 * np.arctan(np.longdouble(1))
    err = abs(np.sum(w * np.exp(-x * x)) - np.sqrt(pi))
    assert err < 1e-17


@pytest.mark.parametrize("n", [8, 33, 128])
def test_legendre_integrates_polynomials(n):
    x, w = gauss_legendre(n)
    for k in range(0, 2 * n - 1, max(1, n // 4)):
        want = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.sum(w * x**k) == pytest.approx(want, abs=1e-13)


def test_tensor_rules_shapes():
    nodes, weights = decay_rule(16, 2, 5.0)
    assert nodes.shape == (256, 2) and weights.shape == (256,)
    assert np.max(np.abs(nodes)) == pytest.approx(5.0)
    nodes, weights = compact_rule(8, 3)
    assert nodes.shape == (512, 3) and np.sum(weights) == pytest.approx(8.0)


@given(st.floats(0.3, 4.0), st.floats(-1.0, 1.0))
def test_decay_rule_integrates_shifted_gaussians(a, c):
    nodes, weights = decay_rule(128, 1, 12.0)
    got = np.sum(weights * np.exp(-a * (nodes[:, 0] - c) ** 2))
    assert got == pytest.approx(math.sqrt(math.pi / a), rel=1e-12)


def test_pairwise_sum_is_order_fixed_and_accurate():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 1001))
    np.testing.assert_allclose(pairwise_sum(a), a.sum(axis=-1), rtol=1e-13)
    assert np.array_equal(pairwise_sum(a), pairwise_sum(a.copy()))
    assert pairwise_sum(np.zeros((2, 0))).shape == (2,)


def test_refine_integrate_doubles_until_converged():
    # integrand with a sharp feature: needs more than the starting nodes
    def terms(idx, n):
        x, w = gauss_legendre(n)
        return np.broadcast_to(w * np.exp(-400 * x * x), (len(idx), n))

    res = refine_integrate(terms, 2, 16, 1e-10, 0.0, 4)
    assert res.value[0] == pytest.approx(math.sqrt(math.pi / 400) * math.erf(20), rel=1e-10)
    assert res.nodes[0] > 16


def test_refine_integrate_reports_failure():
    def terms(idx, n):
        x, w = gauss_legendre(n)
        return np.broadcast_to(w * np.abs(x) ** 0.5 * np.sign(np.sin(50 * x + 0.3)), (len(idx), n))

    with pytest.raises(QuadratureToleranceError) as exc:
        refine_integrate(terms, 1, 8, 1e-14, 0.0, 2)
    assert exc.value.nodes == 32 and exc.value.estimate > exc.value.tolerance


@pytest.mark.parametrize(
    "changes, key",
    [({"n0": 4}, "n0"), ({"npos": 2}, "npos"), ({"t_switch": 0.7}, "t_switch"), ({"t0_radius": -1}, "t0_radius"),
     ({"precision": "quad"}, "precision")],
)
def test_spec_validation(changes, key):
    with pytest.raises(ConfigError) as exc:
        QuadratureSpec(**changes)
    assert exc.value.key == key


def test_spec_dict_round_trip():
    spec = QuadratureSpec(n0=64, t0_radius=1.5, precision="extended")
    assert QuadratureSpec.from_dict(spec.to_dict()) == spec
    assert spec.dtype == np.longdouble
    with pytest.raises(ConfigError):
        QuadratureSpec.from_dict({"nodes": 3})


def test_switch_is_closed_on_the_left():
    spec = QuadratureSpec(t_switch=0.1)
    assert spec.uses_decay_rule(0.1) and not spec.uses_decay_rule(0.1000001)
