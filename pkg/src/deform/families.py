"""Named closed-form field families, adapted to each groupoid instance.

Every family is a product ``amp * fiber(xi) * window(x) * cone(xi) * seam(t*xi)``:

* ``window`` localizes in the unit direction: on ``R^p`` a Gaussian times a
  plateau vanishing for ``|x| >= 10``; on the torus the positive trigonometric
  weight ``1 + x_rate cos(2 pi x)``.
* ``cone`` is a plateau in ``xi / L`` that makes the support conic compact.
* ``seam`` (periodic fibers only) keeps ``t*xi`` away from the cut locus
  ``|v| = 1/2`` of the torus fiber coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import hermite_e

from .cutoffs import plateau_nd
from .errors import ConfigError
from .groupoids import GroupoidModel
from .schwartz_fields import BundleSchwartzField, SchwartzDncField
from .supports import ConicBox, ConicCompactSet

X_INNER, X_OUTER = 8.0, 10.0
SEAM_INNER, SEAM_OUTER = 0.4, 0.49


def _window(groupoid: GroupoidModel, x_rate: float) -> Callable:
    p = groupoid.p
    if p == 0:
        return lambda x: 1.0
    if groupoid.periodic_units:
        if not 0 <= x_rate < 1:
            raise ConfigError(f"torus window needs 0 <= x_rate < 1, got {x_rate}", key="x_rate")
        return lambda x: np.prod(1 + x_rate * np.cos(2 * np.pi * x), axis=-1)
    return lambda x: np.exp(-x_rate * np.sum(x * x, axis=-1)) * plateau_nd(x, X_INNER, X_OUTER)


def _x_box(groupoid: GroupoidModel):
    p = groupoid.p
    if groupoid.periodic_units:
        return (0.0,) * p, (1.0,) * p
    return (-X_OUTER,) * p, (X_OUTER,) * p


def default_cone(groupoid: GroupoidModel) -> float:
    return 2.0 if groupoid.periodic_fiber else 10.0


def family_support(groupoid: GroupoidModel, cone: float) -> ConicCompactSet:
    """Conic support shared by all families: ``|xi| <= L``, plus ``|v| <= 0.49`` on periodic fibers."""
    x_lo, x_hi = _x_box(groupoid)
    q = groupoid.q
    if not groupoid.periodic_fiber or cone <= SEAM_OUTER:
        return ConicCompactSet([ConicBox.cone(x_lo, x_hi, (-cone,) * q, (cone,) * q)], groupoid.p, q)
    tc = SEAM_OUTER / cone
    return ConicCompactSet(
        [
            ConicBox.cone(x_lo, x_hi, (-cone,) * q, (cone,) * q, 0.0, tc),
            ConicBox.slab(x_lo, x_hi, (-SEAM_OUTER,) * q, (SEAM_OUTER,) * q, tc, 1.0),
        ],
        groupoid.p, q,
    )


def _assemble(groupoid: GroupoidModel, fiber: Callable, amp: float, x_rate: float, t_rate: float,
              cone: float | None, name: str) -> SchwartzDncField:
    cone = default_cone(groupoid) if cone is None else float(cone)
    if cone <= 0:
        raise ConfigError("cone radius must be positive", key="cone")
    window = _window(groupoid, x_rate)
    periodic = groupoid.periodic_fiber

    def func(x, xi, t):
        val = amp * fiber(xi) * window(x) * plateau_nd(xi / cone, 0.5, 1.0)
        if t_rate:
            val = val * (1 + t_rate * t)
        if periodic:
            val = val * plateau_nd(xi * t[..., None], SEAM_INNER, SEAM_OUTER)
        return val

    return SchwartzDncField(
        func, groupoid.p, groupoid.q, family_support(groupoid, cone), chart=groupoid.slice,
        name=name, periodic_x=groupoid.periodic_units,
    )


def gaussian(groupoid: GroupoidModel, a: float = 1.0, center: float = 0.0, x_rate: float = 0.0,
             amp: float = 1.0, t_rate: float = 0.0, cone: float | None = None) -> SchwartzDncField:
    """``amp * exp(-a |xi - center|^2)`` with window and cutoffs."""
    if a <= 0:
        raise ConfigError("gaussian width parameter must be positive", key="a")

    def fiber(xi):
        d = xi - center
        return np.exp(-a * np.sum(d * d, axis=-1))

    return _assemble(groupoid, fiber, amp, x_rate, t_rate, cone, f"gaussian(a={a},c={center})")


def hermite_gaussian(groupoid: GroupoidModel, a: float = 1.0, degree: int = 1, center: float = 0.0,
                     x_rate: float = 0.0, amp: float = 1.0, cone: float | None = None) -> SchwartzDncField:
    """``He_n(sqrt(2a) (xi_1 - center)) * exp(-a |xi - center|^2)``."""
    degree = int(degree)
    if degree < 0 or a <= 0:
        raise ConfigError("hermite-gaussian needs degree >= 0 and a > 0", key="degree")
    coeffs = np.zeros(degree + 1)
    coeffs[-1] = 1.0
    scale = np.sqrt(2 * a)

    def fiber(xi):
        d = xi - center
        return hermite_e.hermeval(scale * d[..., 0], coeffs) * np.exp(-a * np.sum(d * d, axis=-1))

    return _assemble(groupoid, fiber, amp, x_rate, 0.0, cone, f"hermite-gaussian(n={degree})")


def windowed_polynomial(groupoid: GroupoidModel, coeffs: Sequence[float] = (1.0, 0.0, -0.25),
                        x_rate: float = 0.0, amp: float = 1.0, cone: float | None = None) -> SchwartzDncField:
    """Polynomial in ``xi_1`` cut off by the cone plateau (compact in xi)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        raise ConfigError("windowed-polynomial needs at least one coefficient", key="coeffs")

    def fiber(xi):
        return np.polynomial.polynomial.polyval(xi[..., 0], coeffs)

    return _assemble(groupoid, fiber, amp, x_rate, 0.0, cone, "windowed-polynomial")


# parameter order for positional (array) configs
FAMILIES: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "gaussian": (gaussian, ("a", "center", "x_rate", "amp", "t_rate", "cone")),
    "hermite-gaussian": (hermite_gaussian, ("a", "degree", "center", "x_rate", "amp", "cone")),
    "windowed-polynomial": (windowed_polynomial, ("coeffs", "x_rate", "amp", "cone")),
}


@dataclass(frozen=True)
class FamilySpec:
    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_config(cls, item) -> "FamilySpec":
        if isinstance(item, str):
            item = {"family": item}
        if not isinstance(item, Mapping) or "family" not in item:
            raise ConfigError("field entries need a 'family' name", key="fields")
        name = item["family"]
        if name not in FAMILIES:
            raise ConfigError(f"unknown field family {name!r}", key=name)
        params = item.get("params", {})
        _, order = FAMILIES[name]
        if isinstance(params, Sequence) and not isinstance(params, str):
            if name == "windowed-polynomial":
                params = {"coeffs": list(params)}
            else:
                if len(params) > len(order):
                    raise ConfigError(f"too many parameters for {name!r}", key=name)
                params = dict(zip(order, params))
        elif not isinstance(params, Mapping):
            raise ConfigError(f"parameters of {name!r} must be an array or object", key=name)
        unknown = set(params) - set(order)
        if unknown:
            raise ConfigError(f"unknown parameter {sorted(unknown)[0]!r} for {name!r}", key=sorted(unknown)[0])
        return cls(name, dict(params))

    def to_config(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}

    def build(self, groupoid: GroupoidModel) -> SchwartzDncField:
        builder, _ = FAMILIES[self.family]
        return builder(groupoid, **self.params)


def bundle_gaussian(p: int, q: int, a: float = 0.5, center: float = 0.0, amp: float = 1.0) -> BundleSchwartzField:
    """x-independent ``amp * exp(-a |xi - center|^2)`` on a trivial bundle."""

    def func(x, xi):
        d = xi - center
        return amp * np.exp(-a * np.sum(d * d, axis=-1))

    return BundleSchwartzField(func, p, q, name=f"gaussian(a={a},c={center})")
