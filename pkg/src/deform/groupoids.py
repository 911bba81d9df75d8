"""Concrete Lie groupoids and their tangent groupoids.

Every instance here has globally coordinatized source fibers: an arrow
``g`` is described by the chart ``(x, v)`` with ``x = s(g)`` and ``v`` a
coordinate on the fiber ``G_x`` in which the Haar measure is Lebesgue
and the unit sits at ``v = 0``.

Arrows are also kept in their natural form (pairs of points, group
elements, vectors over a base point) so that the groupoid axioms can be
checked independently of the chart.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dnc_atlas import (
    Boundary,
    DncPoint,
    Interior,
    PairMorphism,
    SlicePair,
    as_coords,
    dnc_functor_apply,
    transition_map,
)
from .errors import CompositionError, DomainError
from .supports import ConicBox, ConicCompactSet

COMPOSE_TOL = 1e-12


def wrap(v):
    """Reduce to the fundamental domain ``[-1/2, 1/2)``."""
    v = np.asarray(v)
    return (v + 0.5) % 1 - 0.5


class GroupoidModel:
    """Interface shared by the concrete instances.

    Subclasses set ``key``, ``p`` (unit dimension), ``q`` (fiber
    dimension), ``periodic`` and implement the natural structure maps
    together with ``chart`` / ``chart_inv``.
    """

    key: str = ""
    p: int
    q: int
    periodic: bool = False
    periodic_units: bool = False

    # natural structure maps -------------------------------------------------
    def source(self, g):
        raise NotImplementedError

    def target(self, g):
        raise NotImplementedError

    def multiply(self, g, h):
        raise NotImplementedError

    def invert(self, g):
        raise NotImplementedError

    def unit(self, x):
        raise NotImplementedError

    def chart(self, g):
        raise NotImplementedError

    def chart_inv(self, x, v):
        raise NotImplementedError

    def unit_distance(self, a, b):
        d = np.asarray(a) - np.asarray(b)
        if self.periodic:
            d = wrap(d)
        return np.max(np.abs(d), axis=-1, initial=0.0)

    def arrow_distance(self, g, h):
        d = np.asarray(g) - np.asarray(h)
        if self.periodic_arrow_mask is not None:
            d = np.where(self.periodic_arrow_mask, wrap(d), d)
        return np.max(np.abs(d), axis=-1, initial=0.0)

    periodic_arrow_mask = None

    def composable(self, g, h, tol: float = COMPOSE_TOL):
        return self.unit_distance(self.source(g), self.target(h)) <= tol

    def checked_multiply(self, g, h):
        if not np.all(self.composable(g, h)):
            raise CompositionError("s(g) != r(h) for some pair")
        return self.multiply(g, h)

    # fibers and Haar --------------------------------------------------------
    def fiber_bounds(self):
        """Coordinate range of a source fiber in the chart, per axis."""
        if self.periodic_fiber:
            return np.full(self.q, -0.5), np.full(self.q, 0.5)
        return np.full(self.q, -np.inf), np.full(self.q, np.inf)

    periodic_fiber = False

    @cached_property
    def slice(self) -> SlicePair:
        if self.periodic_fiber:
            return SlicePair(self.p, self.q, lambda x, v: np.all(np.abs(v) < 0.5, axis=-1), name=self.key)
        return SlicePair(self.p, self.q, None, name=self.key)

    def random_units(self, rng: np.random.Generator, n: int, scale: float = 2.0):
        if self.periodic_units:
            return rng.random((n, self.p))
        return rng.uniform(-scale, scale, (n, self.p))

    periodic_units = False

    def random_arrows_from(self, rng: np.random.Generator, x, scale: float = 1.0):
        """Random arrows with source ``x``."""
        x = np.asarray(x)
        if self.periodic_fiber:
            v = rng.uniform(-0.5, 0.5, x.shape[:-1] + (self.q,))
        else:
            v = rng.uniform(-scale, scale, x.shape[:-1] + (self.q,))
        return self.chart_inv(x, v)

    def random_arrows(self, rng: np.random.Generator, n: int):
        return self.random_arrows_from(rng, self.random_units(rng, n))

    def random_composable_triple(self, rng: np.random.Generator, n: int):
        h = self.random_arrows(rng, n)
        g = self.random_arrows_from(rng, self.target(h))
        f = self.random_arrows_from(rng, self.target(g))
        return f, g, h

    # chart-level morphisms ---------------------------------------------------
    @cached_property
    def division_morphism(self) -> PairMorphism:
        """``(x, (v_g, v_d)) -> chart(g d^-1)`` for ``g, d`` in the fiber over ``x``."""
        p, q = self.p, self.q

        def split(v):
            return v[..., :q], v[..., q:]

        def f1(x, v):
            vg, vd = split(v)
            g = self.chart_inv(x, vg)
            d = self.chart_inv(x, vd)
            return self.chart(self.multiply(g, self.invert(d)))[0]

        def f2(x, v):
            vg, vd = split(v)
            g = self.chart_inv(x, vg)
            d = self.chart_inv(x, vd)
            return self.chart(self.multiply(g, self.invert(d)))[1]

        jac = np.hstack([np.eye(q), -np.eye(q)])
        return PairMorphism(p, 2 * q, p, q, f1, f2, lambda x: jac, name=f"{self.key}:division")

    @cached_property
    def multiplication_morphism(self) -> PairMorphism:
        """``(x, (v_g, v_h)) -> chart(g h)`` where ``x = s(h)`` and ``g`` leaves ``r(h)``."""
        p, q = self.p, self.q

        def product(x, v):
            h = self.chart_inv(x, v[..., q:])
            g = self.chart_inv(self.target(h), v[..., :q])
            return self.chart(self.multiply(g, h))

        jac = np.hstack([np.eye(q), np.eye(q)])
        return PairMorphism(
            p, 2 * q, p, q, lambda x, v: product(x, v)[0], lambda x, v: product(x, v)[1],
            lambda x: jac, name=f"{self.key}:m",
        )

    @cached_property
    def source_morphism(self) -> PairMorphism:
        return PairMorphism(
            self.p, self.q, self.p, 0, lambda x, v: x,
            lambda x, v: np.zeros(np.shape(x)[:-1] + (0,)),
            lambda x: np.zeros(np.shape(x)[:-1] + (0, self.q)), name=f"{self.key}:s",
        )

    @cached_property
    def target_morphism(self) -> PairMorphism:
        return PairMorphism(
            self.p, self.q, self.p, 0, lambda x, v: self.target(self.chart_inv(x, v)),
            lambda x, v: np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(v)[:-1]) + (0,)),
            lambda x: np.zeros(np.shape(x)[:-1] + (0, self.q)), name=f"{self.key}:r",
        )

    @cached_property
    def unit_morphism(self) -> PairMorphism:
        q = self.q
        return PairMorphism(
            self.p, 0, self.p, q, lambda x, v: x,
            lambda x, v: np.zeros(np.shape(x)[:-1] + (q,)),
            lambda x: np.zeros(np.shape(x)[:-1] + (q, 0)), name=f"{self.key}:u",
        )

    @cached_property
    def inverse_morphism(self) -> PairMorphism:
        def inv(x, v):
            return self.chart(self.invert(self.chart_inv(x, v)))

        return PairMorphism(
            self.p, self.q, self.p, self.q, lambda x, v: inv(x, v)[0], lambda x, v: inv(x, v)[1],
            lambda x: -np.eye(self.q), name=f"{self.key}:i",
        )

    # supports ---------------------------------------------------------------
    def compose_support(self, k_first: ConicCompactSet, k_second: ConicCompactSet) -> ConicCompactSet:
        """Box enclosure of ``{g h : g in K_first, h in K_second}`` in chart coordinates.

        The product of ``(x', v_g)`` and ``(x, v_h)`` has source ``x`` and
        fiber coordinate ``v_g + v_h`` (wrapped on periodic fibers), so the
        enclosure takes the x-range of the second factor and adds normal
        bounds.
        """
        boxes = []
        for a in k_first.boxes:
            for b in k_second.boxes:
                t_lo, t_hi = max(a.t_lo, b.t_lo), min(a.t_hi, b.t_hi)
                if t_lo > t_hi:
                    continue
                box = ConicBox(
                    b.x_lo, b.x_hi,
                    np.add(a.v_lo, b.v_lo), np.add(a.v_hi, b.v_hi),
                    np.add(a.s_lo, b.s_lo), np.add(a.s_hi, b.s_hi),
                    t_lo, t_hi,
                )
                boxes.extend(self._clip_to_fiber(box))
        return ConicCompactSet(boxes, self.p, self.q)

    def _clip_to_fiber(self, box: ConicBox) -> list[ConicBox]:
        if not self.periodic_fiber:
            return [box]
        # above the first time a bound leaves [-1/2, 1/2] the wrapped image may
        # be anywhere on the fiber
        t_exit = box.t_hi
        for j in range(box.q):
            for off, slope, limit in ((box.v_hi[j], box.s_hi[j], 0.5), (box.v_lo[j], box.s_lo[j], -0.5)):
                if slope != 0:
                    tc = (limit - off) / slope
                    if box.t_lo <= tc < t_exit and (off + slope * box.t_hi - limit) * np.sign(limit) > 0:
                        t_exit = max(tc, box.t_lo)
                elif abs(off) > 0.5 and np.sign(off) == np.sign(limit):
                    t_exit = box.t_lo
        if t_exit >= box.t_hi:
            return [box]
        full = ConicBox.slab(box.x_lo, box.x_hi, [-0.5] * box.q, [0.5] * box.q, max(t_exit, 1e-300), box.t_hi)
        if t_exit <= box.t_lo:
            return [full]
        lower = ConicBox(box.x_lo, box.x_hi, box.v_lo, box.v_hi, box.s_lo, box.s_hi, box.t_lo, t_exit)
        return [lower, full]


class PairGroupoid(GroupoidModel):
    """``M x M ⇉ M`` for ``M = R^n`` or the flat torus ``R^n / Z^n``.

    Arrows are ``(a, b)`` stored as ``[a | b]``; ``s(a, b) = b``,
    ``r(a, b) = a`` and ``(a, b)(b, c) = (a, c)``. The fiber coordinate
    is ``v = a - b``, wrapped to ``[-1/2, 1/2)^n`` on the torus.
    """

    def __init__(self, n: int, torus: bool = False):
        if n < 1:
            raise ValueError("pair groupoid needs n >= 1")
        self.n = n
        self.p = n
        self.q = n
        self.torus = torus
        self.periodic = torus
        self.periodic_units = torus
        self.periodic_fiber = torus
        self.key = f"pair-{'t' if torus else 'r'}{n}"
        self.periodic_arrow_mask = np.ones(2 * n, dtype=bool) if torus else None

    def _norm(self, a):
        return np.mod(a, 1.0) if self.torus else a

    def source(self, g):
        return np.asarray(g)[..., self.n :]

    def target(self, g):
        return np.asarray(g)[..., : self.n]

    def multiply(self, g, h):
        g, h = np.broadcast_arrays(np.asarray(g), np.asarray(h))
        return np.concatenate([g[..., : self.n], h[..., self.n :]], axis=-1)

    def invert(self, g):
        g = np.asarray(g)
        return np.concatenate([g[..., self.n :], g[..., : self.n]], axis=-1)

    def unit(self, x):
        x = self._norm(as_coords(x, self.n))
        return np.concatenate([x, x], axis=-1)

    def chart(self, g):
        g = np.asarray(g)
        a, b = g[..., : self.n], g[..., self.n :]
        v = a - b
        return b, (wrap(v) if self.torus else v)

    def chart_inv(self, x, v):
        x = as_coords(x, self.n)
        v = as_coords(v, self.n)
        x, v = np.broadcast_arrays(x, v)
        return np.concatenate([self._norm(x + v), self._norm(x)], axis=-1)

    def fiber_coordinate(self, g):
        return self.chart(g)[1]


class AbelianGroup(GroupoidModel):
    """The additive group ``R^q`` as a groupoid over a single point."""

    def __init__(self, q: int):
        if q < 1:
            raise ValueError("abelian group needs q >= 1")
        self.p = 0
        self.q = q
        self.key = f"abelian-q{q}"

    def source(self, g):
        return np.zeros(np.shape(g)[:-1] + (0,))

    target = source

    def multiply(self, g, h):
        return np.asarray(g) + np.asarray(h)

    def invert(self, g):
        return -np.asarray(g)

    def unit(self, x=None):
        shape = () if x is None else np.shape(x)[:-1]
        return np.zeros(shape + (self.q,))

    def chart(self, g):
        g = np.asarray(g)
        return np.zeros(g.shape[:-1] + (0,), dtype=g.dtype), g

    def chart_inv(self, x, v):
        v = as_coords(v, self.q)
        x = as_coords(x, 0)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        return np.broadcast_to(v, shape + (self.q,)).copy()

    def random_units(self, rng, n, scale=2.0):
        return np.zeros((n, 0))


class BundleGroupoid(GroupoidModel):
    """Trivial vector bundle ``T^p x R^q ⇉ T^p`` with fiberwise addition."""

    def __init__(self, p: int, q: int):
        if p < 1 or q < 1:
            raise ValueError("bundle groupoid needs p, q >= 1")
        self.p = p
        self.q = q
        self.periodic = True
        self.periodic_units = True
        self.key = f"bundle-t{p}-q{q}"
        self.periodic_arrow_mask = np.r_[np.ones(p, dtype=bool), np.zeros(q, dtype=bool)]

    def source(self, g):
        return np.asarray(g)[..., : self.p]

    target = source

    def multiply(self, g, h):
        g, h = np.broadcast_arrays(np.asarray(g), np.asarray(h))
        return np.concatenate([h[..., : self.p], g[..., self.p :] + h[..., self.p :]], axis=-1)

    def invert(self, g):
        g = np.asarray(g)
        return np.concatenate([g[..., : self.p], -g[..., self.p :]], axis=-1)

    def unit(self, x):
        x = np.mod(as_coords(x, self.p), 1.0)
        return np.concatenate([x, np.zeros(x.shape[:-1] + (self.q,))], axis=-1)

    def chart(self, g):
        g = np.asarray(g)
        return g[..., : self.p], g[..., self.p :]

    def chart_inv(self, x, v):
        x = as_coords(x, self.p)
        v = as_coords(v, self.q)
        x, v = np.broadcast_arrays(x, v)
        return np.concatenate([np.mod(x, 1.0), v], axis=-1)


def make_pair_groupoid(space: str) -> PairGroupoid:
    """``space`` is ``"euclidean n"`` or ``"torus n"``."""
    kind, _, n = space.partition(" ")
    n = int(n or 1)
    if kind not in ("euclidean", "torus"):
        raise ValueError(f"unknown space {space!r}")
    return PairGroupoid(n, torus=kind == "torus")


def make_abelian_group(q: int) -> AbelianGroup:
    return AbelianGroup(q)


def make_bundle_groupoid(base: str, fiber_dim: int) -> BundleGroupoid:
    kind, _, p = base.partition(" ")
    if kind != "torus":
        raise ValueError("only trivial bundles over tori are supported")
    return BundleGroupoid(int(p or 1), fiber_dim)


GROUPOID_KEYS = {
    "pair-r1": lambda: PairGroupoid(1),
    "pair-r2": lambda: PairGroupoid(2),
    "pair-t1": lambda: PairGroupoid(1, torus=True),
    "abelian-q1": lambda: AbelianGroup(1),
    "bundle-t1-q1": lambda: BundleGroupoid(1, 1),
}


def groupoid_from_key(key: str) -> GroupoidModel:
    try:
        return GROUPOID_KEYS[key]()
    except KeyError:
        raise KeyError(key) from None


# ---------------------------------------------------------------------------
# tangent groupoid


@dataclass(frozen=True)
class TangentGroupoidModel:
    """Tangent groupoid of `base` on deformation points.

    Arrows are `DncPoint` values in the chart of `base`; units are
    `DncPoint` values with an empty normal part. Every structure map is
    the deformation functor applied to the corresponding chart morphism
    of `base`.
    """

    base: GroupoidModel

    @property
    def p(self) -> int:
        return self.base.p

    @property
    def q(self) -> int:
        return self.base.q

    @property
    def key(self) -> str:
        return self.base.key

    def source(self, g: DncPoint) -> DncPoint:
        return dnc_functor_apply(self.base.source_morphism, g)

    def target(self, g: DncPoint) -> DncPoint:
        return dnc_functor_apply(self.base.target_morphism, g)

    def unit(self, u: DncPoint) -> DncPoint:
        return dnc_functor_apply(self.base.unit_morphism, u)

    def invert(self, g: DncPoint) -> DncPoint:
        return dnc_functor_apply(self.base.inverse_morphism, g)

    def composable(self, g: DncPoint, h: DncPoint, tol: float = COMPOSE_TOL) -> bool:
        a, b = self.source(g), self.target(h)
        if type(a) is not type(b):
            return False
        if isinstance(a, Interior) and abs(a.t - b.t) > tol:
            return False
        return bool(self.base.unit_distance(np.asarray(a.x), np.asarray(b.x)) <= tol)

    def multiply(self, g: DncPoint, h: DncPoint) -> DncPoint:
        if not self.composable(g, h):
            raise CompositionError(f"arrows are not composable: s(g)={self.source(g)}, r(h)={self.target(h)}")
        if isinstance(g, Boundary):
            pair = Boundary(h.x, g.xi + h.xi)
        else:
            pair = Interior(h.x + g.eta + h.eta, g.t, p=self.p)
        return dnc_functor_apply(self.base.multiplication_morphism, pair)

    def haar_weight(self, x, t: float) -> float:
        return haar_weight(self, x, t)

    def arrow(self, x, xi, t):
        """Base-groupoid arrow represented by the interior coordinates ``(x, xi, t)``."""
        x = as_coords(x, self.p)
        xi = as_coords(xi, self.q)
        t = np.asarray(t)
        return self.base.chart_inv(x, xi * t[..., None])

    def coordinates_of(self, g, t):
        """Inverse of `arrow`: deformation coordinates of a base arrow at time ``t > 0``."""
        x, v = self.base.chart(g)
        t = np.asarray(t)
        return x, v / t[..., None], t

    def division_coords(self, x, xi, eta, t):
        """Coordinates of ``g d^-1`` where ``g = (x, xi, t)`` and ``d = (x, eta, t)``."""
        xi, eta = np.broadcast_arrays(as_coords(xi, self.q), as_coords(eta, self.q))
        return transition_map(self.base.division_morphism, x, np.concatenate([xi, eta], axis=-1), t)


def tangent_groupoid(base: GroupoidModel) -> TangentGroupoidModel:
    return TangentGroupoidModel(base)


def haar_weight(tg: TangentGroupoidModel, x, t: float) -> float:
    """Scalar multiplying the base Haar density on the fiber over ``(x, t)``."""
    t = float(t)
    if not 0 <= t <= 1:
        raise DomainError(f"t={t} outside [0, 1]", coordinates=(t,))
    if t == 0:
        return 1.0
    return t ** (-tg.q)
