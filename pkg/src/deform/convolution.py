"""Convolution on tangent groupoids, bundle convolution and evaluation maps.

In the chart of a groupoid instance an arrow over ``(x, t)`` is written
``(x, xi, t)`` with ``x`` its source. For ``gamma = (x, xi, t)`` and
``delta = (x, eta, t)`` in the same source fiber the product is

    (f * g)(x, xi, t) = ∫ f(gamma delta^-1) g(x, eta, t) d eta,

where ``d eta`` is Lebesgue measure at ``t = 0`` and ``t^-q dv`` with
``v = t eta`` at ``t > 0``. On the pair groupoid of ``R`` this reads
``∫ f(x + t eta, xi - eta, t) g(x, eta, t) d eta``.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dnc_atlas import as_coords, transition_map
from .groupoids import GroupoidModel, TangentGroupoidModel, tangent_groupoid
from .quadrature import QuadratureSpec, compact_rule, decay_rule, pairwise_sum, refine_integrate
from .schwartz_fields import BundleSchwartzField, SchwartzDncField
from .supports import ConicCompactSet

# elements per evaluation block (points x nodes)
BLOCK = 1 << 21


def sup_relative_error(a, b) -> float:
    """``max |a - b| / max |b|``; 0 when both vanish."""
    a = np.asarray(a)
    b = np.asarray(b)
    num = float(np.max(np.abs(a - b), initial=0.0))
    den = float(np.max(np.abs(b), initial=0.0))
    if num == 0:
        return 0.0
    return num / den if den > 0 else float("inf")


class PointCache:
    """Thread-safe LRU memo keyed by the bytes of an evaluation batch."""

    def __init__(self, maxsize: int = 256):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(*arrays) -> tuple:
        return tuple((a.dtype.str, a.shape, a.tobytes()) for a in map(np.ascontiguousarray, arrays))

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
            self.misses += 1
            return None

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)


def _resolve(groupoid) -> TangentGroupoidModel:
    if isinstance(groupoid, TangentGroupoidModel):
        return groupoid
    if isinstance(groupoid, GroupoidModel):
        return tangent_groupoid(groupoid)
    raise TypeError(f"expected a groupoid model, got {type(groupoid).__name__}")


def _chart_key(field) -> str | None:
    chart = getattr(field, "chart", None)
    return getattr(chart, "name", chart) if chart is not None else None


def _check_instance(tg: TangentGroupoidModel, *fields):
    for f in fields:
        key = _chart_key(f)
        if key is not None and key != tg.key:
            raise TypeError(f"field {f.name!r} lives on {key!r}, not on {tg.key!r}")
        if (f.p, f.q) != (tg.p, tg.q):
            raise TypeError(f"field {f.name!r} has dimensions ({f.p}, {f.q}), groupoid {tg.key!r} has ({tg.p}, {tg.q})")


def _delta_hull(tg: TangentGroupoidModel, support: ConicCompactSet | None, x, t, periodic_x: bool):
    """Bounds of the fiber coordinate ``v`` of arrows in `support` over ``(x, t)``."""
    lo_f, hi_f = tg.base.fiber_bounds()
    x = np.asarray(x, dtype=float)
    if support is None:
        shape = x.shape[:-1] + (tg.q,)
        return np.broadcast_to(lo_f, shape).copy(), np.broadcast_to(hi_f, shape).copy()
    if periodic_x:
        x = np.mod(x, 1.0)
    lo, hi = support.v_hull(x, np.full(x.shape[:-1], float(t)))
    return np.maximum(lo, lo_f), np.minimum(hi, hi_f)


# ---------------------------------------------------------------------------
# two-variable fields and fiber integration


@dataclass(frozen=True)
class TwoVariableField:
    """A function on composable pairs ``(alpha, delta)`` of the tangent groupoid.

    ``func(x, xi_alpha, xi_delta, t)`` with ``x = s(delta)``; ``alpha`` leaves
    ``r(delta)``. ``delta_support`` bounds ``delta`` (used as the truncation
    box for ``t > t*``) and ``product_support`` bounds ``alpha delta``.
    """

    func: Callable
    groupoid: TangentGroupoidModel
    delta_support: ConicCompactSet | None = None
    product_support: ConicCompactSet | None = None
    periodic_x: bool = False
    name: str = ""

    def __call__(self, x, xi_a, xi_d, t):
        return self.func(x, xi_a, xi_d, t)

    def __add__(self, other: "TwoVariableField") -> "TwoVariableField":
        def func(x, a, d, t):
            return self.func(x, a, d, t) + other.func(x, a, d, t)

        ds = ps = None
        if self.delta_support is not None and other.delta_support is not None:
            ds = self.delta_support.union(other.delta_support)
        if self.product_support is not None and other.product_support is not None:
            ps = self.product_support.union(other.product_support)
        return TwoVariableField(func, self.groupoid, ds, ps, self.periodic_x, f"({self.name}+{other.name})")

    def scale(self, c) -> "TwoVariableField":
        return TwoVariableField(
            lambda x, a, d, t: c * self.func(x, a, d, t), self.groupoid, self.delta_support,
            self.product_support, self.periodic_x, f"{c}·{self.name}",
        )


def separated(f: SchwartzDncField, g: SchwartzDncField, groupoid) -> TwoVariableField:
    """``(alpha, delta) -> f(alpha) g(delta)``."""
    tg = _resolve(groupoid)
    _check_instance(tg, f, g)
    r = tg.base.target_morphism

    def func(x, xi_a, xi_d, t):
        x_a = transition_map(r, x, xi_d, t)[0]
        return f.func(x_a, xi_a, t) * g.func(x, xi_d, t)

    product = None
    if f.support is not None and g.support is not None:
        product = tg.base.compose_support(f.support, g.support)
    return TwoVariableField(func, tg, g.support, product, g.periodic_x, f"({f.name},{g.name})")


def _flat(x, xi, t, p, q, dtype):
    x = as_coords(x, p)
    xi = as_coords(xi, q)
    t = np.asarray(t)
    shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1], t.shape)
    n = int(np.prod(shape))
    x = np.broadcast_to(x, shape + (p,)).reshape(n, p).astype(dtype)
    xi = np.broadcast_to(xi, shape + (q,)).reshape(n, q).astype(dtype)
    t = np.broadcast_to(t, shape).reshape(-1).astype(dtype)
    return shape, x, xi, t


def _fiber_integral(integrand: Callable, x, t, q: int, spec: QuadratureSpec, hull) -> np.ndarray:
    """``∫ integrand(idx, eta) d eta`` for points sharing one value of ``t``.

    ``integrand(idx, eta)`` gets point indices and nodes ``eta`` of shape
    ``(len(idx), m, q)`` and returns ``(len(idx), m)`` values. ``hull`` gives
    per-point bounds of ``v = t eta`` and is only used for ``t > t*``.
    """
    n_pts = len(x)
    dtype = spec.dtype
    t_val = np.asarray(t, dtype=dtype)

    if spec.uses_decay_rule(float(t)):
        def terms(idx, n):
            nodes, weights = decay_rule(n, q, spec.t0_radius, spec.precision)
            def block(sub):
                return integrand(sub, np.broadcast_to(nodes, (len(sub),) + nodes.shape)) * weights

            return _blocked(idx, nodes.shape[0], block)

        res = refine_integrate(terms, n_pts, spec.n0, spec.rel_tol, spec.abs_tol, spec.max_doublings)
        return res.value

    lo, hi = hull
    lo = np.asarray(lo, dtype=dtype)
    hi = np.asarray(hi, dtype=dtype)
    empty = np.any(lo >= hi, axis=-1)
    live = np.nonzero(~empty)[0]
    value = None
    if len(live):
        mid = (lo[live] + hi[live]) / 2
        half = (hi[live] - lo[live]) / 2
        jac = np.prod(half, axis=-1)

        def terms(idx, n):
            nodes, weights = compact_rule(n, q, spec.precision)

            def block(sub):
                v = mid[sub][:, None, :] + half[sub][:, None, :] * nodes[None, :, :]
                return integrand(live[sub], v / t_val) * (weights[None, :] * jac[sub][:, None])

            return _blocked(idx, nodes.shape[0], block)

        res = refine_integrate(terms, len(live), spec.npos, spec.rel_tol, spec.abs_tol, spec.max_doublings)
        # the Haar rescaling enters once, after summation
        vals = res.value * t_val ** (-q)
        value = np.zeros(n_pts, dtype=vals.dtype)
        value[live] = vals
    if value is None:
        value = np.zeros(n_pts, dtype=dtype)
    return value


def _blocked(idx, m, fn):
    step = max(1, BLOCK // max(m, 1))
    if len(idx) <= step:
        return fn(idx)
    return np.concatenate([fn(idx[i : i + step]) for i in range(0, len(idx), step)], axis=0)


def fiber_integrate(F: SchwartzDncField, spec: QuadratureSpec | None, x, eta, t) -> np.ndarray:
    """``∫ F(x, eta, xi, t) d xi`` with ``d xi`` rescaled as on the tangent groupoid.

    `F` is a field whose unit coordinates are ``(x, eta)`` (dimension
    ``p + q`` with ``q = F.q``) and whose fiber coordinates ``xi`` are
    integrated out. Its support gives the truncation box for ``t > t*``; at
    ``t <= t*`` the decaying-integrand rule runs over all of ``R^q``.
    """
    spec = spec or QuadratureSpec()
    q = F.q
    x = as_coords(x, F.p - q)
    eta = as_coords(eta, q)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], eta.shape[:-1], t.shape)
    xe = np.concatenate(
        [np.broadcast_to(x, shape + (F.p - q,)), np.broadcast_to(eta, shape + (q,))], axis=-1
    ).reshape(int(np.prod(shape)), F.p).astype(spec.dtype)
    t = np.broadcast_to(t, shape).reshape(-1)
    out = np.zeros(len(xe), dtype=spec.dtype)
    for tv in np.unique(t):
        sel = np.nonzero(t == tv)[0]
        pts = xe[sel]
        tval = np.asarray(tv, dtype=spec.dtype)

        def integrand(idx, nodes, pts=pts, tval=tval):
            return np.asarray(F(pts[idx][:, None, :], nodes, tval))

        hull = None
        if not spec.uses_decay_rule(float(tv)):
            if F.support is None:
                raise ValueError("fiber_integrate needs a support for t > t*")
            hull = F.support.v_hull(pts.astype(float), np.full(len(pts), float(tv)))
        vals = _fiber_integral(integrand, pts, tv, q, spec, hull)
        out = out.astype(np.result_type(out, vals))
        out[sel] = vals
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# m_rc and the convolution product


class LazyField(SchwartzDncField):
    """A field evaluated by quadrature on demand, memoized per evaluation batch."""

    def __init__(self, evaluate: Callable, p: int, q: int, support, chart, name: str, periodic_x: bool,
                 spec: QuadratureSpec, cache_size: int = 256):
        self.cache = PointCache(cache_size)
        self._evaluate = evaluate
        self.spec = spec

        def func(x, xi, t):
            key = self.cache.key(np.asarray(x), np.asarray(xi), np.asarray(t))
            hit = self.cache.get(key)
            if hit is not None:
                return hit
            val = evaluate(x, xi, t)
            val.setflags(write=False)
            self.cache.put(key, val)
            return val

        super().__init__(func, p, q, support, None, chart, name, periodic_x)


def m_rc(F: TwoVariableField, spec: QuadratureSpec | None = None) -> LazyField:
    """Integrate a two-variable field along the multiplication.

    ``m_rc(F)(gamma) = ∫ F(gamma delta^-1, delta) d mu(delta)`` over the
    source fiber of ``gamma``, with the rescaled Haar measure.
    """
    spec = spec or QuadratureSpec()
    tg = F.groupoid
    p, q = tg.p, tg.q

    def evaluate(x, xi, t):
        shape, xf, xif, tf = _flat(x, xi, t, p, q, spec.dtype)
        out = None
        for tv in np.unique(tf):
            sel = np.nonzero(tf == tv)[0]
            xs, xis = xf[sel], xif[sel]
            tval = np.asarray(tv, dtype=spec.dtype)

            def integrand(idx, eta, xs=xs, xis=xis, tval=tval):
                xb = np.broadcast_to(xs[idx][:, None, :], eta.shape[:-1] + (p,))
                xib = np.broadcast_to(xis[idx][:, None, :], eta.shape)
                _, xi_a, _ = tg.division_coords(xb, xib, eta, tval)
                return np.asarray(F.func(xb, xi_a, eta, tval))

            hull = None
            if not spec.uses_decay_rule(float(tv)):
                hull = _delta_hull(tg, F.delta_support, xs.astype(float), float(tv), F.periodic_x)
            vals = _fiber_integral(integrand, xs, tv, q, spec, hull)
            if out is None:
                out = np.zeros(len(tf), dtype=vals.dtype)
            elif out.dtype != vals.dtype:
                out = out.astype(np.result_type(out, vals))
            out[sel] = vals
        if out is None:
            out = np.zeros(len(tf), dtype=spec.dtype)
        return out.reshape(shape)

    return LazyField(evaluate, p, q, F.product_support, tg.base.slice, f"m({F.name})", F.periodic_x, spec)


def convolve(f: SchwartzDncField, g: SchwartzDncField, groupoid, spec: QuadratureSpec | None = None) -> LazyField:
    """The convolution product ``f * g`` on the tangent groupoid."""
    tg = _resolve(groupoid)
    out = m_rc(separated(f, g, tg), spec)
    out.name = f"({f.name}*{g.name})"
    return out


# ---------------------------------------------------------------------------
# evaluation morphisms


def evaluate_e0(f: SchwartzDncField) -> BundleSchwartzField:
    """Restriction to ``t = 0``: a function on the algebroid."""

    def func(x, xi):
        x = np.asarray(x)
        xi = np.asarray(xi)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        return f.func(x, xi, np.zeros(shape, dtype=np.result_type(x, xi)))

    base = None
    if f.support is not None and not f.support.is_empty:
        at_zero = f.support.restrict_t(0.0, 0.0)
        if not at_zero.is_empty:
            lo, hi, _, _ = at_zero.bounding_box()
            base = (tuple(map(float, lo)), tuple(map(float, hi)))
        else:
            base = ()
    return BundleSchwartzField(func, f.p, f.q, base, f"e0({f.name})", f.periodic_x)


@dataclass(frozen=True)
class GroupoidFunction:
    """A compactly supported function on a groupoid, given in chart coordinates.

    ``func(x, v)`` with ``x`` the source and ``v`` the fiber coordinate;
    ``support`` is a set in ``(x, v)`` (t fixed).
    """

    func: Callable
    groupoid: GroupoidModel
    support: ConicCompactSet | None = None
    t: float = 1.0
    periodic_x: bool = False
    name: str = ""

    def chart_eval(self, x, v):
        return self.func(x, v)

    def __call__(self, arrows):
        x, v = self.groupoid.chart(np.asarray(arrows))
        return self.func(x, v)

    def v_hull(self, x):
        """Fiber-coordinate bounds of the support over each unit in `x`."""
        lo_f, hi_f = self.groupoid.fiber_bounds()
        x = np.asarray(x, dtype=float)
        if self.support is None:
            shape = x.shape[:-1] + (self.groupoid.q,)
            return np.broadcast_to(lo_f, shape).copy(), np.broadcast_to(hi_f, shape).copy()
        if self.periodic_x:
            x = np.mod(x, 1.0)
        lo, hi = self.support.v_hull(x, np.full(x.shape[:-1], self.t))
        return np.maximum(lo, lo_f), np.minimum(hi, hi_f)


def evaluate_et(f: SchwartzDncField, t: float):
    """``gamma -> f(gamma, t)`` as a function on the base groupoid.

    ``t = 0`` is routed to :func:`evaluate_e0`.
    """
    t = float(t)
    if t == 0:
        return evaluate_e0(f)
    if not 0 < t <= 1:
        raise ValueError(f"t={t} outside (0, 1]")
    from .groupoids import groupoid_from_key

    base = groupoid_from_key(_chart_key(f)) if isinstance(_chart_key(f), str) else None

    def func(x, v):
        x = np.asarray(x)
        v = np.asarray(v)
        return f.func(x, v / t, np.full(np.broadcast_shapes(x.shape[:-1], v.shape[:-1]), t, dtype=np.result_type(x, v)))

    return GroupoidFunction(func, base, f.support, t, f.periodic_x, f"e_{t}({f.name})")


def groupoid_convolve(F: GroupoidFunction, G: GroupoidFunction, groupoid: GroupoidModel, weight: float,
                      spec: QuadratureSpec | None = None):
    """``(F * G)(gamma) = weight * ∫ F(gamma delta^-1) G(delta) dv(delta)`` over the source fiber.

    Arrows are formed with the groupoid's natural structure maps, so this
    path shares nothing with the deformation-space coordinates. Integration
    is a Legendre rule in ``v`` over the support of ``G``.
    """
    spec = spec or QuadratureSpec()
    q = groupoid.q

    def chart_eval(x, v):
        x = as_coords(x, groupoid.p)
        v = as_coords(v, q)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        n_pts = int(np.prod(shape))
        xf = np.broadcast_to(x, shape + (groupoid.p,)).reshape(n_pts, groupoid.p).astype(spec.dtype)
        vf = np.broadcast_to(v, shape + (q,)).reshape(n_pts, q).astype(spec.dtype)
        lo, hi = G.v_hull(xf.astype(float))
        lo = lo.astype(spec.dtype)
        hi = hi.astype(spec.dtype)
        empty = np.any(lo >= hi, axis=-1)
        live = np.nonzero(~empty)[0]
        out = np.zeros(len(xf), dtype=spec.dtype)
        if not len(live):
            return out.reshape(shape)
        mid, half = (lo[live] + hi[live]) / 2, (hi[live] - lo[live]) / 2
        jac = np.prod(half, axis=-1)

        def terms(idx, n):
            nodes, weights = compact_rule(n, q, spec.precision)

            def block(sub):
                vd = mid[sub][:, None, :] + half[sub][:, None, :] * nodes[None]
                xs = np.broadcast_to(xf[live[sub]][:, None, :], vd.shape[:-1] + (groupoid.p,))
                gamma = groupoid.chart_inv(xs, np.broadcast_to(vf[live[sub]][:, None, :], vd.shape))
                delta = groupoid.chart_inv(xs, vd)
                alpha = groupoid.multiply(gamma, groupoid.invert(delta))
                xa, va = groupoid.chart(alpha)
                return F.func(xa, va) * G.func(xs, vd) * (weights[None] * jac[sub][:, None])

            return _blocked(idx, nodes.shape[0], block)

        res = refine_integrate(terms, len(live), spec.npos, spec.rel_tol, spec.abs_tol, spec.max_doublings)
        out = out.astype(res.value.dtype)
        out[live] = res.value * weight
        return out.reshape(shape)

    support = None
    if F.support is not None and G.support is not None:
        support = groupoid.compose_support(F.support, G.support)
    return GroupoidFunction(chart_eval, groupoid, support, G.t, G.periodic_x, f"({F.name}*{G.name})")


def bundle_convolve(f: BundleSchwartzField, g: BundleSchwartzField, spec: QuadratureSpec | None = None,
                    cache_size: int = 256) -> BundleSchwartzField:
    """Fiberwise convolution ``(f * g)(x, xi) = ∫ f(x, xi - eta) g(x, eta) d eta``."""
    spec = spec or QuadratureSpec()
    if (f.p, f.q) != (g.p, g.q):
        raise TypeError("bundle dimensions differ")
    p, q = f.p, f.q
    cache = PointCache(cache_size)

    def func(x, xi):
        x = as_coords(x, p)
        xi = as_coords(xi, q)
        key = cache.key(x, xi)
        hit = cache.get(key)
        if hit is not None:
            return hit
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        dtype = np.result_type(spec.dtype, x.dtype, xi.dtype)
        n_pts = int(np.prod(shape))
        xf = np.broadcast_to(x, shape + (p,)).reshape(n_pts, p).astype(dtype)
        xif = np.broadcast_to(xi, shape + (q,)).reshape(n_pts, q).astype(dtype)

        def terms(idx, n):
            nodes, weights = decay_rule(n, q, spec.t0_radius, spec.precision)

            def block(sub):
                eta = np.broadcast_to(nodes, (len(sub),) + nodes.shape)
                xs = np.broadcast_to(xf[sub][:, None, :], eta.shape[:-1] + (p,))
                return f.func(xs, xif[sub][:, None, :] - eta) * g.func(xs, eta) * weights

            return _blocked(idx, nodes.shape[0], block)

        res = refine_integrate(terms, len(xf), spec.n0, spec.rel_tol, spec.abs_tol, spec.max_doublings)
        val = res.value.reshape(shape)
        val.setflags(write=False)
        cache.put(key, val)
        return val

    base = f.base_support if f.base_support is not None else g.base_support
    return BundleSchwartzField(func, p, q, base, f"({f.name}*{g.name})", f.periodic_x or g.periodic_x)


# ---------------------------------------------------------------------------
# oracles


def kernel_composition_oracle(f: SchwartzDncField, g: SchwartzDncField, t: float, n: int = 256,
                              groupoid=None, spec: QuadratureSpec | None = None,
                              rows: int | None = None) -> float:
    """Compare ``e_t(f * g)`` with a dense kernel-matrix product on the circle.

    ``e_t(f)`` becomes the matrix ``K_f[i, j] = f(a_i, a_j)`` on the lattice
    ``a_i = i / n``; the product uses weight ``t^-1 / n``. Returns the
    sup-norm relative deviation over all lattice pairs, or over `rows`
    evenly spaced rows of the product when given.
    """
    from .groupoids import PairGroupoid, wrap

    if n < 64:
        raise ValueError("kernel lattice needs at least 64 points")
    if not 0 < t <= 1:
        raise ValueError("kernel oracle needs t in (0, 1]")
    if groupoid is None:
        groupoid = PairGroupoid(1, torus=True)
    tg = _resolve(groupoid)
    base = tg.base
    if not (isinstance(base, PairGroupoid) and base.torus and base.n == 1):
        raise TypeError("kernel oracle is defined for the pair groupoid of the circle")
    a = np.arange(n) / n
    # arrow (a_i, a_j): source a_j, fiber coordinate wrap(a_i - a_j)
    src = np.broadcast_to(a[None, :], (n, n))
    v = wrap(a[:, None] - a[None, :])
    tt = np.full((n, n), float(t))
    kf = np.asarray(f(src[..., None], v[..., None] / t, tt), dtype=float)
    kg = np.asarray(g(src[..., None], v[..., None] / t, tt), dtype=float)
    dense = (kf @ kg) * (1.0 / (t * n))
    if rows is not None and rows < n:
        pick = np.linspace(0, n - 1, int(rows)).round().astype(int)
        src, v, tt, dense = src[pick], v[pick], tt[pick], dense[pick]
    conv = np.asarray(convolve(f, g, tg, spec)(src[..., None], v[..., None] / t, tt), dtype=float)
    return sup_relative_error(conv, dense)


def haar_integrate(groupoid: GroupoidModel, F: Callable, x, spec: QuadratureSpec | None = None,
                   v_bounds=None) -> np.ndarray:
    """``∫ F(delta) dv`` over the source fiber of each unit in `x`.

    `F` takes natural arrows. ``v_bounds`` (per-axis ``(lo, hi)``) limits the
    fiber; the default is the fiber domain, which must then be bounded or
    `F` must decay fast enough for the chosen truncation.
    """
    spec = spec or QuadratureSpec()
    q = groupoid.q
    x = as_coords(x, groupoid.p)
    x = x.reshape(int(np.prod(x.shape[:-1])), groupoid.p)
    lo, hi = v_bounds if v_bounds is not None else groupoid.fiber_bounds()
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (len(x), q))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (len(x), q))
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    jac = np.prod(half, axis=-1)

    def terms(idx, n):
        nodes, weights = compact_rule(n, q, spec.precision)
        vd = mid[idx][:, None, :] + half[idx][:, None, :] * nodes[None]
        xs = np.broadcast_to(x[idx][:, None, :], vd.shape[:-1] + (groupoid.p,))
        return F(groupoid.chart_inv(xs, vd)) * (weights[None] * jac[idx][:, None])

    return refine_integrate(terms, len(x), spec.npos, spec.rel_tol, spec.abs_tol, spec.max_doublings).value


def haar_invariance_defect(groupoid: GroupoidModel, F: Callable, eta, spec: QuadratureSpec | None = None,
                           v_bounds=None) -> float:
    """``|∫_{G_{r(eta)}} F(delta eta) - ∫_{G_{s(eta)}} F(delta)|`` for each arrow `eta`."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = eta[None]
    s = groupoid.source(eta)
    r = groupoid.target(eta)
    out = []
    for k in range(len(eta)):
        e = eta[k]
        left = haar_integrate(groupoid, lambda d: F(groupoid.multiply(d, np.broadcast_to(e, d.shape))),
                              r[k : k + 1], spec, v_bounds)
        right = haar_integrate(groupoid, F, s[k : k + 1], spec, v_bounds)
        out.append(float(np.abs(left - right)[0]))
    return max(out)
