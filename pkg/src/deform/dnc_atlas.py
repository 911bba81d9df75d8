"""Coordinates on deformation-to-the-normal-cone spaces.

A slice chart identifies an open set of a manifold with an open set
``U`` of ``R^p x R^q`` in which the submanifold is ``V = U ∩ (R^p x 0)``.
The deformation space is then coordinatized by triples ``(x, xi, t)``
with ``t`` in ``[0, 1]``: at ``t = 0`` they are points of the normal
bundle, at ``t > 0`` they stand for the point ``(x, t*xi)`` of ``U`` at
time ``t``.

Coordinate-level functions (`psi`, `omega_contains`, `transition_map`)
are vectorized: ``x`` has shape ``(..., p)``, ``xi`` has shape
``(..., q)`` and ``t`` broadcasts against the leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError, StencilError
from .fd import fornberg_weights, forward_offsets

TAYLOR_SWITCH = 1e-8
UNDERFLOW_FLOOR = 1e-300


def as_coords(a, dim: int) -> np.ndarray:
    """Coerce scalars and sequences to an array with a trailing axis of size `dim`."""
    arr = np.asarray(a)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    if dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if dim == 0 and (arr.ndim == 0 or arr.shape[-1] != 0):
        arr = np.zeros(arr.shape + (0,), dtype=arr.dtype)
    if arr.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SlicePair:
    """An open set ``U`` of ``R^p x R^q`` given by a membership predicate.

    ``domain_test(x, v)`` must accept arrays with trailing axes ``p`` and
    ``q`` and return a boolean array; ``None`` means the whole space.
    """

    p: int
    q: int
    domain_test: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.p < 0 or self.q < 1:
            raise ValueError(f"slice needs p >= 0 and q >= 1, got p={self.p}, q={self.q}")

    def contains(self, x, v) -> np.ndarray:
        x = as_coords(x, self.p)
        v = as_coords(v, self.q)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        if self.domain_test is None:
            return np.ones(shape, dtype=bool)
        return np.broadcast_to(np.asarray(self.domain_test(x, v), dtype=bool), shape)


def ball_slice(p: int, q: int, radius: float = 1.0) -> SlicePair:
    """Open Euclidean ball of the given radius in ``R^(p+q)``."""

    def test(x, v):
        r2 = np.sum(x**2, axis=-1) + np.sum(v**2, axis=-1)
        return r2 < radius**2

    return SlicePair(p, q, test, name=f"ball(r={radius})")


# ---------------------------------------------------------------------------
# points


def _tup(a) -> tuple[float, ...]:
    return tuple(float(v) for v in np.ravel(np.asarray(a, dtype=float)))


@dataclass(frozen=True)
class Boundary:
    """The normal-bundle point ``(x, xi, 0)``."""

    x: tuple[float, ...]
    xi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _tup(self.x))
        object.__setattr__(self, "xi", _tup(self.xi))


@dataclass(frozen=True)
class Interior:
    """The point ``(m, t)`` with ``m = (x, eta)`` in slice coordinates and ``0 < t <= 1``."""

    m: tuple[float, ...]
    t: float
    p: int

    def __post_init__(self):
        object.__setattr__(self, "m", _tup(self.m))
        t = float(self.t)
        if not 0 < t <= 1:
            raise ValueError(f"interior points need 0 < t <= 1, got t={t}")
        object.__setattr__(self, "t", t)
        if not 0 <= self.p <= len(self.m):
            raise ValueError(f"unit dimension {self.p} does not fit m of length {len(self.m)}")

    @property
    def x(self) -> tuple[float, ...]:
        return self.m[: self.p]

    @property
    def eta(self) -> tuple[float, ...]:
        return self.m[self.p :]


DncPoint = Union[Boundary, Interior]


def points_close(a: DncPoint, b: DncPoint, tol: float = 1e-10) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, Boundary):
        return len(a.x) == len(b.x) and np.allclose(a.x + a.xi, b.x + b.xi, rtol=0, atol=tol)
    return (
        a.p == b.p
        and len(a.m) == len(b.m)
        and abs(a.t - b.t) <= tol
        and np.allclose(a.m, b.m, rtol=0, atol=tol)
    )


def _check_t(t: float) -> float:
    t = float(t)
    if not 0 <= t <= 1:
        raise DomainError(f"t={t} is outside [0, 1]", coordinates=(t,))
    return t


def psi_forward(x, xi, t: float, slice: SlicePair | None = None) -> DncPoint:
    """Map ``(x, xi, t)`` to the deformation space point it coordinatizes."""
    t = _check_t(t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if slice is not None and not bool(slice.contains(x, t * xi)):
        raise DomainError(
            f"(x, t*xi) = ({_tup(x)}, {_tup(t * xi)}) is not in U", coordinates=(_tup(x), _tup(xi), t)
        )
    if t == 0:
        return Boundary(x, xi)
    return Interior(np.concatenate([x, t * xi]), t, p=x.size)


def psi_inverse(pt: DncPoint) -> tuple[tuple[float, ...], tuple[float, ...], float]:
    if isinstance(pt, Boundary):
        return pt.x, pt.xi, 0.0
    t = pt.t
    return pt.x, tuple(e / t for e in pt.eta), t


def psi(x, xi, t):
    """Vectorized interior chart: ``(x, xi, t) -> (x, t*xi)``."""
    t = np.asarray(t)
    return x, xi * t[..., None]


def omega_contains(slice: SlicePair, x, xi, t) -> np.ndarray | bool:
    """Membership in ``{(x, xi, t) : (x, t*xi) in U}``."""
    x = as_coords(x, slice.p)
    xi = as_coords(xi, slice.q)
    t = np.asarray(t, dtype=xi.dtype)
    inside = slice.contains(x, xi * t[..., None]) & (t >= 0) & (t <= 1)
    return bool(inside) if inside.ndim == 0 else inside


# ---------------------------------------------------------------------------
# morphisms


def fd_jac_normal(f2: Callable, x, q: int, q_out: int) -> np.ndarray:
    """Central-difference estimate of the normal Jacobian ``dF2/dxi(x, 0)``."""
    x = np.asarray(x, dtype=float)
    h = 1e-5 * (1 + np.linalg.norm(x, axis=-1))
    cols = []
    for j in range(q):
        e = np.zeros(x.shape[:-1] + (q,))
        e[..., j] = h
        d = (np.asarray(f2(x, e)) - np.asarray(f2(x, -e))) / (2 * h[..., None])
        cols.append(as_coords(d, q_out))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class PairMorphism:
    """A smooth map ``F = (F1, F2)`` of slice coordinates with ``F2(x, 0) = 0``.

    ``f1(x, v)`` returns shape ``(..., p_out)``, ``f2(x, v)`` returns
    ``(..., q_out)``. ``jac_normal(x)`` returns ``dF2/dv`` at ``v = 0`` with
    shape ``(..., q_out, q)``; when omitted a central difference is used.
    """

    p: int
    q: int
    p_out: int
    q_out: int
    f1: Callable
    f2: Callable
    jac_normal: Callable | None = None
    source_slice: SlicePair | None = None
    inverse: "PairMorphism | None" = field(default=None, repr=False, compare=False)
    name: str = ""

    def __call__(self, x, v):
        x = as_coords(x, self.p)
        v = as_coords(v, self.q)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        y1 = np.broadcast_to(as_coords(self.f1(x, v), self.p_out), shape + (self.p_out,))
        y2 = np.broadcast_to(as_coords(self.f2(x, v), self.q_out), shape + (self.q_out,))
        return y1, y2

    def normal_jacobian(self, x) -> np.ndarray:
        x = as_coords(x, self.p)
        if self.jac_normal is not None:
            jac = np.asarray(self.jac_normal(x))
            return np.broadcast_to(jac, x.shape[:-1] + (self.q_out, self.q))
        return fd_jac_normal(self.f2, x, self.q, self.q_out)

    def with_inverse(self, inverse: "PairMorphism") -> "PairMorphism":
        return PairMorphism(
            self.p, self.q, self.p_out, self.q_out, self.f1, self.f2,
            self.jac_normal, self.source_slice, inverse, self.name,
        )


def identity_morphism(p: int, q: int) -> PairMorphism:
    eye = np.eye(q)
    ident = PairMorphism(p, q, p, q, lambda x, v: x, lambda x, v: v, lambda x: eye, name="id")
    return ident.with_inverse(ident)


def compose(g: PairMorphism, f: PairMorphism) -> PairMorphism:
    """The pair morphism ``g ∘ f``."""
    if (f.p_out, f.q_out) != (g.p, g.q):
        raise ValueError(f"cannot compose {g.name or 'g'} after {f.name or 'f'}: dimension mismatch")

    def f1(x, v):
        a, b = f(x, v)
        return g(a, b)[0]

    def f2(x, v):
        a, b = f(x, v)
        return g(a, b)[1]

    def jac(x):
        x = as_coords(x, f.p)
        base = f(x, np.zeros(x.shape[:-1] + (f.q,)))[0]
        return g.normal_jacobian(base) @ f.normal_jacobian(x)

    inv = None
    if f.inverse is not None and g.inverse is not None:
        inv = compose(f.inverse, g.inverse)
    return PairMorphism(
        f.p, f.q, g.p_out, g.q_out, f1, f2, jac, f.source_slice, inv,
        name=f"{g.name or 'g'}∘{f.name or 'f'}",
    )


def morphism_defects(f: PairMorphism, xs) -> tuple[float, float]:
    """Largest ``|F2(x, 0)|`` and largest relative Jacobian-vs-difference error over `xs`."""
    xs = as_coords(xs, f.p)
    zero = np.zeros(xs.shape[:-1] + (f.q,))
    f2_at_zero = float(np.max(np.abs(f(xs, zero)[1]), initial=0.0))
    given = f.normal_jacobian(xs)
    fd = fd_jac_normal(f.f2, xs, f.q, f.q_out)
    scale = np.maximum(np.abs(given), 1.0)
    rel = float(np.max(np.abs(given - fd) / scale, initial=0.0))
    return f2_at_zero, rel


def _check_domain(f: PairMorphism, x, xi, t):
    if f.source_slice is None:
        return
    inside = np.asarray(omega_contains(f.source_slice, x, xi, t))
    if not inside.all():
        idx = np.unravel_index(np.argmin(inside), inside.shape) if inside.ndim else ()
        xb, xib, tb = np.broadcast_arrays(x[..., 0] if f.p else np.zeros(()), xi[..., 0], t)
        bad = (float(xb[idx]), float(xib[idx]), float(tb[idx]))
        raise DomainError(f"(x, xi, t) = {bad} is outside the source domain of {f.name or 'F'}", bad)


def transition_map(f: PairMorphism, x, xi, t):
    """Induced map ``F~`` on deformation coordinates.

    ``t = 0``: ``(F1(x, 0), dF2/dxi(x, 0) xi, 0)``; ``t > 0``:
    ``(F1(x, t xi), F2(x, t xi) / t, t)``. For ``0 < t < 1e-8`` the quotient
    is replaced by its first-order Taylor form to avoid cancellation.
    """
    x = as_coords(x, f.p)
    xi = as_coords(xi, f.q)
    dtype = np.result_type(x, xi, np.asarray(t))
    t = np.asarray(t, dtype=dtype)
    shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1], t.shape)
    if np.any((t > 0) & (t < UNDERFLOW_FLOOR)):
        raise DomainError(f"t below the positive floor {UNDERFLOW_FLOOR}", coordinates=None)
    if np.any((t < 0) | (t > 1)):
        raise DomainError("t outside [0, 1]", coordinates=None)
    _check_domain(f, x, xi, t)
    if np.all(t >= TAYLOR_SWITCH):
        # every point on the regular branch: no masking needed
        y1, y2 = f(x, xi * t[..., None])
        y1 = np.broadcast_to(y1, shape + (f.p_out,)).astype(dtype, copy=False)
        y2 = np.broadcast_to(y2 / t[..., None], shape + (f.q_out,)).astype(dtype, copy=False)
        return y1, y2, np.broadcast_to(t, shape)
    x = np.broadcast_to(x, shape + (f.p,))
    xi = np.broadcast_to(xi, shape + (f.q,))
    t = np.broadcast_to(t, shape)

    out1 = np.empty(shape + (f.p_out,), dtype=dtype)
    out2 = np.empty(shape + (f.q_out,), dtype=dtype)

    zero = t == 0
    tiny = (t > 0) & (t < TAYLOR_SWITCH)
    regular = t >= TAYLOR_SWITCH

    if zero.any() or tiny.any():
        sel = zero | tiny
        xs, xis, ts = x[sel], xi[sel], t[sel]
        jac = f.normal_jacobian(xs).astype(dtype, copy=False)
        lin = np.einsum("...ij,...j->...i", jac, xis)
        out1[sel] = f(xs, xis * ts[:, None])[0]
        corr = np.zeros_like(lin)
        small = ts > 0
        if small.any():
            # directional second difference along xi, scaled so that |s*xi| = 1e-4
            xs_, xis_ = xs[small], xis[small]
            nrm = np.linalg.norm(xis_, axis=-1)
            s = np.where(nrm > 0, 1e-4 / np.where(nrm > 0, nrm, 1), 0)
            sv = xis_ * s[:, None]
            d2 = f(xs_, sv)[1] + f(xs_, -sv)[1]
            s2 = np.where(s > 0, s * s, 1)
            corr[small] = 0.5 * ts[small][:, None] * np.where(s[:, None] > 0, d2 / s2[:, None], 0)
        out2[sel] = lin + corr
    if regular.any():
        xs, xis, ts = x[regular], xi[regular], t[regular]
        y1, y2 = f(xs, xis * ts[:, None])
        out1[regular] = y1
        out2[regular] = y2 / ts[:, None]
    return out1, out2, t


def dnc_functor_apply(f: PairMorphism, pt: DncPoint) -> DncPoint:
    """The induced map on deformation spaces applied to a single point."""
    if isinstance(pt, Boundary):
        x = np.asarray(pt.x, dtype=float)
        xi = np.asarray(pt.xi, dtype=float)
        if len(pt.x) != f.p or len(pt.xi) != f.q:
            raise ValueError("point dimensions do not match the morphism")
        if f.source_slice is not None and not bool(f.source_slice.contains(x, np.zeros(f.q))):
            raise DomainError(f"x={pt.x} is not in V", coordinates=pt.x)
        y1 = f(x, np.zeros(f.q))[0]
        y2 = f.normal_jacobian(x) @ xi
        return Boundary(y1, y2)
    if pt.p != f.p or len(pt.m) != f.p + f.q:
        raise ValueError("point dimensions do not match the morphism")
    x = np.asarray(pt.x, dtype=float)
    v = np.asarray(pt.eta, dtype=float)
    if f.source_slice is not None and not bool(f.source_slice.contains(x, v)):
        raise DomainError(f"m={pt.m} is not in U", coordinates=pt.m)
    y1, y2 = f(x, v)
    return Interior(np.concatenate([np.ravel(y1), np.ravel(y2)]), pt.t, p=f.p_out)


# ---------------------------------------------------------------------------
# smoothness of the transition map at t = 0


@dataclass(frozen=True)
class ProbeReport:
    derivative: np.ndarray
    observed_order: float
    exact: bool
    passed: bool
    steps: tuple[float, ...]
    estimates: tuple[tuple[float, ...], ...]


def smoothness_probe(
    f: PairMorphism, x, xi, order: int = 1, h0: float = 0.05, levels: int = 4,
    min_order: float = 1.5,
) -> ProbeReport:
    """One-sided t-derivative of ``t -> F~(x, xi, t)`` at ``t = 0+``.

    Second-order forward differences are evaluated at steps
    ``h0 / 2**k``; the observed order comes from successive differences of
    those estimates, and the returned derivative is Richardson
    extrapolated from the two finest steps.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if levels < 3:
        raise ValueError("need at least three levels to observe an order")
    x = as_coords(x, f.p)
    xi = as_coords(xi, f.q)
    offsets = forward_offsets(order)
    reach = max(offsets) * h0
    if f.source_slice is not None and not bool(omega_contains(f.source_slice, x, xi, reach)):
        raise StencilError(
            f"stencil reaches t={reach}, outside the domain; it needs (x, t*xi) in U "
            f"for t up to {reach}",
            required_radius=float(reach * np.linalg.norm(xi)),
        )
    weights = np.asarray(fornberg_weights(offsets, order))
    steps = [h0 / 2**k for k in range(levels)]
    estimates = []
    for h in steps:
        ts = np.asarray(offsets) * h
        vals = transition_map(f, x, xi, ts)[1]
        estimates.append(np.tensordot(weights, vals, axes=(0, 0)) / h**order)
    est = np.asarray(estimates)
    diffs = np.max(np.abs(np.diff(est, axis=0)), axis=-1)
    scale = 1 + float(np.max(np.abs(est)))
    noise = 1e-12 * scale / steps[-1] ** order
    if diffs[-1] <= noise and diffs[-2] <= noise:
        derivative = est[-1]
        observed = math.inf
        exact = True
    else:
        if diffs[-1] <= noise:
            observed = math.inf
        else:
            observed = math.log2(diffs[-2] / diffs[-1]) if diffs[-2] > 0 else 0.0
        derivative = est[-1] + (est[-1] - est[-2]) / 3.0
        exact = False
    return ProbeReport(
        derivative=np.asarray(derivative),
        observed_order=observed,
        exact=exact,
        passed=observed >= min_order,
        steps=tuple(steps),
        estimates=tuple(tuple(float(v) for v in e) for e in est),
    )
