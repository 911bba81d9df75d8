"""Rapidly decaying fields on deformation spaces and on vector bundles.

A `SchwartzDncField` is a vectorized callable ``f(x, xi, t)`` in slice
coordinates together with its conic support. Its value at ``t > 0``
belongs to the point ``(x, t*xi)`` of the manifold, at ``t = 0`` to the
normal vector ``xi`` over ``x``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dnc_atlas import PairMorphism, SlicePair, as_coords, omega_contains, transition_map
from .errors import NonInvertibleError, ResolutionError, UncoveredRegionError
from .fd import central_offsets, fornberg_weights, forward_offsets
from .supports import ConicBox, ConicCompactSet

MAX_TOTAL_ORDER = 6


def _coerce(x, xi, t, p, q):
    x = as_coords(x, p)
    xi = as_coords(xi, q)
    dtype = np.result_type(x.dtype, xi.dtype, np.asarray(t).dtype, float)
    t = np.asarray(t, dtype=dtype)
    return x.astype(dtype, copy=False), xi.astype(dtype, copy=False), t


class SchwartzDncField:
    """An element of the Schwartz-type space of a deformation space.

    Parameters
    ----------
    func : callable
        ``func(x, xi, t)`` with ``x (..., p)``, ``xi (..., q)``, ``t (...)``.
        Must be pure and broadcast over the leading axes.
    support : ConicCompactSet, optional
        Conic compact support in ``(x, v = t*xi, t)`` coordinates.
    certificate : dict, optional
        Claimed bounds ``{(k, m, l, alpha): C}`` with ``l`` and ``alpha``
        tuples; checked lazily.
    periodic_x : bool
        The unit coordinate lives on the torus ``[0, 1)^p``.
    """

    def __init__(
        self,
        func: Callable,
        p: int,
        q: int,
        support: ConicCompactSet | None = None,
        certificate: dict | None = None,
        chart: SlicePair | str | None = None,
        name: str = "",
        periodic_x: bool = False,
    ):
        self.func = func
        self.p = p
        self.q = q
        self.support = support
        self.certificate = dict(certificate or {})
        self.chart = chart
        self.name = name
        self.periodic_x = periodic_x
        if support is not None and (support.p, support.q) != (p, q):
            raise ValueError("support dimensions do not match the field")

    def __repr__(self) -> str:
        return f"SchwartzDncField({self.name or self.func!r}, p={self.p}, q={self.q})"

    def __call__(self, x, xi, t):
        x, xi, t = _coerce(x, xi, t, self.p, self.q)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1], t.shape)
        return np.broadcast_to(self.func(x, xi, t), shape)

    def _like(self, func, support, name):
        return SchwartzDncField(func, self.p, self.q, support, None, self.chart, name, self.periodic_x)

    def __mul__(self, other):
        if isinstance(other, SchwartzDncField):
            if self.support is not None and other.support is not None:
                support = self.support.intersect(other.support)
            else:
                support = self.support if self.support is not None else other.support
            return self._like(
                lambda x, xi, t: self.func(x, xi, t) * other.func(x, xi, t),
                support, f"({self.name}·{other.name})",
            )
        c = other
        return self._like(lambda x, xi, t: c * self.func(x, xi, t), self.support, f"{c}·{self.name}")

    __rmul__ = __mul__

    def __add__(self, other: "SchwartzDncField"):
        support = None
        if self.support is not None and other.support is not None:
            support = self.support.union(other.support)
        return self._like(
            lambda x, xi, t: self.func(x, xi, t) + other.func(x, xi, t), support,
            f"({self.name}+{other.name})",
        )

    def __neg__(self):
        return -1.0 * self

    def __sub__(self, other: "SchwartzDncField"):
        return self + (-1.0) * other

    def support_contains(self, x, xi, t) -> np.ndarray:
        """Membership of ``(x, t*xi, t)`` in the support (x reduced mod 1 on tori)."""
        if self.support is None:
            raise ValueError("field has no support set")
        x = as_coords(x, self.p)
        if self.periodic_x:
            x = np.mod(x, 1.0)
        return self.support.contains_dnc(x, xi, t)


class BundleSchwartzField:
    """A function ``g(x, xi)`` on a trivial bundle, Schwartz along the fibers."""

    def __init__(self, func: Callable, p: int, q: int, base_support=None, name: str = "",
                 periodic_x: bool = False):
        self.func = func
        self.p = p
        self.q = q
        self.base_support = base_support
        self.name = name
        self.periodic_x = periodic_x

    def __repr__(self) -> str:
        return f"BundleSchwartzField({self.name or self.func!r}, p={self.p}, q={self.q})"

    def __call__(self, x, xi):
        x = as_coords(x, self.p)
        xi = as_coords(xi, self.q)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        return np.broadcast_to(self.func(x, xi), shape)

    def __mul__(self, other):
        if isinstance(other, BundleSchwartzField):
            return BundleSchwartzField(
                lambda x, xi: self.func(x, xi) * other.func(x, xi), self.p, self.q,
                self.base_support, f"({self.name}·{other.name})", self.periodic_x,
            )
        return BundleSchwartzField(
            lambda x, xi: other * self.func(x, xi), self.p, self.q, self.base_support,
            f"{other}·{self.name}", self.periodic_x,
        )

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# seminorms


@dataclass(frozen=True)
class SeminormGrid:
    """Stratified sample set for sampled suprema.

    ``xi`` samples are uniform on ``[-core, core]`` and log-spaced in
    ``[core, r_max]`` on both sides; x samples cover the support with a
    margin; t samples are uniform on ``[0, 1]`` plus a few near ``0``.
    """

    n_x: int = 7
    n_t: int = 9
    n_core: int = 41
    n_shells: int = 24
    core: float = 3.0
    r_max: float = 50.0
    x_margin: float = 0.1
    fd_step: float = 1e-4

    def xi_radii(self) -> np.ndarray:
        core = np.linspace(-self.core, self.core, self.n_core)
        shells = np.geomspace(self.core, self.r_max, self.n_shells + 1)[1:]
        return np.concatenate([-shells[::-1], core, shells])

    def t_values(self) -> np.ndarray:
        return np.unique(np.concatenate([np.linspace(0, 1, self.n_t), [1e-3, 1e-2, 5e-2]]))


@dataclass(frozen=True)
class SeminormReport:
    k: int
    m: int
    l: tuple[int, ...]
    alpha: tuple[int, ...]
    estimate: float
    grid_size: int
    bounded: bool
    certified: float | None = None

    @property
    def within_certificate(self) -> bool | None:
        if self.certified is None:
            return None
        return self.estimate <= 1.05 * self.certified

    def csv_row(self) -> list:
        return [
            self.k, self.m, ";".join(map(str, self.l)), ";".join(map(str, self.alpha)),
            repr(self.estimate), self.grid_size,
        ]


def write_seminorm_csv(reports: Iterable[SeminormReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "m", "l", "alpha", "estimate", "grid_size"])
        for r in reports:
            w.writerow(r.csv_row())


def fd_step_for_order(order: int, base: float = 1e-4) -> float:
    """Step balancing truncation against roundoff ``eps / h**order``."""
    return max(base, 10.0 ** (-16.0 / (order + 2)))


def _axis_stencil(order: int, h: float, lower_room: float | None = None, upper_room: float | None = None):
    """Offsets (already scaled) and weights for one axis."""
    if order == 0:
        return np.zeros(1), np.ones(1)
    offs = central_offsets(order)
    reach = max(offs) * h
    if lower_room is not None and lower_room < reach:
        offs = forward_offsets(order)
    elif upper_room is not None and upper_room < reach:
        offs = tuple(-o for o in forward_offsets(order))
    w = np.asarray(fornberg_weights(offs, order)) / h**order
    return np.asarray(offs) * h, w


def derivative_samples(f: SchwartzDncField, x, xi, t: float, l, alpha, m, h: float,
                       slice_: SlicePair | None = None):
    """Mixed partial ``d_x^l d_xi^alpha d_t^m f`` at ``(x, xi, t)`` for one t value.

    ``x`` and ``xi`` are batches with shapes ``(n, p)`` and ``(n, q)``.
    The t-axis stencil turns one-sided near the ends of ``[0, 1]``. Returns
    the derivative and a mask of points whose stencil stayed inside the
    slice domain (all True without a slice).
    """
    axes = []
    for j, o in enumerate(l):
        axes.append(("x", j) + _axis_stencil(o, h))
    for j, o in enumerate(alpha):
        axes.append(("xi", j) + _axis_stencil(o, h))
    axes.append(("t", 0) + _axis_stencil(m, h, lower_room=t, upper_room=1 - t))
    axes = [a for a in axes if len(a[2]) > 1] or [("t", 0, np.zeros(1), np.ones(1))]
    total = 0.0
    ok = np.ones(len(x), dtype=bool)
    for combo in itertools.product(*[range(len(a[2])) for a in axes]):
        dx = np.zeros(f.p)
        dxi = np.zeros(f.q)
        dt = 0.0
        w = 1.0
        for (kind, j, offs, ws), i in zip(axes, combo):
            w *= ws[i]
            if kind == "x":
                dx[j] += offs[i]
            elif kind == "xi":
                dxi[j] += offs[i]
            else:
                dt += offs[i]
        if w == 0:
            continue
        ts = float(np.clip(t + dt, 0.0, 1.0))
        if slice_ is not None:
            ok &= np.asarray(omega_contains(slice_, x + dx, xi + dxi, ts))
        total = total + w * f(x + dx, xi + dxi, ts)
    return total, ok


def _derivative(f, x, xi, t, l, alpha, m, h, slice_, retries: int = 6):
    """Richardson-extrapolated derivative; steps shrink where a stencil leaves the slice."""
    out = np.zeros(len(x))
    valid = np.zeros(len(x), dtype=bool)
    todo = np.ones(len(x), dtype=bool)
    for _ in range(retries):
        idx = np.nonzero(todo)[0]
        if not len(idx):
            break
        d1, ok1 = derivative_samples(f, x[idx], xi[idx], t, l, alpha, m, h, slice_)
        d2, ok2 = derivative_samples(f, x[idx], xi[idx], t, l, alpha, m, h / 2, slice_)
        good = ok1 & ok2
        out[idx[good]] = np.abs(np.asarray((4 * d2 - d1) / 3)[good])
        valid[idx[good]] = True
        todo[idx[good]] = False
        h /= 2
    return out, valid


def _sample_x(f: SchwartzDncField, grid: SeminormGrid) -> np.ndarray:
    if f.p == 0:
        return np.zeros((1, 0))
    if f.periodic_x:
        axes = [np.linspace(0, 1, grid.n_x, endpoint=False)] * f.p
    elif f.support is not None and not f.support.is_empty:
        x_lo, x_hi, _, _ = f.support.bounding_box()
        pad = grid.x_margin * np.maximum(x_hi - x_lo, 1.0)
        axes = [np.linspace(lo - pad_j, hi + pad_j, grid.n_x) for lo, hi, pad_j in zip(x_lo, x_hi, pad)]
    else:
        axes = [np.linspace(-2, 2, grid.n_x)] * f.p
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, f.p)


def seminorm_estimate(
    f: SchwartzDncField, k: int, m: int, l: Sequence[int] | None = None,
    alpha: Sequence[int] | None = None, grid: SeminormGrid | None = None,
) -> SeminormReport:
    """Sampled supremum of ``(1 + |xi|^2)^k |d_x^l d_xi^alpha d_t^m f|``.

    Derivatives are central differences with one Richardson level. If the
    weighted values still grow at the outermost xi shell the report is
    marked unbounded instead of raising.
    """
    grid = grid or SeminormGrid()
    l = tuple(l) if l is not None else (0,) * f.p
    alpha = tuple(alpha) if alpha is not None else (0,) * f.q
    if len(l) != f.p or len(alpha) != f.q:
        raise ValueError("multi-index lengths must match (p, q)")
    total = k + m + sum(l) + sum(alpha)
    if total > MAX_TOTAL_ORDER:
        raise ValueError(f"total order {total} exceeds the stencil budget {MAX_TOTAL_ORDER}")
    order = m + sum(l) + sum(alpha)
    h = max(grid.fd_step, fd_step_for_order(order)) if order else 0.0

    radii = grid.xi_radii()
    xi_axes = np.stack(np.meshgrid(*([radii] * f.q), indexing="ij"), axis=-1).reshape(-1, f.q)
    shell = np.max(np.abs(xi_axes), axis=-1)
    xs = _sample_x(f, grid)
    X = np.repeat(xs, len(xi_axes), axis=0)
    XI = np.tile(xi_axes, (len(xs), 1))
    SH = np.tile(shell, len(xs))
    weight = (1 + np.sum(XI**2, axis=-1)) ** k

    best = 0.0
    shell_levels = np.unique(np.abs(radii))
    shell_max = np.zeros(len(shell_levels))
    slice_ = f.chart if isinstance(f.chart, SlicePair) else None
    for t in grid.t_values():
        if order:
            d, valid = _derivative(f, X, XI, float(t), l, alpha, m, h, slice_)
        else:
            d = np.abs(np.asarray(f(X, XI, float(t))))
            valid = np.asarray(omega_contains(slice_, X, XI, float(t))) if slice_ is not None else True
        vals = np.where(valid, weight * np.abs(d), 0.0)
        best = max(best, float(np.max(vals)))
        idx = np.searchsorted(shell_levels, SH)
        np.maximum.at(shell_max, idx, vals)

    outer = shell_max[-3:]
    bounded = not (outer[-1] > 0 and outer[-1] >= shell_max.max() and outer[-1] > outer[-2] > outer[-3])
    key = (k, m, l, alpha)
    return SeminormReport(
        k, m, l, alpha, best, grid_size=int(len(X) * len(grid.t_values())), bounded=bounded,
        certified=f.certificate.get(key),
    )


def multi_indices(p: int, q: int, max_order: int):
    """All ``(k, m, l, alpha)`` with ``k + m + |l| + |alpha| <= max_order``."""
    for total in range(max_order + 1):
        for combo in itertools.product(range(total + 1), repeat=p + q + 2):
            if sum(combo) == total:
                yield combo[0], combo[1], tuple(combo[2 : 2 + p]), tuple(combo[2 + p :])


# ---------------------------------------------------------------------------
# support checks


@dataclass(frozen=True)
class SupportCheckReport:
    passed: bool
    n_checked: int
    violations: tuple = ()

    @property
    def witness(self):
        return self.violations[0] if self.violations else None


def _sampling_region(f: SchwartzDncField, margin: float):
    x_lo, x_hi, v_lo, v_hi = f.support.bounding_box()
    ext_x = np.maximum(x_hi - x_lo, 1.0)
    ext_v = np.maximum(v_hi - v_lo, 1.0)
    if f.periodic_x:
        x_lo, x_hi = np.zeros(f.p), np.ones(f.p)
    else:
        x_lo, x_hi = x_lo - margin * ext_x, x_hi + margin * ext_x
    return x_lo, x_hi, v_lo - margin * ext_v, v_hi + margin * ext_v


def conic_support_check(f: SchwartzDncField, n_samples: int = 1000, seed: int = 0,
                        margin: float = 0.5) -> SupportCheckReport:
    """Sample points with ``(x, t*xi, t)`` outside the support and ``t > 0``;
    pass iff the field is exactly zero at all of them."""
    if f.support is None:
        raise ValueError("conic_support_check needs a field with a support set")
    rng = np.random.default_rng(seed)
    if f.support.is_empty:
        x_lo, x_hi = np.full(f.p, -1.0), np.full(f.p, 1.0)
        v_lo, v_hi = np.full(f.q, -1.0), np.full(f.q, 1.0)
        if f.periodic_x:
            x_lo, x_hi = np.zeros(f.p), np.ones(f.p)
    else:
        x_lo, x_hi, v_lo, v_hi = _sampling_region(f, margin)
    slice_ = f.chart if isinstance(f.chart, SlicePair) else None
    xs, vs, ts = [], [], []
    got = 0
    for _ in range(200):
        n = max(4 * n_samples, 64)
        x = rng.uniform(x_lo, x_hi, (n, f.p))
        v = rng.uniform(v_lo, v_hi, (n, f.q))
        t = rng.uniform(0, 1, n)
        keep = (t > 0) & ~f.support.contains(x, v, t)
        if slice_ is not None:
            keep &= slice_.contains(x, v)
        xs.append(x[keep])
        vs.append(v[keep])
        ts.append(t[keep])
        got += int(keep.sum())
        if got >= n_samples:
            break
    x = np.concatenate(xs)[:n_samples]
    v = np.concatenate(vs)[:n_samples]
    t = np.concatenate(ts)[:n_samples]
    xi = v / t[:, None]
    vals = np.asarray(f(x, xi, t))
    bad = np.nonzero(vals != 0)[0]
    violations = tuple(
        (tuple(map(float, x[i])), tuple(map(float, xi[i])), float(t[i]), complex(vals[i]) if np.iscomplexobj(vals) else float(vals[i]))
        for i in bad[:20]
    )
    return SupportCheckReport(passed=len(bad) == 0, n_checked=len(t), violations=violations)


# ---------------------------------------------------------------------------
# pullback


def _grid(lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    if not axes:
        return np.zeros((1, 0))
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def _full_jacobian(F: PairMorphism, x, v, h: float = 1e-6):
    z = np.concatenate([x, v], axis=-1)
    n = z.shape[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        zp, zm = z + e, z - e
        yp = np.concatenate(F(zp[..., : F.p], zp[..., F.p :]), axis=-1)
        ym = np.concatenate(F(zm[..., : F.p], zm[..., F.p :]), axis=-1)
        cols.append((yp - ym) / (2 * h))
    return np.stack(cols, axis=-1)


def pullback_support(support: ConicCompactSet, F: PairMorphism, n: int = 9, pad: float = 0.1) -> ConicCompactSet:
    """Box enclosure of ``(F^-1 x id)(K')`` from sampled images with padding."""
    if F.inverse is None:
        raise ValueError("pullback needs the inverse morphism to transport the support")
    inv = F.inverse
    boxes = []
    for b in support.boxes:
        ts = np.linspace(b.t_lo, b.t_hi, n) if b.t_hi > b.t_lo else np.array([b.t_lo])
        if all(v == 0 for v in b.v_lo + b.v_hi):
            pts = _grid(b.x_lo + b.s_lo, b.x_hi + b.s_hi, n)
            xs, xis = pts[:, : b.p], pts[:, b.p :]
            out_x, out_xi = [], []
            for t in ts:
                y1, y2, _ = transition_map(inv, xs, xis, np.full(len(xs), t))
                out_x.append(y1)
                out_xi.append(y2)
            X, XI = np.concatenate(out_x), np.concatenate(out_xi)
            x_lo, x_hi = X.min(0), X.max(0)
            c_lo, c_hi = XI.min(0), XI.max(0)
            dx, dc = pad * np.maximum(x_hi - x_lo, 1e-3), pad * np.maximum(c_hi - c_lo, 1e-3)
            boxes.append(ConicBox.cone(x_lo - dx, x_hi + dx, c_lo - dc, c_hi + dc, b.t_lo, b.t_hi))
        else:
            out_x, out_v = [], []
            for t in ts:
                lo, hi = b.v_bounds(t)
                pts = _grid(b.x_lo + tuple(lo), b.x_hi + tuple(hi), n)
                y1, y2 = inv(pts[:, : b.p], pts[:, b.p :])
                out_x.append(y1)
                out_v.append(y2)
            X, V = np.concatenate(out_x), np.concatenate(out_v)
            x_lo, x_hi = X.min(0), X.max(0)
            v_lo, v_hi = V.min(0), V.max(0)
            dx, dv = pad * np.maximum(x_hi - x_lo, 1e-3), pad * np.maximum(v_hi - v_lo, 1e-3)
            boxes.append(ConicBox.slab(x_lo - dx, x_hi + dx, v_lo - dv, v_hi + dv, b.t_lo, b.t_hi))
    return ConicCompactSet(boxes, F.p, F.q)


def pullback(f: SchwartzDncField, F: PairMorphism, max_condition: float = 1e12, seed: int = 0) -> SchwartzDncField:
    """The field ``f ∘ F~`` on the source slice of `F`."""
    if (F.p_out, F.q_out) != (f.p, f.q):
        raise ValueError("morphism target does not match the field's chart")
    support = None
    if f.support is not None:
        support = pullback_support(f.support, F)
        if not support.is_empty:
            rng = np.random.default_rng(seed)
            x_lo, x_hi, v_lo, v_hi = support.bounding_box()
            x = rng.uniform(x_lo, x_hi, (64, F.p))
            v = rng.uniform(v_lo, v_hi, (64, F.q))
            jac = _full_jacobian(F, x, v)
            cond = np.linalg.cond(jac)
            worst = int(np.argmax(cond))
            if not np.isfinite(cond[worst]) or cond[worst] > max_condition:
                raise NonInvertibleError(
                    f"Jacobian condition number {cond[worst]:.3g} at x={x[worst]}, v={v[worst]} exceeds {max_condition:g}"
                )

    def func(x, xi, t):
        y1, y2, tt = transition_map(F, x, xi, t)
        return f.func(y1, y2, tt)

    return SchwartzDncField(
        func, F.p, F.q, support, None, F.source_slice, f"{f.name}∘{F.name or 'F'}~", f.periodic_x,
    )


# ---------------------------------------------------------------------------
# partitions of unity


@dataclass(frozen=True)
class PartitionOfUnity:
    """Bumps ``chi_alpha`` on chart neighbourhoods times ``[0, 1]`` plus a tail ``lam``.

    Each function takes ``(x, v, t)`` in manifold coordinates; a
    deformation point ``(x, xi, t)`` is first projected to ``(x, t*xi, t)``.
    ``chart_x`` holds the closed x-interval outside which ``chi_alpha``
    vanishes; ``lam_t_floor`` is the time below which ``lam`` vanishes.
    """

    chis: tuple[Callable, ...]
    lam: Callable
    chart_x: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    lam_t_floor: float
    slices: tuple[SlicePair | None, ...] = field(default=())

    def values(self, x, xi, t):
        x = np.asarray(x)
        xi = np.asarray(xi)
        t = np.asarray(t)
        v = xi * t[..., None]
        return [chi(x, v, t) for chi in self.chis], self.lam(x, v, t)

    def total(self, x, xi, t):
        chis, lam = self.values(x, xi, t)
        return sum(chis) + lam


def two_chart_partition(split: float = 0.0, overlap: float = 1.0, r_in: float = 0.5,
                        r_out: float = 1.0, t_floor: float = 0.25, t_full: float = 0.5) -> PartitionOfUnity:
    """Two charts ``x < split + overlap/2`` and ``x > split - overlap/2`` of ``R`` plus a tail.

    ``chi_a = phi_a(x) * kappa(v, t)`` and ``lam = (1 - sigma(v)) * theta(t)``
    where ``kappa = 1 - (1 - sigma(v)) * theta(t)``; the sum is identically 1.
    """
    from .cutoffs import plateau, smoothstep

    a, b = split - overlap / 2, split + overlap / 2

    def phi2(x):
        return smoothstep((x[..., 0] - a) / (b - a))

    def sigma(v):
        return plateau(np.linalg.norm(v, axis=-1), r_in, r_out)

    def theta(t):
        return smoothstep((t - t_floor) / (t_full - t_floor))

    def kappa(v, t):
        return 1 - (1 - sigma(v)) * theta(t)

    chi1 = lambda x, v, t: (1 - phi2(x)) * kappa(v, t)
    chi2 = lambda x, v, t: phi2(x) * kappa(v, t)
    lam = lambda x, v, t: (1 - sigma(v)) * theta(t)
    big = 1e300
    return PartitionOfUnity(
        (chi1, chi2), lam, (((-big,), (b,)), ((a,), (big,))), t_floor,
        (SlicePair(1, 1, lambda x, v: x[..., 0] < b, "chart-1"),
         SlicePair(1, 1, lambda x, v: x[..., 0] > a, "chart-2")),
    )


def partition_decompose(f: SchwartzDncField, P: PartitionOfUnity, n_check: int = 2000, seed: int = 0):
    """Split ``f`` into chart-local parts ``f * (chi_a ∘ p)`` and a tail ``f * (lam ∘ p)``."""
    if f.support is not None and not f.support.is_empty:
        rng = np.random.default_rng(seed)
        x_lo, x_hi, v_lo, v_hi = f.support.bounding_box()
        x = rng.uniform(x_lo, x_hi, (n_check, f.p))
        t = rng.uniform(0, 1, n_check)
        t[: n_check // 4] = 0
        v = rng.uniform(v_lo, v_hi, (n_check, f.q))
        inside = f.support.contains(x, np.where(t[:, None] == 0, 0, v), t)
        xi = np.where(t[:, None] > 0, v / np.where(t > 0, t, 1)[:, None], v)
        vals = np.asarray(f(x, xi, t))
        total = np.asarray(P.total(x, xi, t))
        bad = inside & (vals != 0) & (np.abs(total - 1) > 1e-12)
        if bad.any():
            i = int(np.argmax(bad))
            raise UncoveredRegionError(
                f"partition sums to {total[i]:.6g} at a support point", witness=(tuple(map(float, x[i])), tuple(map(float, xi[i])), float(t[i]))
            )

    parts = []
    for j, chi in enumerate(P.chis):
        lo, hi = P.chart_x[j]

        def part(x, xi, t, chi=chi):
            return f.func(x, xi, t) * chi(x, xi * t[..., None], t)

        support = f.support.restrict_x(lo, hi) if f.support is not None else None
        chart = P.slices[j] if j < len(P.slices) else None
        parts.append(SchwartzDncField(part, f.p, f.q, support, None, chart, f"{f.name}_{j}", f.periodic_x))

    def tail(x, xi, t):
        return f.func(x, xi, t) * P.lam(x, xi * t[..., None], t)

    tail_support = f.support.restrict_t(P.lam_t_floor) if f.support is not None else None
    tail_field = SchwartzDncField(tail, f.p, f.q, tail_support, None, None, f"{f.name}_lam", f.periodic_x)
    return parts, tail_field


# ---------------------------------------------------------------------------
# fiberwise Fourier transform


@dataclass(frozen=True)
class FiberLattice:
    """Uniform lattice ``-radius + h*j`` (``j < n``) on each fiber axis."""

    n: int = 256
    radius: float = 12.0

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError("lattice size must be a power of two, at least 8")

    @property
    def step(self) -> float:
        return 2 * self.radius / self.n

    def points(self, dtype=float) -> np.ndarray:
        r = np.asarray(self.radius, dtype=dtype)
        return -r + (2 * r / self.n) * np.arange(self.n, dtype=dtype)

    def dual_points(self, dtype=float) -> np.ndarray:
        pi = np.asarray(np.pi, dtype=dtype) if dtype == float else _pi(dtype)
        return 2 * pi / (self.n * (2 * np.asarray(self.radius, dtype=dtype) / self.n)) * (
            np.arange(self.n, dtype=dtype) - self.n // 2
        )


def _pi(dtype):
    # pi to the working precision
    return np.asarray(4, dtype=dtype) * np.arctan(np.asarray(1, dtype=dtype))


@dataclass(frozen=True)
class FiberTransform:
    """Samples of a fiberwise transform on the dual lattice.

    ``values`` has shape ``(n_x,) + (n,) * q``.
    """

    x: np.ndarray
    eta: np.ndarray
    values: np.ndarray
    lattice: FiberLattice


def lattice_transform(samples: np.ndarray, lattice: FiberLattice, q: int, tail_tol: float = 1e-10) -> np.ndarray:
    """Continuum-normalized DFT of lattice samples (last `q` axes), ``∫ g e^{-i xi eta} dxi``."""
    samples = np.asarray(samples)
    axes = tuple(range(-q, 0))
    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak > 0:
        edge = max(lattice.n // 16, 1)
        for ax in axes:
            lo = np.take(samples, range(edge), axis=ax)
            hi = np.take(samples, range(lattice.n - edge, lattice.n), axis=ax)
            tail = max(np.max(np.abs(lo)), np.max(np.abs(hi))) / peak
            if tail > tail_tol:
                raise ResolutionError(
                    f"field mass reaches the lattice edge (tail ratio {float(tail):.3g}); enlarge the radius"
                )
    shifted = np.fft.ifftshift(samples, axes=axes)
    out = np.fft.fftshift(np.fft.fftn(shifted, axes=axes), axes=axes)
    h = 2 * np.asarray(lattice.radius, dtype=np.real(samples).dtype if samples.dtype.kind == "c" else samples.dtype) / lattice.n
    out = out * h**q
    peak_out = np.max(np.abs(out)) if out.size else 0.0
    if peak_out > 0:
        edge = max(lattice.n // 16, 1)
        for ax in axes:
            lo = np.take(out, range(edge), axis=ax)
            hi = np.take(out, range(lattice.n - edge, lattice.n), axis=ax)
            tail = max(np.max(np.abs(lo)), np.max(np.abs(hi))) / peak_out
            if tail > tail_tol:
                raise ResolutionError(
                    f"spectrum reaches the dual lattice edge (tail ratio {float(tail):.3g}); the lattice is too coarse"
                )
    return out


def fourier_fiber_transform(g: BundleSchwartzField, x, lattice: FiberLattice | None = None,
                            dtype=float) -> FiberTransform:
    """Sample ``g`` on the fiber lattice over each base point in `x` and transform.

    The transform of ``exp(-xi^2/2)`` is ``sqrt(2 pi) exp(-eta^2/2)``.
    ``dtype=np.longdouble`` carries the whole computation in extended
    precision.
    """
    lattice = lattice or FiberLattice()
    x = as_coords(x, g.p).astype(dtype)
    if x.ndim == 1:
        x = x[None, :]
    pts = lattice.points(dtype)
    if g.q == 1:
        xi = pts[:, None]
    else:
        xi = np.stack(np.meshgrid(*([pts] * g.q), indexing="ij"), axis=-1)
    xb = x.reshape((x.shape[0],) + (1,) * g.q + (g.p,))
    samples = np.asarray(g(xb, xi[None, ...]))
    values = lattice_transform(samples, lattice, g.q)
    return FiberTransform(x=x, eta=lattice.dual_points(dtype), values=values, lattice=lattice)


def plancherel_defect(samples: np.ndarray, transform: np.ndarray, lattice: FiberLattice, q: int = 1) -> float:
    """Relative mismatch of ``sum |g|^2 h^q`` and ``(2 pi)^-q sum |G|^2 d_eta^q``."""
    h = lattice.step
    d_eta = 2 * math.pi / (lattice.n * h)
    lhs = float(np.sum(np.abs(samples) ** 2)) * h**q
    rhs = float(np.sum(np.abs(transform) ** 2)) * d_eta**q / (2 * math.pi) ** q
    return abs(lhs - rhs) / max(lhs, 1e-300)
