"""Conic compact sets as finite unions of boxes with t-affine normal bounds.

A plain box ``B x [a, b]`` cannot hold the support of a field whose
normal extent shrinks to zero at ``t = 0``; the normal bounds of a
`ConicBox` are therefore affine in ``t``::

    v_lo + s_lo * t  <=  v  <=  v_hi + s_hi * t

Membership stays exact and Minkowski sums of boxes stay boxes. A box
touching ``t = 0`` must have zero offsets, so its trace at ``t = 0`` lies
in ``V = {v = 0}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dnc_atlas import as_coords


def _tup(a) -> tuple[float, ...]:
    return tuple(float(v) for v in np.ravel(np.asarray(a, dtype=float)))


@dataclass(frozen=True)
class ConicBox:
    x_lo: tuple[float, ...]
    x_hi: tuple[float, ...]
    v_lo: tuple[float, ...]
    v_hi: tuple[float, ...]
    s_lo: tuple[float, ...]
    s_hi: tuple[float, ...]
    t_lo: float = 0.0
    t_hi: float = 1.0

    def __post_init__(self):
        for name in ("x_lo", "x_hi", "v_lo", "v_hi", "s_lo", "s_hi"):
            object.__setattr__(self, name, _tup(getattr(self, name)))
        object.__setattr__(self, "t_lo", float(self.t_lo))
        object.__setattr__(self, "t_hi", float(self.t_hi))
        if len(self.x_lo) != len(self.x_hi):
            raise ValueError("x bounds differ in length")
        q = len(self.v_lo)
        if not (len(self.v_hi) == len(self.s_lo) == len(self.s_hi) == q):
            raise ValueError("normal bounds differ in length")
        vals = self.x_lo + self.x_hi + self.v_lo + self.v_hi + self.s_lo + self.s_hi
        if not all(np.isfinite(vals)) or not np.isfinite([self.t_lo, self.t_hi]).all():
            raise ValueError("conic boxes must be bounded")
        if not 0 <= self.t_lo <= self.t_hi <= 1:
            raise ValueError(f"t range [{self.t_lo}, {self.t_hi}] not inside [0, 1]")
        if any(lo > hi for lo, hi in zip(self.x_lo, self.x_hi)):
            raise ValueError("empty x range")
        if self.t_lo == 0 and any(v != 0 for v in self.v_lo + self.v_hi):
            raise ValueError("a box touching t=0 needs zero normal offsets (trace must lie in V)")
        for t in (self.t_lo, self.t_hi):
            lo, hi = self.v_bounds(t)
            if np.any(lo > hi + 1e-15):
                raise ValueError(f"empty normal range at t={t}")

    @classmethod
    def cone(cls, x_lo, x_hi, xi_lo, xi_hi, t_lo: float = 0.0, t_hi: float = 1.0) -> "ConicBox":
        """Box of points with ``xi = v / t`` in ``[xi_lo, xi_hi]``."""
        q = len(_tup(xi_lo))
        return cls(x_lo, x_hi, (0.0,) * q, (0.0,) * q, xi_lo, xi_hi, t_lo, t_hi)

    @classmethod
    def slab(cls, x_lo, x_hi, v_lo, v_hi, t_lo: float, t_hi: float = 1.0) -> "ConicBox":
        q = len(_tup(v_lo))
        return cls(x_lo, x_hi, v_lo, v_hi, (0.0,) * q, (0.0,) * q, t_lo, t_hi)

    @property
    def p(self) -> int:
        return len(self.x_lo)

    @property
    def q(self) -> int:
        return len(self.v_lo)

    @property
    def touches_zero(self) -> bool:
        return self.t_lo == 0

    def v_bounds(self, t):
        t = np.asarray(t)
        lo = np.asarray(self.v_lo) + np.asarray(self.s_lo) * t[..., None]
        hi = np.asarray(self.v_hi) + np.asarray(self.s_hi) * t[..., None]
        return lo, hi

    def active(self, x, t) -> np.ndarray:
        x = np.asarray(x)
        t = np.asarray(t)
        ok = (t >= self.t_lo) & (t <= self.t_hi)
        if self.p:
            ok = ok & np.all((x >= np.asarray(self.x_lo)) & (x <= np.asarray(self.x_hi)), axis=-1)
        return ok

    def contains(self, x, v, t) -> np.ndarray:
        lo, hi = self.v_bounds(t)
        v = np.asarray(v)
        return self.active(x, t) & np.all((v >= lo) & (v <= hi), axis=-1)


def _affine_pieces(t_lo, t_hi, pairs):
    """Split [t_lo, t_hi] at every crossing of the affine functions in `pairs`."""
    cuts = {t_lo, t_hi}
    for (o1, s1), (o2, s2) in pairs:
        if s1 != s2:
            tc = (o2 - o1) / (s1 - s2)
            if t_lo < tc < t_hi:
                cuts.add(tc)
    cuts = sorted(cuts)
    if len(cuts) == 1:
        return [(cuts[0], cuts[0])]
    return list(zip(cuts[:-1], cuts[1:]))


def intersect_boxes(a: ConicBox, b: ConicBox) -> list[ConicBox]:
    t_lo, t_hi = max(a.t_lo, b.t_lo), min(a.t_hi, b.t_hi)
    if t_lo > t_hi:
        return []
    x_lo = np.maximum(a.x_lo, b.x_lo)
    x_hi = np.minimum(a.x_hi, b.x_hi)
    if np.any(x_lo > x_hi):
        return []
    pairs = []
    for j in range(a.q):
        lo_a, lo_b = (a.v_lo[j], a.s_lo[j]), (b.v_lo[j], b.s_lo[j])
        hi_a, hi_b = (a.v_hi[j], a.s_hi[j]), (b.v_hi[j], b.s_hi[j])
        pairs += [(lo_a, lo_b), (hi_a, hi_b), (lo_a, hi_b), (lo_b, hi_a)]
    out = []
    for ta, tb in _affine_pieces(t_lo, t_hi, pairs):
        tm = 0.5 * (ta + tb)
        vlo, vhi, slo, shi = [], [], [], []
        for j in range(a.q):
            la = a.v_lo[j] + a.s_lo[j] * tm
            lb = b.v_lo[j] + b.s_lo[j] * tm
            src = a if la >= lb else b
            vlo.append(src.v_lo[j])
            slo.append(src.s_lo[j])
            ha = a.v_hi[j] + a.s_hi[j] * tm
            hb = b.v_hi[j] + b.s_hi[j] * tm
            src = a if ha <= hb else b
            vhi.append(src.v_hi[j])
            shi.append(src.s_hi[j])
        lo_m = np.add(vlo, np.multiply(slo, tm))
        hi_m = np.add(vhi, np.multiply(shi, tm))
        if np.any(lo_m > hi_m):
            continue
        try:
            out.append(ConicBox(x_lo, x_hi, vlo, vhi, slo, shi, ta, tb))
        except ValueError:
            continue
    return out


class ConicCompactSet:
    """Finite union of `ConicBox` pieces in ``R^p x R^q x [0, 1]``."""

    def __init__(self, boxes: Iterable[ConicBox], p: int, q: int):
        self.boxes: tuple[ConicBox, ...] = tuple(boxes)
        self.p = p
        self.q = q
        for b in self.boxes:
            if (b.p, b.q) != (p, q):
                raise ValueError(f"box of dimension ({b.p}, {b.q}) in a ({p}, {q}) set")

    def __repr__(self) -> str:
        return f"ConicCompactSet({len(self.boxes)} boxes, p={self.p}, q={self.q})"

    @classmethod
    def empty(cls, p: int, q: int) -> "ConicCompactSet":
        return cls((), p, q)

    @property
    def is_empty(self) -> bool:
        return not self.boxes

    def contains(self, x, v, t) -> np.ndarray:
        x = as_coords(x, self.p)
        v = as_coords(v, self.q)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1], t.shape)
        out = np.zeros(shape, dtype=bool)
        for b in self.boxes:
            out |= b.contains(x, v, t)
        return out

    def contains_dnc(self, x, xi, t) -> np.ndarray:
        """Whether ``(x, t*xi, t)`` lies in the set; at ``t = 0`` only ``x`` is tested."""
        x = as_coords(x, self.p)
        xi = as_coords(xi, self.q)
        t = np.asarray(t, dtype=float)
        inner = self.contains(x, xi * t[..., None], t)
        at_zero = self.contains(x, np.zeros_like(xi), np.zeros_like(t))
        return np.where(t == 0, at_zero, inner)

    def v_hull(self, x, t):
        """Componentwise hull of the normal slices active at ``(x, t)``.

        Returns ``(lo, hi)`` of shape ``(..., q)``; empty slices give
        ``lo = +inf``, ``hi = -inf``.
        """
        x = as_coords(x, self.p)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], t.shape)
        lo = np.full(shape + (self.q,), np.inf)
        hi = np.full(shape + (self.q,), -np.inf)
        for b in self.boxes:
            act = b.active(x, t)[..., None]
            blo, bhi = b.v_bounds(t)
            lo = np.where(act, np.minimum(lo, blo), lo)
            hi = np.where(act, np.maximum(hi, bhi), hi)
        return lo, hi

    def bounding_box(self):
        """``(x_lo, x_hi, v_lo, v_hi)`` enclosing every box for all t."""
        if self.is_empty:
            raise ValueError("empty set has no bounding box")
        x_lo = np.min([b.x_lo for b in self.boxes], axis=0) if self.p else np.zeros(0)
        x_hi = np.max([b.x_hi for b in self.boxes], axis=0) if self.p else np.zeros(0)
        los, his = [], []
        for b in self.boxes:
            for t in (b.t_lo, b.t_hi):
                lo, hi = b.v_bounds(t)
                los.append(lo)
                his.append(hi)
        return x_lo, x_hi, np.min(los, axis=0), np.max(his, axis=0)

    def t_range(self) -> tuple[float, float]:
        return min(b.t_lo for b in self.boxes), max(b.t_hi for b in self.boxes)

    def union(self, other: "ConicCompactSet") -> "ConicCompactSet":
        return ConicCompactSet(self.boxes + other.boxes, self.p, self.q)

    def intersect(self, other: "ConicCompactSet") -> "ConicCompactSet":
        out = []
        for a in self.boxes:
            for b in other.boxes:
                out.extend(intersect_boxes(a, b))
        return ConicCompactSet(out, self.p, self.q)

    def restrict_t(self, t_lo: float, t_hi: float = 1.0) -> "ConicCompactSet":
        out = []
        for b in self.boxes:
            lo, hi = max(b.t_lo, t_lo), min(b.t_hi, t_hi)
            if lo <= hi:
                out.append(ConicBox(b.x_lo, b.x_hi, b.v_lo, b.v_hi, b.s_lo, b.s_hi, lo, hi))
        return ConicCompactSet(out, self.p, self.q)

    def restrict_x(self, x_lo: Sequence[float], x_hi: Sequence[float]) -> "ConicCompactSet":
        out = []
        for b in self.boxes:
            lo = np.maximum(b.x_lo, x_lo)
            hi = np.minimum(b.x_hi, x_hi)
            if np.all(lo <= hi):
                out.append(ConicBox(lo, hi, b.v_lo, b.v_hi, b.s_lo, b.s_hi, b.t_lo, b.t_hi))
        return ConicCompactSet(out, self.p, self.q)

    def trace_at_zero_in_v(self) -> bool:
        """Exact check that ``K ∩ (U x {0})`` lies in ``V``."""
        return all(not b.touches_zero or (all(v == 0 for v in b.v_lo + b.v_hi)) for b in self.boxes)
