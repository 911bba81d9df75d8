"""Finite-difference stencils."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def fornberg_weights(offsets: tuple[float, ...], order: int) -> tuple[float, ...]:
    """Weights w with f^(order)(0) ~ sum_j w_j f(offsets_j) (unit step).

    Fornberg's recursion; exact for polynomials of degree < len(offsets).
    """
    n = len(offsets)
    if order >= n:
        raise ValueError("stencil needs more points than the derivative order")
    z = np.asarray(offsets, dtype=float)
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = z[0]
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return tuple(float(w) for w in c[:, order])


def central_offsets(order: int) -> tuple[float, ...]:
    """Smallest symmetric stencil with second-order accuracy."""
    half = (order + 1) // 2
    return tuple(float(k) for k in range(-half, half + 1))


def forward_offsets(order: int) -> tuple[float, ...]:
    """One-sided stencil with second-order accuracy."""
    return tuple(float(k) for k in range(order + 2))
