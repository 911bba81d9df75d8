"""Smooth cutoff functions with exact zeros and ones.

All functions preserve the floating dtype of their input, so they can be
evaluated in extended precision.
"""

from __future__ import annotations

import numpy as np


def _phi(u):
    # exp(-1/u) for u > 0, exactly 0 otherwise
    u = np.asarray(u)
    pos = u > 0
    safe = np.where(pos, u, 1)
    return np.where(pos, np.exp(-1 / safe), 0)


def smoothstep(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, monotone in between."""
    u = np.asarray(u)
    dtype = np.result_type(u.dtype, float)
    out = np.atleast_1d(u >= 1).astype(dtype)
    mid = (u > 0) & (u < 1)
    if mid.any():
        um = u[mid]
        a = np.exp(-1 / um)
        b = np.exp(-1 / (1 - um))
        out[np.atleast_1d(mid)] = a / (a + b)
    return out.reshape(u.shape)


def plateau(s, inner: float, outer: float):
    """Radial bump equal to 1 for |s| <= inner and 0 for |s| >= outer.

    `s` may carry a trailing vector axis only if the caller has already
    reduced it to a norm.
    """
    if not 0 <= inner < outer:
        raise ValueError(f"need 0 <= inner < outer, got {inner}, {outer}")
    r = np.abs(np.asarray(s))
    return 1 - smoothstep((r - inner) / (outer - inner))


def plateau_nd(s, inner: float, outer: float):
    """Tensor-product plateau over the last axis of `s`."""
    s = np.asarray(s)
    if s.shape[-1] == 0:
        return np.ones(s.shape[:-1], dtype=s.dtype if s.dtype.kind == "f" else float)
    return np.prod(plateau(s, inner, outer), axis=-1)
