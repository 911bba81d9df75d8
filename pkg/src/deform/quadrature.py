"""Fiber quadrature rules and the refining integrator.

Two rules cover the deformation parameter range. For small ``t`` the
integrand is rapidly decaying on all of ``R^q`` and a scaled Gauss-Hermite
rule (with the Gaussian weight folded into the weights) is used; for larger
``t`` the integrand is compactly supported in the fiber coordinate and a
Gauss-Legendre rule over the support hull is used.

Node sums are reduced with a fixed pairwise tree in index order, so results
do not depend on how work is scheduled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import roots_legendre

from .errors import ConfigError, QuadratureToleranceError

PRECISIONS = {"double": np.float64, "extended": np.longdouble}


@dataclass(frozen=True)
class QuadratureSpec:
    """Fiber-integration scheme.

    ``n0`` / ``npos`` are node counts per fiber axis for the decaying-integrand
    rule (``t <= t_switch``) and the compact rule (``t > t_switch``).
    ``t0_radius`` is the largest Hermite node after scaling. Refinement
    doubles the node count of failing points at most ``max_doublings`` times.
    ``abs_tol`` is an absolute floor below which errors are accepted.
    """

    n0: int = 128
    npos: int = 128
    t_switch: float = 0.1
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    t0_radius: float = 12.0
    max_doublings: int = 4
    precision: str = "double"

    def __post_init__(self):
        if int(self.n0) < 8 or int(self.npos) < 8:
            raise ConfigError("node counts must be at least 8", key="n0" if self.n0 < 8 else "npos")
        if not 0 < self.t_switch <= 0.5:
            raise ConfigError("t_switch must lie in (0, 0.5]", key="t_switch")
        if not self.rel_tol > 0 or self.abs_tol < 0:
            raise ConfigError("tolerances must be positive", key="rel_tol")
        if not self.t0_radius > 0:
            raise ConfigError("t0_radius must be positive", key="t0_radius")
        if int(self.max_doublings) < 0:
            raise ConfigError("max_doublings must be non-negative", key="max_doublings")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}", key="precision")
        object.__setattr__(self, "n0", int(self.n0))
        object.__setattr__(self, "npos", int(self.npos))
        object.__setattr__(self, "max_doublings", int(self.max_doublings))

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def uses_decay_rule(self, t: float) -> bool:
        # closed on the left: t == t_switch takes the decaying-integrand rule
        return t <= self.t_switch

    def replace(self, **changes) -> "QuadratureSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "QuadratureSpec":
        data = dict(data or {})
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError(f"unknown quadrature setting {key!r}", key=key)
        return cls(**data)


# ---------------------------------------------------------------------------
# rules


def _hermite_scaled(x, n: int):
    """Orthonormal Hermite polynomials ``h_n(x), h_{n-1}(x)`` and ``log sum_{k<n} h_k(x)^2``.

    The recurrence is rescaled on the fly; the two returned values share an
    unknown common factor, which cancels in Newton steps.
    """
    dtype = x.dtype
    prev = np.zeros_like(x)
    pi = 4 * np.arctan(np.asarray(1, dtype=dtype))
    cur = np.full_like(x, pi ** np.asarray(-0.25, dtype=dtype))
    log_scale = np.zeros_like(x)
    acc = np.zeros_like(x)
    for k in range(n):
        acc = acc + cur * cur
        kk = np.asarray(k, dtype=dtype)
        nxt = np.sqrt(2 / (kk + 1)) * x * cur - np.sqrt(kk / (kk + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e100
        if big.any():
            c = np.where(big, np.asarray(1e-100, dtype=dtype), 1)
            prev, cur, acc = prev * c, cur * c, acc * c * c
            log_scale = log_scale - np.log(c)
    return cur, prev, np.log(acc) + 2 * log_scale


@lru_cache(maxsize=64)
def gauss_hermite(n: int, precision: str = "double") -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``x_i`` and weights ``w_i * exp(x_i^2)`` of the n-point Hermite rule.

    Nodes come from the eigenvalues of the Jacobi matrix, polished by Newton
    steps in the working precision; weights use ``w_i = 1 / sum_k h_k(x_i)^2``.
    """
    dtype = PRECISIONS[precision]
    off = np.sqrt(np.arange(1, n) / 2.0)
    x = eigh_tridiagonal(np.zeros(n), off, eigvals_only=True).astype(dtype)
    two_n = 2 * np.asarray(n, dtype=dtype)
    x = 0.5 * (x - x[::-1])  # exact symmetry
    for _ in range(3):
        hn, hm, _ = _hermite_scaled(x, n)
        x = x - hn / (np.sqrt(two_n) * hm)
    x = 0.5 * (x - x[::-1])
    _, _, log_sum = _hermite_scaled(x, n)
    w = np.exp(x * x - log_sum)
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def gauss_legendre(n: int, precision: str = "double") -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[-1, 1]``, Newton-polished in the working precision."""
    dtype = PRECISIONS[precision]
    x, _ = roots_legendre(n)
    x = x.astype(dtype)
    for _ in range(2):
        p_prev, p = np.ones_like(x), x.copy()
        for k in range(1, n):
            p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        dp = n * (x * p - p_prev) / (x * x - 1)
        x = x - p / dp
    p_prev, p = np.ones_like(x), x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    dp = n * (x * p - p_prev) / (x * x - 1)
    w = 2 / ((1 - x * x) * dp * dp)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def tensor_rule(nodes: np.ndarray, weights: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor product of a 1-D rule: nodes ``(n^q, q)``, weights ``(n^q,)``."""
    if q == 1:
        return nodes[:, None], weights
    grids = np.meshgrid(*([nodes] * q), indexing="ij")
    wgrids = np.meshgrid(*([weights] * q), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1), np.prod([g.ravel() for g in wgrids], axis=0)


def decay_rule(n: int, q: int, radius: float, precision: str = "double"):
    """Scaled Hermite rule whose outermost node sits at ``radius``."""
    x, w = gauss_hermite(n, precision)
    scale = np.asarray(radius, dtype=x.dtype) / x[-1]
    nodes, weights = tensor_rule(x * scale, w * scale, q)
    return nodes, weights


def compact_rule(n: int, q: int, precision: str = "double"):
    """Legendre rule on ``[-1, 1]^q``."""
    x, w = gauss_legendre(n, precision)
    return tensor_rule(x, w, q)


# ---------------------------------------------------------------------------
# summation and refinement


def pairwise_sum(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along `axis` by a fixed binary tree in index order."""
    a = np.moveaxis(np.asarray(a), axis, -1)
    while a.shape[-1] > 1:
        if a.shape[-1] % 2:
            a = np.concatenate([a, np.zeros(a.shape[:-1] + (1,), dtype=a.dtype)], axis=-1)
        a = a[..., 0::2] + a[..., 1::2]
    return a[..., 0] if a.shape[-1] == 1 else np.zeros(a.shape[:-1], dtype=a.dtype)


@dataclass(frozen=True)
class RefinedIntegral:
    value: np.ndarray
    error: np.ndarray
    nodes: np.ndarray


def refine_integrate(terms: Callable[[np.ndarray, int], np.ndarray], n_points: int, n_start: int,
                     rel_tol: float, abs_tol: float, max_doublings: int) -> RefinedIntegral:
    """Integrate `n_points` integrals by comparing ``n`` against ``n/2`` nodes.

    ``terms(idx, n)`` returns weighted integrand samples with shape
    ``(len(idx), m)`` for the points ``idx`` and per-axis node count ``n``.
    Failing points are recomputed with twice the nodes until the estimate
    ``|I_n - I_{n/2}|`` drops below ``max(rel_tol * sum |w F|, abs_tol)``.
    """
    idx = np.arange(n_points)
    n = n_start
    coarse = pairwise_sum(terms(idx, n // 2))
    value = None
    error = np.zeros(n_points)
    used = np.full(n_points, n_start)
    for level in range(max_doublings + 1):
        fine_terms = terms(idx, n)
        fine = pairwise_sum(fine_terms)
        scale = pairwise_sum(np.abs(fine_terms))
        err = np.abs(fine - coarse)
        tol = np.maximum(rel_tol * scale, abs_tol)
        if value is None:
            value = np.zeros(n_points, dtype=fine.dtype)
        value[idx] = fine
        error[idx] = err
        used[idx] = n
        bad = err > tol
        if not bad.any():
            return RefinedIntegral(value, error, used)
        if level == max_doublings:
            worst = int(np.argmax(np.where(bad, err / np.maximum(tol, 1e-300), 0)))
            raise QuadratureToleranceError(
                f"quadrature estimate {float(err[worst]):.3g} exceeds tolerance {float(tol[worst]):.3g} "
                f"with {n} nodes per axis",
                estimate=float(err[worst]), tolerance=float(tol[worst]), nodes=n,
            )
        idx = idx[bad]
        coarse = fine[bad]
        n *= 2
    raise AssertionError("unreachable")
