"""Scenario configs, verification checks and report rows."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .convolution import (
    bundle_convolve, convolve, evaluate_e0, evaluate_et, groupoid_convolve,
    kernel_composition_oracle, sup_relative_error,
)
from .errors import ConfigError, DeformError, SeriesError
from .families import FamilySpec
from .groupoids import GROUPOID_KEYS, groupoid_from_key, tangent_groupoid
from .quadrature import QuadratureSpec
from .schwartz_fields import (
    FiberLattice, conic_support_check, fourier_fiber_transform, multi_indices, seminorm_estimate,
)

CHECKS = ("associativity", "homomorphism", "continuity", "kernel-oracle", "fourier", "seminorm", "support")

DEFAULT_OPTIONS = {
    "n_points": 100,
    "x_scale": 1.0,
    "xi_scale": 2.0,
    "kernel_t": 0.3,
    "kernel_n": 256,
    "kernel_rows": None,
    "lattice_n": 256,
    "lattice_radius": 12.0,
    "fourier_points": 3,
    "continuity_t": [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3],
    "continuity_points": 50,
    "seminorm_order": 3,
    "support_samples": 1000,
}

THRESHOLDS = {
    "associativity": 1e-6,
    "homomorphism": 1e-6,
    "kernel-oracle": 1e-6,
    "fourier": 1e-6,
    "seminorm": 1e6,
    "support": 0.0,
    "continuity": math.inf,
    "continuity-slope": 0.0,
}

MIN_SLOPE = 0.9


@dataclass(frozen=True)
class Scenario:
    name: str
    groupoid: str
    fields: tuple[FamilySpec, ...]
    t_grid: tuple[float, ...]
    quadrature: QuadratureSpec
    checks: tuple[str, ...]
    seed: int = 0
    options: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        if self.groupoid not in GROUPOID_KEYS:
            raise ConfigError(f"unknown groupoid instance {self.groupoid!r}", key=self.groupoid)
        if not self.checks:
            raise ConfigError("a scenario needs at least one check", key="checks")
        for c in self.checks:
            if c not in CHECKS:
                raise ConfigError(f"unknown check {c!r}", key=c)
        if not self.fields:
            raise ConfigError("a scenario needs at least one field", key="fields")
        t = list(self.t_grid)
        if not t or any(not 0 <= v <= 1 for v in t) or t != sorted(t):
            raise ConfigError("t_grid must be a non-empty sorted list in [0, 1]", key="t_grid")
        for key in self.options:
            if key not in DEFAULT_OPTIONS:
                raise ConfigError(f"unknown option {key!r}", key=key)
        if "kernel-oracle" in self.checks and self.groupoid != "pair-t1":
            raise ConfigError("kernel-oracle needs the pair-t1 instance", key="kernel-oracle")

    def option(self, key):
        return self.options.get(key, DEFAULT_OPTIONS[key])

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a JSON object", key="<root>")
        known = {"name", "groupoid", "fields", "t_grid", "quadrature", "checks", "seed", "options", "description"}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown scenario key {key!r}", key=key)
        for key in ("name", "groupoid", "fields", "t_grid", "checks"):
            if key not in data:
                raise ConfigError(f"missing scenario key {key!r}", key=key)
        return cls(
            name=str(data["name"]),
            groupoid=str(data["groupoid"]),
            fields=tuple(FamilySpec.from_config(item) for item in data["fields"]),
            t_grid=tuple(float(t) for t in data["t_grid"]),
            quadrature=QuadratureSpec.from_dict(data.get("quadrature")),
            checks=tuple(data["checks"]),
            seed=int(data.get("seed", 0)),
            options=dict(data.get("options", {})),
            description=str(data.get("description", "")),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "groupoid": self.groupoid,
            "fields": [f.to_config() for f in self.fields],
            "t_grid": list(self.t_grid),
            "quadrature": self.quadrature.to_dict(),
            "checks": list(self.checks),
            "seed": self.seed,
            "options": dict(self.options),
        }


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}", key=str(path)) from exc
    return Scenario.from_dict(data)


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    check: str
    t: float | None
    grid_size: int
    metric: float
    threshold: float
    passed: bool
    runtime_ms: float | None = None

    @classmethod
    def make(cls, scenario: str, check: str, t, grid_size: int, metric: float, threshold: float,
             runtime_ms: float | None = None) -> "ReportRow":
        metric = float(metric)
        passed = not math.isnan(metric) and metric <= threshold
        return cls(scenario, check, None if t is None else float(t), int(grid_size), metric,
                   float(threshold), passed, runtime_ms)

    def sort_key(self):
        return (self.scenario, self.check, -1.0 if self.t is None else self.t, self.grid_size)

    def csv_fields(self) -> list[str]:
        return [
            self.scenario, self.check, "" if self.t is None else repr(self.t), str(self.grid_size),
            _fmt(self.metric), _fmt(self.threshold), "true" if self.passed else "false",
            "" if self.runtime_ms is None else f"{self.runtime_ms:.1f}",
        ]


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.9e}"


CSV_HEADER = [f.name for f in dc_fields(ReportRow)]


def rows_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(rows, key=ReportRow.sort_key):
        w.writerow(r.csv_fields())
    return buf.getvalue()


def write_csv(rows: Sequence[ReportRow], path) -> None:
    Path(path).write_text(rows_to_csv(rows), encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# checks


class _Context:
    def __init__(self, sc: Scenario, check: str):
        self.sc = sc
        self.base = groupoid_from_key(sc.groupoid)
        self.tg = tangent_groupoid(self.base)
        self.spec = sc.quadrature
        # one counter-based stream per check, independent of scheduling
        self.rng = np.random.Generator(np.random.Philox(key=sc.seed).jumped(CHECKS.index(check) + 1))

    def field(self, i: int):
        specs = self.sc.fields
        return specs[i % len(specs)].build(self.base)

    def points(self, n: int):
        p, q = self.base.p, self.base.q
        if self.base.periodic_units:
            x = self.rng.uniform(0, 1, (n, p))
        else:
            s = self.sc.option("x_scale")
            x = self.rng.uniform(-s, s, (n, p))
        s = self.sc.option("xi_scale")
        xi = self.rng.uniform(-s, s, (n, q))
        return x, xi

    def nodes(self, t: float, spec: QuadratureSpec | None = None) -> int:
        spec = spec or self.spec
        return spec.n0 if spec.uses_decay_rule(t) else spec.npos

    def independent(self) -> QuadratureSpec:
        s = self.spec
        return s.replace(n0=s.n0 + s.n0 // 2, npos=s.npos + s.npos // 2)


def check_associativity(ctx: _Context) -> list[ReportRow]:
    f, g, h = ctx.field(0), ctx.field(1), ctx.field(2)
    rows = []
    for t in ctx.sc.t_grid:
        x, xi = ctx.points(ctx.sc.option("n_points"))
        left = convolve(convolve(f, g, ctx.tg, ctx.spec), h, ctx.tg, ctx.spec)(x, xi, t)
        right = convolve(f, convolve(g, h, ctx.tg, ctx.spec), ctx.tg, ctx.spec)(x, xi, t)
        rows.append(("associativity", t, ctx.nodes(t), sup_relative_error(left, right)))
    return rows


def check_homomorphism(ctx: _Context) -> list[ReportRow]:
    f, g = ctx.field(0), ctx.field(1)
    other = ctx.independent()
    fg = convolve(f, g, ctx.tg, ctx.spec)
    rows = []
    for t in ctx.sc.t_grid:
        x, xi = ctx.points(ctx.sc.option("n_points"))
        if t == 0:
            rhs = bundle_convolve(evaluate_e0(f), evaluate_e0(g), other)(x, xi)
            lhs = fg(x, xi, 0.0)
        else:
            v = xi * t
            if ctx.base.periodic_fiber:
                v = np.clip(v, -0.49, 0.49)
            rhs = groupoid_convolve(evaluate_et(f, t), evaluate_et(g, t), ctx.base, t ** (-ctx.base.q), other).chart_eval(x, v)
            lhs = fg(x, v / t, t)
        rows.append(("homomorphism", t, ctx.nodes(t), sup_relative_error(lhs, rhs)))
    return rows


def continuity_metrics(ctx: _Context) -> list[tuple[float, float]]:
    f, g = ctx.field(0), ctx.field(1)
    fg = convolve(f, g, ctx.tg, ctx.spec)
    x, xi = ctx.points(ctx.sc.option("continuity_points"))
    at_zero = fg(x, xi, 0.0)
    return [(float(t), float(np.max(np.abs(fg(x, xi, t) - at_zero)))) for t in ctx.sc.option("continuity_t")]


def loglog_slope(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or np.any(xs <= 0) or np.any(ys <= 0):
        return float("nan")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def check_continuity(ctx: _Context) -> list[ReportRow]:
    pairs = continuity_metrics(ctx)
    n = ctx.sc.option("continuity_points")
    rows = [("continuity", t, n, m) for t, m in pairs]
    slope = loglog_slope(*zip(*pairs)) if len(pairs) >= 2 else float("nan")
    rows.append(("continuity-slope", None, n, MIN_SLOPE - slope))
    return rows


def check_kernel(ctx: _Context) -> list[ReportRow]:
    f, g = ctx.field(0), ctx.field(1)
    t = ctx.sc.option("kernel_t")
    n = ctx.sc.option("kernel_n")
    rows = ctx.sc.option("kernel_rows")
    return [("kernel-oracle", t, n, kernel_composition_oracle(f, g, t, n, ctx.tg, ctx.spec, rows=rows))]


def fourier_defect(f, g, tg, spec: QuadratureSpec, x, lattice: FiberLattice, floor: float = 1e-12) -> float:
    """Max relative gap between the transform of ``e0(f*g)`` and the product of transforms."""
    ext = spec.replace(precision="extended", abs_tol=0.0)
    dtype = ext.dtype
    x = np.asarray(x, dtype=dtype)
    conv = evaluate_e0(convolve(f, g, tg, ext))
    lhs = fourier_fiber_transform(conv, x, lattice, dtype).values
    prod = (fourier_fiber_transform(evaluate_e0(f), x, lattice, dtype).values
            * fourier_fiber_transform(evaluate_e0(g), x, lattice, dtype).values)
    mask = np.abs(prod) > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(lhs - prod)[mask] / np.abs(prod)[mask]))


def check_fourier(ctx: _Context) -> list[ReportRow]:
    if ctx.base.q != 1:
        raise ConfigError("the fourier check supports one-dimensional fibers", key="fourier")
    f, g = ctx.field(0), ctx.field(1)
    lattice = FiberLattice(int(ctx.sc.option("lattice_n")), float(ctx.sc.option("lattice_radius")))
    x, _ = ctx.points(int(ctx.sc.option("fourier_points")))
    return [("fourier", 0.0, lattice.n, fourier_defect(f, g, ctx.tg, ctx.spec, x, lattice))]


def check_seminorm(ctx: _Context) -> list[ReportRow]:
    order = int(ctx.sc.option("seminorm_order"))
    worst = 0.0
    size = 0
    for i in range(len(ctx.sc.fields)):
        f = ctx.field(i)
        for k, m, l, alpha in multi_indices(f.p, f.q, order):
            rep = seminorm_estimate(f, k, m, l, alpha)
            size = rep.grid_size
            worst = max(worst, rep.estimate if rep.bounded else math.inf)
    return [("seminorm", None, size, worst)]


def check_support(ctx: _Context) -> list[ReportRow]:
    n = int(ctx.sc.option("support_samples"))
    seed = int(ctx.rng.integers(2**31))
    bad = 0
    for i in range(len(ctx.sc.fields)):
        bad += len(conic_support_check(ctx.field(i), n, seed + i).violations)
    prod = convolve(ctx.field(0), ctx.field(1), ctx.tg, ctx.spec)
    bad += len(conic_support_check(prod, max(n // 5, 50), seed).violations)
    return [("support", None, n, float(bad))]


CHECK_FUNCTIONS: dict[str, Callable[[_Context], list]] = {
    "associativity": check_associativity,
    "homomorphism": check_homomorphism,
    "continuity": check_continuity,
    "kernel-oracle": check_kernel,
    "fourier": check_fourier,
    "seminorm": check_seminorm,
    "support": check_support,
}


def _run_check(sc: Scenario, check: str, timings: bool) -> list[ReportRow]:
    start = time.perf_counter()
    try:
        raw = CHECK_FUNCTIONS[check](_Context(sc, check))
    except ConfigError:
        raise
    except DeformError:
        # numerical failure (tolerance, resolution) becomes a failing row
        raw = [(check, None, 0, math.inf)]
    elapsed = (time.perf_counter() - start) * 1000 if timings else None
    return [
        ReportRow.make(sc.name, name, t, n, metric, THRESHOLDS[name], elapsed)
        for name, t, n, metric in raw
    ]


def thread_count() -> int:
    env = os.environ.get("DEFORM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError("DEFORM_THREADS must be a positive integer", key="DEFORM_THREADS") from exc
        if n < 1:
            raise ConfigError("DEFORM_THREADS must be a positive integer", key="DEFORM_THREADS")
        return n
    return min(4, os.cpu_count() or 1)


def run_scenario(sc: Scenario, timings: bool = False, threads: int | None = None) -> tuple[list[ReportRow], int]:
    """Run every requested check; returns rows in canonical order and the exit status."""
    threads = threads or thread_count()
    if threads == 1 or len(sc.checks) == 1:
        results = [_run_check(sc, c, timings) for c in sc.checks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _run_check(sc, c, timings), sc.checks))
    rows = sorted((r for rs in results for r in rs), key=ReportRow.sort_key)
    status = 0 if all(r.passed for r in rows) else 1
    return rows, status


# ---------------------------------------------------------------------------
# plot series


SERIES_KINDS = ("continuity-curve", "convergence-curve")


def emit_series(rows: Sequence[ReportRow], kind: str, path=None) -> str:
    """Two-column series (t or N against the metric) with a fitted log-log slope."""
    if kind not in SERIES_KINDS:
        raise SeriesError(f"unknown series kind {kind!r}")
    rows = [r for r in rows if r.check != "continuity-slope"]
    if len(rows) < 3:
        raise SeriesError(f"a series needs at least 3 rows, got {len(rows)}")
    if len({(r.scenario, r.check) for r in rows}) != 1:
        raise SeriesError("series rows must share one scenario and check")
    if kind == "continuity-curve":
        xs = [r.t for r in rows]
        label = "t"
    else:
        xs = [float(r.grid_size) for r in rows]
        label = "N"
    if any(x is None for x in xs):
        raise SeriesError("continuity rows need a t value")
    order = np.argsort(xs, kind="stable")
    xs = [xs[i] for i in order]
    ys = [rows[i].metric for i in order]
    slope = loglog_slope(xs, ys)
    lines = [
        f"# scenario: {rows[0].scenario}",
        f"# check: {rows[0].check}",
        f"# kind: {kind}",
        f"# loglog-slope: {slope:.6f}",
        f"# {label} metric",
    ]
    lines += [f"{x!r} {_fmt(y)}" for x, y in zip(xs, ys)]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def continuity_series(sc: Scenario) -> list[ReportRow]:
    ctx = _Context(sc, "continuity")
    n = sc.option("continuity_points")
    return [ReportRow.make(sc.name, "continuity", t, n, m, THRESHOLDS["continuity"])
            for t, m in continuity_metrics(ctx)]


def convergence_series(sc: Scenario, sizes=(64, 128, 256, 512)) -> list[ReportRow]:
    if sc.groupoid != "pair-t1":
        raise ConfigError("the convergence series uses the kernel oracle on pair-t1", key=sc.groupoid)
    ctx = _Context(sc, "kernel-oracle")
    f, g = ctx.field(0), ctx.field(1)
    t = sc.option("kernel_t")
    return [ReportRow.make(sc.name, "kernel-oracle", t, n,
                           kernel_composition_oracle(f, g, t, n, ctx.tg, ctx.spec,
                                                     rows=sc.option("kernel_rows") or 16),
                           THRESHOLDS["kernel-oracle"]) for n in sizes]


# ---------------------------------------------------------------------------
# built-in scenarios


def _builtin() -> dict[str, Scenario]:
    r1_fields = (
        FamilySpec("gaussian", {"a": 1.0, "center": 0.2, "x_rate": 0.3}),
        FamilySpec("gaussian", {"a": 0.7, "x_rate": 0.1}),
        FamilySpec("gaussian", {"a": 1.5, "center": -0.3, "x_rate": 0.2}),
    )
    t1_fields = (
        FamilySpec("gaussian", {"a": 100.0, "center": 0.05, "x_rate": 0.3}),
        FamilySpec("gaussian", {"a": 80.0, "x_rate": 0.5}),
        FamilySpec("gaussian", {"a": 120.0, "center": -0.05, "x_rate": 0.2}),
    )
    torus_opts = {"xi_scale": 0.2, "lattice_radius": 1.5}
    out = [
        Scenario(
            "gaussian-pair-r1", "pair-r1", r1_fields, (0.0, 0.1, 0.25, 0.5, 1.0), QuadratureSpec(),
            ("associativity", "homomorphism", "continuity", "fourier", "seminorm", "support"),
            description="Gaussian fields on the pair groupoid of the real line",
        ),
        Scenario(
            "gaussian-pair-t1", "pair-t1", t1_fields, (0.0, 0.1, 0.5, 1.0), QuadratureSpec(t0_radius=1.5),
            ("associativity", "homomorphism", "continuity", "kernel-oracle", "fourier", "support"),
            options=torus_opts,
            description="narrow Gaussian fields on the pair groupoid of the circle",
        ),
        Scenario(
            "gaussian-abelian-q1", "abelian-q1", r1_fields, (0.0, 0.1, 0.5, 1.0), QuadratureSpec(),
            ("associativity", "homomorphism", "fourier", "support"),
            description="Gaussian fields on the additive group of the real line",
        ),
        Scenario(
            "gaussian-bundle-t1-q1", "bundle-t1-q1", r1_fields, (0.0, 0.1, 0.5, 1.0), QuadratureSpec(),
            ("associativity", "homomorphism", "fourier", "support"),
            description="Gaussian fields on the trivial line bundle over the circle",
        ),
        Scenario(
            "kernel-convergence-t1", "pair-t1",
            (FamilySpec("gaussian", {"a": 3000.0, "x_rate": 0.3}),
             FamilySpec("gaussian", {"a": 2400.0, "x_rate": 0.5})),
            (0.3,), QuadratureSpec(t0_radius=1.5), ("kernel-oracle",),
            options={"kernel_n": 512, "kernel_rows": 16},
            description="very narrow fields; the dense kernel product converges over N = 64..512",
        ),
    ]
    return {s.name: s for s in out}


BUILTIN_SCENARIOS = _builtin()


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}", key=name)
    return BUILTIN_SCENARIOS[name]
