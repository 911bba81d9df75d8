"""``deform`` command-line runner."""

from __future__ import annotations

import sys

import click

from .errors import ConfigError, SeriesError
from .scenarios import (
    BUILTIN_SCENARIOS, builtin_scenario, continuity_series, convergence_series, emit_series,
    load_scenario, run_scenario, write_csv,
)

SERIES_CHECKS = {"continuity": "continuity-curve", "kernel-oracle": "convergence-curve"}


def _scenario(config, name):
    if config and name:
        raise click.UsageError("give either --config or --scenario, not both")
    if config:
        return load_scenario(config)
    return builtin_scenario(name or "gaussian-pair-r1")


def _fail(exc: Exception) -> None:
    key = getattr(exc, "key", None)
    msg = f"error: {exc}" + (f" (key: {key})" if key else "")
    click.echo(msg, err=True)
    sys.exit(2)


@click.group()
def main() -> None:
    """Verification runner for convolution on tangent groupoids."""


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="Scenario JSON file.")
@click.option("--scenario", "name", help="Built-in scenario name (see list-scenarios).")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV output path.")
@click.option("--timings", is_flag=True, help="Fill the runtime_ms column (output is then not reproducible).")
def run(config, name, out, timings) -> None:
    """Run a scenario and write its report rows as CSV."""
    try:
        sc = _scenario(config, name)
        rows, status = run_scenario(sc, timings=timings)
    except ConfigError as exc:
        _fail(exc)
    write_csv(rows, out)
    for r in rows:
        t = "-" if r.t is None else f"{r.t:g}"
        flag = "PASS" if r.passed else "FAIL"
        click.echo(f"{flag} {r.scenario} {r.check} t={t} N={r.grid_size} "
                   f"metric={r.metric:.3e} threshold={r.threshold:.3e}")
    failed = sum(not r.passed for r in rows)
    click.echo(f"{len(rows) - failed}/{len(rows)} rows passed")
    sys.exit(status)


@main.command("list-scenarios")
def list_scenarios() -> None:
    """List the built-in scenarios."""
    for sc in BUILTIN_SCENARIOS.values():
        click.echo(f"{sc.name}\t{sc.groupoid}\t{','.join(sc.checks)}\t{sc.description}")


@main.command()
@click.option("--check", type=click.Choice(sorted(SERIES_CHECKS)), required=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--scenario", "name")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def series(check, config, name, out) -> None:
    """Write a plot-ready two-column series for one check."""
    try:
        if check == "continuity":
            rows = continuity_series(_scenario(config, name))
        else:
            rows = convergence_series(_scenario(config, name or "kernel-convergence-t1"))
        text = emit_series(rows, SERIES_CHECKS[check], out)
    except (ConfigError, SeriesError) as exc:
        _fail(exc)
    click.echo(text, nl=False)


if __name__ == "__main__":  # pragma: no cover
    main()
