"""``lmsim`` command line: synth, run, report.

Exit codes: 0 ok, 2 validation/parse error, 3 runtime error.
Set ``LMSIM_LOG`` (DEBUG, INFO, WARNING, ...) to control logging.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from .errors import ParseError, PhaseError, ValidationError
from .orchestrator import report as build_report
from .orchestrator import run as run_simulation
from .orchestrator import synth as synth_population
from .scenario import load_scenario

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _is_validation(exc: BaseException) -> bool:
    if isinstance(exc, PhaseError):
        exc = exc.cause
    return isinstance(exc, (ValidationError, ParseError))


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        logging.getLogger("lmsim").debug("failure", exc_info=True)
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION if _is_validation(exc) else EXIT_RUNTIME)


@click.group()
def main() -> None:
    """Last-mile delivery simulator coupling consumer choice with freight operations."""
    logging.basicConfig(
        level=os.environ.get("LMSIM_LOG", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--scenario", "scenario", required=True, help="Scenario directory, scenario.toml, or bundled name.")
@click.option("--out", "out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
def synth(scenario: str, out: str, seed: int | None) -> None:
    """Synthesize the population only (persons.csv, households.csv)."""
    cfg = _guard(load_scenario, scenario)
    pop = _guard(synth_population, cfg, out, seed)
    click.echo(f"{len(pop.persons)} persons, {len(pop.households)} households -> {out}")


@main.command()
@click.option("--scenario", "scenario", required=True, help="Scenario directory, scenario.toml, or bundled name.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--days", type=click.IntRange(min=0), default=None, help="Override the number of simulated days.")
@click.option("--out", "out", required=True, type=click.Path(file_okay=False))
@click.option("--freight-only", is_flag=True, help="Skip the social layer; use fixed channel shares.")
@click.option("--export-network", is_flag=True, help="Write network.csv.")
@click.option("--population", "population", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Use a pre-built persons.csv instead of synthesizing.")
def run(scenario, seed, days, out, freight_only, export_network, population) -> None:
    """Run setup and the daily simulation loop, writing all outputs to OUT."""
    cfg = _guard(load_scenario, scenario)
    manifest = _guard(
        run_simulation, cfg, out, seed=seed, days=days, freight_only=freight_only,
        export_network=export_network, population_csv=population,
    )
    click.echo(f"{manifest['scenario']} seed={manifest['seed']} days={manifest['days']} -> {out}")


@main.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
def report(run_dir: str) -> None:
    """Consolidate a run directory's KPI tables into summary.json."""
    summary = _guard(build_report, run_dir)
    click.echo(json.dumps(summary["totals"], indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
