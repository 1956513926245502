"""Console script for piezoplate."""

import functools
import logging
import sys
from pathlib import Path

import click

from . import serialization
from .common import PiezoplateError, PipelineError, setup_logging
from .config import parse_config
from .pipeline import (
    TARGETS,
    convergence_study,
    homogenize,
    run_pipeline,
    solve_plate,
    stage,
    validate_phases,
)
from .verification import results_table, run_verification

logger = logging.getLogger(__name__)


def reports_errors(command):
    """Turns library errors into a stage-tagged message and exit status 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except PiezoplateError as err:
            message = err.cause if isinstance(err, PipelineError) else err
            click.echo(f"error [{err.stage}]: {message}", err=True)
            sys.exit(1)

    return wrapper


def _levels(ctx, param, value):
    try:
        levels = [int(v) for v in value.replace(",", " ").split()]
    except ValueError as err:
        raise click.BadParameter("expected integers such as 16,32,64") from err
    if len(levels) < 3:
        raise click.BadParameter("give at least three levels")
    return levels


def _output(config, output):
    return Path(output) if output else config.output_dir


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log debug messages.")
def main(verbose):
    """Homogenized piezoelectric plates with periodic inclusions and circuits."""
    setup_logging(verbose)


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@reports_errors
def validate(config):
    """Check a configuration file and its material phases."""
    run = parse_config(config)
    with stage("validate"):
        validate_phases(run)
    for phase in (run.matrix, run.inclusion_material):
        report = phase.validate()
        click.echo(
            f"{phase.name}: elastic margin {report.elastic_margin:.6g}, "
            f"electric margin {report.electric_margin:.6g}"
        )
    click.echo(f"{config}: ok ({run.regime} regime, {run.circuit.bc_type} conditions)")


@main.command("homogenize")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option(
    "--output", "-o", type=click.Path(file_okay=False), help="Output directory."
)
@reports_errors
def homogenize_command(config, output):
    """Solve the cell problems and write effective_tensors.json."""
    run = parse_config(config)
    tensors, residuals, _ = homogenize(run)
    path = serialization.write_effective_tensors(
        _output(run, output) / serialization.EFFECTIVE_TENSORS_FILE, tensors
    )
    click.echo(f"wrote {path} (largest residual {max(residuals.values()):.2e})")


@main.command("plate")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option(
    "--tensors",
    "-t",
    "tensors_path",
    required=True,
    type=click.Path(dir_okay=False),
    help="effective_tensors.json from a previous run.",
)
@click.option(
    "--output", "-o", type=click.Path(file_okay=False), help="Output directory."
)
@reports_errors
def plate_command(config, tensors_path, output):
    """Solve the plate problem with previously computed effective tensors."""
    run = parse_config(config)
    with stage("plate"):
        tensors = serialization.read_effective_tensors(tensors_path)
        solution = solve_plate(run, tensors)
    for path in serialization.write_solution(_output(run, output), solution):
        click.echo(f"wrote {path}")
    summary = solution.summary()
    click.echo(f"max deflection {summary['max_deflection']:.10g}")


@main.command("run")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option(
    "--output", "-o", type=click.Path(file_okay=False), help="Output directory."
)
@reports_errors
def run_command(config, output):
    """Run the full pipeline and write every artifact."""
    run = parse_config(config)
    report = run_pipeline(run, _output(run, output))
    for key, value in report.summary.items():
        click.echo(f"{key}: {value}")
    click.echo("passed" if report.passed else "FAILED")
    if not report.passed:
        sys.exit(1)


@main.command()
@click.option(
    "--output", "-o", type=click.Path(dir_okay=False), help="Write results as JSON."
)
def verify(output):
    """Run the property and oracle checks."""
    results = run_verification()
    table = results_table(results)
    click.echo(table[["passed", "value", "tolerance", "detail"]].to_string())
    if output:
        serialization.write_json(output, [r.__dict__ for r in results])
    if not all(r.passed for r in results):
        sys.exit(1)


@main.command("convergence")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option(
    "--levels",
    "-l",
    required=True,
    callback=_levels,
    help="Mesh sizes, e.g. 16,32,64.",
)
@click.option(
    "--target", type=click.Choice(TARGETS), default="cell", show_default=True
)
@click.option(
    "--output", "-o", type=click.Path(dir_okay=False), help="Write the table as CSV."
)
@reports_errors
def convergence_command(config, levels, target, output):
    """Tabulate quantities over mesh refinements with observed rates."""
    run = parse_config(config)
    table = convergence_study(run, levels, target)
    click.echo(table.to_string())
    if output:
        table.to_csv(output, float_format="%.17g")


if __name__ == "__main__":
    sys.exit(main())  # pragma: no cover
