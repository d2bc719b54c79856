import logging
import sys
from pathlib import Path
from typing import Optional

import click

from .acceptance import verify_run
from .config import parse_config
from .errors import ConfigError, PlapError
from .experiments import ExperimentResult, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_MISMATCH = 4

config_argument = click.argument(
    "config_path",
    type=click.Path(exists=True, dir_okay=False, readable=True, path_type=Path),
)
out_option = click.option(
    "--out",
    "-o",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Output directory (overrides output_dir from the config).",
)
threads_option = click.option(
    "--threads",
    "-t",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Worker threads for independent runs of one experiment.",
)
verbose_option = click.option(
    "--verbose",
    "-v",
    is_flag=True,
    default=False,
    help="Log solver progress to stderr.",
)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _run(config_path: Path, out_dir: Optional[Path], threads: int) -> ExperimentResult:
    """Parse and run, mapping library errors to exit codes."""
    try:
        config = parse_config(config_path)
    except ConfigError as e:
        click.secho("CONFIG ERROR", fg="red", err=True)
        click.echo(str(e), err=True)
        sys.exit(EXIT_CONFIG)

    click.echo(
        f"Running {config.mode} on {config.domain} (p={config.p:g}) ... ", nl=False
    )
    try:
        result = run_experiment(config, out_dir=out_dir, threads=threads)
    except PlapError as e:
        click.secho("SOLVER FAILURE", fg="red")
        click.echo(f"  - {type(e).__name__}: {e}", err=True)
        if e.history:
            rows = len(e.history)
            click.echo(f"  - partial history with {rows} rows written", err=True)
        sys.exit(EXIT_SOLVER)

    status = "CONVERGED" if result.converged else "STOPPED"
    click.secho(status, fg="green" if result.converged else "yellow")
    last = result.history[-1]
    iterations = len(result.history) - 1
    click.echo(f"  - {iterations} iterations, {last.ndof_accumulated} accumulated dofs")
    if result.reference_energy is not None:
        click.echo(f"  - reference energy {result.reference_energy!r}")
    for name, path in result.outputs.items():
        click.echo(f"  - {name}: {path}")
    return result


@click.group(context_settings=dict(help_option_names=["-h", "--help"]))
@click.version_option(package_name="plap-kacanov", prog_name="plap")
def cli():
    """
    p-Laplace solver CLI.

    Runs relaxed Kacanov experiments (fixed schedule, fixed interval,
    adaptive, or a comparison with steepest descent) described by a
    key = value config file, and checks their results.
    """
    pass


@cli.command()
@config_argument
@out_option
@threads_option
@verbose_option
def run(config_path: Path, out_dir: Optional[Path], threads: int, verbose: bool):
    """
    Run the experiment described by CONFIG_PATH.

    Writes history.csv, solution.vtk and manifest.txt (plus
    history_steepest.csv for mode = steepest_compare).

    Exit codes: 0 ok, 2 config error, 3 solver failure.

    Example:

        plap run experiments/lshape_adaptive.conf --out results/
    """
    _setup_logging(verbose)
    _run(config_path, out_dir, threads)
    sys.exit(EXIT_OK)


@cli.command()
@config_argument
@out_option
@threads_option
@verbose_option
def verify(config_path: Path, out_dir: Optional[Path], threads: int, verbose: bool):
    """
    Run CONFIG_PATH and check the invariants relevant to its mode.

    Exit codes: 0 all checks passed, 2 config error, 3 solver failure,
    4 a check failed.
    """
    _setup_logging(verbose)
    result = _run(config_path, out_dir, threads)
    passed = True
    for check in verify_run(result):
        click.echo(f"Checking {check.name} ... ", nl=False)
        if check.passed:
            click.secho("PASSED", fg="green")
        else:
            passed = False
            click.secho("FAILED", fg="red")
        if check.detail and (verbose or not check.passed):
            click.echo(f"  - {check.detail}")
    sys.exit(EXIT_OK if passed else EXIT_MISMATCH)


if __name__ == "__main__":
    cli()
