"""
Experiment drivers behind ``plap run``.

Each mode builds the mesh and source from a :class:`RunConfig`, runs its
driver and writes ``history.csv``, ``solution.vtk`` and ``manifest.txt``
(plus ``history_steepest.csv`` for comparisons) into the output directory.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, TypeVar, Union

import numpy as np

from . import __version__
from .adaptive import adaptive_loop
from .config import RunConfig
from .errors import PlapError
from .fem import P0VectorField, P1Function, SourceTerm
from .indicators import indicator_discretization
from .io import write_history_csv, write_manifest, write_vtk
from .kacanov import (
    KacanovRun,
    poisson_initial_state,
    run_fixed_interval,
    run_fixed_schedule,
)
from .mesh import Mesh
from .records import ConvergenceRecord
from .relaxation import RelaxInterval
from .steepest_descent import SteepestDescentRun, run_steepest_descent

logger = logging.getLogger(__name__)

T = TypeVar("T")

HISTORY_FILE = "history.csv"
STEEPEST_HISTORY_FILE = "history_steepest.csv"
SOLUTION_FILE = "solution.vtk"
MANIFEST_FILE = "manifest.txt"


@dataclass
class ExperimentResult:
    config: RunConfig
    history: List[ConvergenceRecord]
    converged: bool
    mesh: Mesh
    f: SourceTerm
    u: P1Function
    sigma: Optional[P0VectorField]
    eps: Optional[RelaxInterval]
    steepest_history: Optional[List[ConvergenceRecord]] = None
    no_descent: bool = False
    reference_energy: Optional[float] = None
    outputs: Dict[str, Path] = field(default_factory=dict)


def _map(jobs: List[Callable[[], T]], threads: int) -> List[T]:
    """Run independent jobs, concurrently when more than one thread is allowed."""
    if threads <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [future.result() for future in futures]


def _from_kacanov(
    config: RunConfig, run: KacanovRun, f: SourceTerm
) -> ExperimentResult:
    state = run.state
    return ExperimentResult(
        config=config,
        history=run.history,
        converged=run.converged,
        mesh=state.mesh,
        f=f,
        u=state.u,
        sigma=state.sigma,
        eps=state.eps,
    )


def _run_schedule(config: RunConfig, mesh: Mesh, f: SourceTerm, threads: int):
    run = run_fixed_schedule(
        mesh,
        f,
        config.exponents(),
        config.schedule_config(),
        settings=config.solver_settings(),
        record_wall_time=config.record_wall_time,
    )
    return _from_kacanov(config, run, f)


def _run_fixed_interval(config: RunConfig, mesh: Mesh, f: SourceTerm, threads: int):
    exps, eps = config.exponents(), config.relax_interval()
    settings = config.solver_settings()
    initial = None
    if config.initial_guess == "poisson":
        initial = poisson_initial_state(mesh, f, exps, eps, settings)
    run = run_fixed_interval(
        mesh,
        f,
        exps,
        eps,
        config.gap_tol,
        config.max_iterations,
        initial=initial,
        settings=settings,
        record_wall_time=config.record_wall_time,
    )
    return _from_kacanov(config, run, f)


def _run_adaptive(config: RunConfig, mesh: Mesh, f: SourceTerm, threads: int):
    run = adaptive_loop(
        mesh,
        f,
        config.exponents(),
        config.adaptive_config(),
        settings=config.solver_settings(),
        record_wall_time=config.record_wall_time,
    )
    state = run.state
    return ExperimentResult(
        config=config,
        history=run.history,
        converged=run.converged,
        mesh=state.mesh,
        f=run.f,
        u=state.u,
        sigma=state.sigma,
        eps=state.eps,
    )


def _run_steepest_compare(config: RunConfig, mesh: Mesh, f: SourceTerm, threads: int):
    """
    Kacanov from the Poisson solution until the gap reaches ``compare_gap_tol``,
    then steepest descent with the same iteration budget and a reference run
    continued from the Kacanov state down to ``reference_gap_tol``.
    """
    exps, eps = config.exponents(), config.relax_interval()
    settings = config.solver_settings()
    initial = poisson_initial_state(mesh, f, exps, eps, settings)
    kacanov = run_fixed_interval(
        mesh,
        f,
        exps,
        eps,
        config.compare_gap_tol,
        config.max_iterations,
        initial=initial,
        settings=settings,
        record_wall_time=config.record_wall_time,
    )
    budget = kacanov.history[-1].iteration

    def baseline() -> SteepestDescentRun:
        return run_steepest_descent(
            mesh,
            f,
            exps,
            config.baseline_config(budget),
            settings=settings,
            record_wall_time=config.record_wall_time,
        )

    def reference() -> KacanovRun:
        return run_fixed_interval(
            mesh,
            f,
            exps,
            eps,
            config.reference_gap_tol,
            config.max_iterations,
            initial=kacanov.state,
            settings=settings,
        )

    steepest, ref = _map([baseline, reference], threads)  # type: ignore[list-item]
    result = _from_kacanov(config, kacanov, f)
    result.steepest_history = steepest.history
    result.no_descent = steepest.no_descent
    result.reference_energy = -ref.state.dual_energy
    return result


DRIVERS: Dict[str, Callable[[RunConfig, Mesh, SourceTerm, int], ExperimentResult]] = {
    "schedule": _run_schedule,
    "fixed_interval": _run_fixed_interval,
    "adaptive": _run_adaptive,
    "steepest_compare": _run_steepest_compare,
}


def write_outputs(result: ExperimentResult, out_dir: Path) -> Dict[str, Path]:
    config = result.config
    outputs = {"history": write_history_csv(out_dir / HISTORY_FILE, result.history)}
    if result.steepest_history is not None:
        outputs["steepest_history"] = write_history_csv(
            out_dir / STEEPEST_HISTORY_FILE, result.steepest_history
        )

    mesh = result.mesh
    cell_data: Dict[str, np.ndarray] = {}
    if result.sigma is not None:
        cell_data["sigma_abs"] = result.sigma.norms
    if result.eps is not None:
        _, per_element = indicator_discretization(
            result.u, result.f, result.eps, config.exponents(), rho=config.rho
        )
        cell_data["eta_h"] = config.rho * per_element
    cell_data["level"] = mesh.level
    outputs["solution"] = write_vtk(
        out_dir / SOLUTION_FILE, mesh, {"u": result.u.coefficients}, cell_data
    )

    comments = {
        "plap-kacanov": __version__,
        "q": repr(config.exponents().q),
        "initial mesh": str(config.initial_mesh()),
        "final mesh": str(mesh),
        "converged": str(result.converged).lower(),
    }
    if result.reference_energy is not None:
        comments["reference energy"] = repr(result.reference_energy)
    outputs["manifest"] = write_manifest(
        out_dir / MANIFEST_FILE, config.manifest_lines(), comments
    )
    return outputs


def run_experiment(
    config: RunConfig,
    out_dir: Optional[Union[str, Path]] = None,
    threads: int = 1,
    write: bool = True,
) -> ExperimentResult:
    """
    Run the configured experiment and write its output files.

    A :class:`PlapError` raised by a driver is re-raised after the partial
    history it carries has been written to ``history.csv``.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    mesh = config.build_mesh()
    f = config.source(mesh)
    logger.info("mode %s on %s (p=%g)", config.mode, mesh, config.p)
    try:
        result = DRIVERS[config.mode](config, mesh, f, threads)
    except PlapError as err:
        if write and err.history:
            write_history_csv(out / HISTORY_FILE, err.history)
            logger.error(
                "partial history (%d rows) written to %s", len(err.history), out
            )
        raise
    if write:
        result.outputs = write_outputs(result, out)
    return result
