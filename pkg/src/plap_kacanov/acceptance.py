"""
Acceptance checks run by ``plap verify`` on a finished experiment.

Every check inspects the history (and, where needed, the final state) of an
:class:`~plap_kacanov.experiments.ExperimentResult` and reports a
:class:`CheckResult`; nothing here raises on a failed property.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from .adaptive import ACTIONS, choose_action
from .experiments import ExperimentResult
from .fem import assemble_load, divergence_residual
from .indicators import IndicatorReport
from .kacanov import schedule_interval
from .records import ACTION_INIT, ConvergenceRecord

logger = logging.getLogger(__name__)

# Tolerances of the history checks
GAP_SLACK = 1e-10
DUAL_SLACK_FACTOR = 10.0
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _scale(values: Sequence[float]) -> float:
    finite = [abs(v) for v in values if math.isfinite(v)]
    return max(finite + [1.0])


def check_iterations(history: List[ConvergenceRecord]) -> CheckResult:
    """Iteration numbers increase and ndof_accumulated sums the solved rows."""
    total = 0
    previous = None
    for record in history:
        if previous is not None and record.iteration <= previous:
            return CheckResult(
                "iterations", False, f"row {record.iteration} out of order"
            )
        previous = record.iteration
        if record.action != ACTION_INIT:
            total += record.ndof
        if record.ndof_accumulated != total:
            return CheckResult(
                "iterations",
                False,
                f"ndof_accumulated {record.ndof_accumulated} != {total} "
                f"at row {record.iteration}",
            )
    return CheckResult("iterations", True, f"{len(history)} rows")


def check_weak_duality(history: List[ConvergenceRecord]) -> CheckResult:
    """The relaxed gap never drops below -GAP_SLACK times the energy scale."""
    scale = _scale([r.dual_energy_relaxed for r in history])
    worst = min((r.gap for r in history if math.isfinite(r.gap)), default=0.0)
    passed = worst >= -GAP_SLACK * scale
    return CheckResult("weak_duality", passed, f"min gap {worst:.3e}")


def check_monotone_dual(history: List[ConvergenceRecord], rtol: float) -> CheckResult:
    """The relaxed dual energy does not rise between steps on one interval and mesh."""
    for prev, cur in zip(history[1:], history[2:]):
        same = (
            prev.eps_minus == cur.eps_minus
            and prev.eps_plus == cur.eps_plus
            and prev.ndof == cur.ndof
            and prev.action not in ("refine",)
        )
        if not same:
            continue
        slack = DUAL_SLACK_FACTOR * rtol * abs(prev.dual_energy_relaxed) + 1e-14
        if cur.dual_energy_relaxed > prev.dual_energy_relaxed + slack:
            return CheckResult(
                "monotone_dual",
                False,
                f"dual energy rose from {prev.dual_energy_relaxed!r} to "
                f"{cur.dual_energy_relaxed!r} at row {cur.iteration}",
            )
    return CheckResult("monotone_dual", True)


def check_indicators_nonnegative(history: List[ConvergenceRecord]) -> CheckResult:
    for record in history:
        scale = _scale([record.dual_energy_relaxed])
        for name in ("eta_eps_plus_sq", "eta_eps_minus_sq", "eta_h_sq"):
            value = getattr(record, name)
            if math.isfinite(value) and value < -1e-12 * scale:
                return CheckResult(
                    "indicators_nonnegative",
                    False,
                    f"{name} = {value!r} at row {record.iteration}",
                )
    return CheckResult("indicators_nonnegative", True)


def check_feasibility(result: ExperimentResult) -> CheckResult:
    """The final flux satisfies the discrete divergence constraint."""
    if result.sigma is None:
        return CheckResult("feasibility", True, "no flux")
    if len(result.history) < 2:
        return CheckResult("feasibility", True, "no step taken")
    residual = divergence_residual(result.mesh, result.sigma, result.f)
    load = float(np.abs(assemble_load(result.mesh, result.f)).max())
    # A refinement after the last step leaves a transferred, not yet re-solved flux
    if result.history[-1].action == "refine":
        detail = f"transferred flux, residual {residual:.3e}"
        return CheckResult("feasibility", True, detail)
    passed = residual <= FEASIBILITY_TOL * max(load, 1e-300)
    return CheckResult("feasibility", passed, f"residual {residual:.3e}")


def check_schedule_law(result: ExperimentResult) -> CheckResult:
    sched = result.config.schedule_config()
    for record in result.history[1:]:
        eps = schedule_interval(record.iteration - 1, sched)
        if record.eps_minus != eps.eps_minus or record.eps_plus != eps.eps_plus:
            return CheckResult(
                "schedule_law", False, f"row {record.iteration} used the wrong interval"
            )
    return CheckResult("schedule_law", True)


def check_decision_replay(result: ExperimentResult) -> CheckResult:
    """Each adaptive action equals the argmax of the recorded indicators."""
    config = result.config
    for record in result.history[1:]:
        if record.action not in ACTIONS:
            continue
        report = IndicatorReport(
            eta_eps_plus_sq=record.eta_eps_plus_sq,
            eta_eps_minus_sq=record.eta_eps_minus_sq,
            eta_kacanov_sq=record.gap,
            eta_h_sq=record.eta_h_sq,
            per_element=np.empty(0),
            rho=config.rho,
        )
        expected = choose_action(report, config.refine_mesh)
        if expected != record.action:
            return CheckResult(
                "decision_replay",
                False,
                f"row {record.iteration}: took {record.action}, argmax is {expected}",
            )
    return CheckResult("decision_replay", True)


def check_interval_evolution(result: ExperimentResult) -> CheckResult:
    rows = result.history[1:]
    for prev, cur in zip(rows, rows[1:]):
        if cur.eps_minus > prev.eps_minus or cur.eps_plus < prev.eps_plus:
            return CheckResult(
                "interval_evolution", False, f"interval shrank at row {cur.iteration}"
            )
    return CheckResult("interval_evolution", True)


def check_monotone_energy(history: List[ConvergenceRecord]) -> CheckResult:
    """The baseline energy history is non-increasing."""
    for prev, cur in zip(history, history[1:]):
        if cur.primal_energy_unrelaxed > prev.primal_energy_unrelaxed:
            return CheckResult(
                "monotone_energy", False, f"energy rose at row {cur.iteration}"
            )
    return CheckResult("monotone_energy", True)


def _kacanov_checks(result: ExperimentResult) -> List[CheckResult]:
    rtol = result.config.solver_rtol
    return [
        check_iterations(result.history),
        check_weak_duality(result.history),
        check_monotone_dual(result.history, rtol),
        check_indicators_nonnegative(result.history),
        check_feasibility(result),
    ]


def _schedule(result: ExperimentResult) -> List[CheckResult]:
    return _kacanov_checks(result) + [check_schedule_law(result)]


def _adaptive(result: ExperimentResult) -> List[CheckResult]:
    return _kacanov_checks(result) + [
        check_decision_replay(result),
        check_interval_evolution(result),
    ]


def _compare(result: ExperimentResult) -> List[CheckResult]:
    checks = _kacanov_checks(result)
    if result.steepest_history is not None:
        steepest = check_monotone_energy(result.steepest_history)
        checks.append(
            CheckResult("steepest_" + steepest.name, steepest.passed, steepest.detail)
        )
    return checks


CHECKS: Dict[str, Callable[[ExperimentResult], List[CheckResult]]] = {
    "schedule": _schedule,
    "fixed_interval": _kacanov_checks,
    "adaptive": _adaptive,
    "steepest_compare": _compare,
}


def verify_run(result: ExperimentResult) -> List[CheckResult]:
    """Run every check relevant to the experiment's mode."""
    results = CHECKS[result.config.mode](result)
    for check in results:
        logger.debug("check %s: %s %s", check.name, check.passed, check.detail)
    return results
