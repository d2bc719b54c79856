"""
Adaptive relaxed Kacanov loop.

Every round performs one Kacanov step, evaluates the four indicators and
spends the next effort where the largest one points: enlarge eps_plus,
shrink eps_minus, refine the mesh, or simply iterate again.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .errors import DomainError, PlapError, TransferError
from .fem import P0VectorField, SolverSettings, SourceTerm, prolongate
from .indicators import IndicatorReport, compute_indicators, doerfler_mark
from .kacanov import KacanovState, initial_state, kacanov_step, make_state, record_state
from .mesh import Mesh, bisect
from .records import (
    ACTION_EPS_MINUS,
    ACTION_EPS_PLUS,
    ACTION_INIT,
    ACTION_KACANOV,
    ACTION_REFINE,
    ACTION_STOP,
    ConvergenceRecord,
    HistoryBuilder,
)
from .relaxation import Exponents, RelaxInterval

logger = logging.getLogger(__name__)

# Tie-breaking order of the four branches
ACTIONS: Tuple[str, ...] = (
    ACTION_EPS_PLUS,
    ACTION_EPS_MINUS,
    ACTION_REFINE,
    ACTION_KACANOV,
)

STOP_CRITERIA = ("total", "discretization")


@dataclass(frozen=True)
class AdaptiveConfig:
    rho: float = 1e-3
    doerfler_theta: float = 0.3
    eps_plus_factor: float = 1.25
    eps_minus_factor: float = 0.8
    stop_tolerance: float = 1e-8
    max_rounds: int = 200
    refine_mesh: bool = True
    stop_criterion: str = "total"
    max_accumulated_ndof: int = 0
    initial_interval: Tuple[float, float] = (1.0, 1.0)

    def validate(self) -> None:
        if not self.rho > 0:
            raise DomainError("rho must be positive")
        if not 0.0 < self.doerfler_theta < 1.0:
            raise DomainError("doerfler_theta must lie in (0, 1)")
        if not self.eps_plus_factor > 1.0:
            raise DomainError("eps_plus_factor must exceed 1")
        if not 0.0 < self.eps_minus_factor < 1.0:
            raise DomainError("eps_minus_factor must lie in (0, 1)")
        if not self.stop_tolerance > 0:
            raise DomainError("stop_tolerance must be positive")
        if self.max_rounds < 0 or self.max_accumulated_ndof < 0:
            raise DomainError("round and ndof budgets must be nonnegative")
        if self.stop_criterion not in STOP_CRITERIA:
            raise DomainError(f"stop_criterion must be one of {STOP_CRITERIA}")
        RelaxInterval(*self.initial_interval)


@dataclass(frozen=True)
class AdaptiveRun:
    history: List[ConvergenceRecord]
    state: KacanovState
    f: SourceTerm
    converged: bool
    report: Optional[IndicatorReport]

    @property
    def mesh(self) -> Mesh:
        return self.state.mesh


def choose_action(report: IndicatorReport, refine_mesh: bool = True) -> str:
    """Label of the largest squared indicator; ties resolve in ``ACTIONS`` order."""
    values = report.as_dict()
    best = None
    for action in ACTIONS:
        if action == ACTION_REFINE and not refine_mesh:
            continue
        if best is None or values[action] > values[best]:
            best = action
    return best  # type: ignore[return-value]


def stop_surrogate(report: IndicatorReport, criterion: str = "total") -> float:
    if criterion == "discretization":
        return report.eta_h_sq
    return report.total


def transfer_sigma(
    old_mesh: Mesh, new_mesh: Mesh, sigma: P0VectorField
) -> P0VectorField:
    """Each child triangle inherits the constant flux of its parent."""
    if sigma.mesh is not old_mesh:
        raise TransferError("sigma does not live on the old mesh")
    if new_mesh is old_mesh:
        return sigma
    if new_mesh.parent is None or new_mesh.source_fingerprint != old_mesh.fingerprint:
        raise TransferError("new mesh was not refined from the old mesh")
    return P0VectorField(new_mesh, sigma.values[new_mesh.parent])


def refine_state(
    state: KacanovState,
    f: SourceTerm,
    exps: Exponents,
    marked,
) -> Tuple[KacanovState, SourceTerm]:
    """Bisect the marked triangles and move u, sigma and f to the new mesh."""
    old_mesh = state.mesh
    new_mesh = bisect(old_mesh, marked)
    sigma = transfer_sigma(old_mesh, new_mesh, state.sigma)
    u = prolongate(state.u, new_mesh)
    f_new = f.on(new_mesh)
    return make_state(u, sigma, f_new, state.eps, exps, state.iteration), f_new


def adaptive_loop(
    mesh: Mesh,
    f: SourceTerm,
    exps: Exponents,
    cfg: AdaptiveConfig,
    *,
    settings: Optional[SolverSettings] = None,
    record_wall_time: bool = False,
) -> AdaptiveRun:
    """
    Run the adaptive loop from u = 0, sigma = 0 and the initial interval.

    Row n >= 1 records the state after the n-th Kacanov step, its indicators
    and the action chosen from them. The last row is labelled ``stop`` when
    the surrogate dropped below ``stop_tolerance`` or the ndof budget is
    exhausted; reaching ``max_rounds`` leaves ``converged`` false.
    """
    cfg.validate()
    eps = RelaxInterval(*cfg.initial_interval)
    state = initial_state(mesh, f, exps, eps)
    builder = HistoryBuilder(record_wall_time)
    record_state(builder, state, f, exps, ACTION_INIT, count_ndof=False)
    converged = False
    report: Optional[IndicatorReport] = None
    try:
        for _ in range(cfg.max_rounds):
            state = kacanov_step(state, f, exps, settings, eps)
            report = compute_indicators(state.u, state.sigma, f, eps, exps, cfg.rho)
            action = choose_action(report, cfg.refine_mesh)
            if stop_surrogate(report, cfg.stop_criterion) <= cfg.stop_tolerance:
                converged = True
                action = ACTION_STOP
            elif (
                action == ACTION_REFINE
                and cfg.max_accumulated_ndof
                and builder.ndof_accumulated + state.mesh.ndof
                >= cfg.max_accumulated_ndof
            ):
                action = ACTION_STOP
            record_state(builder, state, f, exps, action, eta_h_sq=report.eta_h_sq)
            if action == ACTION_STOP:
                break

            if action == ACTION_EPS_PLUS:
                eps = eps.enlarged(plus_factor=cfg.eps_plus_factor)
            elif action == ACTION_EPS_MINUS:
                eps = eps.enlarged(minus_factor=cfg.eps_minus_factor)
            elif action == ACTION_REFINE:
                marked = doerfler_mark(report.per_element, cfg.doerfler_theta)
                state, f = refine_state(state, f, exps, marked)
                report = None
            logger.debug("round %d: %s", state.iteration, action)
    except PlapError as err:
        err.history = list(builder.records)
        raise
    logger.info(
        "adaptive loop: %d rounds, %d triangles, eps=[%.3e, %.3e], converged=%s",
        state.iteration,
        state.mesh.n_triangles,
        eps.eps_minus,
        eps.eps_plus,
        converged,
    )
    return AdaptiveRun(builder.records, state, f, converged, report)
