"""
The relaxed dual Kacanov iteration.

Each step freezes the weight clamp(|sigma|)^(2-q) of the current flux, solves
one weighted Poisson problem for u and sets the new flux to the weighted
gradient. The flux satisfies the discrete divergence constraint exactly (up
to the linear solver tolerance), so its dual energy is an upper bound on
minus the primal minimum.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DomainError, PlapError
from .fem import (
    P0VectorField,
    P1Function,
    SolverSettings,
    SourceTerm,
    assemble_load,
    assemble_weighted_stiffness,
    build_system,
    gradient,
    poisson_solution,
    solve_spd,
)
from .indicators import indicator_eps_minus, indicator_eps_plus
from .mesh import Mesh
from .records import (
    ACTION_INIT,
    ACTION_KACANOV,
    ConvergenceRecord,
    HistoryBuilder,
)
from .relaxation import Exponents, RelaxInterval, energy_dual, energy_primal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KacanovState:
    u: P1Function
    sigma: P0VectorField
    eps: RelaxInterval
    iteration: int
    primal_energy: float
    dual_energy: float

    @property
    def mesh(self) -> Mesh:
        return self.u.mesh

    @property
    def gap(self) -> float:
        """J_eps(u) + J*_eps(sigma); nonnegative for every admissible pair."""
        return self.primal_energy + self.dual_energy


@dataclass(frozen=True)
class ScheduleConfig:
    """Fixed schedule eps_n = ((n + 1)^-alpha, (n + 1)^beta)."""

    alpha: float
    beta: float
    max_iterations: int
    gap_tol: float = 1e-10

    @classmethod
    def default_for(cls, exps: Exponents, max_iterations: int, gap_tol: float = 1e-10):
        """alpha = beta = 1 / (2 (2 - q)), the largest symmetric admissible choice."""
        if exps.q >= 2.0:
            rate = 0.5
        else:
            rate = 0.5 / (2.0 - exps.q)
        return cls(rate, rate, max_iterations, gap_tol)

    def validate(self, exps: Exponents) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("schedule rates alpha and beta must be positive")
        if exps.q < 2.0:
            bound = 1.0 / (2.0 - exps.q)
            if self.alpha + self.beta > bound * (1.0 + 1e-12):
                raise DomainError(
                    f"alpha + beta = {self.alpha + self.beta} exceeds 1/(2-q) = {bound}"
                )
        if self.max_iterations < 0:
            raise DomainError("max_iterations must be nonnegative")
        if not self.gap_tol > 0:
            raise DomainError("gap_tol must be positive")


@dataclass(frozen=True)
class KacanovRun:
    history: List[ConvergenceRecord]
    state: KacanovState
    converged: bool


def schedule_interval(n: int, sched: ScheduleConfig) -> RelaxInterval:
    """Interval used to produce history row n + 1."""
    if n < 0:
        raise DomainError("schedule index must be nonnegative")
    return RelaxInterval((n + 1.0) ** (-sched.alpha), (n + 1.0) ** sched.beta)


def make_state(
    u: P1Function,
    sigma: P0VectorField,
    f: SourceTerm,
    eps: RelaxInterval,
    exps: Exponents,
    iteration: int = 0,
) -> KacanovState:
    """Wrap an admissible pair, evaluating both relaxed energies at ``eps``."""
    if sigma.mesh is not u.mesh:
        raise DomainError("u and sigma live on different meshes")
    return KacanovState(
        u=u,
        sigma=sigma,
        eps=eps,
        iteration=iteration,
        primal_energy=energy_primal(u, f, eps, exps),
        dual_energy=energy_dual(sigma, eps, exps),
    )


def initial_state(
    mesh: Mesh, f: SourceTerm, exps: Exponents, eps: RelaxInterval
) -> KacanovState:
    """u = 0 and sigma = 0; the first step then solves a scaled Poisson problem."""
    return make_state(P1Function.zeros(mesh), P0VectorField.zeros(mesh), f, eps, exps)


def poisson_initial_state(
    mesh: Mesh,
    f: SourceTerm,
    exps: Exponents,
    eps: RelaxInterval,
    settings: Optional[SolverSettings] = None,
) -> KacanovState:
    """u is the Poisson solution and sigma its gradient, an admissible flux."""
    u = poisson_solution(mesh, f, settings)
    return make_state(u, gradient(u), f, eps, exps)


def kacanov_weights(
    sigma: P0VectorField, eps: RelaxInterval, exps: Exponents
) -> np.ndarray:
    """Per-triangle weight clamp(|sigma|)^(2-q), always within the clamp range."""
    return eps.clamp(sigma.norms) ** (2.0 - exps.q)


def kacanov_step(
    state: KacanovState,
    f: SourceTerm,
    exps: Exponents,
    settings: Optional[SolverSettings] = None,
    eps: Optional[RelaxInterval] = None,
) -> KacanovState:
    """
    One Kacanov step.

    Args:
        state: current pair; only its flux enters the new weights.
        f: source term on ``state.mesh``.
        exps: exponents.
        settings: linear solver settings.
        eps: interval for this step, defaults to ``state.eps``.

    Returns:
        The new state with energies evaluated at the interval used.
    """
    eps = eps or state.eps
    mesh = state.mesh
    if f.mesh is not mesh:
        raise DomainError("source term lives on a different mesh")
    weights = kacanov_weights(state.sigma, eps, exps)
    matrix = assemble_weighted_stiffness(mesh, weights)
    u = solve_spd(build_system(mesh, matrix, assemble_load(mesh, f)), settings)
    sigma = P0VectorField(mesh, weights[:, None] * gradient(u).values)
    new_state = make_state(u, sigma, f, eps, exps, state.iteration + 1)
    logger.debug(
        "kacanov step %d: ndof=%d eps=[%.3e, %.3e] gap=%.3e",
        new_state.iteration,
        mesh.ndof,
        eps.eps_minus,
        eps.eps_plus,
        new_state.gap,
    )
    return new_state


def record_state(
    builder: HistoryBuilder,
    state: KacanovState,
    f: SourceTerm,
    exps: Exponents,
    action: str,
    iteration: Optional[int] = None,
    eta_h_sq: float = float("nan"),
    count_ndof: bool = True,
) -> ConvergenceRecord:
    """Append a history row describing ``state``."""
    eps = state.eps
    return builder.append(
        iteration=state.iteration if iteration is None else iteration,
        ndof=state.mesh.ndof,
        action=action,
        eps=eps,
        primal_energy_relaxed=state.primal_energy,
        dual_energy_relaxed=state.dual_energy,
        primal_energy_unrelaxed=energy_primal(state.u, f, None, exps),
        dual_energy_unrelaxed=energy_dual(state.sigma, None, exps),
        gap=state.gap,
        eta_eps_plus_sq=indicator_eps_plus(state.sigma, eps, exps),
        eta_eps_minus_sq=indicator_eps_minus(state.sigma, eps, exps),
        eta_h_sq=eta_h_sq,
        count_ndof=count_ndof,
    )


def run_fixed_interval(
    mesh: Mesh,
    f: SourceTerm,
    exps: Exponents,
    eps: RelaxInterval,
    gap_tol: float,
    max_iter: int,
    *,
    initial: Optional[KacanovState] = None,
    settings: Optional[SolverSettings] = None,
    record_wall_time: bool = False,
) -> KacanovRun:
    """
    Iterate at a fixed interval until the gap drops to ``gap_tol``.

    Row 0 describes the initial state.
    """
    if not gap_tol > 0:
        raise DomainError("gap_tol must be positive")
    if max_iter < 0:
        raise DomainError("max_iter must be nonnegative")
    if initial is None:
        state = initial_state(mesh, f, exps, eps)
    else:
        if initial.mesh is not mesh:
            raise DomainError("initial state lives on a different mesh")
        state = make_state(initial.u, initial.sigma, f, eps, exps, initial.iteration)
    builder = HistoryBuilder(record_wall_time)
    record_state(builder, state, f, exps, ACTION_INIT, count_ndof=False)
    start = state.iteration
    converged = False
    try:
        for _ in range(max_iter):
            state = kacanov_step(state, f, exps, settings, eps)
            record_state(builder, state, f, exps, ACTION_KACANOV)
            if state.gap <= gap_tol:
                converged = True
                break
    except PlapError as err:
        err.history = list(builder.records)
        raise
    logger.info(
        "fixed-interval run: %d steps, gap %.3e, converged=%s",
        state.iteration - start,
        state.gap,
        converged,
    )
    return KacanovRun(builder.records, state, converged)


def run_fixed_schedule(
    mesh: Mesh,
    f: SourceTerm,
    exps: Exponents,
    sched: ScheduleConfig,
    *,
    settings: Optional[SolverSettings] = None,
    record_wall_time: bool = False,
) -> KacanovRun:
    """
    Row n >= 1 is produced with eps_{n-1}.

    The stop test measures the gap of the new iterate at the next interval
    eps_{n+1}. The gap at eps_n alone vanishes whenever eps_n is degenerate,
    e.g. eps_0 = (1, 1) where one step solves the relaxed problem exactly.
    """
    sched.validate(exps)
    state = initial_state(mesh, f, exps, schedule_interval(0, sched))
    builder = HistoryBuilder(record_wall_time)
    record_state(builder, state, f, exps, ACTION_INIT, count_ndof=False)
    converged = False
    try:
        for n in range(sched.max_iterations):
            state = kacanov_step(state, f, exps, settings, schedule_interval(n, sched))
            record_state(builder, state, f, exps, ACTION_KACANOV)
            upcoming = schedule_interval(n + 1, sched)
            stop_gap = make_state(
                state.u, state.sigma, f, upcoming, exps, state.iteration
            ).gap
            logger.debug("step %d: gap at next interval %.3e", n + 1, stop_gap)
            if stop_gap <= sched.gap_tol:
                converged = True
                break
    except PlapError as err:
        err.history = list(builder.records)
        raise
    logger.info(
        "schedule run: %d steps, final eps=[%.3e, %.3e], gap %.3e",
        state.iteration,
        state.eps.eps_minus,
        state.eps.eps_plus,
        state.gap,
    )
    return KacanovRun(builder.records, state, converged)
