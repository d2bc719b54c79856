"""
Regularized steepest descent for the unrelaxed p-Dirichlet energy.

The direction solves a Poisson-type problem weighted by (delta + |grad u|)^(p-2)
with the negative energy derivative on the right; the step length comes from
a bracketing plus golden-section line search. Used as a comparison baseline.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DomainError, PlapError
from .fem import (
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
from .mesh import Mesh
from .records import (
    ACTION_DESCENT,
    ACTION_INIT,
    ACTION_NO_DESCENT,
    ConvergenceRecord,
    HistoryBuilder,
)
from .relaxation import Exponents, energy_primal, unrelaxed_primal_integrand

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
# Energies closer than this (relative) are compared by the directional derivative
TIE_TOL = 64.0 * np.finfo(float).eps
LOG_MAX = math.log(np.finfo(float).max) - 10.0


@dataclass(frozen=True)
class BaselineConfig:
    delta: float = 1e-6
    line_search_tol: float = 1e-10
    max_iterations: int = 500
    initial_step: float = 1.0

    def validate(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise DomainError("delta must lie in (0, 1)")
        if not self.line_search_tol > 0:
            raise DomainError("line_search_tol must be positive")
        if self.max_iterations < 0:
            raise DomainError("max_iterations must be nonnegative")
        if not self.initial_step > 0:
            raise DomainError("initial_step must be positive")


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    energy: float
    initial_energy: float
    descent: bool
    evaluations: int


@dataclass(frozen=True)
class SteepestDescentRun:
    history: List[ConvergenceRecord]
    u: P1Function
    converged: bool
    no_descent: bool


def _log_power(t: np.ndarray, exponent: float) -> np.ndarray:
    """exponent * log(t) with log(0) = -inf, and 0 * log(0) = 0."""
    if exponent == 0.0:
        return np.zeros_like(t)
    with np.errstate(divide="ignore"):
        return exponent * np.log(t)


def descent_direction(
    u: P1Function,
    f: SourceTerm,
    exps: Exponents,
    delta: float,
    settings: Optional[SolverSettings] = None,
) -> P1Function:
    """
    Solve int (delta + |grad u|)^(p-2) grad d . grad v
            = -int |grad u|^(p-2) grad u . grad v + int f v.

    Both sides are scaled by a common power of e so that p = 100 neither
    overflows nor loses the largest weights; weights that underflow are
    raised to the smallest normal float.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    mesh = u.mesh
    grad = gradient(u)
    norms = grad.norms
    log_weight = _log_power(delta + norms, exps.p - 2.0)
    log_flux = _log_power(norms, exps.p - 2.0)
    shift = float(max(log_weight.max(), np.max(log_flux, initial=-np.inf)))
    weights = np.maximum(np.exp(log_weight - shift), np.finfo(float).tiny)
    flux = np.exp(log_flux - shift)[:, None] * grad.values

    tested = np.einsum("tkd,td->tk", mesh.hat_gradients, flux) * mesh.areas[:, None]
    residual = np.bincount(
        mesh.cells.ravel(), weights=tested.ravel(), minlength=mesh.n_vertices
    )
    if -shift > LOG_MAX:
        raise DomainError(
            f"descent direction overflows: weights down to exp({shift:.1f}) "
            f"for p={exps.p}"
        )
    rhs = math.exp(-shift) * assemble_load(mesh, f) - residual
    matrix = assemble_weighted_stiffness(mesh, weights)
    return solve_spd(build_system(mesh, matrix, rhs), settings)


class _LineEnergy:
    """J(u + alpha d) and its alpha-derivative, exact per element."""

    def __init__(self, u: P1Function, d: P1Function, f: SourceTerm, exps: Exponents):
        mesh = u.mesh
        load = assemble_load(mesh, f)
        self.areas = mesh.areas
        self.gu = gradient(u).values
        self.gd = gradient(d).values
        self.lu = float(np.dot(load, u.coefficients))
        self.ld = float(np.dot(load, d.coefficients))
        self.exps = exps
        self.evaluations = 0

    def __call__(self, alpha: float) -> float:
        self.evaluations += 1
        g = self.gu + alpha * self.gd
        norms = np.hypot(g[:, 0], g[:, 1])
        integrand = np.asarray(unrelaxed_primal_integrand(norms, self.exps))
        with np.errstate(over="ignore", invalid="ignore"):
            stored = float(np.dot(self.areas, integrand))
        return stored - (self.lu + alpha * self.ld)

    def slope(self, alpha: float) -> float:
        g = self.gu + alpha * self.gd
        norms = np.hypot(g[:, 0], g[:, 1])
        scale = np.exp(_log_power(norms, self.exps.p - 2.0))
        with np.errstate(over="ignore", invalid="ignore"):
            value = float(np.dot(self.areas * scale, np.sum(g * self.gd, axis=1)))
        return value - self.ld


def line_search(
    u: P1Function,
    d: P1Function,
    f: SourceTerm,
    exps: Exponents,
    tol: float = 1e-10,
    initial_step: float = 1.0,
    max_halvings: int = 60,
    max_doublings: int = 60,
) -> LineSearchResult:
    """
    Approximate argmin over alpha >= 0 of J(u + alpha d).

    A probe step is halved until the energy decreases, then doubled until it
    increases again; golden-section search shrinks the bracket to relative
    width ``tol``. When no probe decreases the energy the result has
    ``alpha = 0`` and ``descent = False``.
    """
    if not np.any(d.coefficients):
        raise DomainError("line search needs a nonzero direction")
    energy = _LineEnergy(u, d, f, exps)
    j0 = energy(0.0)

    b = float(initial_step)
    jb = energy(b)
    halvings = 0
    while not jb < j0:
        halvings += 1
        if halvings > max_halvings:
            logger.warning("line search found no descent (J = %.17g)", j0)
            return LineSearchResult(0.0, j0, j0, False, energy.evaluations)
        b *= 0.5
        jb = energy(b)

    a, c = 0.0, 2.0 * b
    jc = energy(c)
    doublings = 0
    while jc < jb and doublings < max_doublings:
        a, b, jb = b, c, jc
        c = 2.0 * c
        jc = energy(c)
        doublings += 1
    best_alpha, best_j = b, jb

    def left_is_lower(x1: float, f1: float, x2: float, f2: float) -> bool:
        if not (np.isfinite(f1) and np.isfinite(f2)):
            return f1 <= f2
        if abs(f1 - f2) > TIE_TOL * max(abs(f1), abs(f2), 1.0):
            return f1 < f2
        return energy.slope(0.5 * (x1 + x2)) > 0.0

    x1 = c - INV_PHI * (c - a)
    x2 = a + INV_PHI * (c - a)
    f1, f2 = energy(x1), energy(x2)
    for _ in range(200):
        if c - a <= tol * 0.5 * (a + c):
            break
        if left_is_lower(x1, f1, x2, f2):
            c, x2, f2 = x2, x1, f1
            x1 = c - INV_PHI * (c - a)
            f1 = energy(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (c - a)
            f2 = energy(x2)

    alpha = 0.5 * (a + c)
    j_alpha = energy(alpha)
    if j_alpha > best_j:
        alpha, j_alpha = best_alpha, best_j
    return LineSearchResult(alpha, j_alpha, j0, True, energy.evaluations)


def run_steepest_descent(
    mesh: Mesh,
    f: SourceTerm,
    exps: Exponents,
    cfg: BaselineConfig,
    *,
    energy_target: Optional[float] = None,
    initial: Optional[P1Function] = None,
    settings: Optional[SolverSettings] = None,
    record_wall_time: bool = False,
) -> SteepestDescentRun:
    """
    Steepest descent from the Poisson solution.

    Stops when the direction vanishes, when the energy reaches
    ``energy_target``, at the iteration budget, or when the line search
    reports no descent.
    """
    cfg.validate()
    u = initial if initial is not None else poisson_solution(mesh, f, settings)
    energy = energy_primal(u, f, None, exps)
    builder = HistoryBuilder(record_wall_time)
    builder.append(
        iteration=0,
        ndof=mesh.ndof,
        action=ACTION_INIT,
        primal_energy_unrelaxed=energy,
        count_ndof=False,
    )
    converged = False
    no_descent = False
    try:
        for n in range(1, cfg.max_iterations + 1):
            d = descent_direction(u, f, exps, cfg.delta, settings)
            scale = max(float(np.abs(u.coefficients).max()), np.finfo(float).tiny)
            if float(np.abs(d.coefficients).max()) <= 1e-10 * scale:
                builder.append(
                    iteration=n,
                    ndof=mesh.ndof,
                    action=ACTION_DESCENT,
                    primal_energy_unrelaxed=energy,
                )
                converged = True
                break
            result = line_search(
                u, d, f, exps, cfg.line_search_tol, initial_step=cfg.initial_step
            )
            if not result.descent:
                builder.append(
                    iteration=n,
                    ndof=mesh.ndof,
                    action=ACTION_NO_DESCENT,
                    primal_energy_unrelaxed=energy,
                )
                no_descent = True
                break
            u = u.axpy(result.alpha, d)
            energy = result.energy
            builder.append(
                iteration=n,
                ndof=mesh.ndof,
                action=ACTION_DESCENT,
                primal_energy_unrelaxed=energy,
            )
            logger.debug("descent %d: alpha=%.6e J=%.17g", n, result.alpha, energy)
            if energy_target is not None and energy <= energy_target:
                converged = True
                break
    except PlapError as err:
        err.history = list(builder.records)
        raise
    logger.info(
        "steepest descent: %d iterations, J=%.17g, converged=%s, no_descent=%s",
        builder.records[-1].iteration,
        energy,
        converged,
        no_descent,
    )
    return SteepestDescentRun(builder.records, u, converged, no_descent)
