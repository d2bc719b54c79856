"""
A posteriori error indicators and Doerfler marking.

The total error of a Kacanov state splits into four computable pieces: the
cost of the upper relaxation bound, the cost of the lower one, the primal
dual gap of the Kacanov iterate and the discretization error.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DomainError
from .fem import P0VectorField, P1Function, SourceTerm, gradient
from .mesh import Mesh
from .relaxation import (
    Exponents,
    RelaxInterval,
    energy_dual,
    energy_primal,
    released_gaps,
    shifted_conjugate,
    v_primal,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndicatorReport:
    """The four squared indicators of one state plus the per-triangle mesh indicator."""

    eta_eps_plus_sq: float
    eta_eps_minus_sq: float
    eta_kacanov_sq: float
    eta_h_sq: float
    per_element: np.ndarray
    rho: float

    @property
    def total(self) -> float:
        return (
            self.eta_eps_plus_sq
            + self.eta_eps_minus_sq
            + self.eta_kacanov_sq
            + self.eta_h_sq
        )

    def as_dict(self) -> Dict[str, float]:
        return {
            "eps_plus": self.eta_eps_plus_sq,
            "eps_minus": self.eta_eps_minus_sq,
            "kacanov": self.eta_kacanov_sq,
            "refine": self.eta_h_sq,
        }


def indicator_eps_plus(
    sigma: P0VectorField, eps: RelaxInterval, exps: Exponents
) -> float:
    """J*_eps(sigma) minus the same energy with eps_plus released to infinity."""
    return float(released_gaps(sigma, eps, exps, "upper").sum())


def indicator_eps_minus(
    sigma: P0VectorField, eps: RelaxInterval, exps: Exponents
) -> float:
    """J*_eps(sigma) minus the same energy with eps_minus released to zero."""
    return float(released_gaps(sigma, eps, exps, "lower").sum())


def indicator_kacanov(
    u: P1Function,
    sigma: P0VectorField,
    f: SourceTerm,
    eps: RelaxInterval,
    exps: Exponents,
) -> float:
    """Primal dual gap J_eps(u) + J*_eps(sigma)."""
    return energy_primal(u, f, eps, exps) + energy_dual(sigma, eps, exps)


def indicator_discretization(
    u: P1Function,
    f: SourceTerm,
    eps: RelaxInterval,
    exps: Exponents,
    mesh: Optional[Mesh] = None,
    rho: float = 1e-3,
) -> Tuple[float, np.ndarray]:
    """
    Residual-type mesh indicator.

    Per triangle: the shifted conjugate of h_T |f| (shift |grad u|) times the
    area, plus h_gamma^2 |[V_eps(grad u)]|^2 summed over the interior edges
    of the triangle. Boundary edges carry no jump.

    Returns:
        ``(rho * sum, per_triangle)`` where the per-triangle values are not
        yet scaled by ``rho``.
    """
    mesh = mesh or u.mesh
    if u.mesh is not mesh or f.mesh is not mesh:
        raise DomainError("u, f and the mesh do not match")
    if not rho > 0:
        raise DomainError("rho must be positive")
    grad = gradient(u)
    h = mesh.diameters
    volume = mesh.areas * np.asarray(
        shifted_conjugate(grad.norms, h * np.abs(f.values), eps, exps)
    )

    flux = v_primal(grad.values, eps, exps)
    e2c = mesh.edge_to_cells
    interior = e2c[:, 1] >= 0
    left, right = e2c[interior, 0], e2c[interior, 1]
    ends = mesh.edges[interior]
    edge_vectors = mesh.points[ends[:, 0]] - mesh.points[ends[:, 1]]
    h_gamma_sq = np.sum(edge_vectors**2, axis=1)
    jump_sq = np.sum((flux[left] - flux[right]) ** 2, axis=1)
    edge_term = h_gamma_sq * jump_sq

    n = mesh.n_triangles
    per_element = (
        volume
        + np.bincount(left, weights=edge_term, minlength=n)
        + np.bincount(right, weights=edge_term, minlength=n)
    )
    return rho * float(per_element.sum()), per_element


def compute_indicators(
    u: P1Function,
    sigma: P0VectorField,
    f: SourceTerm,
    eps: RelaxInterval,
    exps: Exponents,
    rho: float,
) -> IndicatorReport:
    eta_h, per_element = indicator_discretization(u, f, eps, exps, rho=rho)
    return IndicatorReport(
        eta_eps_plus_sq=indicator_eps_plus(sigma, eps, exps),
        eta_eps_minus_sq=indicator_eps_minus(sigma, eps, exps),
        eta_kacanov_sq=indicator_kacanov(u, sigma, f, eps, exps),
        eta_h_sq=eta_h,
        per_element=per_element,
        rho=rho,
    )


def doerfler_mark(per_element: np.ndarray, theta: float) -> np.ndarray:
    """
    Minimal set of triangles carrying at least ``theta`` of the total.

    Triangles are taken greedily by decreasing indicator; equal values go in
    index order. An all-zero indicator marks nothing.

    Returns:
        Sorted triangle indices.
    """
    if not 0.0 < theta < 1.0:
        raise DomainError(f"Doerfler parameter must lie in (0, 1), got {theta}")
    values = np.asarray(per_element, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DomainError("indicators must be finite and nonnegative")
    total = float(values.sum())
    if total <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-values, kind="stable")
    cumulative = np.cumsum(values[order])
    count = int(np.searchsorted(cumulative, theta * total, side="left")) + 1
    return np.sort(order[: min(count, len(order))])
