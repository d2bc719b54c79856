"""
Lowest-order finite elements: P1 functions, P0 vector fields, assembly and
the symmetric positive definite solve used by every nonlinear iteration.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .errors import AssemblyError, DomainError, LinearSolverError, TransferError
from .mesh import Mesh

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

DEFAULT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class P1Function:
    """Continuous piecewise-linear function vanishing on the Dirichlet boundary."""

    mesh: Mesh
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.ascontiguousarray(self.coefficients, dtype=float)
        if coefficients.shape != (self.mesh.n_vertices,):
            raise DomainError(
                f"expected {self.mesh.n_vertices} coefficients, "
                f"got {coefficients.shape}"
            )
        if np.any(coefficients[self.mesh.dirichlet_vertices] != 0.0):
            raise DomainError("P1 coefficients must vanish on Dirichlet vertices")
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "P1Function":
        return cls(mesh, np.zeros(mesh.n_vertices))

    def axpy(self, alpha: float, other: "P1Function") -> "P1Function":
        """Return ``self + alpha * other``."""
        if other.mesh is not self.mesh:
            raise DomainError("P1 functions live on different meshes")
        return P1Function(self.mesh, self.coefficients + alpha * other.coefficients)

    def element_means(self) -> np.ndarray:
        return self.coefficients[self.mesh.cells].mean(axis=1)


@dataclass(frozen=True, eq=False)
class P0VectorField:
    """Piecewise-constant 2-vector field (one vector per triangle)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_triangles, 2):
            raise DomainError(
                f"expected shape ({self.mesh.n_triangles}, 2), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("P0 vector field has non-finite entries")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "P0VectorField":
        return cls(mesh, np.zeros((mesh.n_triangles, 2)))

    @property
    def norms(self) -> np.ndarray:
        return np.hypot(self.values[:, 0], self.values[:, 1])


@dataclass(frozen=True, eq=False)
class SourceTerm:
    """Right-hand side f, constant on every triangle."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_triangles,):
            raise DomainError("source term needs one value per triangle")
        if not np.all(np.isfinite(values)):
            raise DomainError("source term has non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "SourceTerm":
        return cls(mesh, np.full(mesh.n_triangles, float(value)))

    def on(self, mesh: Mesh) -> "SourceTerm":
        """The same source on a mesh refined from ``self.mesh``."""
        if mesh is self.mesh:
            return self
        if mesh.parent is None or mesh.source_fingerprint != self.mesh.fingerprint:
            raise TransferError("target mesh was not refined from the source mesh")
        return SourceTerm(mesh, self.values[mesh.parent])


@dataclass(frozen=True, eq=False)
class SpdSystem:
    """Linear system restricted to the free vertices."""

    mesh: Mesh
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SolverSettings:
    """
    Linear solver choice.

    ``direct`` factorizes with SuperLU in symmetric mode, applies a few steps
    of iterative refinement and falls back to Jacobi-preconditioned CG when
    the residual is still above ``rtol``; ``cg`` goes to CG directly.
    """

    method: str = "direct"
    rtol: float = DEFAULT_RTOL
    refinement_steps: int = 3
    cg_maxiter: Optional[int] = None

    def __post_init__(self):
        if self.method not in ("direct", "cg"):
            raise DomainError(f"unknown solver method '{self.method}'")
        if not self.rtol > 0:
            raise DomainError("solver rtol must be positive")


def gradient(u: P1Function) -> P0VectorField:
    """Exact elementwise gradient of a P1 function."""
    mesh = u.mesh
    local = u.coefficients[mesh.cells]
    return P0VectorField(mesh, np.einsum("tkd,tk->td", mesh.hat_gradients, local))


def _element_weights(mesh: Mesh, w: ArrayLike) -> np.ndarray:
    weights = np.broadcast_to(np.asarray(w, dtype=float), (mesh.n_triangles,))
    if not np.all(np.isfinite(weights)):
        raise AssemblyError("stiffness weights must be finite")
    if np.any(weights <= 0.0):
        raise AssemblyError(
            f"stiffness weights must be positive (min {weights.min():.3e})"
        )
    return weights


def local_stiffness(mesh: Mesh, w: ArrayLike = 1.0) -> np.ndarray:
    """(n_triangles, 3, 3) element matrices w_T |T| grad(phi_i) . grad(phi_j)."""
    weights = _element_weights(mesh, w)
    grads = mesh.hat_gradients
    scale = weights * mesh.areas
    return scale[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)


def assemble_weighted_stiffness(mesh: Mesh, w: ArrayLike) -> sp.csr_matrix:
    """
    Weighted stiffness matrix over all vertices (no boundary elimination).

    Args:
        mesh: the triangulation.
        w: positive per-triangle weights (or one scalar for all triangles).

    Raises:
        AssemblyError: if a weight is nonpositive or not finite.
    """
    local = local_stiffness(mesh, w)
    rows = np.repeat(mesh.cells, 3, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_load(mesh: Mesh, f: SourceTerm) -> np.ndarray:
    """Load vector with entries sum_T f_T |T| / 3 (exact for P0 data)."""
    share = np.repeat(f.values * mesh.areas / 3.0, 3)
    return np.bincount(mesh.cells.ravel(), weights=share, minlength=mesh.n_vertices)


def build_system(mesh: Mesh, matrix: sp.spmatrix, rhs: np.ndarray) -> SpdSystem:
    """Eliminate the (homogeneous) Dirichlet rows and columns."""
    free = mesh.free_vertices
    reduced = sp.csr_matrix(matrix)[free][:, free]
    return SpdSystem(mesh, reduced.tocsr(), np.asarray(rhs, dtype=float)[free], free)


def _jacobi(matrix: sp.csr_matrix) -> LinearOperator:
    inv_diag = 1.0 / matrix.diagonal()
    n = matrix.shape[0]
    return LinearOperator((n, n), matvec=lambda x: inv_diag * x, dtype=float)


def _solve_direct(matrix: sp.csr_matrix, rhs: np.ndarray, steps: int) -> np.ndarray:
    lu = splu(
        matrix.tocsc(),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    x = lu.solve(rhs)
    for _ in range(steps):
        residual = rhs - matrix @ x
        x = x + lu.solve(residual)
    return x


def _solve_cg(
    matrix: sp.csr_matrix,
    rhs: np.ndarray,
    x0: Optional[np.ndarray],
    rtol: float,
    maxiter: Optional[int],
) -> np.ndarray:
    x, info = cg(
        matrix,
        rhs,
        x0=x0,
        rtol=rtol,
        atol=0.0,
        maxiter=maxiter or 10 * matrix.shape[0],
        M=_jacobi(matrix),
    )
    if info < 0:
        raise LinearSolverError(
            "conjugate gradients broke down",
            float(np.linalg.norm(rhs - matrix @ x)),
            float(np.linalg.norm(rhs)),
        )
    return x


def solve_spd(
    system: SpdSystem, settings: Optional[SolverSettings] = None
) -> P1Function:
    """
    Solve the reduced system and extend by zero to the Dirichlet vertices.

    The result satisfies ``|Ax - b| <= rtol |b|``. When that cannot be met
    but the normwise backward error is at round-off level the solution is
    accepted with a warning; otherwise :class:`LinearSolverError` is raised.
    """
    settings = settings or SolverSettings()
    mesh = system.mesh
    full = np.zeros(mesh.n_vertices)
    b = system.rhs
    b_norm = float(np.linalg.norm(b))
    if b.size == 0 or b_norm == 0.0:
        return P1Function(mesh, full)

    A = system.matrix
    if A.shape[0] == 1:
        x = b / A[0, 0]
    elif settings.method == "direct":
        x = _solve_direct(A, b, settings.refinement_steps)
        if np.linalg.norm(b - A @ x) > settings.rtol * b_norm:
            logger.warning("direct solve missed rtol, continuing with CG")
            x = _solve_cg(A, b, x, settings.rtol, settings.cg_maxiter)
    else:
        x = _solve_cg(A, b, None, settings.rtol, settings.cg_maxiter)

    residual = float(np.linalg.norm(b - A @ x))
    if not np.isfinite(residual):
        raise LinearSolverError(
            "linear solve produced non-finite values", residual, b_norm
        )
    if residual > settings.rtol * b_norm:
        a_norm = float(abs(A).sum(axis=0).max())
        backward = residual / (a_norm * float(np.linalg.norm(x)) + b_norm)
        if backward > 1e3 * np.finfo(float).eps:
            raise LinearSolverError("linear solve did not converge", residual, b_norm)
        logger.warning(
            "linear residual %.3e above rtol, backward error %.3e accepted",
            residual / b_norm,
            backward,
        )
    full[system.free] = x
    return P1Function(mesh, full)


def divergence_residual(mesh: Mesh, tau: P0VectorField, f: SourceTerm) -> float:
    """
    Max-norm over free vertices of int tau . grad(phi_i) - int f phi_i.

    Zero exactly when tau satisfies the discrete divergence constraint
    div_h tau = -f.
    """
    flux = mesh.areas[:, None] * np.einsum("tkd,td->tk", mesh.hat_gradients, tau.values)
    tested = np.bincount(
        mesh.cells.ravel(), weights=flux.ravel(), minlength=mesh.n_vertices
    )
    residual = (tested - assemble_load(mesh, f))[mesh.free_vertices]
    return float(np.abs(residual).max()) if residual.size else 0.0


def prolongate(u: P1Function, mesh: Mesh) -> P1Function:
    """Interpolate ``u`` onto a mesh obtained from ``u.mesh`` by one bisection call."""
    if mesh is u.mesh:
        return u
    if mesh.midpoint_parents is None or mesh.source_fingerprint != u.mesh.fingerprint:
        raise TransferError("target mesh was not refined from the function's mesh")
    c = u.coefficients
    ends = mesh.midpoint_parents
    coefficients = np.concatenate([c, 0.5 * (c[ends[:, 0]] + c[ends[:, 1]])])
    coefficients[mesh.dirichlet_vertices] = 0.0
    return P1Function(mesh, coefficients)


def poisson_solution(
    mesh: Mesh, f: SourceTerm, settings: Optional[SolverSettings] = None
) -> P1Function:
    """Galerkin solution of -Laplace(u) = f with homogeneous Dirichlet data."""
    matrix = assemble_weighted_stiffness(mesh, 1.0)
    return solve_spd(build_system(mesh, matrix, assemble_load(mesh, f)), settings)
