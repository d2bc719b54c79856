"""
Exponents, relaxation intervals and the relaxed integrands.

The dual integrand kappa_star(t) = t^q / q is replaced outside the interval
[eps_minus, eps_plus] by the quadratic that continues it with matching value
and slope; the primal integrand kappa is its convex conjugate. All kernels
accept scalars or numpy arrays and evaluate large powers in the log domain
so that p = 100 does not overflow for moderate arguments.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from .errors import DomainError
from .fem import P0VectorField, P1Function, SourceTerm, assemble_load, gradient

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
ReleasedBound = Literal["upper", "lower"]


@dataclass(frozen=True)
class Exponents:
    """Primal exponent p >= 2 and its dual q = p / (p - 1)."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not np.isfinite(p) or p < 2.0:
            raise DomainError(f"p must be a finite number >= 2, got {self.p}")
        object.__setattr__(self, "p", p)

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class RelaxInterval:
    """Relaxation interval 0 < eps_minus <= eps_plus < inf."""

    eps_minus: float
    eps_plus: float

    def __post_init__(self):
        lo, hi = float(self.eps_minus), float(self.eps_plus)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not 0.0 < lo <= hi:
            raise DomainError(
                f"relaxation interval needs 0 < eps_minus <= eps_plus < inf, "
                f"got [{self.eps_minus}, {self.eps_plus}]"
            )
        object.__setattr__(self, "eps_minus", lo)
        object.__setattr__(self, "eps_plus", hi)

    def clamp(self, t: ArrayLike) -> np.ndarray:
        return np.clip(t, self.eps_minus, self.eps_plus)

    def enlarged(
        self, minus_factor: float = 1.0, plus_factor: float = 1.0
    ) -> "RelaxInterval":
        """Scale eps_minus by ``minus_factor`` and eps_plus by ``plus_factor``."""
        return RelaxInterval(
            self.eps_minus * minus_factor, self.eps_plus * plus_factor
        )


# --- Helpers ---


def _nonnegative(t: ArrayLike, name: str = "t") -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0):
        raise DomainError(f"{name} must be nonnegative")
    return arr


def _output(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


def _power(t: np.ndarray, exponent: float) -> np.ndarray:
    """t**exponent for t >= 0 via exp/log; 0**e is 0 for e > 0 and 1 for e == 0."""
    t = np.asarray(t, dtype=float)
    positive = t > 0.0
    safe = np.where(positive, t, 1.0)
    with np.errstate(over="ignore"):
        out = np.exp(exponent * np.log(safe))
    if exponent == 0.0:
        return np.where(positive, out, 1.0)
    return np.where(positive, out, 0.0)


def _kappa_star(t: np.ndarray, lo: float, hi: float, q: float) -> np.ndarray:
    """Dual integrand clamped to [lo, hi]; lo = 0 or hi = inf is unrelaxed."""
    c = 1.0 / q - 0.5
    out = _power(t, q) / q
    if lo > 0.0:
        below = t < lo
        out = np.where(below, 0.5 * lo ** (q - 2.0) * t * t + c * lo**q, out)
    if np.isfinite(hi):
        above = t > hi
        out = np.where(above, 0.5 * hi ** (q - 2.0) * t * t + c * hi**q, out)
    return out


def _released(eps: RelaxInterval, bound: ReleasedBound):
    if bound == "upper":
        return eps.eps_minus, np.inf
    if bound == "lower":
        return 0.0, eps.eps_plus
    raise DomainError(f"bound must be 'upper' or 'lower', got {bound!r}")


# --- Scalar kernels ---


def kappa_star(t: ArrayLike, eps: RelaxInterval, exps: Exponents) -> ArrayLike:
    """Relaxed dual integrand: C1, convex and equal to t^q/q on eps."""
    arr = _nonnegative(t)
    return _output(_kappa_star(arr, eps.eps_minus, eps.eps_plus, exps.q), t)


def kappa_star_released(
    t: ArrayLike, eps: RelaxInterval, exps: Exponents, bound: ReleasedBound
) -> ArrayLike:
    """Dual integrand with one side released (eps_plus = inf or eps_minus = 0)."""
    arr = _nonnegative(t)
    lo, hi = _released(eps, bound)
    return _output(_kappa_star(arr, lo, hi, exps.q), t)


def kappa(t: ArrayLike, eps: RelaxInterval, exps: Exponents) -> ArrayLike:
    """Relaxed primal integrand, the convex conjugate of :func:`kappa_star`."""
    arr = _nonnegative(t)
    q = exps.q
    c = 1.0 / q - 0.5
    lo, hi = eps.eps_minus, eps.eps_plus
    lo_t, hi_t = lo ** (q - 1.0), hi ** (q - 1.0)
    out = _power(arr, exps.p) / exps.p
    out = np.where(arr <= lo_t, 0.5 * lo ** (2.0 - q) * arr * arr - c * lo**q, out)
    out = np.where(arr >= hi_t, 0.5 * hi ** (2.0 - q) * arr * arr - c * hi**q, out)
    return _output(out, t)


def unrelaxed_primal_integrand(t: ArrayLike, exps: Exponents) -> ArrayLike:
    """t^p / p, overflowing to inf rather than raising."""
    arr = _nonnegative(t)
    return _output(_power(arr, exps.p) / exps.p, t)


def phi_eps_star_prime(s: ArrayLike, eps: RelaxInterval, exps: Exponents) -> ArrayLike:
    """Derivative of kappa_star: clamp(s)^(q-2) s."""
    arr = _nonnegative(s, "s")
    return _output(_power(eps.clamp(arr), exps.q - 2.0) * arr, s)


def phi_eps_prime(t: ArrayLike, eps: RelaxInterval, exps: Exponents) -> ArrayLike:
    """Derivative of kappa, the inverse function of :func:`phi_eps_star_prime`."""
    arr = _nonnegative(t)
    q = exps.q
    lo, hi = eps.eps_minus, eps.eps_plus
    out = _power(arr, exps.p - 1.0)
    out = np.where(arr <= lo ** (q - 1.0), lo ** (2.0 - q) * arr, out)
    out = np.where(arr >= hi ** (q - 1.0), hi ** (2.0 - q) * arr, out)
    return _output(out, t)


def _primal_ratio(t: np.ndarray, eps: RelaxInterval, exps: Exponents) -> np.ndarray:
    """phi_eps_prime(t) / t, extended continuously to t = 0."""
    q = exps.q
    lo, hi = eps.eps_minus, eps.eps_plus
    out = _power(t, exps.p - 2.0)
    out = np.where(t <= lo ** (q - 1.0), lo ** (2.0 - q), out)
    return np.where(t >= hi ** (q - 1.0), hi ** (2.0 - q), out)


def _vectors(P: ArrayLike):
    arr = np.asarray(P, dtype=float)
    if arr.shape[-1:] != (2,):
        raise DomainError("vector arguments must have a trailing dimension of size 2")
    return arr, np.hypot(arr[..., 0], arr[..., 1])


def a_star(P: ArrayLike, eps: RelaxInterval, exps: Exponents) -> np.ndarray:
    """Dual flux A*(P) = clamp(|P|)^(q-2) P."""
    arr, norm = _vectors(P)
    return _power(eps.clamp(norm), exps.q - 2.0)[..., None] * arr


def v_star(P: ArrayLike, eps: RelaxInterval, exps: Exponents) -> np.ndarray:
    """Dual natural quantity clamp(|P|)^((q-2)/2) P."""
    arr, norm = _vectors(P)
    return _power(eps.clamp(norm), 0.5 * (exps.q - 2.0))[..., None] * arr


def v_primal(P: ArrayLike, eps: RelaxInterval, exps: Exponents) -> np.ndarray:
    """Primal natural quantity sqrt(phi_eps_prime(|P|) / |P|) P, zero at P = 0."""
    arr, norm = _vectors(P)
    return np.sqrt(_primal_ratio(norm, eps, exps))[..., None] * arr


def shifted_conjugate(
    t: ArrayLike, s: ArrayLike, eps: RelaxInterval, exps: Exponents
) -> ArrayLike:
    """
    Shifted conjugate (phi_eps*)_{phi_eps'(t)}(s).

    With a = phi_eps_prime(t) and g = clamp(a)^(q-2) this is g s^2 / 2 for
    s <= a and g a^2 / 2 + kappa_star(s) - kappa_star(a) beyond.
    """
    t_arr = _nonnegative(t)
    s_arr = _nonnegative(s, "s")
    a = np.asarray(phi_eps_prime(t_arr, eps, exps), dtype=float)
    g = _power(eps.clamp(a), exps.q - 2.0)
    inside = 0.5 * g * s_arr * s_arr
    lo, hi, q = eps.eps_minus, eps.eps_plus, exps.q
    beyond = 0.5 * g * a * a + _kappa_star(s_arr, lo, hi, q) - _kappa_star(a, lo, hi, q)
    out = np.where(s_arr <= a, inside, beyond)
    return _output(out, t if np.ndim(t) >= np.ndim(s) else s)


# --- Energies ---


def energy_primal(
    u: P1Function, f: SourceTerm, eps: Optional[RelaxInterval], exps: Exponents
) -> float:
    """J_eps(u) = int kappa(|grad u|) - int f u; ``eps=None`` means unrelaxed."""
    if f.mesh is not u.mesh:
        raise DomainError("u and f live on different meshes")
    mesh = u.mesh
    norms = gradient(u).norms
    if eps is None:
        integrand = unrelaxed_primal_integrand(norms, exps)
    else:
        integrand = kappa(norms, eps, exps)
    with np.errstate(over="ignore", invalid="ignore"):
        stored = float(np.dot(mesh.areas, integrand))
    return stored - float(np.dot(assemble_load(mesh, f), u.coefficients))


def energy_dual(
    sigma: P0VectorField, eps: Optional[RelaxInterval], exps: Exponents
) -> float:
    """J*_eps(sigma) = int kappa_star(|sigma|); ``eps=None`` means unrelaxed."""
    norms = sigma.norms
    if eps is None:
        integrand = _power(norms, exps.q) / exps.q
    else:
        integrand = _kappa_star(norms, eps.eps_minus, eps.eps_plus, exps.q)
    return float(np.dot(sigma.mesh.areas, integrand))


def energy_dual_released(
    sigma: P0VectorField, eps: RelaxInterval, exps: Exponents, bound: ReleasedBound
) -> float:
    """Dual energy with eps_plus (bound="upper") or eps_minus ("lower") released."""
    lo, hi = _released(eps, bound)
    integrand = _kappa_star(sigma.norms, lo, hi, exps.q)
    return float(np.dot(sigma.mesh.areas, integrand))


def released_gaps(
    sigma: P0VectorField, eps: RelaxInterval, exps: Exponents, bound: ReleasedBound
) -> np.ndarray:
    """Per-triangle |T| (kappa_star_eps - kappa_star_released), clipped at 0."""
    lo, hi = _released(eps, bound)
    norms = sigma.norms
    q = exps.q
    relaxed = _kappa_star(norms, eps.eps_minus, eps.eps_plus, q)
    diff = relaxed - _kappa_star(norms, lo, hi, q)
    return sigma.mesh.areas * np.maximum(diff, 0.0)
