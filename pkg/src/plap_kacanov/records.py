"""Convergence records shared by every iteration driver."""

import math
import time
from dataclasses import astuple, dataclass, fields
from typing import List, Optional, Tuple

from .relaxation import RelaxInterval

NAN = float("nan")

# History row labels
ACTION_INIT = "init"
ACTION_STOP = "stop"
ACTION_KACANOV = "kacanov"
ACTION_EPS_PLUS = "eps_plus"
ACTION_EPS_MINUS = "eps_minus"
ACTION_REFINE = "refine"
ACTION_DESCENT = "descent"
ACTION_NO_DESCENT = "no_descent"


@dataclass(frozen=True)
class ConvergenceRecord:
    """One history row; floats that do not apply to a driver are NaN."""

    iteration: int
    ndof: int
    ndof_accumulated: int
    eps_minus: float
    eps_plus: float
    primal_energy_relaxed: float
    dual_energy_relaxed: float
    primal_energy_unrelaxed: float
    dual_energy_unrelaxed: float
    gap: float
    eta_eps_plus_sq: float
    eta_eps_minus_sq: float
    eta_h_sq: float
    action: str
    wall_time: float

    def astuple(self) -> Tuple:
        return astuple(self)

    @property
    def interval(self) -> Optional[RelaxInterval]:
        if math.isnan(self.eps_minus):
            return None
        return RelaxInterval(self.eps_minus, self.eps_plus)


FIELDS: Tuple[str, ...] = tuple(f.name for f in fields(ConvergenceRecord))


class HistoryBuilder:
    """
    Accumulates records, keeping the running degree-of-freedom count.

    The initial row is appended with ``count_ndof=False``, so
    ``ndof_accumulated`` starts at 0 and sums the ndof of solved rows only.

    Wall time is only measured when ``record_wall_time`` is set; otherwise it
    is written as 0 so that repeated runs produce identical histories.
    """

    def __init__(self, record_wall_time: bool = False):
        self.records: List[ConvergenceRecord] = []
        self.ndof_accumulated = 0
        self._record_wall_time = record_wall_time
        self._start = time.perf_counter()

    def append(
        self,
        *,
        iteration: int,
        ndof: int,
        action: str,
        eps: Optional[RelaxInterval] = None,
        primal_energy_relaxed: float = NAN,
        dual_energy_relaxed: float = NAN,
        primal_energy_unrelaxed: float = NAN,
        dual_energy_unrelaxed: float = NAN,
        gap: float = NAN,
        eta_eps_plus_sq: float = NAN,
        eta_eps_minus_sq: float = NAN,
        eta_h_sq: float = NAN,
        count_ndof: bool = True,
    ) -> ConvergenceRecord:
        """Append a row; ``count_ndof=False`` keeps the accumulated count unchanged."""
        if self.records and iteration <= self.records[-1].iteration:
            raise ValueError(
                f"iteration {iteration} does not follow {self.records[-1].iteration}"
            )
        if count_ndof:
            self.ndof_accumulated += int(ndof)
        elapsed = time.perf_counter() - self._start if self._record_wall_time else 0.0
        record = ConvergenceRecord(
            iteration=int(iteration),
            ndof=int(ndof),
            ndof_accumulated=self.ndof_accumulated,
            eps_minus=NAN if eps is None else eps.eps_minus,
            eps_plus=NAN if eps is None else eps.eps_plus,
            primal_energy_relaxed=float(primal_energy_relaxed),
            dual_energy_relaxed=float(dual_energy_relaxed),
            primal_energy_unrelaxed=float(primal_energy_unrelaxed),
            dual_energy_unrelaxed=float(dual_energy_unrelaxed),
            gap=float(gap),
            eta_eps_plus_sq=float(eta_eps_plus_sq),
            eta_eps_minus_sq=float(eta_eps_minus_sq),
            eta_h_sq=float(eta_h_sq),
            action=action,
            wall_time=float(elapsed),
        )
        self.records.append(record)
        return record
