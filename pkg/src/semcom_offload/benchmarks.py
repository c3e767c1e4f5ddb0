"""The proposed scheme and the three comparison schemes.

- proposed: SLJ matching with the inner solver as utility (max CCQ), started
  from the baseline assignments as well as random ones.
- fopg: every transmitter offloads to a pre-selected server (strongest uplink).
- fodpg: every transmitter generates its prompt on-device.
- suo: SLJ on latency alone (all qualities 1), reported with the true qualities.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from semcom_offload.inner_solver import InnerSolution, SolverSettings, SubproblemCache, solve_inner
from semcom_offload.matching import SljResult, slj_match_restarts
from semcom_offload.system_model import (
    Assignment,
    NetworkRealization,
    PairOutcome,
    ResourceAllocation,
    pair_outcome,
)

logger = logging.getLogger(__name__)

PROPOSED = "proposed"
FOPG = "fopg"
FODPG = "fodpg"
SUO = "suo"
SCHEME_NAMES: Tuple[str, ...] = (PROPOSED, FOPG, FODPG, SUO)


@dataclass(frozen=True)
class SolveOutcome:
    """Per-pair results of one scheme on one realization.

    objective is what the scheme minimised: max CCQ, or max latency for suo.
    Infeasible outcomes carry empty per-pair tuples. resources is kept in
    memory only and never serialised.
    """

    scheme: str
    feasible: bool
    assignment: Tuple[Optional[int], ...]
    latency: Tuple[float, ...] = ()
    energy: Tuple[float, ...] = ()
    quality: Tuple[float, ...] = ()
    ccq: Tuple[float, ...] = ()
    objective: float = math.inf
    operations: int = 0
    reason: Optional[str] = None
    resources: Optional[ResourceAllocation] = field(default=None, compare=False, repr=False)

    @property
    def max_ccq(self) -> float:
        return max(self.ccq) if self.feasible and self.ccq else math.inf

    @property
    def max_latency(self) -> float:
        return max(self.latency) if self.feasible and self.latency else math.inf

    @property
    def mean_cider(self) -> float:
        if not (self.feasible and self.quality):
            return math.nan
        return math.fsum(self.quality) / len(self.quality)

    @property
    def min_cider(self) -> float:
        return min(self.quality) if self.feasible and self.quality else math.nan

    @property
    def max_cider(self) -> float:
        return max(self.quality) if self.feasible and self.quality else math.nan

    @property
    def offloaded_count(self) -> int:
        return sum(1 for choice in self.assignment if choice is not None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "feasible": self.feasible,
            "assignment": list(self.assignment),
            "latency": list(self.latency),
            "energy": list(self.energy),
            "quality": list(self.quality),
            "ccq": list(self.ccq),
            "objective": self.objective,
            "operations": self.operations,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolveOutcome":
        return cls(
            scheme=data["scheme"],
            feasible=bool(data["feasible"]),
            assignment=tuple(None if k is None else int(k) for k in data["assignment"]),
            latency=tuple(float(v) for v in data["latency"]),
            energy=tuple(float(v) for v in data["energy"]),
            quality=tuple(float(v) for v in data["quality"]),
            ccq=tuple(float(v) for v in data["ccq"]),
            objective=float(data["objective"]),
            operations=int(data.get("operations", 0)),
            reason=data.get("reason"),
        )


def _from_outcomes(
    scheme: str,
    assignment: Assignment,
    outcomes: Tuple[PairOutcome, ...],
    objective: float,
    resources: Optional[ResourceAllocation],
    operations: int = 0,
) -> SolveOutcome:
    return SolveOutcome(
        scheme=scheme,
        feasible=True,
        assignment=assignment.servers,
        latency=tuple(o.latency for o in outcomes),
        energy=tuple(o.energy for o in outcomes),
        quality=tuple(o.quality for o in outcomes),
        ccq=tuple(o.ccq for o in outcomes),
        objective=objective,
        operations=operations,
        resources=resources,
    )


def _from_solution(scheme: str, solution: InnerSolution, operations: int = 0) -> SolveOutcome:
    if not solution.optimal:
        logger.debug(f"{scheme}: infeasible ({solution.reason})")
        return SolveOutcome(
            scheme=scheme,
            feasible=False,
            assignment=solution.assignment.servers,
            operations=operations,
            reason=solution.reason,
        )
    return _from_outcomes(
        scheme, solution.assignment, solution.outcomes, solution.utility, solution.resources, operations
    )


def preselect_servers(realization: NetworkRealization) -> Optional[Assignment]:
    """Greedy strongest-uplink assignment of every transmitter.

    (n, k) pairs are visited by descending uplink gain; a pair is taken when n
    is still unassigned and k has room. None if some transmitter is left over.
    """
    n_tx = realization.n_transmitters
    residual = list(realization.capacities)
    pairs = sorted(
        ((float(realization.gains.h_up[n, k]), n, k) for n in range(n_tx) for k in range(realization.n_servers)),
        key=lambda item: (-item[0], item[1], item[2]),
    )
    choices: List[Optional[int]] = [None] * n_tx
    for _, n, k in pairs:
        if choices[n] is None and residual[k] > 0:
            choices[n] = k
            residual[k] -= 1
    if any(choice is None for choice in choices):
        return None
    return Assignment(tuple(choices))


def baseline_starts(realization: NetworkRealization) -> Tuple[Assignment, ...]:
    """The FODPG all-local assignment and, when it fits, the FOPG pre-selection."""
    starts = [Assignment.all_local(realization.n_transmitters)]
    preselected = preselect_servers(realization)
    if preselected is not None:
        starts.append(preselected)
    return tuple(starts)


def proposed_matching(
    realization: NetworkRealization,
    settings: SolverSettings,
    rng: np.random.Generator,
    restarts: int = 1,
    max_operations: Optional[int] = None,
    cache: Optional[SubproblemCache] = None,
    starts: Sequence[Assignment] = (),
) -> SljResult:
    """Refined SLJ from the baseline assignments, any extra starts and `restarts` random ones.

    SLJ never raises the utility of its start, so the result is no worse than
    the inner optimum of every starting assignment.
    """
    initials = baseline_starts(realization) + tuple(starts)
    return slj_match_restarts(
        realization, settings, rng, restarts, cache, max_operations, starts=initials, refine=True
    )


def run_proposed(
    realization: NetworkRealization,
    settings: SolverSettings,
    rng: np.random.Generator,
    restarts: int = 1,
    max_operations: Optional[int] = None,
    cache: Optional[SubproblemCache] = None,
    starts: Sequence[Assignment] = (),
) -> SolveOutcome:
    result = proposed_matching(realization, settings, rng, restarts, max_operations, cache, starts)
    return _from_solution(PROPOSED, result.matching.solution, len(result.trace))


def run_fopg(
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> SolveOutcome:
    assignment = preselect_servers(realization)
    if assignment is None:
        return SolveOutcome(
            scheme=FOPG,
            feasible=False,
            assignment=Assignment.all_local(realization.n_transmitters).servers,
            reason="capacity",
        )
    return _from_solution(FOPG, solve_inner(assignment, realization, settings, cache))


def run_fodpg(
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> SolveOutcome:
    assignment = Assignment.all_local(realization.n_transmitters)
    return _from_solution(FODPG, solve_inner(assignment, realization, settings, cache))


def run_suo(
    realization: NetworkRealization,
    settings: SolverSettings,
    rng: np.random.Generator,
    restarts: int = 1,
    max_operations: Optional[int] = None,
) -> SolveOutcome:
    """Latency-only matching; CCQ and CIDEr are then reported with the true qualities.

    The search is the proposed one run on the unit-quality realization.
    """
    unit = realization.with_unit_quality()
    result = proposed_matching(unit, settings, rng, restarts, max_operations, SubproblemCache())
    solution = result.matching.solution
    operations = len(result.trace)
    if not solution.optimal:
        return _from_solution(SUO, solution, operations)
    assert solution.resources is not None
    outcomes = tuple(
        pair_outcome(n, entry, realization, settings.exponent_cap)
        for n, entry in enumerate(solution.resources.entries)
    )
    return _from_outcomes(SUO, solution.assignment, outcomes, solution.utility, solution.resources, operations)


def run_scheme(
    name: str,
    realization: NetworkRealization,
    settings: SolverSettings,
    rng: np.random.Generator,
    restarts: int = 1,
    max_operations: Optional[int] = None,
    cache: Optional[SubproblemCache] = None,
    starts: Sequence[Assignment] = (),
) -> SolveOutcome:
    """Dispatch by scheme name. cache must belong to this realization.

    starts are extra starting assignments for the proposed scheme only.

    Raises:
        ValueError: If the scheme name is unknown.
    """
    if name == PROPOSED:
        return run_proposed(realization, settings, rng, restarts, max_operations, cache, starts)
    if name == FOPG:
        return run_fopg(realization, settings, cache)
    if name == FODPG:
        return run_fodpg(realization, settings, cache)
    if name == SUO:
        return run_suo(realization, settings, rng, restarts, max_operations)
    raise ValueError(f"unknown scheme {name!r}; expected one of {', '.join(SCHEME_NAMES)}")
