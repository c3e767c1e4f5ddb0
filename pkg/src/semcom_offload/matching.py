"""Swap/leave/join (SLJ) matching of transmitters to edge servers.

A matching maps every transmitter to a server or to local generation, within
server capacities. Its utility is the optimal max-CCQ of the inner problem
(+inf when that is infeasible). SLJ applies any swap, leave or join that
strictly lowers the utility until none exists: the result is two-sided stable.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from semcom_offload.inner_solver import InnerSolution, SolverSettings, SubproblemCache, solve_inner
from semcom_offload.system_model import Assignment, NetworkRealization, PairOutcome

logger = logging.getLogger(__name__)

SWAP = "swap"
LEAVE = "leave"
JOIN = "join"

# relative drop in the CCQ sum that counts as a refinement
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Matching:
    """An assignment together with its inner-level solution."""

    assignment: Assignment
    solution: InnerSolution

    @property
    def utility(self) -> float:
        return self.solution.utility

    @property
    def outcomes(self) -> Tuple[PairOutcome, ...]:
        return self.solution.outcomes

    def server_of(self, n: int) -> Optional[int]:
        return self.assignment.servers[n]

    def members(self, k: int) -> Tuple[int, ...]:
        return self.assignment.members(k)


@dataclass(frozen=True)
class BlockingOperation:
    """An accepted (or available) strict improvement.

    target is the partner transmitter for a swap and the server for leave/join.
    """

    kind: str
    n: int
    target: int
    utility_before: float
    utility_after: float


@dataclass(frozen=True)
class SljResult:
    matching: Matching
    trace: Tuple[BlockingOperation, ...]
    initial: Assignment
    sweeps: int
    capped: bool = False
    refinements: int = 0


def evaluate(
    assignment: Assignment,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> Matching:
    return Matching(assignment, solve_inner(assignment, realization, settings, cache))


def utility(
    matching: Matching,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> float:
    """Max-CCQ of the matching's optimal resources; +inf if infeasible."""
    return solve_inner(matching.assignment, realization, settings, cache).utility


def ccq_sum(matching: Matching) -> float:
    """Sum of per-pair CCQ; +inf if the matching is infeasible."""
    if not matching.solution.optimal:
        return math.inf
    return math.fsum(outcome.ccq for outcome in matching.outcomes)


def _candidate(
    kind: str, matching: Matching, n: int, target: int, realization: NetworkRealization
) -> Optional[Assignment]:
    """The assignment an operation would produce, or None if it does not apply."""
    if kind == SWAP:
        k, j = matching.server_of(n), matching.server_of(target)
        if n == target or k is None or j is None or k == j:
            return None
        return matching.assignment.swapped(n, target)
    if kind == LEAVE:
        if matching.server_of(n) is None:
            return None
        return matching.assignment.with_choice(n, None)
    if matching.server_of(n) is not None:
        return None
    if len(matching.members(target)) >= realization.servers[target].capacity:
        return None
    return matching.assignment.with_choice(n, target)


def _accept_if_better(
    matching: Matching,
    candidate: Optional[Assignment],
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache],
) -> Tuple[bool, Matching]:
    if candidate is None:
        return False, matching
    evaluated = evaluate(candidate, realization, settings, cache)
    if evaluated.utility < matching.utility:
        return True, evaluated
    return False, matching


def try_swap(
    matching: Matching,
    n: int,
    m: int,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> Tuple[bool, Matching]:
    """Exchange the servers of two matched transmitters if that lowers the utility.

    Same-server and unmatched pairs are skipped.
    """
    return _accept_if_better(matching, _candidate(SWAP, matching, n, m, realization), realization, settings, cache)


def try_leave(
    matching: Matching,
    n: int,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> Tuple[bool, Matching]:
    """Move a matched transmitter to local generation if that lowers the utility."""
    return _accept_if_better(matching, _candidate(LEAVE, matching, n, -1, realization), realization, settings, cache)


def try_join(
    matching: Matching,
    n: int,
    k: int,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> Tuple[bool, Matching]:
    """Offload a local transmitter to a server with spare capacity if that lowers the utility."""
    return _accept_if_better(matching, _candidate(JOIN, matching, n, k, realization), realization, settings, cache)


def _candidate_order(n_transmitters: int, n_servers: int) -> Iterator[Tuple[str, int, int]]:
    """Swaps by (n, n') lexicographic, then leaves by n, then joins by (n, k)."""
    for n, m in itertools.combinations(range(n_transmitters), 2):
        yield SWAP, n, m
    for n in range(n_transmitters):
        yield LEAVE, n, -1
    for n in range(n_transmitters):
        for k in range(n_servers):
            yield JOIN, n, k


def _attempt(
    kind: str,
    matching: Matching,
    n: int,
    target: int,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache],
) -> Tuple[bool, Matching]:
    if kind == SWAP:
        return try_swap(matching, n, target, realization, settings, cache)
    if kind == LEAVE:
        return try_leave(matching, n, realization, settings, cache)
    return try_join(matching, n, target, realization, settings, cache)


def _operation(kind: str, n: int, target: int, before: Matching, after: Matching) -> BlockingOperation:
    if kind == LEAVE:
        server = before.server_of(n)
        target = server if server is not None else -1
    return BlockingOperation(kind, n, target, before.utility, after.utility)


def find_blocking_operation(
    matching: Matching,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> Optional[BlockingOperation]:
    """First swap/leave/join that strictly lowers the utility, or None if stable."""
    for kind, n, target in _candidate_order(realization.n_transmitters, realization.n_servers):
        accepted, candidate = _attempt(kind, matching, n, target, realization, settings, cache)
        if accepted:
            return _operation(kind, n, target, matching, candidate)
    return None


def random_matching(realization: NetworkRealization, rng: np.random.Generator) -> Assignment:
    """Each transmitter in turn picks uniformly among local and servers with room left."""
    residual = list(realization.capacities)
    choices: List[Optional[int]] = []
    for _ in range(realization.n_transmitters):
        options: List[Optional[int]] = [None] + [k for k, room in enumerate(residual) if room > 0]
        choice = options[int(rng.integers(len(options)))]
        if choice is not None:
            residual[choice] -= 1
        choices.append(choice)
    return Assignment(tuple(choices))


def default_max_operations(n_transmitters: int, n_servers: int) -> int:
    return max(1, 10 * n_transmitters * (n_transmitters + n_servers))


def slj_match(
    realization: NetworkRealization,
    settings: SolverSettings,
    rng: np.random.Generator,
    cache: Optional[SubproblemCache] = None,
    max_operations: Optional[int] = None,
    initial: Optional[Assignment] = None,
) -> SljResult:
    """Run SLJ sweeps from a random (or given) matching until a sweep accepts nothing.

    Every accepted operation strictly lowers the utility, so no matching repeats
    and the loop ends. max_operations (default 10*N*(N+K)) bounds the trace.
    """
    if cache is None:
        cache = SubproblemCache()
    n_tx, n_servers = realization.n_transmitters, realization.n_servers
    if max_operations is None:
        max_operations = default_max_operations(n_tx, n_servers)

    start = initial if initial is not None else random_matching(realization, rng)
    matching = evaluate(start, realization, settings, cache)
    trace: List[BlockingOperation] = []
    sweeps = 0
    capped = False

    while not capped:
        sweeps += 1
        accepted_this_sweep = 0
        for kind, n, target in _candidate_order(n_tx, n_servers):
            accepted, candidate = _attempt(kind, matching, n, target, realization, settings, cache)
            if not accepted:
                continue
            operation = _operation(kind, n, target, matching, candidate)
            logger.debug(
                f"{kind} n={n} target={operation.target}: "
                f"{operation.utility_before:.6g} -> {operation.utility_after:.6g}"
            )
            trace.append(operation)
            matching = candidate
            accepted_this_sweep += 1
            if len(trace) >= max_operations:
                capped = True
                logger.warning(f"SLJ stopped after {len(trace)} operations without certifying stability")
                break
        if accepted_this_sweep == 0:
            break

    return SljResult(matching, tuple(trace), start, sweeps, capped)


def refine_ties(
    matching: Matching,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
    max_operations: Optional[int] = None,
) -> Tuple[Matching, int]:
    """Apply swaps, leaves and joins that keep the utility and lower the CCQ sum.

    Sweeps in the SLJ candidate order until a sweep accepts nothing. The sum
    must drop by more than a relative TIE_TOLERANCE, and the utility never rises.

    Returns:
        The refined matching and the number of accepted operations.
    """
    if cache is None:
        cache = SubproblemCache()
    accepted = 0
    if not matching.solution.optimal:
        return matching, accepted
    n_tx, n_servers = realization.n_transmitters, realization.n_servers

    while True:
        accepted_this_sweep = 0
        for kind, n, target in _candidate_order(n_tx, n_servers):
            assignment = _candidate(kind, matching, n, target, realization)
            if assignment is None:
                continue
            candidate = evaluate(assignment, realization, settings, cache)
            if candidate.utility > matching.utility:
                continue
            if ccq_sum(candidate) >= ccq_sum(matching) * (1.0 - TIE_TOLERANCE):
                continue
            logger.debug(
                f"tie {kind} n={n} target={target}: "
                f"CCQ sum {ccq_sum(matching):.6g} -> {ccq_sum(candidate):.6g}"
            )
            matching = candidate
            accepted += 1
            accepted_this_sweep += 1
            if max_operations is not None and accepted >= max_operations:
                return matching, accepted
        if accepted_this_sweep == 0:
            return matching, accepted


def slj_match_refined(
    realization: NetworkRealization,
    settings: SolverSettings,
    rng: np.random.Generator,
    cache: Optional[SubproblemCache] = None,
    max_operations: Optional[int] = None,
    initial: Optional[Assignment] = None,
) -> SljResult:
    """SLJ alternated with refine_ties until refinement finds nothing.

    Each SLJ step lowers the utility and each refinement keeps it while
    lowering the CCQ sum, so the pair (utility, sum) only decreases and the
    loop ends. The final SLJ run certifies two-sided stability. The trace holds
    the SLJ operations only; their utilities still strictly decrease.
    """
    if cache is None:
        cache = SubproblemCache()
    if max_operations is None:
        max_operations = default_max_operations(realization.n_transmitters, realization.n_servers)

    result = slj_match(realization, settings, rng, cache, max_operations, initial)
    matching = result.matching
    trace = list(result.trace)
    sweeps = result.sweeps
    capped = result.capped
    refinements = 0

    while not capped:
        budget = max_operations - len(trace) - refinements
        refined, accepted = refine_ties(matching, realization, settings, cache, budget)
        if accepted == 0:
            break
        refinements += accepted
        matching = refined
        budget = max_operations - len(trace) - refinements
        if budget <= 0:
            capped = True
            logger.warning(f"SLJ stopped after {len(trace) + refinements} operations without certifying stability")
            break
        follow_up = slj_match(realization, settings, rng, cache, budget, matching.assignment)
        matching = follow_up.matching
        trace.extend(follow_up.trace)
        sweeps += follow_up.sweeps
        capped = follow_up.capped

    return SljResult(matching, tuple(trace), result.initial, sweeps, capped, refinements)


def _search_key(result: SljResult) -> Tuple[float, float]:
    return result.matching.utility, ccq_sum(result.matching)


def slj_match_restarts(
    realization: NetworkRealization,
    settings: SolverSettings,
    rng: np.random.Generator,
    restarts: int = 1,
    cache: Optional[SubproblemCache] = None,
    max_operations: Optional[int] = None,
    starts: Sequence[Assignment] = (),
    refine: bool = False,
) -> SljResult:
    """Best SLJ run over the given starting matchings and `restarts` random ones.

    Given starts run first and never touch the rng; duplicates and starts that
    overfill a server are skipped. The random runs then draw from the same rng
    in sequence. Lower utility wins, then lower CCQ sum; remaining ties keep the
    earliest run. refine=True runs slj_match_refined instead of slj_match.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    if cache is None:
        cache = SubproblemCache()
    search = slj_match_refined if refine else slj_match

    initials: List[Optional[Assignment]] = []
    for start in starts:
        if start in initials:
            continue
        if not start.respects_capacity(realization.capacities):
            logger.debug(f"skipping start {start.servers}: over capacity")
            continue
        initials.append(start)
    initials.extend([None] * restarts)

    best: Optional[SljResult] = None
    for attempt, initial in enumerate(initials):
        result = search(realization, settings, rng, cache, max_operations, initial)
        if best is None or _search_key(result) < _search_key(best):
            best = result
        logger.debug(f"start {attempt + 1}/{len(initials)}: utility {result.matching.utility:.6g}")
    assert best is not None
    return best


def enumerate_optimal(
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
    cap: int = 4096,
) -> Matching:
    """Exhaustive minimum over all capacity-feasible assignments (small instances only).

    Ties go to the lexicographically first assignment, local ordered before servers.

    Raises:
        ValueError: If (K+1)^N exceeds cap.
    """
    n_tx, n_servers = realization.n_transmitters, realization.n_servers
    total = (n_servers + 1) ** n_tx
    if total > cap:
        raise ValueError(f"enumeration of {total} assignments exceeds cap {cap}")
    if cache is None:
        cache = SubproblemCache()

    options: List[Optional[int]] = [None] + list(range(n_servers))
    best: Optional[Matching] = None
    for choices in itertools.product(options, repeat=n_tx):
        assignment = Assignment(tuple(choices))
        if not assignment.respects_capacity(realization.capacities):
            continue
        candidate = evaluate(assignment, realization, settings, cache)
        if best is None or candidate.utility < best.utility:
            best = candidate
    assert best is not None  # all-local always respects capacity
    if math.isinf(best.utility):
        logger.warning("every assignment is infeasible for this realization")
    return best
