"""Continuous resource allocation for a fixed assignment.

Minimises the maximal CCQ over transmit powers, computation frequencies and
latency splits. Resource constraints couple pairs only inside one server group,
so the problem splits into independent local-pair problems and per-server group
problems; the global min-max is the max of the groupwise minima.

Every link latency is handled through its rate exponent x = bits / (B * tau),
for which power is (2^x - 1) * noise / gain and the exponent cap is a bound.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from scipy.optimize import brentq, minimize_scalar

from semcom_offload.system_model import (
    DEFAULT_EXPONENT_CAP,
    LN2,
    Assignment,
    LocalResources,
    NetworkRealization,
    OffloadResources,
    PairOutcome,
    Resources,
    ResourceAllocation,
    TransmitterProfile,
    local_pair_outcome,
    offload_pair_outcome,
)

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances for the nested searches.

    dual_tolerance is relative to the server's frequency budget.
    """

    phi_tolerance: float = 1e-4
    dual_tolerance: float = 1e-6
    scalar_tolerance: float = 1e-6
    max_iterations: int = 200
    exponent_cap: float = DEFAULT_EXPONENT_CAP

    def __post_init__(self) -> None:
        if not (self.phi_tolerance > 0 and self.dual_tolerance > 0 and self.scalar_tolerance > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.exponent_cap > 0:
            raise ValueError("exponent_cap must be positive")


@dataclass(frozen=True)
class LocalPairSolution:
    resources: Optional[LocalResources]
    outcome: Optional[PairOutcome]
    reason: Optional[str] = None

    @property
    def feasible(self) -> bool:
        return self.resources is not None


@dataclass(frozen=True)
class GroupFeasibility:
    """Outcome of one deadline check; reason is "time", "frequency" or "power" on failure."""

    feasible: bool
    reason: Optional[str]
    splits: Tuple[OffloadResources, ...] = ()
    power_sum: float = math.inf
    frequency_sum: float = math.inf
    mu: float = math.nan


@dataclass(frozen=True)
class GroupSolution:
    server: int
    users: Tuple[int, ...]
    resources: Tuple[OffloadResources, ...]
    outcomes: Tuple[PairOutcome, ...]
    utility: float
    status: str
    reason: Optional[str] = None

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class InnerSolution:
    assignment: Assignment
    resources: Optional[ResourceAllocation]
    outcomes: Tuple[PairOutcome, ...]
    utility: float
    status: str
    reason: Optional[str] = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class SubproblemCache:
    """Memo of local-pair and server-group solutions. Valid for one realization only."""

    local: Dict[int, LocalPairSolution] = field(default_factory=dict)
    groups: Dict[Tuple[int, Tuple[int, ...]], GroupSolution] = field(default_factory=dict)
    hits: int = 0
    misses: int = 0


def _link_energy(x: float, c: float, a: float) -> float:
    """p(tau)*tau at exponent x, with c = noise/gain and a = bits/B."""
    return c * a * math.expm1(x * LN2) / x


def max_rate_exponent(
    bits: float,
    gain: float,
    noise: float,
    bandwidth: float,
    power_cap: float,
    energy_cap: float,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
    xtol: float = 1e-12,
) -> float:
    """Largest exponent x with p <= power_cap and p*tau <= energy_cap.

    Both p and p*tau grow with x. p*tau tends to noise/gain * bits * ln2 / B as
    x -> 0, so an energy cap at or below that floor admits no latency: 0.0 is
    returned in that case.
    """
    c = noise / gain
    a = bits / bandwidth
    x = exponent_cap
    if math.isfinite(power_cap):
        x = min(x, math.log1p(power_cap / c) / LN2)
    if math.isfinite(energy_cap):
        if energy_cap <= c * a * LN2:
            return 0.0
        if _link_energy(x, c, a) > energy_cap:
            lo = min(x, 1e-9)
            if _link_energy(lo, c, a) >= energy_cap:
                return lo
            x = brentq(lambda y: _link_energy(y, c, a) - energy_cap, lo, x, xtol=xtol * x, rtol=1e-14)
    return x


def min_uplink_latency(
    tx: TransmitterProfile,
    gain_up: float,
    noise: float,
    bandwidth: float,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
) -> float:
    """Smallest uplink latency within the transmitter's power and energy budgets.

    Returns math.inf when the energy budget is below the link's energy floor.
    """
    x = max_rate_exponent(tx.source_bits, gain_up, noise, bandwidth, tx.p_max, tx.e_max, exponent_cap)
    if x <= 0:
        return math.inf
    return tx.source_bits / (bandwidth * x)


def solve_local_pair(
    tx: TransmitterProfile,
    gain_direct: float,
    noise: float,
    bandwidth: float,
    settings: SolverSettings,
) -> LocalPairSolution:
    """Best on-device frequency and prompt-link latency for one transmitter.

    Searches the compute-energy share e_c in (0, e_max]: the frequency is the
    largest the share affords, the link latency the smallest the remainder
    affords. Both terms are convex in e_c.
    """
    model = tx.device_model
    cycles = model.cycles
    a = tx.prompt_bits / bandwidth
    c = noise / gain_direct
    cap = settings.exponent_cap
    floor = c * a * LN2

    if tx.e_max <= floor:
        return LocalPairSolution(None, None, reason="energy")

    def link_exponent(budget: float) -> float:
        return max_rate_exponent(tx.prompt_bits, gain_direct, noise, bandwidth, tx.p_max, budget, cap)

    def frequency(e_c: float) -> float:
        return min(tx.f_max_local, math.sqrt(e_c / (tx.kappa_eff * cycles)))

    def latency(e_c: float) -> float:
        if e_c <= 0:
            return math.inf
        x = link_exponent(tx.e_max - e_c)
        if x <= 0:
            return math.inf
        return cycles / frequency(e_c) + a / x

    e_full_speed = tx.kappa_eff * cycles * tx.f_max_local**2
    x_caps = link_exponent(math.inf)
    if e_full_speed + _link_energy(x_caps, c, a) <= tx.e_max:
        # energy budget slack: frequency and power caps both bind
        e_c = e_full_speed
        f_local, x = tx.f_max_local, x_caps
    else:
        hi = min(e_full_speed, tx.e_max - floor)
        result = minimize_scalar(
            latency,
            bounds=(0.0, hi),
            method="bounded",
            options={"xatol": settings.scalar_tolerance * hi, "maxiter": settings.max_iterations},
        )
        e_c = float(result.x)
        if hi == e_full_speed and latency(hi) <= latency(e_c):
            e_c = hi
        f_local, x = frequency(e_c), link_exponent(tx.e_max - e_c)
        if x <= 0 or f_local <= 0:
            return LocalPairSolution(None, None, reason="energy")

    resources = LocalResources(f_local=f_local, tau_tr=a / x)
    outcome = local_pair_outcome(tx, resources, gain_direct, noise, bandwidth, cap)
    logger.debug(f"local pair: e_c={e_c:.4g} J f={f_local:.4g} tau_tr={resources.tau_tr:.4g} ccq={outcome.ccq:.4g}")
    return LocalPairSolution(resources, outcome)


@dataclass(frozen=True)
class _GroupUser:
    n: int
    cycles: float
    tau_up: float
    a: float  # prompt bits / B
    c: float  # noise / downlink gain


def _group_users(
    users: Sequence[int], k: int, realization: NetworkRealization, settings: SolverSettings
) -> List[_GroupUser]:
    server = realization.servers[k]
    noise, bandwidth = realization.noise_w, realization.bandwidth_hz
    gains = realization.gains
    prepared = []
    for n in users:
        tx = realization.transmitters[n]
        tau_up = min_uplink_latency(tx, float(gains.h_up[n, k]), noise, bandwidth, settings.exponent_cap)
        prepared.append(
            _GroupUser(
                n=n,
                cycles=server.edge_model.cycles,
                tau_up=tau_up,
                a=tx.prompt_bits / bandwidth,
                c=noise / float(gains.h_down[k, n]),
            )
        )
    return prepared


def _downlink_exponent(user: _GroupUser, slack: float, mu: float, cap: float) -> float:
    """Minimise c*(2^x - 1) + mu*C/(slack - a/x) over x in (a/slack, cap]."""

    def derivative(x: float) -> float:
        return user.c * LN2 * math.exp(x * LN2) - mu * user.cycles * user.a / (slack * x - user.a) ** 2

    if derivative(cap) <= 0:
        return cap
    lo = user.a / slack * (1.0 + 1e-12)
    if derivative(lo) >= 0:
        return lo
    return brentq(derivative, lo, cap, xtol=1e-12, rtol=1e-14)


def server_group_feasible(
    users: Sequence[int],
    deadlines: Sequence[float],
    k: int,
    realization: NetworkRealization,
    settings: SolverSettings,
    prepared: Optional[List[_GroupUser]] = None,
) -> GroupFeasibility:
    """Decide whether every user of server k can finish within its deadline.

    Uplinks run at their minimum latency. The remaining time of each user is
    split between edge compute and downlink by minimising total downlink power
    under the frequency budget; that budget is dualised with multiplier mu and
    mu is bisected (in log space) until the frequency sum meets the budget.
    """
    server = realization.servers[k]
    f_budget = server.f_max_edge
    cap = settings.exponent_cap
    if prepared is None:
        prepared = _group_users(users, k, realization, settings)

    slacks = []
    for user, deadline in zip(prepared, deadlines):
        slack = deadline - user.tau_up
        if not math.isfinite(slack) or slack <= user.a / cap * (1.0 + 1e-9):
            return GroupFeasibility(False, "time")
        slacks.append(slack)

    frequency_floor = math.fsum(u.cycles / (s - u.a / cap) for u, s in zip(prepared, slacks))
    if frequency_floor >= f_budget:
        return GroupFeasibility(False, "frequency", frequency_sum=frequency_floor)

    def exponents(mu: float) -> List[float]:
        return [_downlink_exponent(u, s, mu, cap) for u, s in zip(prepared, slacks)]

    def frequency_sum(xs: List[float]) -> float:
        return math.fsum(u.cycles / (s - u.a / x) for u, s, x in zip(prepared, slacks, xs))

    # bracket: frequency use falls as mu grows
    mu_hi = 1.0
    xs_hi = exponents(mu_hi)
    freq_hi = frequency_sum(xs_hi)
    mu_lo = mu_hi
    iterations = 0
    if freq_hi > f_budget:
        while freq_hi > f_budget and iterations < settings.max_iterations:
            mu_lo, mu_hi = mu_hi, mu_hi * 10.0
            xs_hi = exponents(mu_hi)
            freq_hi = frequency_sum(xs_hi)
            iterations += 1
        if freq_hi > f_budget:
            return GroupFeasibility(False, "frequency", frequency_sum=freq_hi)
    else:
        while iterations < settings.max_iterations:
            mu_lo = mu_lo / 10.0
            if frequency_sum(exponents(mu_lo)) > f_budget:
                break
            mu_hi = mu_lo
            iterations += 1
        xs_hi = exponents(mu_hi)
        freq_hi = frequency_sum(xs_hi)

    target = settings.dual_tolerance * f_budget
    iterations = 0
    while f_budget - freq_hi > target and iterations < settings.max_iterations:
        mu_mid = math.sqrt(mu_lo * mu_hi)
        if mu_mid in (mu_lo, mu_hi):
            break
        xs_mid = exponents(mu_mid)
        freq_mid = frequency_sum(xs_mid)
        if freq_mid > f_budget:
            mu_lo = mu_mid
        else:
            mu_hi, xs_hi, freq_hi = mu_mid, xs_mid, freq_mid
        iterations += 1
    logger.debug(f"server {k}: mu={mu_hi:.4g} freq={freq_hi:.6g}/{f_budget:.6g} after {iterations} steps")

    splits = []
    powers = []
    for user, slack, x in zip(prepared, slacks, xs_hi):
        tau_down = user.a / x
        splits.append(
            OffloadResources(server=k, tau_up=user.tau_up, f_edge=user.cycles / (slack - tau_down), tau_down=tau_down)
        )
        powers.append(user.c * math.expm1(x * LN2))
    power_sum = math.fsum(powers)
    feasible = power_sum <= server.p_hat_max
    return GroupFeasibility(
        feasible=feasible,
        reason=None if feasible else "power",
        splits=tuple(splits),
        power_sum=power_sum,
        frequency_sum=freq_hi,
        mu=mu_hi,
    )


def _group_solution(
    k: int,
    users: Tuple[int, ...],
    splits: Sequence[OffloadResources],
    realization: NetworkRealization,
    settings: SolverSettings,
) -> GroupSolution:
    server = realization.servers[k]
    outcomes = tuple(
        offload_pair_outcome(
            realization.transmitters[n],
            server,
            server.quality_for(n),
            split,
            float(realization.gains.h_up[n, k]),
            realization.noise_w,
            realization.bandwidth_hz,
            settings.exponent_cap,
        )
        for n, split in zip(users, splits)
    )
    utility = max(outcome.ccq for outcome in outcomes)
    return GroupSolution(k, users, tuple(splits), outcomes, utility, OPTIMAL)


def solve_server_group(
    users: Sequence[int],
    k: int,
    realization: NetworkRealization,
    settings: SolverSettings,
) -> GroupSolution:
    """Smallest common CCQ level phi the users of server k can all reach.

    Bisection on phi: deadlines phi * Q'_{n,k} feed server_group_feasible. The
    lower end comes from each user's single-user relaxation, the upper end by
    doubling until feasible.
    """
    users = tuple(users)
    server = realization.servers[k]
    if not users:
        return GroupSolution(k, users, (), (), 0.0, OPTIMAL)
    if len(users) > server.capacity:
        return GroupSolution(k, users, (), (), math.inf, INFEASIBLE, reason="capacity")

    prepared = _group_users(users, k, realization, settings)
    for user in prepared:
        if not math.isfinite(user.tau_up):
            return GroupSolution(k, users, (), (), math.inf, INFEASIBLE, reason=f"uplink energy of tx {user.n}")

    cap = settings.exponent_cap
    alone = []
    for user in prepared:
        x = min(cap, math.log1p(server.p_hat_max / user.c) / LN2)
        alone.append(
            OffloadResources(server=k, tau_up=user.tau_up, f_edge=server.f_max_edge, tau_down=user.a / x)
        )
    if len(users) == 1:
        return _group_solution(k, users, alone, realization, settings)

    qualities = [server.quality_for(n) for n in users]

    def check(phi: float) -> GroupFeasibility:
        deadlines = [phi * q for q in qualities]
        return server_group_feasible(users, deadlines, k, realization, settings, prepared)

    phi_lo = max(
        (split.tau_up + user.cycles / split.f_edge + split.tau_down) / q
        for user, split, q in zip(prepared, alone, qualities)
    )
    at_lo = check(phi_lo)
    if at_lo.feasible:
        return _group_solution(k, users, at_lo.splits, realization, settings)

    phi_hi = 2.0 * phi_lo
    at_hi = check(phi_hi)
    doublings = 0
    while not at_hi.feasible:
        doublings += 1
        if doublings >= settings.max_iterations:
            logger.warning(f"server {k}: no feasible CCQ level found for users {users}")
            return GroupSolution(k, users, (), (), math.inf, INFEASIBLE, reason="oversubscribed")
        phi_lo = phi_hi
        phi_hi *= 2.0
        at_hi = check(phi_hi)

    iterations = 0
    while phi_hi - phi_lo > settings.phi_tolerance * phi_hi and iterations < settings.max_iterations:
        phi_mid = 0.5 * (phi_lo + phi_hi)
        at_mid = check(phi_mid)
        if at_mid.feasible:
            phi_hi, at_hi = phi_mid, at_mid
        else:
            phi_lo = phi_mid
        iterations += 1
    logger.debug(f"server {k}: phi in [{phi_lo:.6g}, {phi_hi:.6g}] after {iterations} bisections")
    return _group_solution(k, users, at_hi.splits, realization, settings)


def _cached(cache: Optional[SubproblemCache], table: Dict, key: object, solve: Callable[[], object]) -> object:
    if cache is None:
        return solve()
    if key in table:
        cache.hits += 1
        return table[key]
    cache.misses += 1
    value = solve()
    table[key] = value
    return value


def solve_inner(
    assignment: Assignment,
    realization: NetworkRealization,
    settings: SolverSettings,
    cache: Optional[SubproblemCache] = None,
) -> InnerSolution:
    """Optimal resources for a fixed assignment; utility is the max CCQ.

    Infeasibility (capacity, a local pair, or a server group) is reported in
    status/reason with utility +inf.
    """
    if len(assignment) != realization.n_transmitters:
        raise ValueError(
            f"assignment covers {len(assignment)} transmitters, realization has {realization.n_transmitters}"
        )
    if not assignment.respects_capacity(realization.capacities):
        return InnerSolution(assignment, None, (), math.inf, INFEASIBLE, reason="capacity")

    noise, bandwidth = realization.noise_w, realization.bandwidth_hz
    entries: Dict[int, Resources] = {}
    outcomes: Dict[int, PairOutcome] = {}

    for n in assignment.local_transmitters():
        tx = realization.transmitters[n]
        gain = float(realization.gains.h_direct[n])
        local = _cached(
            cache,
            cache.local if cache else {},
            n,
            lambda: solve_local_pair(tx, gain, noise, bandwidth, settings),
        )
        assert isinstance(local, LocalPairSolution)
        if not local.feasible:
            return InnerSolution(assignment, None, (), math.inf, INFEASIBLE, reason=f"local pair {n}: {local.reason}")
        assert local.resources is not None and local.outcome is not None
        entries[n] = local.resources
        outcomes[n] = local.outcome

    for k in range(realization.n_servers):
        users = assignment.members(k)
        if not users:
            continue
        group = _cached(
            cache,
            cache.groups if cache else {},
            (k, users),
            lambda: solve_server_group(users, k, realization, settings),
        )
        assert isinstance(group, GroupSolution)
        if not group.feasible:
            return InnerSolution(assignment, None, (), math.inf, INFEASIBLE, reason=f"server {k}: {group.reason}")
        for n, split, outcome in zip(group.users, group.resources, group.outcomes):
            entries[n] = split
            outcomes[n] = outcome

    ordered = tuple(outcomes[n] for n in range(realization.n_transmitters))
    utility = max((outcome.ccq for outcome in ordered), default=0.0)
    resources = ResourceAllocation(tuple(entries[n] for n in range(realization.n_transmitters)))
    return InnerSolution(assignment, resources, ordered, utility, OPTIMAL)
