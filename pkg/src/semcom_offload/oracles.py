"""Brute-force references for the solvers, shared by the tests and `oracle-check`.

Grid oracles evaluate the objective on a dense grid (vectorised with numpy),
then zoom in around the best feasible point for a few rounds. They only ever
return feasible grid points, so each grid value is an upper bound on the true
optimum.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from semcom_offload.benchmarks import PROPOSED, SUO, proposed_matching, run_suo
from semcom_offload.config import ScenarioConfig
from semcom_offload.experiment import SCHEME_STREAMS, build_realization, solver_settings, trial_rng
from semcom_offload.inner_solver import (
    SolverSettings,
    SubproblemCache,
    server_group_feasible,
    solve_inner,
    solve_local_pair,
    solve_server_group,
)
from semcom_offload.matching import enumerate_optimal, find_blocking_operation
from semcom_offload.system_model import LN2, Assignment, NetworkRealization, TransmitterProfile

logger = logging.getLogger(__name__)

DEFAULT_POINTS = 300
DEFAULT_ROUNDS = 4


@dataclass(frozen=True)
class GridResult:
    value: float
    point: Tuple[float, ...] = ()

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)


def _axis(lo: float, hi: float, points: int, log_scale: bool) -> np.ndarray:
    if log_scale:
        return np.geomspace(lo, hi, points)
    return np.linspace(lo, hi, points)


def refined_grid_search(
    objective: Callable[..., np.ndarray],
    bounds: Sequence[Tuple[float, float]],
    log_scale: Sequence[bool],
    points: int = DEFAULT_POINTS,
    rounds: int = DEFAULT_ROUNDS,
) -> GridResult:
    """Minimise a vectorised objective (inf marks infeasible) over a box.

    Each round evaluates a full tensor grid, then shrinks every axis to two
    cells either side of the best point.
    """
    lows = [lo for lo, _ in bounds]
    highs = [hi for _, hi in bounds]
    best = GridResult(math.inf)
    for _ in range(rounds):
        axes = [_axis(lo, hi, points, log) for lo, hi, log in zip(lows, highs, log_scale)]
        mesh = np.meshgrid(*axes, indexing="ij")
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            values = np.asarray(objective(*mesh), dtype=float)
        values = np.where(np.isnan(values), np.inf, values)
        flat_index = int(np.argmin(values))
        value = float(values.flat[flat_index])
        if not math.isfinite(value):
            break
        index = np.unravel_index(flat_index, values.shape)
        if value < best.value:
            best = GridResult(value, tuple(float(axis[i]) for axis, i in zip(axes, index)))
        lows = [float(axis[max(i - 2, 0)]) for axis, i in zip(axes, index)]
        highs = [float(axis[min(i + 2, points - 1)]) for axis, i in zip(axes, index)]
    return best


def _power(x: np.ndarray, c: float) -> np.ndarray:
    return c * np.expm1(x * LN2)


def _power_cap_exponent(p_max: float, c: float, exponent_cap: float) -> float:
    return min(exponent_cap, math.log1p(p_max / c) / LN2)


def grid_min_uplink_latency(
    tx: TransmitterProfile,
    gain_up: float,
    noise: float,
    bandwidth: float,
    exponent_cap: float,
    points: int = DEFAULT_POINTS,
    rounds: int = DEFAULT_ROUNDS,
) -> float:
    """Smallest uplink latency meeting the power and energy budgets, by scanning tau."""
    a = tx.source_bits / bandwidth
    c = noise / gain_up
    tau_min = a / _power_cap_exponent(tx.p_max, c, exponent_cap)

    def latency(tau: np.ndarray) -> np.ndarray:
        x = a / tau
        ok = (_power(x, c) * tau <= tx.e_max) & (x <= exponent_cap * (1 + 1e-12))
        return np.where(ok, tau, np.inf)

    return refined_grid_search(latency, [(tau_min, tau_min * 1e9)], [True], points * 10, rounds).value


def grid_local_pair(
    tx: TransmitterProfile,
    gain_direct: float,
    noise: float,
    bandwidth: float,
    exponent_cap: float,
    points: int = DEFAULT_POINTS,
    rounds: int = DEFAULT_ROUNDS,
) -> GridResult:
    """Minimal local CCQ over (f_local, tau_tr); point is (f_local, tau_tr)."""
    cycles = tx.device_model.cycles
    a = tx.prompt_bits / bandwidth
    c = noise / gain_direct
    tau_min = a / _power_cap_exponent(tx.p_max, c, exponent_cap)

    def ccq(f: np.ndarray, tau: np.ndarray) -> np.ndarray:
        x = a / tau
        p = _power(x, c)
        energy = tx.kappa_eff * cycles * f**2 + p * tau
        ok = (p <= tx.p_max * (1 + 1e-12)) & (energy <= tx.e_max) & (x <= exponent_cap * (1 + 1e-12))
        return np.where(ok, (cycles / f + tau) / tx.device_model.quality, np.inf)

    bounds = [(tx.f_max_local * 1e-4, tx.f_max_local), (tau_min, tau_min * 1e8)]
    return refined_grid_search(ccq, bounds, [True, True], points, rounds)


@dataclass(frozen=True)
class _OracleUser:
    cycles: float
    tau_up: float
    a: float
    c: float
    quality: float


def _oracle_users(
    users: Sequence[int], k: int, realization: NetworkRealization, settings: SolverSettings
) -> List[_OracleUser]:
    server = realization.servers[k]
    noise, bandwidth = realization.noise_w, realization.bandwidth_hz
    prepared = []
    for n in users:
        tx = realization.transmitters[n]
        tau_up = grid_min_uplink_latency(
            tx, float(realization.gains.h_up[n, k]), noise, bandwidth, settings.exponent_cap
        )
        prepared.append(
            _OracleUser(
                cycles=server.edge_model.cycles,
                tau_up=tau_up,
                a=tx.prompt_bits / bandwidth,
                c=noise / float(realization.gains.h_down[k, n]),
                quality=server.quality_for(n),
            )
        )
    return prepared


def grid_downlink_power(
    users: Sequence[int],
    deadlines: Sequence[float],
    k: int,
    realization: NetworkRealization,
    settings: SolverSettings,
    points: int = DEFAULT_POINTS,
    rounds: int = DEFAULT_ROUNDS,
) -> GridResult:
    """Minimal downlink power sum of a two-user group over (tau_down_0, tau_down_1).

    Each user's edge frequency is whatever its deadline leaves; the frequency
    sum must fit the server budget. point is the pair of downlink latencies.
    """
    if len(users) != 2:
        raise ValueError("grid_downlink_power handles exactly two users")
    server = realization.servers[k]
    cap = settings.exponent_cap
    first, second = _oracle_users(users, k, realization, settings)
    slacks = [deadline - user.tau_up for user, deadline in zip((first, second), deadlines)]
    if any(not math.isfinite(s) or s <= user.a / cap for s, user in zip(slacks, (first, second))):
        return GridResult(math.inf)

    def power_sum(t0: np.ndarray, t1: np.ndarray) -> np.ndarray:
        freq = first.cycles / (slacks[0] - t0) + second.cycles / (slacks[1] - t1)
        power = _power(first.a / t0, first.c) + _power(second.a / t1, second.c)
        return np.where(freq <= server.f_max_edge, power, np.inf)

    bounds = [(user.a / cap, slack * (1 - 1e-9)) for user, slack in zip((first, second), slacks)]
    return refined_grid_search(power_sum, bounds, [True, True], points, rounds)


def grid_server_group(
    users: Sequence[int],
    k: int,
    realization: NetworkRealization,
    settings: SolverSettings,
    points: int = DEFAULT_POINTS,
    rounds: int = DEFAULT_ROUNDS,
) -> GridResult:
    """Minimal max-CCQ of a one- or two-user group over the splits of f_max and p_hat.

    point is (frequency share, power share) of the first user.
    """
    server = realization.servers[k]
    cap = settings.exponent_cap
    prepared = _oracle_users(users, k, realization, settings)

    def ccq(user: _OracleUser, f_share: np.ndarray, p_share: np.ndarray) -> np.ndarray:
        x = np.minimum(cap, np.log2(1.0 + p_share * server.p_hat_max / user.c))
        latency = user.tau_up + user.cycles / (f_share * server.f_max_edge) + user.a / x
        return latency / user.quality

    if len(prepared) == 1:
        value = float(ccq(prepared[0], np.array(1.0), np.array(1.0)))
        return GridResult(value, (1.0, 1.0))
    if len(prepared) != 2:
        raise ValueError("grid_server_group handles one or two users")

    def worst(f_share: np.ndarray, p_share: np.ndarray) -> np.ndarray:
        return np.maximum(ccq(prepared[0], f_share, p_share), ccq(prepared[1], 1.0 - f_share, 1.0 - p_share))

    eps = 1e-9
    return refined_grid_search(worst, [(eps, 1 - eps), (eps, 1 - eps)], [False, False], points, rounds)


def grid_inner(
    assignment: Assignment,
    realization: NetworkRealization,
    settings: SolverSettings,
    points: int = DEFAULT_POINTS,
    rounds: int = DEFAULT_ROUNDS,
) -> float:
    """Grid counterpart of solve_inner(...).utility for groups of at most two users."""
    if not assignment.respects_capacity(realization.capacities):
        return math.inf
    values = []
    for n in assignment.local_transmitters():
        result = grid_local_pair(
            realization.transmitters[n],
            float(realization.gains.h_direct[n]),
            realization.noise_w,
            realization.bandwidth_hz,
            settings.exponent_cap,
            points,
            rounds,
        )
        values.append(result.value)
    for k in range(realization.n_servers):
        users = assignment.members(k)
        if users:
            values.append(grid_server_group(users, k, realization, settings, points, rounds).value)
    return max(values, default=0.0)


def relative_gap(value: float, reference: float) -> float:
    """(value - reference) / reference; 0 when both are infinite."""
    if math.isinf(value) and math.isinf(reference):
        return 0.0
    if math.isinf(value) or math.isinf(reference):
        return math.inf
    return (value - reference) / reference


@dataclass(frozen=True)
class OracleCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class OracleReport:
    checks: List[OracleCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, passed: bool, detail: str) -> None:
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, f"{name}: {'pass' if passed else 'FAIL'} ({detail})")
        self.checks.append(OracleCheck(name, passed, detail))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
        }


def _small_config(config: ScenarioConfig, n_transmitters: int, n_servers: int, capacity: int) -> ScenarioConfig:
    return (
        config.with_value("network.transmitters", n_transmitters)
        .with_value("network.servers", n_servers)
        .with_value("network.server_capacity", capacity)
    )


def check_local_pairs(config: ScenarioConfig, instances: int, report: OracleReport) -> None:
    """Local-pair solver within +0.5% / -5% of the grid on every transmitter."""
    small = _small_config(config, 2, 1, 2)
    settings = solver_settings(small)
    worst = 0.0
    failures = 0
    for i in range(instances):
        realization = build_realization(small, trial_rng(small.seed, i, 0))
        for n, tx in enumerate(realization.transmitters):
            gain = float(realization.gains.h_direct[n])
            solved = solve_local_pair(tx, gain, realization.noise_w, realization.bandwidth_hz, settings)
            grid = grid_local_pair(tx, gain, realization.noise_w, realization.bandwidth_hz, settings.exponent_cap)
            value = solved.outcome.ccq if solved.outcome is not None else math.inf
            gap = relative_gap(value, grid.value)
            worst = max(worst, gap)
            if not -0.05 <= gap <= 0.005:
                failures += 1
    report.add("local_pair_vs_grid", failures == 0, f"{failures} failures, worst gap {worst:+.2e}")


def check_server_groups(config: ScenarioConfig, instances: int, report: OracleReport) -> None:
    """Two-user group bisection within 1.5% of the grid; dual power within 1% of the grid."""
    small = _small_config(config, 2, 1, 2)
    settings = solver_settings(small)
    group_failures = 0
    power_failures = 0
    for i in range(instances):
        realization = build_realization(small, trial_rng(small.seed, i, 0))
        users = (0, 1)
        solved = solve_server_group(users, 0, realization, settings)
        grid = grid_server_group(users, 0, realization, settings)
        if abs(relative_gap(solved.utility, grid.value)) > 0.015:
            group_failures += 1
        if not solved.feasible:
            continue
        qualities = [realization.servers[0].quality_for(n) for n in users]
        deadlines = [1.2 * solved.utility * q for q in qualities]
        dual = server_group_feasible(users, deadlines, 0, realization, settings)
        brute = grid_downlink_power(users, deadlines, 0, realization, settings)
        if abs(relative_gap(dual.power_sum, brute.value)) > 0.01:
            power_failures += 1
    report.add("server_group_vs_grid", group_failures == 0, f"{group_failures}/{instances} failures")
    report.add("downlink_power_vs_grid", power_failures == 0, f"{power_failures}/{instances} failures")


def check_inner(config: ScenarioConfig, instances: int, report: OracleReport) -> None:
    """solve_inner within 1.5% of the grid for every assignment of two users to one server."""
    small = _small_config(config, 2, 1, 2)
    settings = solver_settings(small)
    failures = 0
    options: List[Optional[int]] = [None, 0]
    for i in range(instances):
        realization = build_realization(small, trial_rng(small.seed, i, 0))
        for first in options:
            for second in options:
                assignment = Assignment((first, second))
                solved = solve_inner(assignment, realization, settings).utility
                grid = grid_inner(assignment, realization, settings)
                if abs(relative_gap(solved, grid)) > 0.015:
                    failures += 1
    report.add("inner_vs_grid", failures == 0, f"{failures} failing assignments over {instances} instances")


def check_matching(config: ScenarioConfig, instances: int, report: OracleReport) -> None:
    """Proposed matching is stable, never beats enumeration, and is within 10% of it on >= 90% of instances.

    The matching is searched exactly as in a trial: seeded with the baselines and the SUO assignment.
    """
    small = config.with_value("network.transmitters", 3).with_value("network.servers", 3)
    settings = solver_settings(small)
    unstable = 0
    dominated = 0
    close = 0
    for i in range(instances):
        realization = build_realization(small, trial_rng(small.seed, i, 0))
        cache = SubproblemCache()
        suo = run_suo(
            realization, settings, trial_rng(small.seed, i, SCHEME_STREAMS[SUO]), small.restarts, small.max_operations
        )
        result = proposed_matching(
            realization,
            settings,
            trial_rng(small.seed, i, SCHEME_STREAMS[PROPOSED]),
            small.restarts,
            small.max_operations,
            cache,
            starts=(Assignment(suo.assignment),),
        )
        best = enumerate_optimal(realization, settings, cache, small.enumeration_cap)
        if find_blocking_operation(result.matching, realization, settings, cache) is not None:
            unstable += 1
        if best.utility > result.matching.utility:
            dominated += 1
        if relative_gap(result.matching.utility, best.utility) <= 0.10:
            close += 1
    report.add("slj_stable", unstable == 0, f"{unstable}/{instances} unstable")
    report.add("enumeration_dominates", dominated == 0, f"{dominated}/{instances} violations")
    report.add("slj_near_optimal", close >= 0.9 * instances, f"{close}/{instances} within 10%")


def run_oracle_suite(config: ScenarioConfig, instances: int = 20) -> OracleReport:
    """Run every oracle comparison on small random instances drawn from config."""
    report = OracleReport()
    check_local_pairs(config, instances, report)
    check_server_groups(config, instances, report)
    check_inner(config, instances, report)
    check_matching(config, instances, report)
    return report
