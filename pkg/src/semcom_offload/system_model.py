"""Domain types and closed-form latency, rate, energy and CCQ expressions.

A transmitter either generates its prompt locally (compute on-device, then send
the prompt over the direct link) or offloads: uplink the compressed source to
an edge server, compute there, and downlink the prompt to its receiver. Only
transmitter-side energy is accounted.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

from semcom_offload.channel import ChannelGains, Geometry

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
DEFAULT_EXPONENT_CAP = 60.0


class PowerInfeasibleError(ValueError):
    """Raised when a latency demands a rate exponent above the cap."""

    pass


@dataclass(frozen=True)
class ModelProfile:
    """A prompt-generation model: FLOPs, cycles per FLOP and CIDEr quality."""

    flops: float
    intensity: float
    quality: float
    name: str = ""

    def __post_init__(self) -> None:
        if not (self.flops > 0 and self.intensity > 0 and self.quality > 0):
            raise ValueError(f"ModelProfile fields must be positive: {self}")

    @property
    def cycles(self) -> float:
        return self.flops * self.intensity


@dataclass(frozen=True)
class TransmitterProfile:
    source_bits: float
    prompt_bits: float
    device_model: ModelProfile
    p_max: float
    f_max_local: float
    kappa_eff: float
    e_max: float

    def __post_init__(self) -> None:
        if not self.source_bits > self.prompt_bits > 0:
            raise ValueError("need source_bits > prompt_bits > 0")
        if not (self.p_max > 0 and self.f_max_local > 0 and self.e_max > 0 and self.kappa_eff > 0):
            raise ValueError(f"TransmitterProfile budgets must be positive: {self}")


@dataclass(frozen=True)
class ServerProfile:
    """Edge server with its model; quality_table[n] is Q'_{n,k} for transmitter n."""

    edge_model: ModelProfile
    quality_table: Tuple[float, ...]
    p_hat_max: float
    f_max_edge: float
    capacity: int

    def __post_init__(self) -> None:
        if not (self.p_hat_max > 0 and self.f_max_edge > 0 and self.capacity >= 1):
            raise ValueError(f"ServerProfile budgets must be positive: {self}")
        if not all(q > 0 for q in self.quality_table):
            raise ValueError("quality table entries must be positive")

    def quality_for(self, n: int) -> float:
        return self.quality_table[n]


@dataclass(frozen=True)
class Assignment:
    """Per-transmitter choice: None means local generation, k means offload to server k."""

    servers: Tuple[Optional[int], ...]

    @classmethod
    def all_local(cls, n_transmitters: int) -> "Assignment":
        return cls((None,) * n_transmitters)

    def __len__(self) -> int:
        return len(self.servers)

    def members(self, k: int) -> Tuple[int, ...]:
        return tuple(n for n, choice in enumerate(self.servers) if choice == k)

    def local_transmitters(self) -> Tuple[int, ...]:
        return tuple(n for n, choice in enumerate(self.servers) if choice is None)

    @property
    def offloaded_count(self) -> int:
        return sum(1 for choice in self.servers if choice is not None)

    def with_choice(self, n: int, choice: Optional[int]) -> "Assignment":
        servers = list(self.servers)
        servers[n] = choice
        return Assignment(tuple(servers))

    def swapped(self, n: int, m: int) -> "Assignment":
        servers = list(self.servers)
        servers[n], servers[m] = servers[m], servers[n]
        return Assignment(tuple(servers))

    def respects_capacity(self, capacities: Sequence[int]) -> bool:
        return all(len(self.members(k)) <= cap for k, cap in enumerate(capacities))


@dataclass(frozen=True)
class LocalResources:
    f_local: float
    tau_tr: float


@dataclass(frozen=True)
class OffloadResources:
    server: int
    tau_up: float
    f_edge: float
    tau_down: float


Resources = Union[LocalResources, OffloadResources]


@dataclass(frozen=True)
class ResourceAllocation:
    entries: Tuple[Resources, ...]

    @property
    def assignment(self) -> Assignment:
        return Assignment(
            tuple(entry.server if isinstance(entry, OffloadResources) else None for entry in self.entries)
        )


@dataclass(frozen=True)
class PairOutcome:
    latency: float
    energy: float
    quality: float
    ccq: float


@dataclass(frozen=True)
class NetworkRealization:
    """One fading block: profiles, gains and the shared noise/bandwidth."""

    transmitters: Tuple[TransmitterProfile, ...]
    servers: Tuple[ServerProfile, ...]
    gains: ChannelGains
    noise_w: float
    bandwidth_hz: float
    geometry: Optional[Geometry] = None

    @property
    def n_transmitters(self) -> int:
        return len(self.transmitters)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    @property
    def capacities(self) -> Tuple[int, ...]:
        return tuple(server.capacity for server in self.servers)

    def with_unit_quality(self) -> "NetworkRealization":
        """Copy with every quality set to 1, so CCQ reduces to latency."""
        transmitters = tuple(
            replace(tx, device_model=replace(tx.device_model, quality=1.0)) for tx in self.transmitters
        )
        servers = tuple(
            replace(
                server,
                edge_model=replace(server.edge_model, quality=1.0),
                quality_table=(1.0,) * len(server.quality_table),
            )
            for server in self.servers
        )
        return replace(self, transmitters=transmitters, servers=servers)


def local_compute_latency(model: ModelProfile, f_local: float) -> float:
    """On-device generation time F*I/f."""
    if not f_local > 0:
        raise ValueError(f"computation frequency must be positive, got {f_local}")
    return model.cycles / f_local


def local_compute_energy(model: ModelProfile, f_local: float, kappa_eff: float) -> float:
    """On-device generation energy kappa*F*I*f^2."""
    if f_local < 0:
        raise ValueError(f"computation frequency must be non-negative, got {f_local}")
    return kappa_eff * model.cycles * f_local**2


def shannon_rate(p: float, gain: float, noise: float, bandwidth: float) -> float:
    """Achievable rate B*log2(1 + p*gain/noise) in bits/s."""
    return bandwidth * math.log1p(p * gain / noise) / LN2


def power_from_exponent(x: float, gain: float, noise: float) -> float:
    """Power needed for rate exponent x = bits/(B*tau): (2^x - 1)*noise/gain."""
    return math.expm1(x * LN2) * noise / gain


def power_from_latency(
    bits: float,
    tau: float,
    gain: float,
    noise: float,
    bandwidth: float,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
) -> float:
    """Transmit power that delivers `bits` in exactly `tau` seconds.

    Raises:
        ValueError: If tau is not positive.
        PowerInfeasibleError: If bits/(B*tau) exceeds exponent_cap.
    """
    if not tau > 0:
        raise ValueError(f"latency must be positive, got {tau}")
    x = bits / (bandwidth * tau)
    # latencies derived from the cap itself round to a hair above it
    if x > exponent_cap * (1.0 + 1e-12):
        raise PowerInfeasibleError(
            f"power demand infeasible: rate exponent {x:.3g} exceeds cap {exponent_cap:g}"
        )
    return power_from_exponent(x, gain, noise)


def local_pair_outcome(
    tx: TransmitterProfile,
    entry: LocalResources,
    gain_direct: float,
    noise: float,
    bandwidth: float,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
) -> PairOutcome:
    p = power_from_latency(tx.prompt_bits, entry.tau_tr, gain_direct, noise, bandwidth, exponent_cap)
    latency = local_compute_latency(tx.device_model, entry.f_local) + entry.tau_tr
    energy = local_compute_energy(tx.device_model, entry.f_local, tx.kappa_eff) + p * entry.tau_tr
    quality = tx.device_model.quality
    return PairOutcome(latency=latency, energy=energy, quality=quality, ccq=latency / quality)


def offload_pair_outcome(
    tx: TransmitterProfile,
    server: ServerProfile,
    quality: float,
    entry: OffloadResources,
    gain_up: float,
    noise: float,
    bandwidth: float,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
) -> PairOutcome:
    p = power_from_latency(tx.source_bits, entry.tau_up, gain_up, noise, bandwidth, exponent_cap)
    if not (entry.f_edge > 0 and entry.tau_down > 0):
        raise ValueError(f"offload resources must be positive: {entry}")
    latency = entry.tau_up + server.edge_model.cycles / entry.f_edge + entry.tau_down
    return PairOutcome(latency=latency, energy=p * entry.tau_up, quality=quality, ccq=latency / quality)


def pair_outcome(
    n: int,
    entry: Resources,
    realization: NetworkRealization,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
) -> PairOutcome:
    """Latency, transmitter energy, delivered quality and CCQ of pair n.

    Raises:
        PowerInfeasibleError: If a link latency needs a rate exponent above the cap.
    """
    tx = realization.transmitters[n]
    gains = realization.gains
    noise, bandwidth = realization.noise_w, realization.bandwidth_hz

    if isinstance(entry, LocalResources):
        return local_pair_outcome(tx, entry, float(gains.h_direct[n]), noise, bandwidth, exponent_cap)
    server = realization.servers[entry.server]
    return offload_pair_outcome(
        tx,
        server,
        server.quality_for(n),
        entry,
        float(gains.h_up[n, entry.server]),
        noise,
        bandwidth,
        exponent_cap,
    )


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    subject: str
    value: float
    limit: float
    ok: bool

    @property
    def slack(self) -> float:
        return self.limit - self.value


@dataclass(frozen=True)
class FeasibilityReport:
    checks: Tuple[ConstraintCheck, ...]

    @property
    def feasible(self) -> bool:
        return all(check.ok for check in self.checks)

    def violations(self) -> List[ConstraintCheck]:
        return [check for check in self.checks if not check.ok]

    def find(self, name: str, subject: str) -> ConstraintCheck:
        for check in self.checks:
            if check.name == name and check.subject == subject:
                return check
        raise KeyError(f"no {name} check for {subject}")


def _check(name: str, subject: str, value: float, limit: float, rel_tol: float) -> ConstraintCheck:
    ok = value <= limit + rel_tol * abs(limit)
    return ConstraintCheck(name=name, subject=subject, value=value, limit=limit, ok=ok)


def _safe_power(bits: float, tau: float, gain: float, noise: float, bandwidth: float, cap: float) -> float:
    try:
        return power_from_latency(bits, tau, gain, noise, bandwidth, cap)
    except ValueError:
        return math.inf


def check_feasible(
    assignment: Assignment,
    resources: ResourceAllocation,
    realization: NetworkRealization,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
    rel_tol: float = 1e-9,
) -> FeasibilityReport:
    """Evaluate every constraint of the joint problem; never raises.

    Returns a report with one check per (constraint, subject) and its slack.
    """
    checks: List[ConstraintCheck] = []
    gains = realization.gains
    noise, bandwidth = realization.noise_w, realization.bandwidth_hz

    consistent = len(resources.entries) == len(assignment) and resources.assignment == assignment
    checks.append(ConstraintCheck("assignment", "all", float(not consistent), 0.0, consistent))

    for k, server in enumerate(realization.servers):
        count = len(assignment.members(k))
        checks.append(_check("capacity", f"server {k}", float(count), float(server.capacity), 0.0))

    edge_freq = [0.0] * realization.n_servers
    edge_power = [0.0] * realization.n_servers

    for n, entry in enumerate(resources.entries):
        tx = realization.transmitters[n]
        subject = f"tx {n}"
        if isinstance(entry, LocalResources):
            positive = entry.f_local > 0 and entry.tau_tr > 0
            checks.append(ConstraintCheck("positivity", subject, float(not positive), 0.0, positive))
            if not positive:
                continue
            p = _safe_power(tx.prompt_bits, entry.tau_tr, float(gains.h_direct[n]), noise, bandwidth, exponent_cap)
            energy = local_compute_energy(tx.device_model, entry.f_local, tx.kappa_eff) + p * entry.tau_tr
            checks.append(_check("tx_power", subject, p, tx.p_max, rel_tol))
            checks.append(_check("local_frequency", subject, entry.f_local, tx.f_max_local, rel_tol))
        else:
            positive = entry.tau_up > 0 and entry.f_edge > 0 and entry.tau_down > 0
            checks.append(ConstraintCheck("positivity", subject, float(not positive), 0.0, positive))
            if not positive or not 0 <= entry.server < realization.n_servers:
                continue
            k = entry.server
            p = _safe_power(tx.source_bits, entry.tau_up, float(gains.h_up[n, k]), noise, bandwidth, exponent_cap)
            energy = p * entry.tau_up
            checks.append(_check("tx_power", subject, p, tx.p_max, rel_tol))
            edge_freq[k] += entry.f_edge
            edge_power[k] += _safe_power(
                tx.prompt_bits, entry.tau_down, float(gains.h_down[k, n]), noise, bandwidth, exponent_cap
            )
        checks.append(_check("energy", subject, energy, tx.e_max, rel_tol))

    for k, server in enumerate(realization.servers):
        checks.append(_check("edge_frequency", f"server {k}", edge_freq[k], server.f_max_edge, rel_tol))
        checks.append(_check("edge_power", f"server {k}", edge_power[k], server.p_hat_max, rel_tol))

    return FeasibilityReport(tuple(checks))
