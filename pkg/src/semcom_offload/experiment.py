"""Monte-Carlo trials: scenario sampling, scheme runs, sweeps and aggregation.

Each trial owns independent random substreams derived from the master seed by
SeedSequence(seed, spawn_key=(trial_id, stream)), so adding trials never changes
earlier ones and trials can be reordered freely.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from semcom_offload.benchmarks import FODPG, FOPG, PROPOSED, SCHEME_NAMES, SUO, SolveOutcome, run_scheme
from semcom_offload.cache import config_fingerprint, load_cache, make_cache_key, save_cache
from semcom_offload.channel import noise_power, sample_gains, sample_geometry
from semcom_offload.config import QUALITY_PREFIX, ConfigError, ConfigRangeError, ScenarioConfig
from semcom_offload.inner_solver import SolverSettings, SubproblemCache
from semcom_offload.system_model import Assignment, ModelProfile, NetworkRealization, ServerProfile, TransmitterProfile

logger = logging.getLogger(__name__)

STREAM_REALIZATION = 0
SCHEME_STREAMS: Dict[str, int] = {PROPOSED: 1, SUO: 2, FOPG: 3, FODPG: 4}


def solver_settings(config: ScenarioConfig) -> SolverSettings:
    return SolverSettings(
        phi_tolerance=config.phi_tolerance,
        dual_tolerance=config.dual_tolerance,
        scalar_tolerance=config.scalar_tolerance,
        max_iterations=config.max_iterations,
        exponent_cap=config.exponent_cap,
    )


def trial_rng(seed: int, trial_id: int, stream: int) -> np.random.Generator:
    """Counter-based substream: depends only on (seed, trial_id, stream)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial_id, stream)))


def _model(config: ScenarioConfig, arch: str) -> ModelProfile:
    key = (arch, config.prompt_bits)
    if key not in config.quality:
        raise ConfigRangeError(
            f"{QUALITY_PREFIX}{arch}.{config.prompt_bits}: no CIDEr entry for architecture {arch!r} "
            f"at prompt length {config.prompt_bits} bits"
        )
    return ModelProfile(
        flops=config.flops[arch], intensity=config.intensity, quality=config.quality[key], name=arch
    )


def build_realization(config: ScenarioConfig, rng: np.random.Generator) -> NetworkRealization:
    """Sample one fading block with per-node budgets and model architectures.

    Draw order: geometry, gains, device frequencies, edge frequencies, device
    architectures, edge architectures. Device frequencies are drawn even when
    fixed, so a fixed-frequency sweep sees the same geometry and models at
    every point.

    Raises:
        ConfigRangeError: If an architecture has no CIDEr entry for the prompt length.
    """
    n_tx, n_servers = config.n_transmitters, config.n_servers
    geometry = sample_geometry(config, rng)
    gains = sample_gains(geometry, config, rng)

    f_local = rng.uniform(*config.device_freq_range_hz, size=n_tx)
    if config.device_freq_fixed_hz is not None:
        f_local = np.full(n_tx, config.device_freq_fixed_hz)
    f_edge = rng.uniform(*config.server_freq_range_hz, size=n_servers)
    device_arch = [config.device_pool[i] for i in rng.integers(len(config.device_pool), size=n_tx)]
    edge_arch = [config.edge_pool[i] for i in rng.integers(len(config.edge_pool), size=n_servers)]

    transmitters = tuple(
        TransmitterProfile(
            source_bits=config.source_bits,
            prompt_bits=float(config.prompt_bits),
            device_model=_model(config, arch),
            p_max=config.tx_power_max_w,
            f_max_local=float(f_local[n]),
            kappa_eff=config.kappa_eff,
            e_max=config.energy_budget_j,
        )
        for n, arch in enumerate(device_arch)
    )
    servers = []
    for k, arch in enumerate(edge_arch):
        model = _model(config, arch)
        servers.append(
            ServerProfile(
                edge_model=model,
                quality_table=(model.quality,) * n_tx,
                p_hat_max=config.server_power_max_w,
                f_max_edge=float(f_edge[k]),
                capacity=config.server_capacity,
            )
        )
    return NetworkRealization(
        transmitters=transmitters,
        servers=tuple(servers),
        gains=gains,
        noise_w=noise_power(config.noise_psd_dbm_hz, config.bandwidth_hz),
        bandwidth_hz=config.bandwidth_hz,
        geometry=geometry,
    )


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    outcomes: Tuple[SolveOutcome, ...]

    @property
    def schemes(self) -> Tuple[str, ...]:
        return tuple(outcome.scheme for outcome in self.outcomes)

    def outcome(self, scheme: str) -> SolveOutcome:
        for outcome in self.outcomes:
            if outcome.scheme == scheme:
                return outcome
        raise KeyError(f"trial {self.trial_id} has no {scheme} outcome")

    def to_dict(self) -> Dict[str, Any]:
        return {"trial_id": self.trial_id, "outcomes": [outcome.to_dict() for outcome in self.outcomes]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrialRecord":
        return cls(
            trial_id=int(data["trial_id"]),
            outcomes=tuple(SolveOutcome.from_dict(item) for item in data["outcomes"]),
        )


@dataclass(frozen=True)
class SchemeAggregate:
    """Means exclude infeasible trials; NaN when no trial was feasible."""

    scheme: str
    trials: int
    feasible_trials: int
    mean_max_ccq: float
    max_max_ccq: float
    mean_offloaded: float
    ccq_mean: float
    ccq_variance: float
    mean_max_latency: float
    mean_cider: float
    mean_min_cider: float
    mean_max_cider: float

    @property
    def infeasible_trials(self) -> int:
        return self.trials - self.feasible_trials

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "trials": self.trials,
            "feasible_trials": self.feasible_trials,
            "infeasible_trials": self.infeasible_trials,
            "mean_max_ccq": self.mean_max_ccq,
            "max_max_ccq": self.max_max_ccq,
            "mean_offloaded": self.mean_offloaded,
            "ccq_mean": self.ccq_mean,
            "ccq_variance": self.ccq_variance,
            "mean_max_latency": self.mean_max_latency,
            "mean_cider": self.mean_cider,
            "mean_min_cider": self.mean_min_cider,
            "mean_max_cider": self.mean_max_cider,
        }


@dataclass(frozen=True)
class ExperimentResult:
    records: Tuple[TrialRecord, ...]
    aggregates: Dict[str, SchemeAggregate]
    errored: Tuple[int, ...] = ()
    cached: int = 0


@dataclass(frozen=True)
class SweepPoint:
    key: str
    value: Any
    result: ExperimentResult


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def fairness_stats(records: Sequence[TrialRecord], scheme: str) -> Tuple[float, float]:
    """Mean and population variance of per-pair CCQ, pooled over feasible trials.

    Raises:
        ValueError: If no record holds a feasible outcome for the scheme.
    """
    pooled = [
        ccq
        for record in records
        if scheme in record.schemes and record.outcome(scheme).feasible
        for ccq in record.outcome(scheme).ccq
    ]
    if not pooled:
        raise ValueError(f"no feasible {scheme} outcomes to compute fairness statistics from")
    mean = _mean(pooled)
    variance = math.fsum((ccq - mean) ** 2 for ccq in pooled) / len(pooled)
    return mean, variance


def aggregate(records: Sequence[TrialRecord], scheme: str) -> SchemeAggregate:
    outcomes = [record.outcome(scheme) for record in records if scheme in record.schemes]
    feasible = [outcome for outcome in outcomes if outcome.feasible]
    if feasible:
        ccq_mean, ccq_variance = fairness_stats(records, scheme)
    else:
        ccq_mean, ccq_variance = math.nan, math.nan
    return SchemeAggregate(
        scheme=scheme,
        trials=len(outcomes),
        feasible_trials=len(feasible),
        mean_max_ccq=_mean([o.max_ccq for o in feasible]),
        max_max_ccq=max((o.max_ccq for o in feasible), default=math.nan),
        mean_offloaded=_mean([float(o.offloaded_count) for o in feasible]),
        ccq_mean=ccq_mean,
        ccq_variance=ccq_variance,
        mean_max_latency=_mean([o.max_latency for o in feasible]),
        mean_cider=_mean([o.mean_cider for o in feasible]),
        mean_min_cider=_mean([o.min_cider for o in feasible]),
        mean_max_cider=_mean([o.max_cider for o in feasible]),
    )


def run_trial(
    config: ScenarioConfig,
    trial_id: int,
    schemes: Sequence[str] = SCHEME_NAMES,
    settings: Optional[SolverSettings] = None,
) -> TrialRecord:
    """One realization, every requested scheme, each on its own substream.

    The proposed scheme also starts from the SUO matching, so SUO is solved
    whenever either of them is requested.
    """
    if settings is None:
        settings = solver_settings(config)
    realization = build_realization(config, trial_rng(config.seed, trial_id, STREAM_REALIZATION))
    cache = SubproblemCache()
    order = [SUO] if SUO in schemes or PROPOSED in schemes else []
    order += [scheme for scheme in schemes if scheme != SUO]
    outcomes: Dict[str, SolveOutcome] = {}
    for scheme in order:
        rng = trial_rng(config.seed, trial_id, SCHEME_STREAMS[scheme])
        starts = (Assignment(outcomes[SUO].assignment),) if scheme == PROPOSED else ()
        outcome = run_scheme(
            scheme,
            realization,
            settings,
            rng,
            restarts=config.restarts,
            max_operations=config.max_operations,
            cache=cache,
            starts=starts,
        )
        if not outcome.feasible and scheme in schemes:
            logger.warning(f"Trial {trial_id}: {scheme} infeasible ({outcome.reason})")
        outcomes[scheme] = outcome
    logger.debug(f"Trial {trial_id}: {cache.misses} subproblem solves, {cache.hits} cache hits")
    return TrialRecord(trial_id=trial_id, outcomes=tuple(outcomes[scheme] for scheme in schemes))


def _check_schemes(schemes: Sequence[str]) -> None:
    unknown = [scheme for scheme in schemes if scheme not in SCHEME_STREAMS]
    if unknown:
        raise ValueError(f"unknown scheme(s) {', '.join(unknown)}; expected {', '.join(SCHEME_NAMES)}")


def run_trials(
    config: ScenarioConfig,
    schemes: Sequence[str] = SCHEME_NAMES,
    cache_dir: Optional[str] = None,
) -> ExperimentResult:
    """Run config.trials independent trials and aggregate per scheme.

    Args:
        config: Scenario to sample from
        schemes: Scheme names to run on every realization
        cache_dir: Trial-record cache directory, or None to disable caching

    Returns:
        Records in trial order, per-scheme aggregates and the ids of errored trials.
    """
    _check_schemes(schemes)
    settings = solver_settings(config)
    fingerprint = config_fingerprint(config)
    records: List[TrialRecord] = []
    errored: List[int] = []
    cached_count = 0

    for trial_id in range(config.trials):
        cache_key = make_cache_key(fingerprint, config.seed, trial_id, schemes)
        if cache_dir is not None:
            cached = load_cache(cache_dir, cache_key)
            if cached is not None:
                try:
                    records.append(TrialRecord.from_dict(cached))
                    cached_count += 1
                    logger.debug(f"Cache hit: trial {trial_id}")
                    continue
                except (KeyError, TypeError, ValueError) as e:
                    logger.warning(f"Ignoring malformed cache entry for trial {trial_id}: {e}")

        logger.info(f"Trial {trial_id + 1}/{config.trials}")
        try:
            record = run_trial(config, trial_id, schemes, settings)
        except (ValueError, ArithmeticError) as e:
            # Expected numerical failures: count the trial and keep going
            logger.warning(f"Trial {trial_id} failed: {e}. Skipping.")
            errored.append(trial_id)
            continue
        except ConfigError:
            raise
        except Exception as e:
            logger.error(f"Unexpected error in trial {trial_id}: {e}", exc_info=True)
            raise

        if cache_dir is not None:
            save_cache(cache_dir, cache_key, record.to_dict())
        records.append(record)

    aggregates = {scheme: aggregate(records, scheme) for scheme in schemes}
    return ExperimentResult(tuple(records), aggregates, tuple(errored), cached_count)


def run_sweep(
    config: ScenarioConfig,
    key: str,
    values: Sequence[Any],
    schemes: Sequence[str] = SCHEME_NAMES,
    cache_dir: Optional[str] = None,
) -> List[SweepPoint]:
    """Re-run the experiment with one key (or sweep alias) set to each value in turn.

    Raises:
        ConfigError: If the key is unknown or a value is out of range.
    """
    point_configs = [config.with_value(key, value) for value in values]
    points = []
    for value, point_config in zip(values, point_configs):
        logger.info(f"Sweep point {key}={value}")
        points.append(SweepPoint(key, value, run_trials(point_config, schemes, cache_dir)))
    return points
