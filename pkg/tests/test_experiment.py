"""Tests for experiment module."""

import math
from unittest.mock import patch

import numpy as np
import pytest

from semcom_offload.benchmarks import FODPG, FOPG, PROPOSED, SUO, SolveOutcome
from semcom_offload.channel import noise_power
from semcom_offload.config import ConfigRangeError, ScenarioConfig
from semcom_offload.experiment import (
    TrialRecord,
    aggregate,
    build_realization,
    fairness_stats,
    run_sweep,
    run_trial,
    run_trials,
    trial_rng,
)


@pytest.fixture
def tiny_config():
    """Two transmitters and one server: quick trials."""
    return (
        ScenarioConfig()
        .with_value("network.transmitters", 2)
        .with_value("network.servers", 1)
        .with_value("experiment.trials", 3)
        .with_value("experiment.seed", 5)
    )


def _outcome(scheme, ccq, feasible=True, assignment=None):
    n = len(ccq)
    return SolveOutcome(
        scheme=scheme,
        feasible=feasible,
        assignment=assignment or (None,) * n,
        latency=tuple(c * 57.1 for c in ccq) if feasible else (),
        energy=(0.5,) * n if feasible else (),
        quality=(57.1,) * n if feasible else (),
        ccq=tuple(ccq) if feasible else (),
        objective=max(ccq) if feasible else math.inf,
    )


def test_trial_rng_substreams():
    """Substreams depend only on (seed, trial, stream)."""
    first = trial_rng(7, 3, 0).random(4)

    assert np.array_equal(first, trial_rng(7, 3, 0).random(4))
    assert not np.array_equal(first, trial_rng(7, 4, 0).random(4))
    assert not np.array_equal(first, trial_rng(7, 3, 1).random(4))
    assert not np.array_equal(first, trial_rng(8, 3, 0).random(4))


def test_build_realization_shapes_and_ranges(default_config):
    """Profiles follow the configured counts, ranges and noise."""
    realization = build_realization(default_config, trial_rng(0, 0, 0))

    assert realization.n_transmitters == 4
    assert realization.n_servers == 4
    assert realization.capacities == (3, 3, 3, 3)
    assert realization.noise_w == noise_power(-174.0, 2.0e6)
    for tx in realization.transmitters:
        assert 3.0e9 <= tx.f_max_local <= 6.0e9
        assert tx.p_max == pytest.approx(0.1)
        assert tx.device_model.name in ("S/16", "M/16")
        assert tx.device_model.quality in (57.1, 62.0)
    for server in realization.servers:
        assert 11.0e9 <= server.f_max_edge <= 14.0e9
        assert server.p_hat_max == pytest.approx(1.0)
        assert server.edge_model.name in ("B/16", "L/14")
        assert server.quality_table == (server.edge_model.quality,) * 4


def test_build_realization_edge_l14_at_400_bits():
    """L/14 at 400-bit prompts: CIDEr 76.6 and 161.8 GFLOPs."""
    config = ScenarioConfig().with_value("models.edge_pool", ["L/14"])
    realization = build_realization(config, trial_rng(0, 0, 0))

    for server in realization.servers:
        assert server.edge_model.quality == 76.6
        assert server.edge_model.flops == 161.8e9
        assert server.quality_for(0) == 76.6


def test_build_realization_device_m16_at_600_bits():
    """M/16 at 600-bit prompts: CIDEr 71.4."""
    config = ScenarioConfig().with_value("task.prompt_bits", 600).with_value("models.device_pool", ["M/16"])
    realization = build_realization(config, trial_rng(0, 0, 0))

    assert all(tx.device_model.quality == 71.4 for tx in realization.transmitters)
    assert all(tx.prompt_bits == 600.0 for tx in realization.transmitters)


def test_build_realization_missing_quality_entry():
    """An architecture without CIDEr for the prompt length names the missing key."""
    config = (
        ScenarioConfig()
        .with_value("models.flops.T/8", 4.0e9)
        .with_value("models.device_pool", ["T/8"])
    )
    with pytest.raises(ConfigRangeError, match="models.quality.T/8.400"):
        build_realization(config, trial_rng(0, 0, 0))


def test_build_realization_is_deterministic(default_config):
    """Equal substreams give identical realizations."""
    a = build_realization(default_config, trial_rng(3, 1, 0))
    b = build_realization(default_config, trial_rng(3, 1, 0))

    assert a.transmitters == b.transmitters
    assert a.servers == b.servers
    assert np.array_equal(a.gains.h_up, b.gains.h_up)


def test_fixed_frequency_keeps_common_random_numbers(default_config):
    """Fixing f_max_local changes nothing but the device frequencies."""
    sampled = build_realization(default_config, trial_rng(0, 2, 0))
    fixed = build_realization(default_config.with_value("f_max_local", 9e9), trial_rng(0, 2, 0))

    assert all(tx.f_max_local == 9e9 for tx in fixed.transmitters)
    assert np.array_equal(sampled.gains.h_direct, fixed.gains.h_direct)
    assert [s.f_max_edge for s in sampled.servers] == [s.f_max_edge for s in fixed.servers]
    assert [t.device_model for t in sampled.transmitters] == [t.device_model for t in fixed.transmitters]


def test_fairness_stats_equal_ccq_has_zero_variance():
    """All ccq equal gives variance 0."""
    records = [TrialRecord(i, (_outcome(PROPOSED, [2e-4, 2e-4]),)) for i in range(3)]
    mean, variance = fairness_stats(records, PROPOSED)

    assert mean == pytest.approx(2e-4)
    assert variance == 0.0


def test_fairness_stats_pools_population_variance():
    """Pooled over pairs and trials, divided by the count."""
    records = [
        TrialRecord(0, (_outcome(PROPOSED, [1.0, 3.0]),)),
        TrialRecord(1, (_outcome(PROPOSED, [5.0]),)),
        TrialRecord(2, (_outcome(PROPOSED, [9.0], feasible=False),)),
    ]
    mean, variance = fairness_stats(records, PROPOSED)

    assert mean == pytest.approx(3.0)
    assert variance == pytest.approx(8.0 / 3.0)


def test_fairness_stats_single_pair():
    """One pair in one trial has zero variance."""
    assert fairness_stats([TrialRecord(0, (_outcome(SUO, [1e-3]),))], SUO) == (1e-3, 0.0)


def test_fairness_stats_empty():
    """No feasible outcome is an error."""
    with pytest.raises(ValueError, match="no feasible"):
        fairness_stats([TrialRecord(0, (_outcome(FOPG, [1.0], feasible=False),))], FOPG)


def test_aggregate_excludes_infeasible_trials():
    """Means skip infeasible trials, which are counted."""
    records = [
        TrialRecord(0, (_outcome(FOPG, [1e-3, 3e-3], assignment=(0, 1)),)),
        TrialRecord(1, (_outcome(FOPG, [2e-3, 2e-3], assignment=(0, 0)),)),
        TrialRecord(2, (_outcome(FOPG, [1.0], feasible=False),)),
    ]
    stats = aggregate(records, FOPG)

    assert stats.trials == 3
    assert stats.feasible_trials == 2
    assert stats.infeasible_trials == 1
    assert stats.mean_max_ccq == pytest.approx(2.5e-3)
    assert stats.max_max_ccq == 3e-3
    assert stats.mean_offloaded == 2.0
    assert stats.mean_cider == pytest.approx(57.1)


def test_aggregate_all_infeasible_is_nan():
    """Nothing feasible leaves NaN statistics."""
    stats = aggregate([TrialRecord(0, (_outcome(FOPG, [1.0], feasible=False),))], FOPG)

    assert stats.feasible_trials == 0
    assert math.isnan(stats.mean_max_ccq)
    assert math.isnan(stats.ccq_variance)


def test_single_trial_aggregate_equals_record(tiny_config):
    """trials = 1: aggregates are the record's own values."""
    config = tiny_config.with_value("experiment.trials", 1)
    result = run_trials(config, schemes=(FODPG, PROPOSED))

    for scheme in (FODPG, PROPOSED):
        outcome = result.records[0].outcome(scheme)
        stats = result.aggregates[scheme]
        assert stats.trials == 1
        assert stats.mean_max_ccq == outcome.max_ccq
        assert stats.mean_max_latency == outcome.max_latency
        assert stats.mean_offloaded == outcome.offloaded_count


def test_run_trials_is_deterministic(tiny_config):
    """Same config and seed give identical records and aggregates."""
    first = run_trials(tiny_config, schemes=(PROPOSED, FODPG))
    second = run_trials(tiny_config, schemes=(PROPOSED, FODPG))

    assert first.records == second.records
    assert first.aggregates == second.aggregates


def test_trials_are_append_only(tiny_config):
    """Growing the trial count keeps earlier records identical."""
    short = run_trials(tiny_config.with_value("experiment.trials", 2), schemes=(PROPOSED, SUO))
    longer = run_trials(tiny_config.with_value("experiment.trials", 3), schemes=(PROPOSED, SUO))

    assert longer.records[:2] == short.records


def test_trial_order_does_not_matter(tiny_config):
    """A trial computed alone equals the same trial inside a run, and aggregates ignore order."""
    result = run_trials(tiny_config, schemes=(PROPOSED, FODPG))
    alone = run_trial(tiny_config, 2, schemes=(PROPOSED, FODPG))

    assert alone == result.records[2]
    reversed_stats = aggregate(tuple(reversed(result.records)), PROPOSED)
    assert reversed_stats.mean_max_ccq == pytest.approx(result.aggregates[PROPOSED].mean_max_ccq, rel=1e-12)
    assert reversed_stats.ccq_variance == pytest.approx(result.aggregates[PROPOSED].ccq_variance, rel=1e-12)


def test_offloaded_count_bounds(small_config):
    """0 <= offloaded <= min(N, total capacity) for every scheme."""
    result = run_trials(small_config)
    limit = min(small_config.n_transmitters, small_config.n_servers * small_config.server_capacity)
    for record in result.records:
        assert record.schemes == (PROPOSED, FOPG, FODPG, SUO)
        for outcome in record.outcomes:
            assert 0 <= outcome.offloaded_count <= limit
            if outcome.feasible:
                assert len(outcome.ccq) == small_config.n_transmitters


def test_proposed_dominates_baselines_per_trial(small_config):
    """On every realization proposed max-CCQ is at most each feasible baseline's."""
    result = run_trials(small_config)
    for record in result.records:
        proposed = record.outcome(PROPOSED)
        for scheme in (FOPG, FODPG):
            other = record.outcome(scheme)
            if other.feasible:
                assert proposed.feasible
                assert proposed.max_ccq <= other.max_ccq
        suo = record.outcome(SUO)
        if suo.feasible:
            assert proposed.max_ccq <= suo.max_ccq * (1 + 1e-3)


def test_proposed_outcome_independent_of_scheme_selection(tiny_config):
    """Running proposed alone gives the same outcome as running every scheme."""
    alone = run_trial(tiny_config, 0, schemes=(PROPOSED,))
    full = run_trial(tiny_config, 0)

    assert alone.schemes == (PROPOSED,)
    assert alone.outcome(PROPOSED) == full.outcome(PROPOSED)


def test_aggregate_max_cider():
    """mean_max_cider averages each feasible trial's best CIDEr."""
    best = _outcome(PROPOSED, [1e-3, 2e-3])
    mixed = SolveOutcome(
        scheme=PROPOSED,
        feasible=True,
        assignment=(0, None),
        latency=(0.1, 0.1),
        energy=(0.1, 0.1),
        quality=(76.6, 57.1),
        ccq=(0.1 / 76.6, 0.1 / 57.1),
        objective=0.1 / 57.1,
    )
    stats = aggregate([TrialRecord(0, (best,)), TrialRecord(1, (mixed,))], PROPOSED)

    assert stats.mean_max_cider == pytest.approx((57.1 + 76.6) / 2)
    assert stats.to_dict()["mean_max_cider"] == stats.mean_max_cider


def test_run_trials_uses_cache(tiny_config, tmp_cache):
    """A second run loads every trial from the cache."""
    first = run_trials(tiny_config, schemes=(FODPG,), cache_dir=tmp_cache)
    with patch("semcom_offload.experiment.run_trial") as mock_trial:
        second = run_trials(tiny_config, schemes=(FODPG,), cache_dir=tmp_cache)

    mock_trial.assert_not_called()
    assert second.cached == 3
    assert second.records == first.records


def test_run_trials_records_errored_trials(tiny_config):
    """Expected numerical failures skip the trial and are reported."""
    real_run_trial = run_trial

    def flaky(config, trial_id, schemes, settings):
        if trial_id == 1:
            raise ArithmeticError("overflow in downlink exponent")
        return real_run_trial(config, trial_id, schemes, settings)

    with patch("semcom_offload.experiment.run_trial", side_effect=flaky):
        result = run_trials(tiny_config, schemes=(FODPG,))

    assert result.errored == (1,)
    assert [record.trial_id for record in result.records] == [0, 2]
    assert result.aggregates[FODPG].trials == 2


def test_run_trials_reraises_unexpected_errors(tiny_config):
    """Programming errors are not swallowed."""
    with patch("semcom_offload.experiment.run_trial", side_effect=RuntimeError("bug")):
        with pytest.raises(RuntimeError, match="bug"):
            run_trials(tiny_config, schemes=(FODPG,))


def test_run_trials_unknown_scheme(tiny_config):
    """Unknown scheme names are rejected up front."""
    with pytest.raises(ValueError, match="unknown scheme"):
        run_trials(tiny_config, schemes=("random",))


def test_run_sweep_points(tiny_config):
    """One point per value, with the key applied."""
    config = tiny_config.with_value("experiment.trials", 1)
    points = run_sweep(config, "f_max_local", [3e9, 9e9], schemes=(FODPG,))

    assert [point.value for point in points] == [3e9, 9e9]
    assert all(point.key == "f_max_local" for point in points)
    slow, fast = (point.result.aggregates[FODPG].mean_max_ccq for point in points)
    assert fast <= slow


def test_run_sweep_validates_before_running(tiny_config):
    """A bad value aborts the sweep before any trial runs."""
    with patch("semcom_offload.experiment.run_trials") as mock_run:
        with pytest.raises(ConfigRangeError):
            run_sweep(tiny_config, "prompt_bits", [400, -1])
    mock_run.assert_not_called()
