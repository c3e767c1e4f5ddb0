"""Tests for pipeline module."""

import json
import math
from pathlib import Path
from unittest.mock import patch

from semcom_offload.benchmarks import FODPG, FOPG, PROPOSED, SUO, SolveOutcome
from semcom_offload.config import ConfigRangeError
from semcom_offload.experiment import ExperimentResult, SweepPoint, TrialRecord, aggregate
from semcom_offload.oracles import OracleReport
from semcom_offload.pipeline import (
    comparison_table,
    ensure_output_dir,
    run_experiment,
    run_oracle_check,
    run_sweep_experiment,
)


def _outcome(scheme, latency, quality, assignment=(None, None)):
    return SolveOutcome(
        scheme=scheme,
        feasible=True,
        assignment=assignment,
        latency=latency,
        energy=(0.1, 0.1),
        quality=quality,
        ccq=tuple(t / q for t, q in zip(latency, quality)),
        objective=max(t / q for t, q in zip(latency, quality)),
    )


def _result(errored=()):
    records = [
        TrialRecord(
            0,
            (
                _outcome(PROPOSED, (0.012, 0.016), (57.1, 76.6), (None, 0)),
                _outcome(FOPG, (0.145, 0.140), (76.6, 76.6), (0, 0)),
                _outcome(FODPG, (0.010, 0.008), (57.1, 57.1)),
                _outcome(SUO, (0.011, 0.018), (57.1, 57.1), (None, 1)),
            ),
        )
    ]
    aggregates = {scheme: aggregate(records, scheme) for scheme in (PROPOSED, FOPG, FODPG, SUO)}
    return ExperimentResult(tuple(records), aggregates, tuple(errored))


def test_ensure_output_dir(tmp_out, tmp_path):
    """Creates missing directories; refuses paths below a file."""
    assert ensure_output_dir(tmp_out)
    assert Path(tmp_out).is_dir()
    assert not list(Path(tmp_out).iterdir())

    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert not ensure_output_dir(str(blocker / "sub"))


def test_run_experiment_writes_outputs(small_config, tmp_out):
    """Happy path: results.csv and summary.json written, exit 0."""
    with patch("semcom_offload.pipeline.run_trials", return_value=_result()) as mock_run:
        assert run_experiment(small_config, tmp_out) == 0

    mock_run.assert_called_once()
    assert (Path(tmp_out) / "results.csv").read_text().count("\n") == 1 + 4
    summary = json.loads((Path(tmp_out) / "summary.json").read_text())
    assert summary["command"] == "run"
    assert set(summary["schemes"]) == {PROPOSED, FOPG, FODPG, SUO}
    assert "comparison" not in summary


def test_run_experiment_compare_adds_table(small_config, tmp_out):
    """compare adds per-scheme latency and CIDEr with the latency ordering."""
    with patch("semcom_offload.pipeline.run_trials", return_value=_result()):
        assert run_experiment(small_config, tmp_out, compare=True) == 0

    summary = json.loads((Path(tmp_out) / "summary.json").read_text())
    assert summary["command"] == "compare"
    assert summary["comparison"]["latency_order"] == [FODPG, PROPOSED, SUO, FOPG]
    assert summary["comparison"]["table"][FOPG]["mean_cider"] == 76.6
    assert summary["comparison"]["table"][PROPOSED]["mean_max_cider"] == 76.6
    assert summary["comparison"]["table"][SUO]["mean_max_cider"] == 57.1


def test_summary_ignores_cache_hits(small_config, tmp_path):
    """A re-run served from the cache writes the same summary.json bytes."""
    fresh = _result()
    cached = ExperimentResult(fresh.records, fresh.aggregates, fresh.errored, cached=len(fresh.records))
    outputs = []
    for name, result in (("first", fresh), ("second", cached)):
        out = tmp_path / name
        with patch("semcom_offload.pipeline.run_trials", return_value=result):
            assert run_experiment(small_config, str(out)) == 0
        outputs.append((out / "summary.json").read_bytes())

    assert outputs[0] == outputs[1]
    assert b"cached" not in outputs[0]


def test_run_experiment_errored_trials_exit_1(small_config, tmp_out):
    """Errored trials still write outputs but the status is 1."""
    with patch("semcom_offload.pipeline.run_trials", return_value=_result(errored=(2,))):
        assert run_experiment(small_config, tmp_out) == 1

    summary = json.loads((Path(tmp_out) / "summary.json").read_text())
    assert summary["errored_trials"] == [2]


def test_run_experiment_unwritable_dir(small_config, tmp_path):
    """Unwritable output directory is status 7 and nothing runs."""
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with patch("semcom_offload.pipeline.run_trials") as mock_run:
        assert run_experiment(small_config, str(blocker / "out")) == 7
    mock_run.assert_not_called()


def test_run_experiment_unexpected_error(small_config, tmp_out):
    """Unexpected failures are logged and reported as 1."""
    with patch("semcom_offload.pipeline.run_trials", side_effect=RuntimeError("boom")):
        assert run_experiment(small_config, tmp_out) == 1


def test_run_sweep_experiment(small_config, tmp_out):
    """Sweep writes sweep.csv and a summary listing every point."""
    points = [SweepPoint("prompt_bits", 400, _result()), SweepPoint("prompt_bits", 600, _result())]
    with patch("semcom_offload.pipeline.run_sweep", return_value=points):
        assert run_sweep_experiment(small_config, "prompt_bits", [400, 600], tmp_out) == 0

    assert (Path(tmp_out) / "sweep.csv").read_text().count("\n") == 1 + 2 * 4
    summary = json.loads((Path(tmp_out) / "summary.json").read_text())
    assert [point["value"] for point in summary["sweep"]] == [400, 600]


def test_run_sweep_experiment_config_error(small_config, tmp_out):
    """A bad sweep value maps to the range-error status."""
    with patch("semcom_offload.pipeline.run_sweep", side_effect=ConfigRangeError("task.prompt_bits: must be > 0")):
        assert run_sweep_experiment(small_config, "prompt_bits", [-1], tmp_out) == 6


def test_run_oracle_check_statuses(small_config, tmp_out):
    """0 when every check passes, 8 otherwise; the report lands in the summary."""
    passing = OracleReport()
    passing.add("slj_stable", True, "0/2 unstable")
    failing = OracleReport()
    failing.add("inner_vs_grid", False, "1 failing assignments over 2 instances")

    with patch("semcom_offload.pipeline.run_oracle_suite", return_value=passing):
        assert run_oracle_check(small_config, tmp_out, instances=2) == 0
    with patch("semcom_offload.pipeline.run_oracle_suite", return_value=failing):
        assert run_oracle_check(small_config, tmp_out, instances=2) == 8

    summary = json.loads((Path(tmp_out) / "summary.json").read_text())
    assert summary["oracle"]["passed"] is False
    assert summary["oracle"]["checks"][0]["name"] == "inner_vs_grid"


def test_comparison_table_skips_all_infeasible():
    """Schemes without a feasible trial are left out of the ordering."""
    records = [TrialRecord(0, (SolveOutcome(scheme=FOPG, feasible=False, assignment=(None,)),))]
    result = ExperimentResult(tuple(records), {FOPG: aggregate(records, FOPG)})
    table = comparison_table(result)

    assert table["latency_order"] == []
    assert math.isnan(table["table"][FOPG]["mean_max_latency"])
