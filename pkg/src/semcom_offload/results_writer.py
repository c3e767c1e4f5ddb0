"""Write per-trial CSV, sweep CSV and summary JSON; read summaries back."""

import csv
import io
import json
import logging
import math
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from semcom_offload import __version__
from semcom_offload.config import ScenarioConfig, config_from_dict
from semcom_offload.experiment import ExperimentResult, SchemeAggregate, SweepPoint, TrialRecord

logger = logging.getLogger(__name__)

RESULTS_FILENAME = "results.csv"
SWEEP_FILENAME = "sweep.csv"
SUMMARY_FILENAME = "summary.json"

RESULTS_BASE_HEADER = (
    "trial_id",
    "scheme",
    "feasible",
    "max_ccq",
    "max_latency",
    "mean_cider",
    "min_cider",
    "offloaded_count",
)
SWEEP_HEADER = (
    "key",
    "value",
    "scheme",
    "trials",
    "feasible_trials",
    "mean_max_ccq",
    "max_max_ccq",
    "mean_offloaded",
    "ccq_mean",
    "ccq_variance",
    "mean_max_latency",
    "mean_cider",
    "mean_min_cider",
    "mean_max_cider",
)


def format_number(value: Any) -> str:
    """Locale-independent text for a CSV cell: repr for floats, inf/nan spelled out."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def results_header(n_transmitters: int) -> List[str]:
    return list(RESULTS_BASE_HEADER) + [f"ccq_{n}" for n in range(n_transmitters)]


def _atomic_write(path: Path, text: str) -> None:
    """Write to a temp file in the same directory, then rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        mode="w", encoding="utf-8", dir=path.parent, delete=False, suffix=".tmp", newline=""
    ) as tmp:
        tmp.write(text)
        tmp_path = tmp.name
    Path(tmp_path).replace(path)


def write_results_csv(path: str, records: Sequence[TrialRecord], n_transmitters: int) -> Path:
    """One row per (trial, scheme); infeasible rows leave the ccq columns empty.

    Returns:
        Path to the written file
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(results_header(n_transmitters))
    for record in records:
        for outcome in record.outcomes:
            ccq = [format_number(value) for value in outcome.ccq]
            ccq += [""] * (n_transmitters - len(ccq))
            writer.writerow(
                [
                    str(record.trial_id),
                    outcome.scheme,
                    format_number(outcome.feasible),
                    format_number(outcome.max_ccq),
                    format_number(outcome.max_latency),
                    format_number(outcome.mean_cider),
                    format_number(outcome.min_cider),
                    str(outcome.offloaded_count),
                ]
                + ccq
            )
    out = Path(path)
    _atomic_write(out, buffer.getvalue())
    logger.info(f"Wrote {len(records)} trials to {out}")
    return out


def write_sweep_csv(path: str, points: Sequence[SweepPoint]) -> Path:
    """One aggregate row per (sweep value, scheme)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for point in points:
        for scheme, agg in point.result.aggregates.items():
            writer.writerow(
                [
                    point.key,
                    format_number(point.value),
                    scheme,
                    str(agg.trials),
                    str(agg.feasible_trials),
                    format_number(agg.mean_max_ccq),
                    format_number(agg.max_max_ccq),
                    format_number(agg.mean_offloaded),
                    format_number(agg.ccq_mean),
                    format_number(agg.ccq_variance),
                    format_number(agg.mean_max_latency),
                    format_number(agg.mean_cider),
                    format_number(agg.mean_min_cider),
                    format_number(agg.mean_max_cider),
                ]
            )
    out = Path(path)
    _atomic_write(out, buffer.getvalue())
    logger.info(f"Wrote {len(points)} sweep points to {out}")
    return out


def _json_safe(value: Any) -> Any:
    """Replace non-finite floats by None so the file stays strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    return value


def _aggregates_dict(aggregates: Dict[str, SchemeAggregate]) -> Dict[str, Any]:
    return {scheme: agg.to_dict() for scheme, agg in aggregates.items()}


def build_summary(
    command: str,
    config: ScenarioConfig,
    result: Optional[ExperimentResult] = None,
    points: Optional[Sequence[SweepPoint]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Assemble the summary document: version, command, seed, config echo and aggregates."""
    summary: Dict[str, Any] = {
        "version": __version__,
        "command": command,
        "seed": config.seed,
        "trials": config.trials,
        "config": config.to_flat_dict(),
    }
    if result is not None:
        summary["schemes"] = _aggregates_dict(result.aggregates)
        summary["errored_trials"] = list(result.errored)
    if points is not None:
        summary["sweep"] = [
            {
                "key": point.key,
                "value": point.value,
                "schemes": _aggregates_dict(point.result.aggregates),
                "errored_trials": list(point.result.errored),
            }
            for point in points
        ]
    if extra:
        summary.update(extra)
    return summary


def write_summary_json(path: str, summary: Dict[str, Any]) -> Path:
    """Save the summary atomically to disk."""
    out = Path(path)
    _atomic_write(out, json.dumps(_json_safe(summary), indent=2, allow_nan=False) + "\n")
    logger.info(f"Wrote summary to {out}")
    return out


def load_summary(path: str) -> Dict[str, Any]:
    """Load a summary written by write_summary_json.

    Raises:
        ValueError: If the file is missing, unreadable or not a summary
    """
    summary_path = Path(path)
    try:
        with open(summary_path, "r", encoding="utf-8") as f:
            summary = json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(
            f"Summary file is corrupted and cannot be parsed: {path}\n"
            f"Error: {e}\n"
            f"Recovery: re-run the command that produced it."
        ) from e
    except OSError as e:
        raise ValueError(f"Cannot read summary file {path}: {e}") from e
    if not isinstance(summary, dict) or "config" not in summary:
        raise ValueError(f"{path} is not a summary file (no config echo)")
    return summary


def config_from_summary(summary: Dict[str, Any]) -> ScenarioConfig:
    """Rebuild the exact ScenarioConfig echoed in a summary."""
    return config_from_dict(summary["config"])
