"""Per-command orchestration: run trials, write results, map failures to exit codes."""

import logging
import math
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from semcom_offload.benchmarks import SCHEME_NAMES
from semcom_offload.config import ConfigError, ScenarioConfig
from semcom_offload.experiment import ExperimentResult, run_sweep, run_trials
from semcom_offload.oracles import run_oracle_suite
from semcom_offload.results_writer import (
    RESULTS_FILENAME,
    SUMMARY_FILENAME,
    SWEEP_FILENAME,
    build_summary,
    write_results_csv,
    write_summary_json,
    write_sweep_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_UNWRITABLE = 7
EXIT_ORACLE_FAILED = 8


def ensure_output_dir(out_dir: str) -> bool:
    """Create out_dir if needed and confirm a file can be written there."""
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path, suffix=".writecheck"):
            pass
    except OSError as e:
        logger.error(f"Output directory {out_dir} is not writable: {e}")
        return False
    return True


def comparison_table(result: ExperimentResult) -> Dict[str, Any]:
    """Per-scheme mean max-latency and mean, min and max CIDEr, plus the schemes ordered by latency."""
    rows = {
        scheme: {
            "mean_max_latency": agg.mean_max_latency,
            "mean_cider": agg.mean_cider,
            "mean_min_cider": agg.mean_min_cider,
            "mean_max_cider": agg.mean_max_cider,
            "mean_max_ccq": agg.mean_max_ccq,
            "feasible_trials": agg.feasible_trials,
        }
        for scheme, agg in result.aggregates.items()
    }
    by_latency = sorted(
        (scheme for scheme, agg in result.aggregates.items() if not math.isnan(agg.mean_max_latency)),
        key=lambda scheme: result.aggregates[scheme].mean_max_latency,
    )
    return {"table": rows, "latency_order": by_latency}


def _report(result: ExperimentResult, out_dir: str) -> None:
    print(
        f"✓ {len(result.records)} trials ({result.cached} from cache, {len(result.errored)} errored)",
        file=sys.stderr,
    )
    for scheme, agg in result.aggregates.items():
        print(
            f"  {scheme:<9} mean max-CCQ {agg.mean_max_ccq:.6g}  "
            f"mean max-latency {agg.mean_max_latency:.6g} s  "
            f"feasible {agg.feasible_trials}/{agg.trials}",
            file=sys.stderr,
        )
    print(f"✓ Saved to: {out_dir}", file=sys.stderr)


def run_experiment(
    config: ScenarioConfig,
    out_dir: str,
    schemes: Sequence[str] = SCHEME_NAMES,
    cache_dir: Optional[str] = None,
    compare: bool = False,
) -> int:
    """Run trials and write results.csv and summary.json.

    Args:
        config: Scenario including trials and seed
        out_dir: Output directory
        schemes: Schemes to run on each realization
        cache_dir: Trial cache directory, or None to recompute everything
        compare: Add the per-scheme latency/CIDEr comparison to the summary

    Returns:
        Exit code (0 = success, 1 = some trial errored or the run failed,
        config error codes, 7 = output directory not writable)
    """
    try:
        if not ensure_output_dir(out_dir):
            return EXIT_UNWRITABLE

        result = run_trials(config, schemes, cache_dir)

        write_results_csv(str(Path(out_dir) / RESULTS_FILENAME), result.records, config.n_transmitters)
        extra = {"comparison": comparison_table(result)} if compare else None
        summary = build_summary("compare" if compare else "run", config, result, extra=extra)
        write_summary_json(str(Path(out_dir) / SUMMARY_FILENAME), summary)

        _report(result, out_dir)
        if result.errored:
            logger.error(f"{len(result.errored)} trial(s) errored: {list(result.errored)}")
            return EXIT_ERROR
        return EXIT_OK

    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Experiment failed: {e}", exc_info=True)
        return EXIT_ERROR


def run_sweep_experiment(
    config: ScenarioConfig,
    key: str,
    values: Sequence[Any],
    out_dir: str,
    schemes: Sequence[str] = SCHEME_NAMES,
    cache_dir: Optional[str] = None,
) -> int:
    """Run one experiment per sweep value and write sweep.csv and summary.json."""
    try:
        if not ensure_output_dir(out_dir):
            return EXIT_UNWRITABLE

        points = run_sweep(config, key, values, schemes, cache_dir)

        write_sweep_csv(str(Path(out_dir) / SWEEP_FILENAME), points)
        summary = build_summary("sweep", config, points=points)
        write_summary_json(str(Path(out_dir) / SUMMARY_FILENAME), summary)

        errored = sum(len(point.result.errored) for point in points)
        print(f"✓ Sweep of {key} over {len(points)} points ({errored} errored trials)", file=sys.stderr)
        print(f"✓ Saved to: {out_dir}", file=sys.stderr)
        return EXIT_ERROR if errored else EXIT_OK

    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Sweep failed: {e}", exc_info=True)
        return EXIT_ERROR


def run_oracle_check(config: ScenarioConfig, out_dir: str, instances: int = 20) -> int:
    """Compare the solvers with brute-force oracles and write summary.json.

    Returns:
        Exit code (0 = all checks pass, 8 = some check failed)
    """
    try:
        if not ensure_output_dir(out_dir):
            return EXIT_UNWRITABLE

        report = run_oracle_suite(config, instances)

        summary = build_summary("oracle-check", config, extra={"oracle": report.to_dict()})
        write_summary_json(str(Path(out_dir) / SUMMARY_FILENAME), summary)

        for check in report.checks:
            mark = "✓" if check.passed else "✗"
            print(f"{mark} {check.name}: {check.detail}", file=sys.stderr)
        return EXIT_OK if report.passed else EXIT_ORACLE_FAILED

    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Oracle check failed: {e}", exc_info=True)
        return EXIT_ERROR
