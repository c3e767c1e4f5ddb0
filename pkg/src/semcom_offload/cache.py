"""On-disk cache of finished trial records."""

import hashlib
import json
import logging
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from semcom_offload import __version__
from semcom_offload.config import ScenarioConfig

logger = logging.getLogger(__name__)


def config_fingerprint(config: ScenarioConfig) -> str:
    """Canonical JSON of every setting that can change a single trial.

    The trial count is left out so that growing --trials reuses earlier records.
    """
    flat = config.to_flat_dict()
    flat.pop("experiment.trials", None)
    return json.dumps(flat, sort_keys=True)


def make_cache_key(
    fingerprint: str,
    seed: int,
    trial_id: int,
    schemes: Sequence[str],
    version: str = __version__,
) -> str:
    """Generate cache key from the config fingerprint, seed, trial id, schemes and code version.

    Returns:
        SHA256 hex digest
    """
    key_input = f"{version}:{seed}:{trial_id}:{','.join(schemes)}:{fingerprint}"
    return hashlib.sha256(key_input.encode()).hexdigest()


def load_cache(cache_dir: str, cache_key: str) -> Optional[Dict[str, Any]]:
    """Load a cached trial record from disk.

    Args:
        cache_dir: Cache directory path
        cache_key: Cache key (from make_cache_key)

    Returns:
        Cached record dict, or None if missing/corrupt
    """
    cache_path = Path(cache_dir) / f"{cache_key}.json"

    if not cache_path.exists():
        return None

    try:
        with open(cache_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (json.JSONDecodeError, OSError) as e:
        logger.warning(f"Failed to load cache {cache_key}: {e}. Recomputing.")
        return None
    if not isinstance(data, dict):
        logger.warning(f"Cache entry {cache_key} is not a record. Recomputing.")
        return None
    return data


def save_cache(cache_dir: str, cache_key: str, data: Dict[str, Any]) -> None:
    """Save a trial record atomically (temp file, then rename).

    Args:
        cache_dir: Cache directory path
        cache_key: Cache key (from make_cache_key)
        data: Record to cache
    """
    cache_path = Path(cache_dir)
    cache_path.mkdir(parents=True, exist_ok=True)

    with tempfile.NamedTemporaryFile(
        mode="w", encoding="utf-8", dir=cache_path, delete=False, suffix=".tmp"
    ) as tmp:
        json.dump(data, tmp, indent=2)
        tmp_path = tmp.name

    Path(tmp_path).replace(cache_path / f"{cache_key}.json")
