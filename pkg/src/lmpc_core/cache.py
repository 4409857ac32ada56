"""Tube artifact cache"""

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, Optional

from lmpc_core.exceptions import ArtifactError
from lmpc_core.tube import TubeArtifacts

logger = logging.getLogger(__name__)


def scenario_key(payload: Dict[str, Any]) -> str:
    """Stable digest of the inputs that determine the tube artifacts."""
    encoded = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


class TubeArtifactCache:
    """JSON cache of tube artifacts keyed by a digest of their inputs

    Attributes:
        cache_dir: directory holding one <key>.json per entry
    """

    def __init__(self, cache_dir: Path = Path(".lmpc_cache")):
        """
        Args:
            cache_dir: cache directory (default: .lmpc_cache)
        """
        self.cache_dir = Path(cache_dir)

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def load(self, key: str) -> Optional[TubeArtifacts]:
        """Load an entry

        Returns:
            artifacts, or None when missing or unreadable
        """
        path = self._path(key)
        if not path.exists():
            return None
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
            return TubeArtifacts.from_dict(data["artifacts"])
        except Exception as e:
            # unreadable entries are rebuilt by the caller
            logger.warning("ignoring unreadable cache entry %s: %s", path, e)
            return None

    def save(self, key: str, artifacts: TubeArtifacts) -> Path:
        """Store an entry

        Raises:
            ArtifactError: the entry could not be written
        """
        path = self._path(key)
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            data = {
                "key": key,
                "digest": artifacts.digest(),
                "timestamp": time.strftime("%Y-%m-%d %H:%M:%S"),
                "artifacts": artifacts.to_dict(),
            }
            with open(path, "w", encoding="utf-8") as f:
                json.dump(data, f)
        except Exception as e:
            raise ArtifactError(f"failed to write cache entry {path}: {e}")
        return path

    def clear(self) -> int:
        """Delete all entries and return how many were removed"""
        removed = 0
        if not self.cache_dir.exists():
            return removed
        for path in self.cache_dir.glob("*.json"):
            try:
                path.unlink()
                removed += 1
            except Exception as e:
                raise ArtifactError(f"failed to delete cache entry {path}: {e}")
        return removed
