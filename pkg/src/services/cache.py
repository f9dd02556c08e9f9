"""
Append-only cache of exact matrix elements.

One JSON object per line: a sha256 key of the request, the value as
``float.hex`` strings, and a checksum over both. The latest line for a key
wins; a line whose checksum does not match is ignored with a warning so the
value gets recomputed.
"""

import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.models.models import GZSCError

logger = logging.getLogger(__name__)

CACHE_FILE = "exact_elements.jsonl"


class CacheError(GZSCError):
    """Custom exception for unusable cache directories"""
    pass


def serialize_matrix(g: np.ndarray) -> list:
    """Matrix entries as (re, im) strings with 17 significant digits."""
    g = np.asarray(g, dtype=complex)
    return [[[f"{x.real:.17g}", f"{x.imag:.17g}"] for x in row] for row in g]


def cache_key(mode: str, n: int, weight: Sequence[int], g: np.ndarray, source: Sequence[Any], target: Sequence[Any]) -> str:
    """sha256 of the canonical JSON description of a matrix element request."""
    payload = {
        "mode": mode,
        "n": n,
        "weight": [int(x) for x in weight],
        "g": serialize_matrix(g),
        "source": [str(x) for x in source],
        "target": [str(x) for x in target],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _checksum(key: str, re: str, im: str) -> str:
    return hashlib.sha256(f"{key}|{re}|{im}".encode("utf-8")).hexdigest()


class ResultCache:
    """
    Single-writer JSONL cache keyed by request hash.

    Values round-trip bit for bit through ``float.hex``.
    """

    def __init__(self, cache_dir: Path):
        self.path = Path(cache_dir) / CACHE_FILE
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CacheError(f"Cannot create cache directory {self.path.parent}: {e}") from e
        self._lock = threading.Lock()
        self._entries: Dict[str, Dict[str, str]] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    self._entries[entry["key"]] = entry
                except (json.JSONDecodeError, KeyError):
                    logger.warning(f"Skipping malformed cache line {lineno} in {self.path}")
        logger.debug(f"Loaded {len(self._entries)} cached elements from {self.path}")

    def get(self, key: str) -> Optional[complex]:
        entry = self._entries.get(key)
        if entry is None:
            return None
        if entry.get("checksum") != _checksum(key, entry.get("re", ""), entry.get("im", "")):
            logger.warning(f"Checksum mismatch for cached element {key[:12]}; recomputing")
            return None
        return complex(float.fromhex(entry["re"]), float.fromhex(entry["im"]))

    def put(self, key: str, value: complex) -> None:
        value = complex(value)
        re, im = value.real.hex(), value.imag.hex()
        entry = {"key": key, "re": re, "im": im, "checksum": _checksum(key, re, im)}
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
            self._entries[key] = entry

    def __len__(self) -> int:
        return len(self._entries)
