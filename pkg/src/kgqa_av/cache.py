"""Content-addressed response cache: one hash-verified JSON file per key.

Entries are keyed by a SHA-256 of the request description and carry a second
SHA-256 over the stored payload, so a damaged file is detected on read and
treated as a miss rather than replayed.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable

logger = logging.getLogger(__name__)


class CacheCorrupt(Exception):
    """Stored entry failed its integrity check."""


class FileCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
        return self.directory / f"{digest}.json"

    def get(self, key: str) -> bytes | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            entry = json.loads(path.read_text("utf-8"))
            payload = base64.b64decode(entry["payload"])
            stored = entry["sha256"]
        except (ValueError, KeyError, TypeError) as exc:
            raise CacheCorrupt(f"unreadable cache entry {path.name}") from exc
        if hashlib.sha256(payload).hexdigest() != stored:
            raise CacheCorrupt(f"hash mismatch in cache entry {path.name}")
        return payload

    def put(self, key: str, payload: bytes) -> None:
        entry = {
            "key": key,
            "sha256": hashlib.sha256(payload).hexdigest(),
            "payload": base64.b64encode(payload).decode("ascii"),
        }
        # atomic replace keeps concurrent readers consistent (last writer wins)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(entry, handle)
            os.replace(tmp, self.path_for(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def cached_fetch(cache: FileCache | None, key: str, fetch: Callable[[], bytes]) -> bytes:
    """Replay a prior response byte-identically, or fetch and store it.

    A corrupt entry logs a warning, refetches, and rewrites the entry.
    """
    if cache is None:
        return fetch()
    try:
        hit = cache.get(key)
    except CacheCorrupt as exc:
        logger.warning("cache entry discarded: %s", exc)
        hit = None
    if hit is not None:
        return hit
    payload = fetch()
    cache.put(key, payload)
    return payload
