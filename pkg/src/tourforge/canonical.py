"""Canonical JSON, timestamps, deterministic ids, and atomic file writes.

Every document tourforge persists (tours, session logs, reports, store
collections) uses the same canonical form: UTF-8, LF line endings, keys
sorted lexicographically, 2-space indentation, trailing newline.  Canonical
text is byte-stable, which keeps tour files diff-friendly under version
control and makes round-trip tests exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from datetime import datetime, timezone

TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")


def canonical_dumps(doc) -> str:
    """Serialize ``doc`` to canonical JSON text (ends with a single LF)."""
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def canonical_loads(text: str):
    """Parse JSON text; raises ``json.JSONDecodeError`` on malformed input."""
    return json.loads(text)


def iso_now(now: datetime | None = None) -> str:
    """UTC timestamp string, second precision (``2026-08-18T09:30:00Z``)."""
    dt = now if now is not None else datetime.now(timezone.utc)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def is_timestamp(value) -> bool:
    return isinstance(value, str) and bool(TIMESTAMP_RE.match(value))


def content_id(prefix: str, *parts: str, length: int = 12) -> str:
    """Deterministic opaque id derived from ``parts``.

    Same parts always yield the same id, which is what makes the stub
    generation pipeline reproducible byte for byte.
    """
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()
    return f"{prefix}{digest[:length]}"


def write_text_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via temp-file-then-rename.

    Readers never observe a partial file: either the old content or the new
    content is visible, even if the process is killed mid-write.
    """
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
