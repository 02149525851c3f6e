"""Append-only audit log: one JSON record per line.

Records carry hashes and redacted forms only — original sensitive text is
never written. Appends are atomic per record and flushed to disk before
the pipeline returns.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import asdict, dataclass, replace
from typing import Optional


class StoreUnavailable(Exception):
    """The audit store cannot be opened or written."""


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AuditRecord:
    """One pipeline stage outcome; see README for the field glossary."""

    ts: float
    seq: int
    session_id: str
    direction: str  # "outbound" | "inbound"
    text_sha256: str
    verdict: str
    reasons: tuple[str, ...] = ()
    exposure_score: Optional[float] = None
    categories: tuple[str, ...] = ()
    behavior_score: Optional[float] = None
    command_valid: Optional[bool] = None
    command_violations: tuple[str, ...] = ()
    backend: Optional[str] = None
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    latency_s: Optional[float] = None
    redacted_text: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "AuditRecord":
        data = json.loads(line)
        for key in ("reasons", "categories", "command_violations"):
            data[key] = tuple(data.get(key) or ())
        return cls(**data)


class AuditLog:
    """Line-delimited record store with per-record durability."""

    def __init__(self, path, fsync: bool = True):
        self._path = os.fspath(path)
        self._fsync = fsync
        self._lock = threading.Lock()
        try:
            existing = 0
            if os.path.exists(self._path):
                with open(self._path, "r", encoding="utf-8") as handle:
                    existing = sum(1 for line in handle if line.strip())
            self._seq = existing
            self._handle = open(self._path, "a", encoding="utf-8")
        except OSError as exc:
            raise StoreUnavailable(f"cannot open audit log {self._path}: {exc}") from exc

    @property
    def path(self) -> str:
        return self._path

    def append(self, record: AuditRecord) -> AuditRecord:
        """Write one record; the assigned sequence number is returned."""
        with self._lock:
            stored = replace(record, seq=self._seq)
            self._seq += 1
            try:
                self._handle.write(stored.to_json() + "\n")
                self._handle.flush()
                if self._fsync:
                    os.fsync(self._handle.fileno())
            except (OSError, ValueError) as exc:
                raise StoreUnavailable(f"cannot append to audit log: {exc}") from exc
            return stored

    def query(
        self,
        session_id: Optional[str] = None,
        start_ts: Optional[float] = None,
        end_ts: Optional[float] = None,
    ) -> list[AuditRecord]:
        """Records in append order, filtered by session and time range."""
        records: list[AuditRecord] = []
        try:
            with open(self._path, "r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    record = AuditRecord.from_json(line)
                    if session_id is not None and record.session_id != session_id:
                        continue
                    if start_ts is not None and record.ts < start_ts:
                        continue
                    if end_ts is not None and record.ts > end_ts:
                        continue
                    records.append(record)
        except OSError as exc:
            raise StoreUnavailable(f"cannot read audit log: {exc}") from exc
        return records

    def close(self) -> None:
        with self._lock:
            try:
                self._handle.close()
            except OSError:
                pass

    def __enter__(self) -> "AuditLog":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def now() -> float:
    return time.time()
