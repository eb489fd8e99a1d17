"""Durable review queue: an append-only journal plus an in-memory index.

Journal records are length-prefixed JSON (``<byte length>\\n<json>\\n``),
flushed and fsynced per mutation. On start the journal is replayed; a
truncated final record (crash mid-write) is tolerated with a warning, while
garbage anywhere else is an error.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import CatalogScribeError, InputError, SnapshotError
from .eval_suite import Rouge1Score, rouge1
from .llm_gateway import GenerationRecord, Label

logger = logging.getLogger(__name__)


class NotFoundError(CatalogScribeError):
    pass


class VersionConflictError(CatalogScribeError):
    pass


class AlreadyDecidedError(VersionConflictError):
    pass


class DecisionValidationError(InputError):
    pass


@dataclass(frozen=True)
class ReviewDecision:
    final_text: str
    label: Label
    steward_id: str
    decided_at: str

    def to_dict(self) -> dict:
        return {
            "final_text": self.final_text,
            "label": self.label,
            "steward_id": self.steward_id,
            "decided_at": self.decided_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewDecision":
        return cls(
            final_text=data["final_text"],
            label=data["label"],
            steward_id=data.get("steward_id", ""),
            decided_at=data.get("decided_at", ""),
        )


@dataclass
class ReviewItem:
    id: str
    asset_kind: str  # column | table
    asset_key: str
    generation: GenerationRecord
    trace: dict
    status: str  # pending | decided
    version: int
    created_at: str
    decision: ReviewDecision | None = None
    rouge_vs_generation: Rouge1Score | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "asset_kind": self.asset_kind,
            "asset_key": self.asset_key,
            "generation": self.generation.to_dict(),
            "trace": self.trace,
            "status": self.status,
            "version": self.version,
            "created_at": self.created_at,
            "decision": self.decision.to_dict() if self.decision else None,
            "rouge_vs_generation": (
                self.rouge_vs_generation.to_dict() if self.rouge_vs_generation else None
            ),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewItem":
        rouge = data.get("rouge_vs_generation")
        return cls(
            id=data["id"],
            asset_kind=data["asset_kind"],
            asset_key=data["asset_key"],
            generation=GenerationRecord.from_dict(data["generation"]),
            trace=data.get("trace", {}),
            status=data["status"],
            version=int(data["version"]),
            created_at=data.get("created_at", ""),
            decision=ReviewDecision.from_dict(data["decision"]) if data.get("decision") else None,
            rouge_vs_generation=Rouge1Score(**rouge) if rouge else None,
        )


def _append_record(path: Path, record: dict) -> None:
    payload = json.dumps(record, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with path.open("ab") as fh:
        fh.write(str(len(payload)).encode("ascii") + b"\n")
        fh.write(payload + b"\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_journal(path: Path) -> list[dict]:
    records: list[dict] = []
    if not path.exists():
        return records
    data = path.read_bytes()
    offset = 0
    while offset < len(data):
        newline = data.find(b"\n", offset)
        if newline < 0:
            logger.warning("%s: truncated length prefix at byte %d; ignoring tail", path, offset)
            break
        try:
            length = int(data[offset:newline])
        except ValueError as exc:
            raise SnapshotError(f"{path}: corrupt journal length prefix at byte {offset}") from exc
        start = newline + 1
        end = start + length
        if end + 1 > len(data):
            logger.warning("%s: truncated record at byte %d; ignoring tail", path, offset)
            break
        if data[end : end + 1] != b"\n":
            raise SnapshotError(f"{path}: journal record at byte {offset} missing terminator")
        try:
            records.append(json.loads(data[start:end]))
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"{path}: corrupt journal record at byte {offset}") from exc
        offset = end + 1
    return records


class ReviewStore:
    """Review items with optimistic-versioned decisions.

    All mutations run under one lock, which serializes the version check
    against the write; the journal write happens inside the critical
    section so the on-disk order matches the decided order.
    """

    def __init__(self, journal_path: str | Path):
        self._path = Path(journal_path)
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {}
        self._counter = 0
        self._replay()

    def _replay(self) -> None:
        for record in read_journal(self._path):
            kind = record.get("kind")
            if kind == "item":
                item = ReviewItem.from_dict(record["item"])
                self._items[item.id] = item
                number = int(item.id.split("-")[-1])
                self._counter = max(self._counter, number)
            elif kind == "decision":
                item = self._items.get(record["item_id"])
                if item is None:
                    raise SnapshotError(f"journal decision for unknown item {record['item_id']}")
                item.decision = ReviewDecision.from_dict(record["decision"])
                item.status = "decided"
                item.version = int(record["version"])
                rouge = record.get("rouge_vs_generation")
                item.rouge_vs_generation = Rouge1Score(**rouge) if rouge else None
            else:
                raise SnapshotError(f"unknown journal record kind {kind!r}")

    def create_item(
        self,
        asset_kind: str,
        asset_key: str,
        generation: GenerationRecord,
        trace: dict,
        created_at: str,
    ) -> ReviewItem:
        with self._lock:
            self._counter += 1
            item = ReviewItem(
                id=f"ri-{self._counter:06d}",
                asset_kind=asset_kind,
                asset_key=asset_key,
                generation=generation,
                trace=trace,
                status="pending",
                version=1,
                created_at=created_at,
            )
            self._items[item.id] = item
            _append_record(self._path, {"kind": "item", "item": item.to_dict()})
            return item

    def get(self, item_id: str) -> ReviewItem:
        item = self._items.get(item_id)
        if item is None:
            raise NotFoundError(f"review item {item_id!r} not found")
        return item

    def list_items(self, status: str | None = None, limit: int | None = None,
                   offset: int = 0) -> list[ReviewItem]:
        items = sorted(self._items.values(), key=lambda i: (i.created_at, i.id))
        if status:
            items = [i for i in items if i.status == status]
        items = items[offset:]
        if limit is not None:
            items = items[:limit]
        return items

    def decide(self, item_id: str, decision: ReviewDecision, expected_version: int) -> ReviewItem:
        """Apply a steward decision. Exactly one caller can win per item."""
        if not decision.final_text.strip():
            raise DecisionValidationError("final_text must be non-empty")
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise NotFoundError(f"review item {item_id!r} not found")
            if item.status == "decided":
                raise AlreadyDecidedError(f"review item {item_id} is already decided")
            if item.version != expected_version:
                raise VersionConflictError(
                    f"expected version {expected_version}, item is at {item.version}"
                )
            if (
                decision.label == "accept_as_is"
                and decision.final_text != item.generation.processed_output
            ):
                raise DecisionValidationError(
                    "accept_as_is requires final_text to equal the generated text"
                )
            item.decision = decision
            item.status = "decided"
            item.version += 1
            item.rouge_vs_generation = rouge1(decision.final_text, item.generation.processed_output)
            _append_record(
                self._path,
                {
                    "kind": "decision",
                    "item_id": item.id,
                    "decision": decision.to_dict(),
                    "version": item.version,
                    "rouge_vs_generation": item.rouge_vs_generation.to_dict(),
                },
            )
            return item

    def decided_items(self) -> list[ReviewItem]:
        return self.list_items(status="decided")
