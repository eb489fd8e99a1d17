"""Catalog domain types, dump ingestion and snapshot persistence.

A catalog dump is column-oriented (CSV or JSON-lines with one column per
record); table assets are synthesized by grouping when the dump carries no
table metadata. Snapshots are the package's own versioned format and
round-trip tables verbatim.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InputError, SnapshotError

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
REQUIRED_FIELDS = ("column_name", "table_name", "data_source")
OPTIONAL_FIELDS = ("comment", "description", "is_important", "is_primary_key", "popularity_rank")


@dataclass(frozen=True)
class ColumnKey:
    """Identity of a column within a catalog."""

    column_name: str
    table_name: str
    data_source: str

    def as_str(self) -> str:
        return f"{self.data_source}::{self.table_name}::{self.column_name}"

    @classmethod
    def from_str(cls, text: str) -> "ColumnKey":
        parts = text.split("::")
        if len(parts) != 3:
            raise InputError(f"malformed column key {text!r}")
        return cls(data_source=parts[0], table_name=parts[1], column_name=parts[2])


@dataclass(frozen=True)
class ColumnAsset:
    column_name: str
    table_name: str
    data_source: str
    comment: str | None = None
    description: str | None = None
    is_important: bool = False
    is_primary_key: bool = False
    popularity_rank: int | None = None

    @property
    def key(self) -> ColumnKey:
        return ColumnKey(self.column_name, self.table_name, self.data_source)

    def to_dict(self) -> dict:
        return {
            "column_name": self.column_name,
            "table_name": self.table_name,
            "data_source": self.data_source,
            "comment": self.comment,
            "description": self.description,
            "is_important": self.is_important,
            "is_primary_key": self.is_primary_key,
            "popularity_rank": self.popularity_rank,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ColumnAsset":
        return cls(
            column_name=data["column_name"],
            table_name=data["table_name"],
            data_source=data["data_source"],
            comment=data.get("comment"),
            description=data.get("description"),
            is_important=bool(data.get("is_important", False)),
            is_primary_key=bool(data.get("is_primary_key", False)),
            popularity_rank=data.get("popularity_rank"),
        )


@dataclass(frozen=True)
class TableAsset:
    table_name: str
    data_source: str
    comment: str | None = None
    business_context: str | None = None
    update_frequency: str | None = None
    columns: tuple[ColumnAsset, ...] = ()  # physical column order

    def to_dict(self) -> dict:
        return {
            "table_name": self.table_name,
            "data_source": self.data_source,
            "comment": self.comment,
            "business_context": self.business_context,
            "update_frequency": self.update_frequency,
            "columns": [c.to_dict() for c in self.columns],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TableAsset":
        return cls(
            table_name=data["table_name"],
            data_source=data["data_source"],
            comment=data.get("comment"),
            business_context=data.get("business_context"),
            update_frequency=data.get("update_frequency"),
            columns=tuple(ColumnAsset.from_dict(c) for c in data.get("columns", [])),
        )


@dataclass
class Catalog:
    columns: list[ColumnAsset] = field(default_factory=list)
    tables: list[TableAsset] = field(default_factory=list)
    source_id: str = ""
    loaded_at: str = ""

    def column(self, key: ColumnKey) -> ColumnAsset | None:
        return self._column_index().get(key)

    def table(self, table_name: str, data_source: str) -> TableAsset | None:
        for t in self.tables:
            if t.table_name == table_name and t.data_source == data_source:
                return t
        return None

    def _column_index(self) -> dict[ColumnKey, ColumnAsset]:
        cached = getattr(self, "_index_cache", None)
        if cached is None or len(cached) != len(self.columns):
            cached = {c.key: c for c in self.columns}
            object.__setattr__(self, "_index_cache", cached)
        return cached


@dataclass
class LoadReport:
    parsed: int = 0
    accepted: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)  # (line_number, reason)

    @property
    def rejected_count(self) -> int:
        return len(self.rejected)


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_bool(value: str | bool | int | None) -> bool:
    if isinstance(value, bool):
        return value
    if value is None:
        return False
    text = str(value).strip().lower()
    return text in ("1", "true", "yes")


def _parse_rank(value) -> int | None:
    if value is None or value == "":
        return None
    rank = int(value)
    if rank < 0:
        raise ValueError("popularity_rank must be non-negative")
    return rank


def _record_to_column(record: dict) -> ColumnAsset:
    for name in REQUIRED_FIELDS:
        if not str(record.get(name) or "").strip():
            raise ValueError(f"missing or empty {name}")
    return ColumnAsset(
        column_name=str(record["column_name"]).strip(),
        table_name=str(record["table_name"]).strip(),
        data_source=str(record["data_source"]).strip(),
        comment=(str(record["comment"]) or None) if record.get("comment") else None,
        description=(str(record["description"]) or None) if record.get("description") else None,
        is_important=_parse_bool(record.get("is_important")),
        is_primary_key=_parse_bool(record.get("is_primary_key")),
        popularity_rank=_parse_rank(record.get("popularity_rank")),
    )


def _iter_csv(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file, header row required")
        missing = [f for f in REQUIRED_FIELDS if f not in reader.fieldnames]
        if missing:
            raise InputError(f"{path}: header missing required fields {missing}")
        for record in reader:
            yield reader.line_num, record


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open(encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{line_num}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise InputError(f"{path}:{line_num}: expected an object per line")
            yield line_num, record


def synthesize_tables(columns: Iterable[ColumnAsset]) -> list[TableAsset]:
    """Group columns into TableAssets when the dump carries no table records."""
    grouped: dict[tuple[str, str], list[ColumnAsset]] = {}
    for col in columns:
        grouped.setdefault((col.table_name, col.data_source), []).append(col)
    return [
        TableAsset(table_name=name, data_source=source, columns=tuple(cols))
        for (name, source), cols in grouped.items()
    ]


def load_catalog_report(path: str | Path, fmt: str | None = None) -> tuple[Catalog, LoadReport]:
    """Load a column dump, returning the catalog plus a rejection report.

    Duplicate (column, table, source) keys keep the first occurrence; every
    reject carries its line number and reason.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"catalog file not found: {path}")
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt == "csv":
        records = _iter_csv(path)
    elif fmt == "jsonl":
        records = _iter_jsonl(path)
    else:
        raise InputError(f"unknown catalog format {fmt!r} (expected csv or jsonl)")

    report = LoadReport()
    columns: list[ColumnAsset] = []
    ranks_seen: dict[tuple[str, str], set[int]] = {}
    seen: set[ColumnKey] = set()
    for line_num, record in records:
        report.parsed += 1
        try:
            column = _record_to_column(record)
        except (ValueError, KeyError) as exc:
            report.rejected.append((line_num, str(exc)))
            continue
        if column.key in seen:
            report.rejected.append((line_num, f"duplicate key {column.key.as_str()} (first occurrence wins)"))
            continue
        if column.popularity_rank is not None:
            table_key = (column.table_name, column.data_source)
            taken = ranks_seen.setdefault(table_key, set())
            if column.popularity_rank in taken:
                report.rejected.append(
                    (line_num, f"popularity_rank {column.popularity_rank} already used in table {column.table_name}")
                )
                continue
            taken.add(column.popularity_rank)
        seen.add(column.key)
        columns.append(column)
    report.accepted = len(columns)

    for line_num, reason in report.rejected:
        logger.warning("%s:%d rejected: %s", path, line_num, reason)

    catalog = Catalog(
        columns=columns,
        tables=synthesize_tables(columns),
        source_id=path.stem,
        loaded_at=_now_iso(),
    )
    return catalog, report


def load_catalog(path: str | Path, fmt: str | None = None) -> Catalog:
    catalog, _ = load_catalog_report(path, fmt)
    return catalog


def save_snapshot(catalog: Catalog, path: str | Path) -> None:
    """Write a versioned snapshot; ``load_snapshot`` restores it field-for-field."""
    path = Path(path)
    header = {
        "kind": "catalog_snapshot",
        "format_version": SNAPSHOT_VERSION,
        "source_id": catalog.source_id,
        "loaded_at": catalog.loaded_at,
        "counts": {"columns": len(catalog.columns), "tables": len(catalog.tables)},
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for table in catalog.tables:
            fh.write(json.dumps({"kind": "table", **table.to_dict()}, sort_keys=True) + "\n")
        for column in catalog.columns:
            fh.write(json.dumps({"kind": "column", **column.to_dict()}, sort_keys=True) + "\n")


def load_snapshot(path: str | Path) -> Catalog:
    path = Path(path)
    if not path.exists():
        raise InputError(f"snapshot not found: {path}")
    with path.open(encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"{path}: snapshot header is not valid JSON") from exc
        if header.get("kind") != "catalog_snapshot":
            raise SnapshotError(f"{path}: not a catalog snapshot")
        if header.get("format_version") != SNAPSHOT_VERSION:
            raise SnapshotError(
                f"{path}: snapshot version {header.get('format_version')} "
                f"unsupported (expected {SNAPSHOT_VERSION})"
            )
        tables: list[TableAsset] = []
        columns: list[ColumnAsset] = []
        for line_num, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SnapshotError(f"{path}:{line_num}: corrupt snapshot record") from exc
            if record.get("kind") == "table":
                tables.append(TableAsset.from_dict(record))
            elif record.get("kind") == "column":
                columns.append(ColumnAsset.from_dict(record))
            else:
                raise SnapshotError(f"{path}:{line_num}: unknown record kind {record.get('kind')!r}")
    counts = header.get("counts", {})
    if counts.get("columns") != len(columns) or counts.get("tables") != len(tables):
        raise SnapshotError(f"{path}: record counts disagree with header (truncated file?)")
    return Catalog(
        columns=columns,
        tables=tables,
        source_id=header.get("source_id", ""),
        loaded_at=header.get("loaded_at", ""),
    )


def load_any(path: str | Path) -> Catalog:
    """Load a catalog from a dump (.csv/.jsonl) or a snapshot (.snapshot)."""
    path = Path(path)
    if path.suffix == ".snapshot":
        return load_snapshot(path)
    return load_catalog(path)


def describe_eligible(catalog: Catalog) -> list[ColumnAsset]:
    """Columns still lacking a curated description (generation targets)."""
    return [c for c in catalog.columns if not (c.description or "").strip()]


def with_description(column: ColumnAsset, description: str) -> ColumnAsset:
    return replace(column, description=description)
