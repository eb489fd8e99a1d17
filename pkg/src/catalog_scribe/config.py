"""Application configuration.

Settings load from a YAML (or JSON) file pointed at by --config or the
CATALOG_SCRIBE_CONFIG environment variable; anything unspecified falls back
to the packaged defaults below.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from .errors import InputError
from .prompt_builder import (
    DEFAULT_AUDIT_COLUMNS,
    DEFAULT_QUESTIONS,
    DEFAULT_TABLE_COLUMN_LIMIT,
    DEFAULT_TOKEN_BUDGET,
)

ENV_CONFIG_PATH = "CATALOG_SCRIBE_CONFIG"


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "local"  # local | remote
    dimension: int = 64
    seed: int = 0
    text_mode: str = "tokens"  # tokens | raw


@dataclass(frozen=True)
class ChatConfig:
    kind: str = "http"  # http | echo | paraphrase
    temperature: float = 0.2
    max_tokens: int = 256
    max_attempts: int = 3
    max_in_flight: int = 4


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 100


@dataclass(frozen=True)
class PromptConfig:
    token_budget: int = DEFAULT_TOKEN_BUDGET
    table_column_limit: int = DEFAULT_TABLE_COLUMN_LIMIT
    questions: tuple[str, ...] = DEFAULT_QUESTIONS
    audit_columns: tuple[str, ...] = DEFAULT_AUDIT_COLUMNS


@dataclass(frozen=True)
class AssetPaths:
    dictionary: str | None = None
    corrections: str | None = None
    wordlist: str | None = None


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    bearer_token: str = ""
    journal_path: str = "reviews.journal"


@dataclass(frozen=True)
class AppConfig:
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    chat: ChatConfig = field(default_factory=ChatConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    assets: AssetPaths = field(default_factory=AssetPaths)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    seed: int = 42
    catalog_path: str | None = None
    index_path: str | None = None
    external_scorer_url: str | None = None


def packaged_asset_path(name: str) -> Path:
    """Filesystem path of a packaged default asset."""
    return Path(str(resources.files("catalog_scribe.assets").joinpath(name)))


def dictionary_path(config: AppConfig) -> Path:
    return Path(config.assets.dictionary) if config.assets.dictionary else packaged_asset_path("abbreviations.jsonl")


def corrections_path(config: AppConfig) -> Path:
    return Path(config.assets.corrections) if config.assets.corrections else packaged_asset_path("corrections.json")


def wordlist_path(config: AppConfig) -> Path:
    return Path(config.assets.wordlist) if config.assets.wordlist else packaged_asset_path("wordlist.txt")


def _merge_section(defaults, data: dict, **coercions):
    values = {}
    for key, value in (data or {}).items():
        if not hasattr(defaults, key):
            raise InputError(f"unknown config key {key!r} in section {type(defaults).__name__}")
        coerce = coercions.get(key)
        values[key] = coerce(value) if coerce else value
    return replace(defaults, **values)


def load_config(path: str | Path | None = None) -> AppConfig:
    """Load configuration, merging the file (if any) over defaults."""
    if path is None:
        env_path = os.getenv(ENV_CONFIG_PATH, "").strip()
        path = env_path or None
    config = AppConfig()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: config parse failure: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: config root must be a mapping")

    config = replace(
        config,
        embedder=_merge_section(config.embedder, data.get("embedder", {})),
        chat=_merge_section(config.chat, data.get("chat", {})),
        retrieval=_merge_section(config.retrieval, data.get("retrieval", {})),
        prompt=_merge_section(
            config.prompt,
            data.get("prompt", {}),
            questions=tuple,
            audit_columns=tuple,
        ),
        assets=_merge_section(config.assets, data.get("assets", {})),
        service=_merge_section(config.service, data.get("service", {})),
    )
    for key in ("seed", "catalog_path", "index_path", "external_scorer_url"):
        if key in data:
            config = replace(config, **{key: data[key]})
    return config
