"""End-to-end orchestration: expand, retrieve, prompt, generate, post-process.

The same engine backs both the HTTP service and the batch CLI. All
randomness and clocks are injected so mock-provider runs reproduce
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .catalog import Catalog, ColumnAsset, TableAsset
from .config import AppConfig, corrections_path, dictionary_path, wordlist_path
from .errors import InputError
from .expander import (
    AbbreviationDictionary,
    ExpansionContext,
    ExpansionResult,
    expand_name,
    load_dictionary,
)
from .llm_gateway import (
    ChatProvider,
    CorrectionRule,
    EchoMockProvider,
    GenerationRecord,
    HttpChatProvider,
    ParaphraseMockProvider,
    generate,
    load_corrections,
    load_wordlist,
    postprocess,
)
from .prompt_builder import (
    TableQuestionSet,
    build_column_prompt,
    build_table_prompt,
    select_table_columns,
    stitch_table_description,
)
from .retrieval import RetrievalOutcome, retrieve_fewshot
from .text_prep import clean_text
from .vector_index import (
    EmbeddingProvider,
    FlatIndex,
    LocalHashEmbedder,
    RemoteHttpEmbedder,
    build_index,
)

# Fixed timestamp used when a deterministic clock is requested (mock runs).
FIXED_CLOCK_ISO = "2000-01-01T00:00:00Z"


def wall_clock() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def fixed_clock() -> str:
    return FIXED_CLOCK_ISO


def make_embedder(config: AppConfig) -> EmbeddingProvider:
    if config.embedder.kind == "local":
        return LocalHashEmbedder(dimension=config.embedder.dimension, seed=config.embedder.seed)
    if config.embedder.kind == "remote":
        return RemoteHttpEmbedder(
            dimension=config.embedder.dimension,
            max_attempts=config.chat.max_attempts,
        )
    raise InputError(f"unknown embedder kind {config.embedder.kind!r}")


def make_chat_provider(config: AppConfig, mock: str | None = None) -> ChatProvider:
    kind = mock or config.chat.kind
    if kind == "echo":
        return EchoMockProvider(seed=config.seed)
    if kind == "paraphrase":
        return ParaphraseMockProvider(seed=config.seed)
    if kind == "http":
        return HttpChatProvider(max_attempts=config.chat.max_attempts)
    raise InputError(f"unknown chat provider kind {kind!r}")


def is_mock(provider: ChatProvider) -> bool:
    return provider.model_id.startswith("mock-")


@dataclass(frozen=True)
class ColumnGeneration:
    column: ColumnAsset
    expansion: ExpansionResult
    retrieval: RetrievalOutcome
    record: GenerationRecord
    comment_clean: str

    def trace_dict(self) -> dict:
        """Everything needed to re-run copy detection offline."""
        return {
            "expansion": self.expansion.to_dict(),
            "retrieval": self.retrieval.to_dict(),
            "comment": self.comment_clean or None,
            "example_texts": [e.example_text for e in self.retrieval.examples],
        }


@dataclass(frozen=True)
class TableGeneration:
    table: TableAsset
    expansion: ExpansionResult
    selected_columns: tuple[ColumnAsset, ...]
    questions: TableQuestionSet
    answers: tuple[str, ...]
    record: GenerationRecord

    def trace_dict(self) -> dict:
        return {
            "expansion": self.expansion.to_dict(),
            "selected_columns": [c.key.as_str() for c in self.selected_columns],
            "questions": list(self.questions.questions),
            "answers": list(self.answers),
        }


@dataclass
class Engine:
    """Bundles the loaded catalog, index and providers behind the two
    describe operations."""

    config: AppConfig
    catalog: Catalog
    index: FlatIndex
    embedder: EmbeddingProvider
    chat: ChatProvider
    dictionary: AbbreviationDictionary
    corrections: list[CorrectionRule] = field(default_factory=list)
    wordlist: list[str] = field(default_factory=list)
    deterministic: bool = False

    @property
    def clock(self):
        return fixed_clock if self.deterministic else wall_clock

    @property
    def timer(self):
        return (lambda: 0.0) if self.deterministic else time.perf_counter

    def expansion_context(self, table_name: str, data_source: str) -> ExpansionContext:
        return ExpansionContext(table_name=table_name, data_source=data_source)

    def describe_column(self, column: ColumnAsset, glossary_terms: list[str] | None = None) -> ColumnGeneration:
        expansion = expand_name(
            column.column_name,
            self.dictionary,
            self.expansion_context(column.table_name, column.data_source),
        )
        outcome = retrieve_fewshot(
            column,
            self.index,
            self.catalog,
            self.embedder,
            k=self.config.retrieval.top_k,
            text_mode=self.config.embedder.text_mode,  # type: ignore[arg-type]
        )
        bundle = build_column_prompt(
            column,
            expansion,
            outcome,
            glossary_terms=glossary_terms,
            token_budget=self.config.prompt.token_budget,
        )
        raw, latency_ms = generate(
            bundle,
            self.chat,
            temperature=self.config.chat.temperature,
            max_tokens=self.config.chat.max_tokens,
            timer=self.timer,
        )
        post = postprocess(raw, self.corrections, self.wordlist)
        record = GenerationRecord(
            prompt_hash=bundle.prompt_hash,
            model_id=self.chat.model_id,
            raw_output=raw,
            processed_output=post.text,
            postprocess_flags=post.flags,
            latency_ms=latency_ms,
            created_at=self.clock(),
        )
        return ColumnGeneration(
            column=column,
            expansion=expansion,
            retrieval=outcome,
            record=record,
            comment_clean=clean_text(column.comment or ""),
        )

    def describe_table(self, table: TableAsset, business_context: str | None = None) -> TableGeneration:
        if not table.columns:
            raise InputError(
                f"table {table.table_name!r} has no columns, nothing to describe"
            )
        expansion = expand_name(
            table.table_name,
            self.dictionary,
            self.expansion_context(table.table_name, table.data_source),
        )
        rng = random.Random(self.config.seed)
        selected = select_table_columns(
            table,
            limit=self.config.prompt.table_column_limit,
            rng=rng,
            audit_names=self.config.prompt.audit_columns,
        )
        # Columns without curated text get a fresh ephemeral description so
        # the table prompt always carries usable column context.
        enriched: list[ColumnAsset] = []
        for column in selected:
            if (column.description or "").strip() or (column.comment or "").strip():
                enriched.append(column)
            else:
                generated = self.describe_column(column)
                enriched.append(
                    ColumnAsset(
                        column_name=column.column_name,
                        table_name=column.table_name,
                        data_source=column.data_source,
                        comment=column.comment,
                        description=generated.record.processed_output,
                        is_important=column.is_important,
                        is_primary_key=column.is_primary_key,
                        popularity_rank=column.popularity_rank,
                    )
                )

        questions = TableQuestionSet.from_questions(self.config.prompt.questions)
        bundles = build_table_prompt(
            table,
            expansion,
            enriched,
            questions,
            business_context=business_context,
            token_budget=self.config.prompt.token_budget,
        )
        raws: list[str] = []
        answers: list[str] = []
        flags: set[str] = set()
        latency_total = 0
        for bundle in bundles:
            raw, latency_ms = generate(
                bundle,
                self.chat,
                temperature=self.config.chat.temperature,
                max_tokens=self.config.chat.max_tokens,
                timer=self.timer,
            )
            post = postprocess(raw, self.corrections, self.wordlist)
            raws.append(raw)
            answers.append(post.text)
            flags.update(post.flags)
            latency_total += latency_ms

        stitched = stitch_table_description(
            answers,
            questions,
            data_source=table.data_source,
            update_frequency=table.update_frequency,
        )
        combined_hash = hashlib.sha256(
            "\x1f".join(b.prompt_hash for b in bundles).encode("utf-8")
        ).hexdigest()
        record = GenerationRecord(
            prompt_hash=combined_hash,
            model_id=self.chat.model_id,
            raw_output="\n\n---\n\n".join(raws),
            processed_output=stitched,
            postprocess_flags=frozenset(flags),
            latency_ms=latency_total,
            created_at=self.clock(),
        )
        return TableGeneration(
            table=table,
            expansion=expansion,
            selected_columns=tuple(selected),
            questions=questions,
            answers=tuple(answers),
            record=record,
        )


def build_engine(
    config: AppConfig,
    catalog: Catalog,
    index: FlatIndex | None = None,
    mock: str | None = None,
) -> Engine:
    """Wire up providers and assets; builds an in-memory index when none is given."""
    embedder = make_embedder(config)
    chat = make_chat_provider(config, mock=mock)
    if index is None:
        index = build_index(catalog.columns, embedder, text_mode=config.embedder.text_mode)  # type: ignore[arg-type]
    dictionary = load_dictionary(dictionary_path(config))
    corrections = load_corrections(corrections_path(config))
    wordlist = load_wordlist(wordlist_path(config))
    return Engine(
        config=config,
        catalog=catalog,
        index=index,
        embedder=embedder,
        chat=chat,
        dictionary=dictionary,
        corrections=corrections,
        wordlist=wordlist,
        deterministic=is_mock(chat),
    )
