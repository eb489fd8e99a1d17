"""Prompt assembly for column and table description generation.

Few-shot examples ride as alternating user/assistant chat turns rather than
one concatenated blob; table prompts are one bundle per directed question,
stitched back together after generation.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from importlib import resources

from .catalog import ColumnAsset, TableAsset
from .errors import InputError
from .expander import ExpansionResult
from .retrieval import FewShotExample, RetrievalOutcome
from .text_prep import clean_text

DEFAULT_TOKEN_BUDGET = 3072
DEFAULT_TABLE_COLUMN_LIMIT = 25
TOKENS_PER_WORD = 1.3
TRUNCATE_FLOOR_WORDS = 24

DEFAULT_AUDIT_COLUMNS = (
    "created_by",
    "updated_by",
    "created_ts",
    "updated_ts",
    "load_ts",
    "etl_batch_id",
)

DEFAULT_QUESTIONS = (
    "What business entity or event does this table represent, and at what grain?",
    "What key information do its columns capture?",
    "How would an analyst typically use this table?",
)


class PromptBudgetError(InputError):
    """The prompt cannot fit the token budget even with no few-shot turns."""


@dataclass(frozen=True)
class FewShotTurn:
    user_content: str
    assistant_content: str


@dataclass(frozen=True)
class PromptBundle:
    system_instructions: str
    fewshot_turns: tuple[FewShotTurn, ...]
    user_message: str
    token_estimate: int
    prompt_hash: str


@dataclass(frozen=True)
class TableQuestionSet:
    questions: tuple[str, ...]
    stitch_order: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.questions:
            raise ValueError("question set needs at least one question")
        if sorted(self.stitch_order) != list(range(len(self.questions))):
            raise ValueError("stitch_order must be a permutation over the questions")

    @classmethod
    def default(cls) -> "TableQuestionSet":
        return cls.from_questions(DEFAULT_QUESTIONS)

    @classmethod
    def from_questions(cls, questions) -> "TableQuestionSet":
        questions = tuple(questions)
        return cls(questions=questions, stitch_order=tuple(range(len(questions))))


def load_asset_text(name: str) -> str:
    return resources.files("catalog_scribe.assets").joinpath(name).read_text(encoding="utf-8")


def default_column_instructions() -> str:
    return load_asset_text("column_system_prompt.txt").strip()


def default_table_instructions() -> str:
    return load_asset_text("table_system_prompt.txt").strip()


def estimate_tokens(*texts: str) -> int:
    """Documented estimator: whitespace word count times 1.3, rounded up.

    Deliberately model-agnostic; swap it out if exact tokenizer parity with a
    specific model ever matters.
    """
    words = sum(len(t.split()) for t in texts)
    return math.ceil(words * TOKENS_PER_WORD)


def _bundle(system: str, turns: tuple[FewShotTurn, ...], user: str) -> PromptBundle:
    estimate = estimate_tokens(system, *(t.user_content for t in turns),
                               *(t.assistant_content for t in turns), user)
    payload = json.dumps(
        {
            "system": system,
            "turns": [[t.user_content, t.assistant_content] for t in turns],
            "user": user,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    return PromptBundle(
        system_instructions=system,
        fewshot_turns=turns,
        user_message=user,
        token_estimate=estimate,
        prompt_hash=digest,
    )


def _column_facts(name: str, table_name: str, data_source: str,
                  expanded: str | None = None, comment: str | None = None) -> str:
    lines = [f"Column name: {name}"]
    if expanded and expanded != name:
        lines.append(f"Expanded name: {expanded}")
    lines.append(f"Table: {table_name}")
    lines.append(f"Data source: {data_source}")
    if comment:
        lines.append(f"Source comment: {comment}")
    return "\n".join(lines)


def _example_turn(example: FewShotExample) -> FewShotTurn:
    ref = example.ref
    facts = _column_facts(ref.column_name, ref.table_name, ref.data_source)
    user = facts + "\nWrite a one-sentence business description of this column."
    assistant = json.dumps({"description": example.example_text}, ensure_ascii=False)
    return FewShotTurn(user_content=user, assistant_content=assistant)


def _truncate_words(text: str, max_words: int) -> str:
    words = text.split()
    if len(words) <= max_words:
        return text
    return " ".join(words[:max_words])


def _shrink_turn(turn: FewShotTurn) -> FewShotTurn | None:
    """Halve the assistant example text, bottoming out at the floor."""
    try:
        payload = json.loads(turn.assistant_content)
        text = payload["description"]
    except (json.JSONDecodeError, KeyError, TypeError):
        text = turn.assistant_content
    words = text.split()
    if len(words) <= TRUNCATE_FLOOR_WORDS:
        return None
    shortened = _truncate_words(text, max(TRUNCATE_FLOOR_WORDS, len(words) // 2))
    return FewShotTurn(
        user_content=turn.user_content,
        assistant_content=json.dumps({"description": shortened}, ensure_ascii=False),
    )


def _fit_budget(system: str, turns: list[FewShotTurn], user: str, budget: int) -> PromptBundle:
    bundle = _bundle(system, tuple(turns), user)
    # First pass: truncate the longest example texts.
    while bundle.token_estimate > budget:
        order = sorted(
            range(len(turns)),
            key=lambda i: len(turns[i].assistant_content.split()),
            reverse=True,
        )
        shrunk = False
        for i in order:
            replacement = _shrink_turn(turns[i])
            if replacement is not None:
                turns[i] = replacement
                shrunk = True
                break
        if not shrunk:
            break
        bundle = _bundle(system, tuple(turns), user)
    # Second pass: drop whole examples from the back.
    while bundle.token_estimate > budget and turns:
        turns.pop()
        bundle = _bundle(system, tuple(turns), user)
    if bundle.token_estimate > budget:
        raise PromptBudgetError(
            f"prompt needs ~{bundle.token_estimate} tokens even with no examples; budget is {budget}"
        )
    return bundle


def build_column_prompt(
    column: ColumnAsset,
    expansion: ExpansionResult,
    retrieval: RetrievalOutcome,
    glossary_terms: list[str] | None = None,
    system_instructions: str | None = None,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> PromptBundle:
    """Compose the column prompt: facts, glossary, and examples as chat turns."""
    if expansion.raw != column.column_name:
        raise ValueError("expansion does not correspond to this column's name")
    system = system_instructions if system_instructions is not None else default_column_instructions()

    comment = clean_text(column.comment or "")
    facts = _column_facts(
        column.column_name,
        column.table_name,
        column.data_source,
        expanded=expansion.expanded_name,
        comment=comment or None,
    )
    blocks = [facts]
    if glossary_terms:
        blocks.append("Business glossary:\n" + "\n".join(f"- {t}" for t in glossary_terms))
    blocks.append(
        "Write a one-sentence business description of this column. "
        'Respond with a single JSON object: {"description": "..."}'
    )
    user = "\n\n".join(blocks)

    turns = [_example_turn(e) for e in retrieval.examples]
    return _fit_budget(system, turns, user, token_budget)


def is_audit_column(name: str, audit_names=DEFAULT_AUDIT_COLUMNS) -> bool:
    lowered = name.lower()
    return any(lowered == a or lowered.endswith("_" + a) for a in audit_names)


def select_table_columns(
    table: TableAsset,
    limit: int = DEFAULT_TABLE_COLUMN_LIMIT,
    rng: random.Random | None = None,
    audit_names=DEFAULT_AUDIT_COLUMNS,
) -> list[ColumnAsset]:
    """Pick the columns worth showing in a table prompt.

    Hierarchy: drop audit columns; keep every important column; keep up to
    the first five primary-key columns in physical order; fill by ascending
    popularity rank; fill what is left with a seeded random sample of the
    remaining described columns (``rng.sample`` over them in physical
    order). Later stages never duplicate earlier picks; the final list is
    cut to ``limit``.
    """
    rng = rng or random.Random(0)
    eligible = [c for c in table.columns if not is_audit_column(c.column_name, audit_names)]

    ordered: list[ColumnAsset] = []
    seen: set = set()

    def add(column: ColumnAsset) -> None:
        if column.key not in seen:
            seen.add(column.key)
            ordered.append(column)

    for column in eligible:
        if column.is_important:
            add(column)

    pk_slots = 0
    for column in eligible:
        if column.is_primary_key and pk_slots < 5:
            pk_slots += 1
            add(column)

    for column in sorted(
        (c for c in eligible if c.popularity_rank is not None),
        key=lambda c: c.popularity_rank,
    ):
        add(column)

    remaining = max(0, limit - len(ordered))
    leftovers = [
        c for c in eligible
        if c.key not in seen and ((c.description or "").strip() or (c.comment or "").strip())
    ]
    if remaining and leftovers:
        for column in rng.sample(leftovers, min(remaining, len(leftovers))):
            add(column)

    return ordered[:limit]


def _column_context_block(columns: list[ColumnAsset]) -> list[str]:
    lines = []
    for c in columns:
        text = clean_text(c.description or c.comment or "")
        lines.append(f"- {c.column_name}: {text}" if text else f"- {c.column_name}")
    return lines


def build_table_prompt(
    table: TableAsset,
    expansion: ExpansionResult,
    selected: list[ColumnAsset],
    questions: TableQuestionSet,
    business_context: str | None = None,
    system_instructions: str | None = None,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> list[PromptBundle]:
    """One bundle per directed question, sharing the same table context."""
    if len(selected) > DEFAULT_TABLE_COLUMN_LIMIT:
        raise ValueError(f"selected column list exceeds {DEFAULT_TABLE_COLUMN_LIMIT}")
    system = system_instructions if system_instructions is not None else default_table_instructions()

    facts = [f"Table name: {table.table_name}"]
    if expansion.expanded_name != table.table_name:
        facts.append(f"Expanded name: {expansion.expanded_name}")
    facts.append(f"Data source: {table.data_source}")
    comment = clean_text(table.comment or "")
    if comment:
        facts.append(f"Table comment: {comment}")

    context = clean_text(business_context or table.business_context or "")

    bundles: list[PromptBundle] = []
    for question in questions.questions:
        columns = list(selected)
        while True:
            blocks = ["\n".join(facts)]
            if columns:
                blocks.append("Columns:\n" + "\n".join(_column_context_block(columns)))
            if context:
                blocks.append(f"Business context: {context}")
            blocks.append(f"Question: {question}")
            bundle = _bundle(system, (), "\n\n".join(blocks))
            if bundle.token_estimate <= token_budget:
                bundles.append(bundle)
                break
            if columns:
                columns.pop()  # trim from the random-fill tail first
            else:
                raise PromptBudgetError(
                    f"table prompt needs ~{bundle.token_estimate} tokens with no columns; "
                    f"budget is {token_budget}"
                )
    return bundles


def stitch_table_description(
    answers: list[str],
    questions: TableQuestionSet,
    data_source: str | None = None,
    update_frequency: str | None = None,
) -> str:
    """Join cleaned per-question answers into one description, then append
    the physical facts sentence when available."""
    if len(answers) != len(questions.questions):
        raise InputError(
            f"got {len(answers)} answers for {len(questions.questions)} questions"
        )
    cleaned = [clean_text(a) for a in answers]
    parts = [cleaned[i] for i in questions.stitch_order if cleaned[i]]

    if data_source and update_frequency:
        parts.append(f"The table resides in the {data_source} data source and is updated {update_frequency}.")
    elif data_source:
        parts.append(f"The table resides in the {data_source} data source.")
    elif update_frequency:
        parts.append(f"The table is updated {update_frequency}.")

    return "\n\n".join(parts)
