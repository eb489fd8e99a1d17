"""Two-step few-shot example selection.

Step one retrieves the nearest existing columns from the flat index. When a
name-equal match exists, those matches win outright, preferring same-table
then same-source candidates. Otherwise a greedy longest-common-subsequence
pass picks up to three examples that together cover the query name's tokens.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

from .catalog import Catalog, ColumnAsset, ColumnKey
from .text_prep import clean_text, tokenize_name
from .vector_index import (
    DEFAULT_TOP_K,
    EmbeddingProvider,
    EmbedTextMode,
    FlatIndex,
    embedding_text,
    search,
)

MAX_EXAMPLES = 3

MatchTier = Literal["exact_same_table", "exact_same_source", "exact_other", "partial"]

_TIER_RANK = {"exact_same_table": 0, "exact_same_source": 1, "exact_other": 2}


@dataclass(frozen=True)
class FewShotExample:
    ref: ColumnKey
    example_text: str
    match_tier: MatchTier
    similarity_distance: float
    covered_tokens: frozenset[str]

    def to_dict(self) -> dict:
        return {
            "ref": self.ref.as_str(),
            "example_text": self.example_text,
            "match_tier": self.match_tier,
            "similarity_distance": self.similarity_distance,
            "covered_tokens": sorted(self.covered_tokens),
        }


@dataclass(frozen=True)
class RetrievalOutcome:
    query: ColumnKey
    examples: tuple[FewShotExample, ...]
    exact_match_found: bool
    uncovered_tokens: frozenset[str]

    def to_dict(self) -> dict:
        return {
            "query": self.query.as_str(),
            "examples": [e.to_dict() for e in self.examples],
            "exact_match_found": self.exact_match_found,
            "uncovered_tokens": sorted(self.uncovered_tokens),
        }


@dataclass(frozen=True)
class Candidate:
    """A search hit resolved back to its catalog column."""

    column: ColumnAsset
    tokens: tuple[str, ...]
    example_text: str
    distance: float
    rank: int


def lcs_length(a: Sequence[str], b: Sequence[str]) -> tuple[int, frozenset[str]]:
    """Word-level LCS length plus the a-tokens matched by one maximal alignment.

    The alignment is reconstructed with a leftmost-greedy walk, so the
    matched set is deterministic. Empty sequences are allowed.
    """
    n, m = len(a), len(b)
    # table[i][j] = LCS length of a[i:], b[j:]
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]

    matched: set[str] = set()
    i = j = 0
    while i < n and j < m and table[i][j] > 0:
        if a[i] == b[j] and table[i][j] == table[i + 1][j + 1] + 1:
            matched.add(a[i])
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return table[0][0], frozenset(matched)


def _names_equal(a: str, b: str) -> bool:
    """Exactness across naming conventions: token sequences must agree."""
    try:
        return tokenize_name(a).tokens == tokenize_name(b).tokens
    except ValueError:
        return False


def exact_tier(query: ColumnAsset, candidate: ColumnAsset) -> MatchTier:
    if candidate.table_name == query.table_name:
        return "exact_same_table"
    if candidate.data_source == query.data_source:
        return "exact_same_source"
    return "exact_other"


def select_exact(query: ColumnAsset, candidates: Sequence[Candidate]) -> list[FewShotExample]:
    """Up to three name-equal candidates, ordered same-table, same-source, other."""
    query_tokens = frozenset(tokenize_name(query.column_name).tokens)
    matches = [c for c in candidates if _names_equal(c.column.column_name, query.column_name)]
    matches.sort(key=lambda c: (_TIER_RANK[exact_tier(query, c.column)], c.distance, c.rank))
    return [
        FewShotExample(
            ref=c.column.key,
            example_text=c.example_text,
            match_tier=exact_tier(query, c.column),
            similarity_distance=c.distance,
            covered_tokens=query_tokens,
        )
        for c in matches[:MAX_EXAMPLES]
    ]


def select_by_coverage(
    query_tokens: Sequence[str], candidates: Sequence[Candidate]
) -> tuple[list[FewShotExample], frozenset[str]]:
    """Greedy cover of the query tokens by candidate LCS alignments.

    Each round picks the candidate whose LCS against the still-uncovered
    token subsequence is largest (ties: smaller distance, then earlier rank)
    and stops at full coverage, three picks, or zero remaining gain. If
    coverage stalls with open slots, the slots are filled by ascending
    distance so the prompt still gets its nearest neighbours.
    """
    selected: list[FewShotExample] = []
    chosen: set[int] = set()
    covered: set[str] = set()

    while len(selected) < MAX_EXAMPLES:
        uncovered_seq = [t for t in query_tokens if t not in covered]
        if not uncovered_seq:
            break
        best: tuple[int, float, int, int, frozenset[str]] | None = None
        for i, cand in enumerate(candidates):
            if i in chosen:
                continue
            gain, matched = lcs_length(uncovered_seq, cand.tokens)
            key = (-gain, cand.distance, cand.rank)
            if best is None or key < (-best[0], best[1], best[2]):
                best = (gain, cand.distance, cand.rank, i, matched)
        if best is None or best[0] == 0:
            break
        gain, _, _, index, matched = best
        cand = candidates[index]
        chosen.add(index)
        covered.update(matched)
        selected.append(
            FewShotExample(
                ref=cand.column.key,
                example_text=cand.example_text,
                match_tier="partial",
                similarity_distance=cand.distance,
                covered_tokens=matched,
            )
        )

    uncovered = frozenset(t for t in query_tokens if t not in covered)
    if uncovered:
        # Coverage stalled; backfill the remaining slots with nearest neighbours.
        fillers = sorted(
            (c for i, c in enumerate(candidates) if i not in chosen),
            key=lambda c: (c.distance, c.rank),
        )
        for cand in fillers[: MAX_EXAMPLES - len(selected)]:
            selected.append(
                FewShotExample(
                    ref=cand.column.key,
                    example_text=cand.example_text,
                    match_tier="partial",
                    similarity_distance=cand.distance,
                    covered_tokens=frozenset(),
                )
            )
    return selected, uncovered


def resolve_hits(
    query: ColumnAsset, hits, catalog: Catalog
) -> list[Candidate]:
    """Map search hits to usable candidates, dropping the query itself and
    anything without answer text."""
    candidates: list[Candidate] = []
    for hit in hits:
        column = catalog.column(hit.ref)
        if column is None or column.key == query.key:
            continue
        example_text = clean_text(column.description or column.comment or "")
        if not example_text:
            continue
        candidates.append(
            Candidate(
                column=column,
                tokens=tokenize_name(column.column_name).tokens,
                example_text=example_text,
                distance=hit.distance,
                rank=hit.rank,
            )
        )
    return candidates


def retrieve_fewshot(
    query: ColumnAsset,
    index: FlatIndex,
    catalog: Catalog,
    provider: EmbeddingProvider,
    k: int = DEFAULT_TOP_K,
    text_mode: EmbedTextMode = "tokens",
) -> RetrievalOutcome:
    query_tokens = tokenize_name(query.column_name).tokens
    if len(index):
        query_vector = provider.embed([embedding_text(query, text_mode)])[0]
        hits = search(index, query_vector, k)
    else:
        hits = []
    candidates = resolve_hits(query, hits, catalog)

    exact = select_exact(query, candidates)
    if exact:
        return RetrievalOutcome(
            query=query.key,
            examples=tuple(exact),
            exact_match_found=True,
            uncovered_tokens=frozenset(),
        )
    examples, uncovered = select_by_coverage(query_tokens, candidates)
    return RetrievalOutcome(
        query=query.key,
        examples=tuple(examples),
        exact_match_found=False,
        uncovered_tokens=uncovered,
    )
