"""Abbreviation expansion for column and table names.

Single-candidate tokens expand directly. Multi-candidate tokens go through
context scoring; when the scoring cannot produce a strict winner the token is
deliberately left as-is so the language model can interpret it from the rest
of the prompt. Tokens without a dictionary entry also pass through unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal

from .errors import InputError
from .text_prep import tokenize_name

DOMAIN_MATCH_SCORE = 2
SIBLING_WORD_SCORE = 1

Outcome = Literal["expanded", "ambiguous_kept", "unknown_kept"]


@dataclass(frozen=True)
class ExpansionCandidate:
    expansion: str
    domains: tuple[str, ...] = ()
    priority: int = 0


@dataclass(frozen=True)
class AbbreviationDictionary:
    """Lowercased abbreviation -> candidates ordered by priority."""

    entries: dict[str, tuple[ExpansionCandidate, ...]]

    def lookup(self, token: str) -> tuple[ExpansionCandidate, ...]:
        return self.entries.get(token.lower(), ())

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ExpansionContext:
    """Signals available to disambiguation: the asset's location plus the
    expansions already fixed for sibling tokens of the same name."""

    table_name: str = ""
    data_source: str = ""
    sibling_expansions: tuple[str, ...] = ()


@dataclass(frozen=True)
class TokenOutcome:
    token: str
    outcome: Outcome
    expansion: str | None = None

    @property
    def text(self) -> str:
        return self.expansion if self.outcome == "expanded" and self.expansion else self.token

    def to_dict(self) -> dict:
        return {"token": self.token, "outcome": self.outcome, "expansion": self.expansion}


@dataclass(frozen=True)
class ExpansionResult:
    raw: str
    per_token: tuple[TokenOutcome, ...]
    expanded_name: str

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "per_token": [t.to_dict() for t in self.per_token],
            "expanded_name": self.expanded_name,
        }


def _parse_candidates(abbr: str, raw_candidates: list) -> tuple[ExpansionCandidate, ...]:
    if not raw_candidates:
        raise InputError(f"abbreviation {abbr!r} has no candidates")
    candidates: list[ExpansionCandidate] = []
    expansions_seen: set[str] = set()
    priorities_seen: set[int] = set()
    for position, raw in enumerate(raw_candidates):
        expansion = str(raw.get("expansion", "")).strip()
        if not expansion:
            raise InputError(f"abbreviation {abbr!r}: empty expansion")
        if expansion.lower() in expansions_seen:
            raise InputError(f"abbreviation {abbr!r}: duplicate expansion {expansion!r}")
        expansions_seen.add(expansion.lower())
        priority = int(raw.get("priority", position))
        if priority in priorities_seen:
            raise InputError(f"abbreviation {abbr!r}: duplicate priority {priority}")
        priorities_seen.add(priority)
        domains = tuple(str(d).lower() for d in raw.get("domains", ()))
        candidates.append(ExpansionCandidate(expansion=expansion, domains=domains, priority=priority))
    candidates.sort(key=lambda c: c.priority)
    return tuple(candidates)


def load_dictionary(path: str | Path) -> AbbreviationDictionary:
    """Load an abbreviation dictionary from a JSON array or JSON-lines file.

    Record shape: {"abbr": str, "candidates": [{"expansion", "domains", "priority"}]}.
    Keys are lowercased; a repeated key, a duplicate candidate expansion or a
    duplicate priority under one key is an error.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"dictionary file not found: {path}")
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        raise InputError(f"dictionary file is empty: {path}")
    try:
        if text.startswith("["):
            records = json.loads(text)
        else:
            records = [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: dictionary parse failure: {exc}") from exc

    entries: dict[str, tuple[ExpansionCandidate, ...]] = {}
    for record in records:
        abbr = str(record.get("abbr", "")).strip().lower()
        if not abbr:
            raise InputError(f"{path}: record with empty abbr")
        if abbr in entries:
            raise InputError(f"{path}: duplicate abbreviation key {abbr!r}")
        entries[abbr] = _parse_candidates(abbr, record.get("candidates", []))
    return AbbreviationDictionary(entries=entries)


def _context_tokens(context: ExpansionContext) -> set[str]:
    tokens: set[str] = set()
    for name in (context.table_name, context.data_source):
        if name:
            tokens.add(name.lower())
            try:
                tokens.update(tokenize_name(name).tokens)
            except ValueError:
                pass
    return tokens


def _score(candidate: ExpansionCandidate, context_tokens: set[str], sibling_words: set[str]) -> int:
    score = 0
    for tag in candidate.domains:
        if tag in context_tokens:
            score += DOMAIN_MATCH_SCORE
    for word in candidate.expansion.lower().split():
        if word in sibling_words:
            score += SIBLING_WORD_SCORE
    return score


def disambiguate_token(
    token: str,
    candidates: tuple[ExpansionCandidate, ...] | list[ExpansionCandidate],
    context: ExpansionContext,
) -> ExpansionCandidate | None:
    """Choose among multiple candidate expansions, or return None when inconclusive.

    Scoring: +2 per candidate domain tag matching the asset's data source (as
    a whole or one of its tokens) or a table-name token; +1 per candidate
    expansion word already present in a resolved sibling expansion. Only a
    strict maximum wins; a tie between the two best scores is inconclusive
    and the token stays unexpanded. Priority never breaks a score tie.
    """
    if len(candidates) < 2:
        raise ValueError("disambiguate_token requires at least two candidates")
    context_tokens = _context_tokens(context)
    sibling_words: set[str] = set()
    for expansion in context.sibling_expansions:
        sibling_words.update(expansion.lower().split())

    scored = [(_score(c, context_tokens, sibling_words), i, c) for i, c in enumerate(candidates)]
    ranked = sorted(scored, key=lambda item: (-item[0], item[1]))
    if ranked[0][0] == ranked[1][0]:
        return None
    return ranked[0][2]


def expand_name(
    name: str,
    dictionary: AbbreviationDictionary,
    context: ExpansionContext | None = None,
) -> ExpansionResult:
    """Expand every token of a name that the dictionary resolves.

    Single-candidate tokens are fixed first; ambiguous tokens are then
    disambiguated left-to-right so sibling co-occurrence can rely on the
    expansions already settled. Unknown tokens pass through unchanged.
    """
    context = context or ExpansionContext()
    tokens = tokenize_name(name).tokens

    outcomes: list[TokenOutcome | None] = [None] * len(tokens)
    resolved: list[str] = []
    pending: list[int] = []
    for i, token in enumerate(tokens):
        candidates = dictionary.lookup(token)
        if not candidates:
            outcomes[i] = TokenOutcome(token=token, outcome="unknown_kept")
        elif len(candidates) == 1:
            outcomes[i] = TokenOutcome(token=token, outcome="expanded", expansion=candidates[0].expansion)
            resolved.append(candidates[0].expansion)
        else:
            pending.append(i)

    for i in pending:
        token = tokens[i]
        token_context = replace(context, sibling_expansions=tuple(resolved))
        chosen = disambiguate_token(token, dictionary.lookup(token), token_context)
        if chosen is None:
            outcomes[i] = TokenOutcome(token=token, outcome="ambiguous_kept")
        else:
            outcomes[i] = TokenOutcome(token=token, outcome="expanded", expansion=chosen.expansion)
            resolved.append(chosen.expansion)

    per_token = tuple(o for o in outcomes if o is not None)
    expanded_name = " ".join(o.text for o in per_token)
    return ExpansionResult(raw=name, per_token=per_token, expanded_name=expanded_name)
