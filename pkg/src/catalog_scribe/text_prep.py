"""Text cleaning and identifier tokenization shared across the pipeline."""

from __future__ import annotations

import re
from dataclasses import dataclass

# Tag-shaped spans only: optional '/', then a letter or '!', then anything up
# to the closing '>'. Stray comparison operators ("a < b") are left alone.
_TAG_RE = re.compile(r"</?[a-zA-Z][^<>]*>|<![^<>]*>")
_CONTROL_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")
_WS_RE = re.compile(r"\s+")

_ALNUM_RUN_RE = re.compile(r"[A-Za-z0-9]+")
# Word boundaries inside an alphanumeric run: lower→Upper, acronym→TitleCase,
# and any letter↔digit transition.
_CAMEL_SPLIT_RE = re.compile(
    r"(?<=[a-z])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])|(?<=[A-Za-z])(?=[0-9])|(?<=[0-9])(?=[A-Za-z])"
)

SEP_UNDERSCORE = "underscore"
SEP_CAMEL = "camel_boundary"
SEP_DIGIT = "digit_boundary"


@dataclass(frozen=True)
class TokenizedName:
    """A physical identifier split into lowercase word tokens.

    ``separators_seen`` records which boundary kinds occurred anywhere in the
    name; non-alphanumeric separator characters are all reported as the
    underscore kind.
    """

    raw: str
    tokens: tuple[str, ...]
    separators_seen: tuple[str, ...]


def clean_text(text: str) -> str:
    """Strip HTML tags, control characters and redundant whitespace.

    Total on any string. Tag removal iterates to a fixpoint so the function
    stays idempotent even when stripping a tag uncovers another one.
    """
    while True:
        stripped = _TAG_RE.sub(" ", text)
        if stripped == text:
            break
        text = stripped
    text = _CONTROL_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


def tokenize_name(name: str) -> TokenizedName:
    """Split a column/table identifier into lowercase tokens.

    Splits on non-alphanumeric separators, camelCase transitions and
    letter/digit boundaries. Raises ``ValueError`` when the name is empty or
    carries no alphanumeric content, since downstream expansion has nothing
    to operate on.
    """
    if not name:
        raise ValueError("cannot tokenize an empty name")

    separators: list[str] = []
    tokens: list[str] = []

    runs = _ALNUM_RUN_RE.findall(name)
    if not runs:
        raise ValueError(f"name {name!r} contains no alphanumeric characters")
    if len(runs) > 1 or _ALNUM_RUN_RE.fullmatch(name) is None:
        separators.append(SEP_UNDERSCORE)

    for run in runs:
        parts = _CAMEL_SPLIT_RE.split(run)
        for prev, part in zip(parts, parts[1:]):
            if prev[-1].isdigit() != part[0].isdigit():
                if SEP_DIGIT not in separators:
                    separators.append(SEP_DIGIT)
            elif SEP_CAMEL not in separators:
                separators.append(SEP_CAMEL)
        tokens.extend(p.lower() for p in parts)

    return TokenizedName(raw=name, tokens=tuple(tokens), separators_seen=tuple(separators))


def name_to_text(name: str) -> str:
    """Render an identifier as space-joined lowercase tokens ("ytd dist amt")."""
    return " ".join(tokenize_name(name).tokens)
