"""Provider-agnostic chat generation plus output post-processing.

Two deterministic mock providers ship alongside the HTTP client: the echo
mock copies the first few-shot answer verbatim (the copying behavior seen in
small fine-tuned models), while the paraphrase mock recomposes it (the
recomposition behavior of the larger hosted models). Both are pure functions
of the prompt and seed, which keeps end-to-end runs byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol, Sequence

from .errors import InputError, ProtocolError
from .httputil import post_json
from .prompt_builder import PromptBundle
from .text_prep import clean_text

FLAG_JSON_EXTRACTED = "json_extracted"
FLAG_JSON_FALLBACK = "json_fallback_raw"
FLAG_CORRECTIONS = "corrections_applied"
FLAG_GUARDRAIL = "guardrail_flagged"

DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 256

Message = dict[str, str]


class ChatProvider(Protocol):
    model_id: str

    def complete(self, messages: Sequence[Message], temperature: float, max_tokens: int) -> str: ...


def bundle_to_messages(bundle: PromptBundle) -> list[Message]:
    """Render a bundle as system + alternating few-shot turns + user."""
    messages: list[Message] = [{"role": "system", "content": bundle.system_instructions}]
    for turn in bundle.fewshot_turns:
        messages.append({"role": "user", "content": turn.user_content})
        messages.append({"role": "assistant", "content": turn.assistant_content})
    messages.append({"role": "user", "content": bundle.user_message})
    return messages


class HttpChatProvider:
    """OpenAI-style chat completions client.

    Request: {"model", "messages", "temperature", "max_tokens"}; the first
    choice's message content is the completion. Configuration falls back to
    LLM_API_BASE / LLM_API_KEY / LLM_MODEL.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 3,
    ):
        self.base_url = (base_url or os.getenv("LLM_API_BASE", "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.getenv("LLM_API_KEY", "")
        self.model_id = model or os.getenv("LLM_MODEL", "")
        if not self.base_url or not self.model_id:
            raise InputError(
                "chat provider needs LLM_API_BASE and LLM_MODEL (or explicit arguments)"
            )
        self.timeout = timeout
        self.max_attempts = max_attempts

    def complete(self, messages: Sequence[Message], temperature: float, max_tokens: int) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = post_json(
            f"{self.base_url}/chat/completions",
            {
                "model": self.model_id,
                "messages": list(messages),
                "temperature": temperature,
                "max_tokens": max_tokens,
            },
            headers=headers,
            timeout=self.timeout,
            max_attempts=self.max_attempts,
        )
        choices = body.get("choices")
        if not choices:
            raise ProtocolError("chat response carries no choices")
        content = (choices[0].get("message") or {}).get("content")
        if not isinstance(content, str) or not content.strip():
            raise ProtocolError("chat response carries no message content")
        return content


def _first_assistant(messages: Sequence[Message]) -> str | None:
    for message in messages:
        if message.get("role") == "assistant":
            return message.get("content", "")
    return None


def _last_user(messages: Sequence[Message]) -> str:
    for message in reversed(messages):
        if message.get("role") == "user":
            return message.get("content", "")
    return ""


class EchoMockProvider:
    """Returns the first few-shot assistant message verbatim.

    Models the copy-and-paste behavior of a small fine-tuned model; with no
    few-shot turns it echoes the final user message so it stays total.
    """

    model_id = "mock-echo"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def complete(self, messages: Sequence[Message], temperature: float, max_tokens: int) -> str:
        assistant = _first_assistant(messages)
        if assistant:
            return assistant
        return _last_user(messages)


class ParaphraseMockProvider:
    """Recomposes the first few-shot answer: seeded word drop + shuffle,
    wrapped in a fixed frame. Models a hosted model that paraphrases rather
    than copies, so unigram overlap with the source stays well under the
    copy threshold."""

    model_id = "mock-paraphrase"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def complete(self, messages: Sequence[Message], temperature: float, max_tokens: int) -> str:
        assistant = _first_assistant(messages)
        source = assistant if assistant else _last_user(messages)
        text, _ = extract_json(source)

        material = f"{self.seed}::" + "\x1f".join(m.get("content", "") for m in messages)
        rng = random.Random(hashlib.sha256(material.encode("utf-8")).hexdigest())
        words = text.split()
        if len(words) > 1:
            drop = max(1, len(words) // 4)
            keep_idx = sorted(rng.sample(range(len(words)), len(words) - drop))
            words = [words[i] for i in keep_idx]
        rng.shuffle(words)
        framed = "Paraphrased: " + " ".join(words) + " (auto-generated gist)"
        return json.dumps({"description": framed}, ensure_ascii=False)


def generate(
    bundle: PromptBundle,
    provider: ChatProvider,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    timer=time.perf_counter,
) -> tuple[str, int]:
    """Run one completion; returns (raw text, latency in ms)."""
    started = timer()
    raw = provider.complete(bundle_to_messages(bundle), temperature, max_tokens)
    latency_ms = max(0, int((timer() - started) * 1000))
    return raw, latency_ms


def extract_json(raw: str) -> tuple[str, bool]:
    """Pull the description out of the first JSON object that carries one.

    Scans every '{' and attempts a decode, so nested braces inside the
    description string are handled. Returns (cleaned raw, False) when no
    object with a non-empty string "description" exists.
    """
    decoder = json.JSONDecoder()
    for start in range(len(raw)):
        if raw[start] != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            description = obj.get("description")
            if isinstance(description, str) and description.strip():
                return description.strip(), True
    return clean_text(raw), False


@dataclass(frozen=True)
class CorrectionRule:
    rule_id: str
    pattern: re.Pattern
    replacement: str


def load_corrections(path: str | Path) -> list[CorrectionRule]:
    """Load ordered correction rules, screening each for self-reapplication.

    A rule whose pattern matches its own replacement would change text again
    on a second pass; such rules are rejected at load so the shipped set
    stays idempotent.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"corrections file not found: {path}")
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: corrections parse failure: {exc}") from exc
    rules: list[CorrectionRule] = []
    for record in records:
        rule_id = str(record.get("rule_id", "")) or f"rule-{len(rules)}"
        try:
            pattern = re.compile(record["pattern"])
        except (re.error, KeyError) as exc:
            raise InputError(f"{path}: rule {rule_id}: bad pattern: {exc}") from exc
        replacement = str(record.get("replacement", ""))
        if pattern.search(replacement):
            raise InputError(f"{path}: rule {rule_id} is not idempotent "
                             "(pattern matches its own replacement)")
        rules.append(CorrectionRule(rule_id=rule_id, pattern=pattern, replacement=replacement))
    return rules


def apply_corrections(text: str, rules: Sequence[CorrectionRule]) -> tuple[str, list[str]]:
    """Apply rules sequentially in file order; reports which rules fired."""
    applied: list[str] = []
    for rule in rules:
        text, count = rule.pattern.subn(rule.replacement, text)
        if count:
            applied.append(rule.rule_id)
    return text, applied


def load_wordlist(path: str | Path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"wordlist file not found: {path}")
    terms = []
    for line in path.read_text(encoding="utf-8").splitlines():
        term = line.strip()
        if term and not term.startswith("#"):
            terms.append(term.lower())
    return terms


@dataclass(frozen=True)
class GuardrailResult:
    passed: bool
    term: str | None = None


def guardrail_check(text: str, wordlist: Sequence[str]) -> GuardrailResult:
    """Case-insensitive substring scan against the configured blocklist."""
    lowered = text.lower()
    for term in wordlist:
        if term and term in lowered:
            return GuardrailResult(passed=False, term=term)
    return GuardrailResult(passed=True)


@dataclass(frozen=True)
class PostProcessResult:
    text: str
    flags: frozenset[str]
    applied_rules: tuple[str, ...]
    guardrail_term: str | None


def postprocess(
    raw: str,
    rules: Sequence[CorrectionRule] = (),
    wordlist: Sequence[str] = (),
) -> PostProcessResult:
    """Fixed pipeline: JSON extraction, then corrections, then guardrail."""
    flags: set[str] = set()
    text, extracted = extract_json(raw)
    flags.add(FLAG_JSON_EXTRACTED if extracted else FLAG_JSON_FALLBACK)
    text, applied = apply_corrections(text, rules)
    if applied:
        flags.add(FLAG_CORRECTIONS)
    guard = guardrail_check(text, wordlist)
    if not guard.passed:
        flags.add(FLAG_GUARDRAIL)
    return PostProcessResult(
        text=text,
        flags=frozenset(flags),
        applied_rules=tuple(applied),
        guardrail_term=guard.term,
    )


Label = Literal["accept_as_is", "minor_edit", "major_edit"]


@dataclass(frozen=True)
class GenerationRecord:
    prompt_hash: str
    model_id: str
    raw_output: str
    processed_output: str
    postprocess_flags: frozenset[str]
    latency_ms: int
    created_at: str

    def to_dict(self) -> dict:
        return {
            "prompt_hash": self.prompt_hash,
            "model_id": self.model_id,
            "raw_output": self.raw_output,
            "processed_output": self.processed_output,
            "postprocess_flags": sorted(self.postprocess_flags),
            "latency_ms": self.latency_ms,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationRecord":
        return cls(
            prompt_hash=data["prompt_hash"],
            model_id=data["model_id"],
            raw_output=data["raw_output"],
            processed_output=data["processed_output"],
            postprocess_flags=frozenset(data.get("postprocess_flags", ())),
            latency_ms=int(data.get("latency_ms", 0)),
            created_at=data.get("created_at", ""),
        )
