"""Generation quality scoring and steward-feedback aggregation.

Rouge-1 here is unigram multiset overlap on lowercased whitespace tokens, no
stemming or stopword removal. Copy detection flags a generation whose best
Rouge-1 F1 against any prompt input text is strictly greater than 0.95.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError
from .httputil import post_json
from .llm_gateway import GenerationRecord, Label
from .vector_index import EmbeddingProvider

COPY_THRESHOLD = 0.95

LABELS: tuple[Label, ...] = ("accept_as_is", "minor_edit", "major_edit")


@dataclass(frozen=True)
class Rouge1Score:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def _unigrams(text: str) -> list[str]:
    return text.lower().split()


def rouge1(candidate: str, reference: str) -> Rouge1Score:
    """Unigram precision/recall/F1 with clipped (multiset) overlap.

    Empty candidate or reference contributes 0 to its ratio rather than NaN;
    F1 is 0 whenever precision + recall is 0.
    """
    cand = Counter(_unigrams(candidate))
    ref = Counter(_unigrams(reference))
    overlap = sum((cand & ref).values())
    precision = overlap / sum(cand.values()) if cand else 0.0
    recall = overlap / sum(ref.values()) if ref else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Rouge1Score(precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class CopyDetection:
    copied: bool
    best_source: str | None
    best_score: float


def detect_copy(
    generation: str,
    example_texts: Sequence[str] = (),
    comment: str | None = None,
) -> CopyDetection:
    """Copied iff the best Rouge-1 F1 against any prompt input exceeds 0.95.

    The threshold is strict: a score of exactly 0.95 is not a copy.
    """
    inputs = list(example_texts)
    if comment and comment.strip():
        inputs.append(comment)
    best_source: str | None = None
    best_score = 0.0
    for text in inputs:
        score = rouge1(generation, text).f1
        if score > best_score or best_source is None:
            best_source, best_score = text, score
    return CopyDetection(
        copied=best_score > COPY_THRESHOLD,
        best_source=best_source,
        best_score=best_score,
    )


@dataclass(frozen=True)
class CopyReport:
    total_instances: int
    copied: int

    @property
    def percent_copied(self) -> float:
        return 0.0 if self.total_instances == 0 else self.copied / self.total_instances

    def to_dict(self) -> dict:
        return {
            "total_instances": self.total_instances,
            "copied": self.copied,
            "percent_copied": self.percent_copied,
        }


@dataclass(frozen=True)
class SimilarityScore:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def embed_similarity(candidate: str, reference: str, provider: EmbeddingProvider) -> SimilarityScore:
    """Greedy token-embedding matching over the pluggable embedder.

    Precision is the mean over candidate tokens of the best cosine
    similarity to any reference token; recall is symmetric; F1 is their
    harmonic mean. Both texts empty of tokens scores zero across the board.
    """
    cand_tokens = _unigrams(candidate)
    ref_tokens = _unigrams(reference)
    if not cand_tokens or not ref_tokens:
        return SimilarityScore(0.0, 0.0, 0.0)
    vocabulary = sorted(set(cand_tokens) | set(ref_tokens))
    vectors = provider.embed(vocabulary)
    lookup = {token: vectors[i] for i, token in enumerate(vocabulary)}
    cand_matrix = np.stack([lookup[t] for t in cand_tokens])
    ref_matrix = np.stack([lookup[t] for t in ref_tokens])
    sims = cand_matrix @ ref_matrix.T
    precision = float(np.mean(np.max(sims, axis=1)))
    recall = float(np.mean(np.max(sims, axis=0)))
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return SimilarityScore(precision=precision, recall=recall, f1=f1)


class ExternalScorer:
    """Hook for an out-of-process text-pair scorer (e.g. a hosted alignment
    model): POST {"candidate", "reference"} -> {"score"}."""

    def __init__(self, url: str, timeout: float = 30.0, max_attempts: int = 3):
        self.url = url
        self.timeout = timeout
        self.max_attempts = max_attempts

    def score(self, candidate: str, reference: str) -> float:
        body = post_json(
            self.url,
            {"candidate": candidate, "reference": reference},
            timeout=self.timeout,
            max_attempts=self.max_attempts,
        )
        return float(body["score"])


@dataclass(frozen=True)
class FeedbackRecord:
    generation_ref: str
    final_text: str
    label: Label
    rouge_vs_generation: Rouge1Score

    def to_dict(self) -> dict:
        return {
            "generation_ref": self.generation_ref,
            "final_text": self.final_text,
            "label": self.label,
            "rouge_vs_generation": self.rouge_vs_generation.to_dict(),
        }


@dataclass(frozen=True)
class CopyInputs:
    """The prompt inputs a generation could have copied from."""

    example_texts: tuple[str, ...] = ()
    comment: str | None = None


def ingest_feedback(
    decisions: Iterable[tuple[str, str, Label]],
    generations: Mapping[str, GenerationRecord],
) -> list[FeedbackRecord]:
    """Turn (generation_ref, final_text, label) rows into scored records.

    Raises on a dangling reference or an accept_as_is whose text was edited.
    """
    records: list[FeedbackRecord] = []
    for ref, final_text, label in decisions:
        generation = generations.get(ref)
        if generation is None:
            raise InputError(f"feedback references unknown generation {ref!r}")
        if label not in LABELS:
            raise InputError(f"unknown feedback label {label!r}")
        if label == "accept_as_is" and final_text != generation.processed_output:
            raise InputError(f"accept_as_is for {ref!r} does not match the generated text")
        records.append(
            FeedbackRecord(
                generation_ref=ref,
                final_text=final_text,
                label=label,
                rouge_vs_generation=rouge1(final_text, generation.processed_output),
            )
        )
    return records


@dataclass
class EvalReport:
    record_count: int
    label_counts: dict[str, int]
    label_percentages: dict[str, float]
    mean_rouge1_f1: float
    mean_embed_f1: float | None
    copy_report: CopyReport | None
    mean_external_score: float | None = None

    def to_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "label_counts": dict(self.label_counts),
            "label_percentages": dict(self.label_percentages),
            "mean_rouge1_f1": self.mean_rouge1_f1,
            "mean_embed_f1": self.mean_embed_f1,
            "copy_report": self.copy_report.to_dict() if self.copy_report else None,
            "mean_external_score": self.mean_external_score,
        }

    def to_text(self) -> str:
        lines = [f"Decided items: {self.record_count}"]
        for label in LABELS:
            count = self.label_counts.get(label, 0)
            pct = self.label_percentages.get(label, 0.0)
            lines.append(f"  {label}: {count} ({pct:.1%})")
        lines.append(f"Mean Rouge-1 F1 vs generation: {self.mean_rouge1_f1:.4f}")
        if self.mean_embed_f1 is not None:
            lines.append(f"Mean embedding-similarity F1: {self.mean_embed_f1:.4f}")
        if self.copy_report is not None:
            lines.append(
                f"Copy behavior: {self.copy_report.copied}/{self.copy_report.total_instances} "
                f"({self.copy_report.percent_copied:.1%}) above Rouge-1 {COPY_THRESHOLD}"
            )
        if self.mean_external_score is not None:
            lines.append(f"Mean external score: {self.mean_external_score:.4f}")
        return "\n".join(lines)


def summarize(
    records: Sequence[FeedbackRecord],
    generations: Mapping[str, GenerationRecord] | None = None,
    copy_inputs: Mapping[str, CopyInputs] | None = None,
    provider: EmbeddingProvider | None = None,
    external_scorer: ExternalScorer | None = None,
) -> EvalReport:
    """Aggregate feedback: label split, mean scores, and batch copy behavior."""
    label_counts = {label: 0 for label in LABELS}
    for record in records:
        label_counts[record.label] += 1
    total = len(records)
    label_percentages = {
        label: (count / total if total else 0.0) for label, count in label_counts.items()
    }
    mean_rouge = (
        sum(r.rouge_vs_generation.f1 for r in records) / total if total else 0.0
    )

    mean_embed: float | None = None
    if provider is not None and generations is not None and total:
        scores = []
        for record in records:
            generation = generations.get(record.generation_ref)
            if generation is not None:
                scores.append(
                    embed_similarity(record.final_text, generation.processed_output, provider).f1
                )
        mean_embed = sum(scores) / len(scores) if scores else None

    copy_report: CopyReport | None = None
    if copy_inputs is not None and generations is not None:
        copied = 0
        evaluated = 0
        for record in records:
            generation = generations.get(record.generation_ref)
            inputs = copy_inputs.get(record.generation_ref)
            if generation is None:
                continue
            evaluated += 1
            if inputs is not None:
                detection = detect_copy(
                    generation.processed_output, inputs.example_texts, inputs.comment
                )
                if detection.copied:
                    copied += 1
        copy_report = CopyReport(total_instances=evaluated, copied=copied)

    mean_external: float | None = None
    if external_scorer is not None and generations is not None and total:
        scores = []
        for record in records:
            generation = generations.get(record.generation_ref)
            if generation is not None:
                scores.append(external_scorer.score(record.final_text, generation.processed_output))
        mean_external = sum(scores) / len(scores) if scores else None

    return EvalReport(
        record_count=total,
        label_counts=label_counts,
        label_percentages=label_percentages,
        mean_rouge1_f1=mean_rouge,
        mean_embed_f1=mean_embed,
        copy_report=copy_report,
        mean_external_score=mean_external,
    )
