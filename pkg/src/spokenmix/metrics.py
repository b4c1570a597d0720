"""Scoring protocol: exact-match-then-judge accuracy, embedding-mapped
macro-F1, caption scoring, corpus WER, and instruction-following accuracy.

Accuracy-style tasks short-circuit on character-identical normalized text
and only fall back to the judge on mismatch, so judge traffic stays small
and exact answers never depend on a remote service. Judge-unresolved
records are excluded from both numerator and denominator and surfaced in
the report counts; nothing is silently dropped.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .cider import CIDER_VARIANT, cider
from .clients import Embedder, Judge, JudgeRequest, cosine_similarity
from .text import (
    NORMALIZER_VERSION,
    ParsedOutput,
    edit_distance,
    normalize_text,
    parse_assisted_output,
)

MIN_ANNOTATORS_FOR_UNANIMOUS = 3

_LABEL_SPLIT = re.compile(r",|;|\band\b", re.IGNORECASE)


@dataclass(frozen=True)
class EvalRecord:
    """One prediction against its ground truth(s)."""

    entry_id: str
    task: str
    prediction: str
    references: tuple[str, ...]
    annotator_answers: tuple[str, ...] | None = None
    question: str = ""

    def __post_init__(self):
        if not self.references:
            raise ValueError(f"{self.entry_id}: references must be non-empty")
        object.__setattr__(self, "references", tuple(self.references))
        if self.annotator_answers is not None:
            object.__setattr__(self, "annotator_answers", tuple(self.annotator_answers))


@dataclass
class QAScore:
    acc_all: float
    acc_una: float
    total: int
    unanimous_total: int
    unresolved: int
    judge_calls: int
    verdicts: dict = field(default_factory=dict)


def _exactly_matches(prediction: str, references: tuple[str, ...]) -> bool:
    normalized = normalize_text(prediction)
    return any(normalized == normalize_text(ref) for ref in references)


def _is_unanimous(record: EvalRecord) -> bool:
    answers = (
        record.annotator_answers
        if record.annotator_answers is not None
        else record.references
    )
    if len(answers) < MIN_ANNOTATORS_FOR_UNANIMOUS:
        return False
    normalized = {normalize_text(a) for a in answers}
    return len(normalized) == 1


def score_qa(records: list[EvalRecord], judge: Judge, jobs: int = 1) -> QAScore:
    """Exact match first, judge on mismatch; accuracy over all and over the
    unanimous-annotator subset."""

    def settle(record: EvalRecord):
        if _exactly_matches(record.prediction, record.references):
            return record, "correct", "exact_match", 0
        verdict = judge.verdict(
            JudgeRequest(
                question=record.question,
                ground_truth=record.references,
                prediction=record.prediction,
                template_id="qa_correctness",
            )
        )
        return record, verdict.outcome, "judge", 1

    if jobs > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            settled = list(pool.map(settle, records))
    else:
        settled = [settle(r) for r in records]

    verdicts = {}
    judge_calls = 0
    correct_all = resolved_all = 0
    correct_una = resolved_una = unanimous_total = 0
    for record, outcome, decided_by, calls in settled:
        judge_calls += calls
        unanimous = _is_unanimous(record)
        unanimous_total += unanimous
        verdicts[record.entry_id] = {
            "outcome": outcome,
            "decided_by": decided_by,
            "unanimous": unanimous,
        }
        if outcome == "unresolved":
            continue
        resolved_all += 1
        correct_all += outcome == "correct"
        if unanimous:
            resolved_una += 1
            correct_una += outcome == "correct"

    return QAScore(
        acc_all=correct_all / resolved_all if resolved_all else 0.0,
        acc_una=correct_una / resolved_una if resolved_una else 0.0,
        total=len(records),
        unanimous_total=unanimous_total,
        unresolved=len(records) - resolved_all,
        judge_calls=judge_calls,
        verdicts=verdicts,
    )


def map_label(predicted: str, known_labels: list[str], embedder: Embedder) -> str:
    """Snap a free-form predicted label onto the known label set.

    Normalized exact matches return immediately with no embedding call;
    otherwise the cosine-nearest known label wins, ties broken by
    lexicographic order.
    """
    if not known_labels:
        raise ValueError("known_labels must be non-empty")
    normalized = normalize_text(predicted)
    for label in known_labels:
        if normalize_text(label) == normalized:
            return label
    query = embedder.embed(predicted)
    scored = [
        (-cosine_similarity(query, embedder.embed(label)), label) for label in known_labels
    ]
    return min(scored)[1]


def split_label_list(prediction: str) -> list[str]:
    """Split a delimited answer string ("a, b and c") into label candidates."""
    parts = [p.strip() for p in _LABEL_SPLIT.split(prediction)]
    return [p for p in parts if p]


def macro_f1_multilabel(
    records: list[EvalRecord], label_space: list[str], embedder: Embedder
) -> float:
    """Macro-averaged F1 after snapping every predicted label onto the space.

    Labels that never occur in ground truth or predictions are excluded from
    the average; a label predicted but absent from ground truth contributes
    an F1 of 0.
    """
    if not records:
        raise ValueError("no records to score")
    if not label_space:
        raise ValueError("label_space must be non-empty")
    true_positive: dict = defaultdict(int)
    false_positive: dict = defaultdict(int)
    false_negative: dict = defaultdict(int)
    for record in records:
        raw_labels = (
            list(record.prediction)
            if isinstance(record.prediction, (list, tuple))
            else split_label_list(record.prediction)
        )
        predicted = {map_label(p, label_space, embedder) for p in raw_labels}
        truth = {map_label(r, label_space, embedder) for r in record.references}
        for label in predicted & truth:
            true_positive[label] += 1
        for label in predicted - truth:
            false_positive[label] += 1
        for label in truth - predicted:
            false_negative[label] += 1

    scores = []
    for label in sorted(set(true_positive) | set(false_positive) | set(false_negative)):
        tp = true_positive[label]
        fp = false_positive[label]
        fn = false_negative[label]
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
    return sum(scores) / len(scores) if scores else 0.0


@dataclass
class IFScore:
    accuracy: float
    total: int
    following: int
    unresolved: int
    judge_calls: int


def instruction_following_accuracy(
    items: list[tuple[ParsedOutput, str]], judge: Judge, jobs: int = 1
) -> IFScore:
    """Fraction of outputs whose answer addresses the expected task type.

    Malformed or empty answers count as not following without a judge call;
    everything else is adjudicated with the instruction-following template.
    """

    def settle(item):
        parsed, task = item
        if parsed.malformed or not parsed.answer.strip():
            return "not_following", 0
        verdict = judge.verdict(
            JudgeRequest(
                question=str(task),
                ground_truth=(str(task),),
                prediction=parsed.answer,
                template_id="instruction_following",
            )
        )
        if verdict.is_unresolved:
            return "unresolved", 1
        return ("following" if verdict.is_correct else "not_following"), 1

    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            settled = list(pool.map(settle, items))
    else:
        settled = [settle(i) for i in items]

    judge_calls = sum(calls for _, calls in settled)
    unresolved = sum(1 for outcome, _ in settled if outcome == "unresolved")
    following = sum(1 for outcome, _ in settled if outcome == "following")
    resolved = len(items) - unresolved
    return IFScore(
        accuracy=following / resolved if resolved else 0.0,
        total=len(items),
        following=following,
        unresolved=unresolved,
        judge_calls=judge_calls,
    )


def corpus_wer(pairs: list[tuple[str, str]]) -> float:
    """Corpus-level WER: total edit distance over total reference words."""
    total_errors = 0
    total_words = 0
    for reference, hypothesis in pairs:
        ref_tokens = normalize_text(reference).split()
        hyp_tokens = normalize_text(hypothesis).split()
        if not ref_tokens:
            continue
        total_errors += edit_distance(ref_tokens, hyp_tokens)
        total_words += len(ref_tokens)
    if total_words == 0:
        raise ValueError("no non-empty references to compute WER over")
    return total_errors / total_words


@dataclass
class EvalReport:
    """Aggregated metric values plus the per-entry audit trail."""

    metrics: dict
    counts: dict
    per_entry: dict
    metadata: dict

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(
            {
                "metrics": self.metrics,
                "counts": self.counts,
                "per_entry": self.per_entry,
                "metadata": self.metadata,
            },
            indent=indent,
            ensure_ascii=False,
            sort_keys=True,
        )


ACCURACY_TASKS = ("qa", "classification_single")


def evaluate(
    entries: list,
    predictions: dict,
    judge: Judge,
    embedder: Embedder,
    label_space: list[str] | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Score raw model outputs against manifest entries.

    ``entries`` are manifest entries (anything with entry_id, task,
    instruction_text, references); ``predictions`` maps entry_id to the raw
    model output string. Outputs are parsed for the transcription/answer
    convention first; each task family then feeds its own metric.
    """
    per_entry: dict = {}
    counts = {"entries": len(entries), "predictions": len(predictions)}
    known_ids = {e.entry_id for e in entries}
    counts["unknown_predictions"] = sum(1 for k in predictions if k not in known_ids)
    scored = [(e, parse_assisted_output(predictions[e.entry_id]))
              for e in entries if e.entry_id in predictions]
    counts["missing_predictions"] = len(entries) - len(scored)

    for entry, parsed in scored:
        per_entry[entry.entry_id] = {
            "task": str(entry.task),
            "answer": parsed.answer,
            "transcription": parsed.transcription,
            "malformed": parsed.malformed,
        }

    metrics: dict = {}

    accuracy_records = [
        EvalRecord(
            entry_id=entry.entry_id,
            task=str(entry.task),
            prediction=parsed.answer,
            references=tuple(entry.references),
            question=entry.instruction_text,
        )
        for entry, parsed in scored
        if str(entry.task) in ACCURACY_TASKS
    ]
    if accuracy_records:
        qa = score_qa(accuracy_records, judge, jobs=jobs)
        metrics["acc_all"] = qa.acc_all
        metrics["acc_una"] = qa.acc_una
        counts["qa_total"] = qa.total
        counts["qa_unanimous"] = qa.unanimous_total
        counts["qa_unresolved"] = qa.unresolved
        counts["judge_calls_qa"] = qa.judge_calls
        for entry_id, verdict in qa.verdicts.items():
            per_entry[entry_id].update(verdict)

    multilabel_records = [
        EvalRecord(
            entry_id=entry.entry_id,
            task=str(entry.task),
            prediction=parsed.answer,
            references=tuple(entry.references),
            question=entry.instruction_text,
        )
        for entry, parsed in scored
        if str(entry.task) == "classification_multi"
    ]
    if multilabel_records:
        space = label_space or sorted(
            {label for record in multilabel_records for label in record.references}
        )
        metrics["macro_f1"] = macro_f1_multilabel(multilabel_records, space, embedder)
        counts["multilabel_total"] = len(multilabel_records)

    caption_pairs = [
        (entry, parsed) for entry, parsed in scored if str(entry.task) == "captioning"
    ]
    if len(caption_pairs) >= 2:
        result = cider(
            {entry.entry_id: parsed.answer for entry, parsed in caption_pairs},
            {entry.entry_id: list(entry.references) for entry, parsed in caption_pairs},
        )
        metrics["cider"] = result.corpus_score
        counts["caption_total"] = len(caption_pairs)
        for entry_id, score in result.per_entry.items():
            per_entry[entry_id]["cider"] = score

    transcription_pairs = [
        (entry.instruction_text, parsed.transcription)
        for entry, parsed in scored
        if parsed.transcription is not None
    ]
    if transcription_pairs:
        metrics["wer"] = corpus_wer(transcription_pairs)
        counts["transcribed_total"] = len(transcription_pairs)

    if scored:
        if_score = instruction_following_accuracy(
            [(parsed, str(entry.task)) for entry, parsed in scored], judge, jobs=jobs
        )
        metrics["if_acc"] = if_score.accuracy
        counts["if_unresolved"] = if_score.unresolved
        counts["judge_calls_if"] = if_score.judge_calls

    metadata = {
        "normalizer_version": NORMALIZER_VERSION,
        "caption_metric": CIDER_VARIANT,
        "wer_definition": "corpus-level: total edit distance / total reference words",
        "judge": type(judge).__name__,
        "embedder": type(embedder).__name__,
    }
    return EvalReport(metrics=metrics, counts=counts, per_entry=per_entry, metadata=metadata)
