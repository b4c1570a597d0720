"""Text normalization, word error rate, and assisted-output parsing.

The normalizer is intentionally simple and versioned (see
``NORMALIZER_VERSION``): lowercase, strip punctuation except intra-word
apostrophes, collapse whitespace. Every exact-match comparison and WER
computation in the scoring pipeline goes through it so results stay
comparable across runs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

NORMALIZER_VERSION = "en-simple-1"

_NON_WORD = re.compile(r"[^\w\s']")
_LONE_APOSTROPHE = re.compile(r"(?<!\w)'+|'+(?!\w)")

TRANSCRIPTION_MARKER = "Transcription:"
ANSWER_MARKER = "Answer:"
_TRANSCRIPTION_RE = re.compile(r"transcription\s*:", re.IGNORECASE)
_ANSWER_RE = re.compile(r"answer\s*:", re.IGNORECASE)


def normalize_text(s: str) -> str:
    """Lowercase, drop punctuation (keeping it's-style apostrophes), squeeze spaces."""
    s = _NON_WORD.sub(" ", s.lower()).replace("_", " ")
    s = _LONE_APOSTROPHE.sub(" ", s)
    return " ".join(s.split())


def edit_distance(ref: list, hyp: list) -> int:
    """Minimum substitutions + insertions + deletions turning ``ref`` into ``hyp``."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    previous = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        current = [i]
        for j, h in enumerate(hyp, start=1):
            if r == h:
                current.append(previous[j - 1])
            else:
                current.append(1 + min(previous[j - 1], previous[j], current[-1]))
        previous = current
    return previous[-1]


def wer(reference: str, hypothesis: str) -> float:
    """Word error rate on whitespace tokens; callers normalize text first.

    Can exceed 1.0 when the hypothesis inserts more words than the reference
    holds. Raises ``ValueError`` on an empty reference.
    """
    ref_tokens = reference.split()
    if not ref_tokens:
        raise ValueError("reference is empty after tokenization")
    return edit_distance(ref_tokens, hypothesis.split()) / len(ref_tokens)


@dataclass(frozen=True)
class ParsedOutput:
    """A model output split into its transcription and answer sections.

    ``transcription`` is ``None`` when the raw text carries no
    transcription marker. ``malformed`` marks marker structure with an empty
    answer section; scoring treats such records as incorrect without
    crashing the run.
    """

    transcription: str | None
    answer: str
    raw: str
    malformed: bool = False


def parse_assisted_output(raw: str) -> ParsedOutput:
    """Split ``Transcription: ... Answer: ...`` model output.

    Markers are matched case-insensitively with tolerant whitespace; when
    neither marker is present the whole string is the answer.
    """
    t_match = _TRANSCRIPTION_RE.search(raw)
    if t_match is None:
        a_match = _ANSWER_RE.search(raw)
        if a_match is None:
            return ParsedOutput(transcription=None, answer=raw.strip(), raw=raw)
        answer = raw[a_match.end() :].strip()
        return ParsedOutput(
            transcription=None, answer=answer, raw=raw, malformed=not answer
        )
    tail = raw[t_match.end() :]
    a_match = _ANSWER_RE.search(tail)
    if a_match is None:
        # Transcription marker without an answer section: nothing to score.
        return ParsedOutput(
            transcription=tail.strip() or None, answer="", raw=raw, malformed=True
        )
    transcription = tail[: a_match.start()].strip()
    answer = tail[a_match.end() :].strip()
    return ParsedOutput(
        transcription=transcription, answer=answer, raw=raw, malformed=not answer
    )


def format_assisted_output(transcription: str, answer: str) -> str:
    """Inverse of :func:`parse_assisted_output` for marker-free, stripped sections."""
    return f"{TRANSCRIPTION_MARKER} {transcription} {ANSWER_MARKER} {answer}"
