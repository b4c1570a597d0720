"""Consensus-based caption scoring (the CIDEr-D variant).

For n = 1..4, candidate and reference n-gram counts are tf-idf weighted
(idf from reference document frequencies over the corpus), compared by a
clipped cosine similarity, multiplied by a Gaussian length penalty
(sigma = 6), averaged over n and over references, and scaled by 10. The
corpus score is the mean over entries. Scores are only meaningful for
corpora of two or more entries since the idf term needs document
frequencies.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass

from .text import normalize_text

CIDER_VARIANT = "cider-d"
DEFAULT_MAX_N = 4
DEFAULT_SIGMA = 6.0


@dataclass(frozen=True)
class CiderScore:
    corpus_score: float
    per_entry: dict


def _ngram_counts(text: str, max_n: int) -> Counter:
    tokens = normalize_text(text).split()
    counts: Counter = Counter()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i : i + n])] += 1
    return counts


def _tfidf_vector(counts: Counter, doc_freq: dict, log_corpus_size: float, max_n: int):
    vec = [defaultdict(float) for _ in range(max_n)]
    norm = [0.0] * max_n
    length = 0
    for ngram, term_freq in counts.items():
        idf = log_corpus_size - math.log(max(1.0, doc_freq.get(ngram, 0.0)))
        n = len(ngram) - 1
        vec[n][ngram] = term_freq * idf
        norm[n] += vec[n][ngram] ** 2
        if n == 0:
            length += term_freq
    return vec, [math.sqrt(x) for x in norm], length


def _similarity(
    vec_hyp, vec_ref, norm_hyp, norm_ref, len_hyp: int, len_ref: int, sigma: float, max_n: int
) -> float:
    delta = float(len_hyp - len_ref)
    penalty = math.exp(-(delta**2) / (2.0 * sigma**2))
    total = 0.0
    for n in range(max_n):
        dot = 0.0
        for ngram, weight in vec_hyp[n].items():
            # Candidate counts are clipped at the reference count so repeated
            # words cannot inflate the score (the -D modification).
            dot += min(weight, vec_ref[n][ngram]) * vec_ref[n][ngram]
        if norm_hyp[n] != 0.0 and norm_ref[n] != 0.0:
            dot /= norm_hyp[n] * norm_ref[n]
        total += dot * penalty
    return total / max_n


def cider(
    candidates: dict,
    references: dict,
    max_n: int = DEFAULT_MAX_N,
    sigma: float = DEFAULT_SIGMA,
) -> CiderScore:
    """Score ``candidates`` (id -> text) against ``references`` (id -> list of texts).

    Returns the corpus mean (scaled by 10) plus per-entry scores. Raises
    ``ValueError`` for a candidate without references or a corpus smaller
    than two entries.
    """
    missing = [cid for cid in candidates if not references.get(cid)]
    if missing:
        raise ValueError(f"candidates without references: {sorted(missing)[:5]}")
    if len(candidates) < 2:
        raise ValueError("corpus must hold at least 2 entries for document frequencies")

    ref_counts = {
        cid: [_ngram_counts(r, max_n) for r in refs]
        for cid, refs in references.items()
        if cid in candidates
    }
    doc_freq: dict = defaultdict(float)
    for counts_per_ref in ref_counts.values():
        for ngram in set().union(*(set(c) for c in counts_per_ref)):
            doc_freq[ngram] += 1.0
    log_corpus_size = math.log(float(len(candidates)))

    per_entry = {}
    for cid in candidates:
        hyp_vec, hyp_norm, hyp_len = _tfidf_vector(
            _ngram_counts(candidates[cid], max_n), doc_freq, log_corpus_size, max_n
        )
        entry_score = 0.0
        for counts in ref_counts[cid]:
            ref_vec, ref_norm, ref_len = _tfidf_vector(
                counts, doc_freq, log_corpus_size, max_n
            )
            entry_score += _similarity(
                hyp_vec, ref_vec, hyp_norm, ref_norm, hyp_len, ref_len, sigma, max_n
            )
        per_entry[cid] = 10.0 * entry_score / len(ref_counts[cid])
    # summed in key order so the corpus mean ignores dict insertion order
    corpus_score = sum(per_entry[cid] for cid in sorted(per_entry)) / len(per_entry)
    return CiderScore(corpus_score=corpus_score, per_entry=per_entry)
