import math
from collections import Counter

import numpy as np
import pytest

from spokenmix import cider

TOY_CANDIDATES = {
    "e1": "a dog barks loudly",
    "e2": "rain falls",
    "e3": "waves",
}
TOY_REFERENCES = {
    "e1": ["a dog barks loudly"],
    "e2": ["heavy rain falls on the roof"],
    "e3": ["sea waves crash", "ocean waves"],
}
# Frozen output of the plain-dict oracle below, computed before wiring the
# implementation: identical candidate -> 10, partial overlaps in between.
TOY_EXPECTED = {
    "e1": 10.0,
    "e2": 2.051016520334863,
    "e3": 1.554379617399816,
}
TOY_EXPECTED_CORPUS = 4.535132045911559


def _oracle(candidates, references, sigma=6.0, max_n=4):
    """Direct tf-idf + clipped-cosine evaluation with plain dicts."""

    def ngrams(tokens, n):
        return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))

    df = Counter()
    for refs in references.values():
        seen = set()
        for ref in refs:
            tokens = ref.lower().split()
            for n in range(1, max_n + 1):
                seen |= set(ngrams(tokens, n))
        for gram in seen:
            df[gram] += 1
    log_size = math.log(len(candidates))

    def tfidf(tokens):
        vecs, norms = [], []
        for n in range(1, max_n + 1):
            vec = {
                gram: count * (log_size - math.log(max(1.0, df[gram])))
                for gram, count in ngrams(tokens, n).items()
            }
            vecs.append(vec)
            norms.append(math.sqrt(sum(x * x for x in vec.values())))
        return vecs, norms, len(tokens)

    scores = {}
    for cid, cand in candidates.items():
        hv, hn, hl = tfidf(cand.lower().split())
        total = 0.0
        for ref in references[cid]:
            rv, rn, rl = tfidf(ref.lower().split())
            penalty = math.exp(-((hl - rl) ** 2) / (2 * sigma * sigma))
            sim = 0.0
            for n in range(max_n):
                dot = sum(min(w, rv[n].get(g, 0.0)) * rv[n].get(g, 0.0) for g, w in hv[n].items())
                if hn[n] and rn[n]:
                    dot /= hn[n] * rn[n]
                sim += dot * penalty
            total += sim / max_n
        scores[cid] = 10.0 * total / len(references[cid])
    return scores


def test_toy_corpus_matches_frozen_oracle_values():
    oracle_scores = _oracle(TOY_CANDIDATES, TOY_REFERENCES)
    for cid, expected in TOY_EXPECTED.items():
        assert oracle_scores[cid] == pytest.approx(expected, abs=1e-12)
    result = cider(TOY_CANDIDATES, TOY_REFERENCES)
    for cid, expected in TOY_EXPECTED.items():
        assert result.per_entry[cid] == pytest.approx(expected, abs=1e-6)
    assert result.corpus_score == pytest.approx(TOY_EXPECTED_CORPUS, abs=1e-6)


def test_identical_candidate_dominates_perturbations():
    reference = "a dog barks at the heavy rain outside"
    candidates = {"target": reference, "other": "waves crash on the shore"}
    references = {"target": [reference], "other": ["sea waves roll in"]}
    baseline = cider(candidates, references).per_entry["target"]
    words = reference.split()
    rng = np.random.default_rng(23)
    for _ in range(40):
        mutated = list(words)
        op = rng.integers(3)
        position = int(rng.integers(len(mutated)))
        if op == 0:
            mutated[position] = "zebra"
        elif op == 1:
            del mutated[position]
        else:
            mutated.insert(position, "zebra")
        score = cider(
            {"target": " ".join(mutated), "other": candidates["other"]}, references
        ).per_entry["target"]
        assert score <= baseline + 1e-9


def test_empty_candidate_scores_zero():
    result = cider(
        {"e1": "", "e2": "rain falls"},
        {"e1": ["a dog barks"], "e2": ["rain falls"]},
    )
    assert result.per_entry["e1"] == 0.0


def test_order_invariance():
    forward = cider(TOY_CANDIDATES, TOY_REFERENCES)
    reversed_cands = dict(reversed(list(TOY_CANDIDATES.items())))
    reversed_refs = dict(reversed(list(TOY_REFERENCES.items())))
    backward = cider(reversed_cands, reversed_refs)
    assert forward.per_entry == backward.per_entry
    assert forward.corpus_score == backward.corpus_score


def test_singleton_corpus_rejected():
    with pytest.raises(ValueError, match="2 entries"):
        cider({"only": "a dog"}, {"only": ["a dog"]})


def test_candidate_without_references_rejected():
    with pytest.raises(ValueError, match="without references"):
        cider({"a": "x", "b": "y"}, {"a": ["x"], "b": []})


def test_scores_are_nonnegative():
    result = cider(TOY_CANDIDATES, TOY_REFERENCES)
    assert all(score >= 0.0 for score in result.per_entry.values())
    assert result.corpus_score >= 0.0
