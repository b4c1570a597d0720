import numpy as np
import pytest

from spokenmix import (
    EvalRecord,
    ScriptedJudge,
    StaticJudge,
    TrigramEmbedder,
    corpus_wer,
    instruction_following_accuracy,
    macro_f1_multilabel,
    map_label,
    score_qa,
    split_label_list,
)
from spokenmix.text import parse_assisted_output


def qa_record(entry_id, prediction, answers):
    return EvalRecord(
        entry_id=entry_id,
        task="qa",
        prediction=prediction,
        references=tuple(answers),
        annotator_answers=tuple(answers),
        question="what do you hear?",
    )


class CountingEmbedder:
    def __init__(self):
        self.inner = TrigramEmbedder()
        self.calls = 0

    def embed(self, text):
        self.calls += 1
        return self.inner.embed(text)


def test_score_qa_hand_counted_fixture():
    # 4 records, 3 unanimous; 3 correct overall of which 2 unanimous:
    # acc_all = 3/4, acc_una = 2/3
    records = [
        qa_record("r1", "yes", ["yes", "yes", "yes"]),          # exact match
        qa_record("r2", "nope", ["no", "no", "no"]),            # judge says correct
        qa_record("r3", "sun", ["rain", "rain", "rain"]),       # judge says incorrect
        qa_record("r4", "two", ["two", "three", "two"]),        # exact, not unanimous
    ]
    judge = ScriptedJudge({"nope": "correct", "sun": "incorrect"})
    score = score_qa(records, judge)
    assert score.acc_all == pytest.approx(0.75)
    assert score.acc_una == pytest.approx(2 / 3)
    assert score.total == 4
    assert score.unanimous_total == 3
    assert score.judge_calls == 2
    assert score.unresolved == 0
    assert score.verdicts["r1"]["decided_by"] == "exact_match"
    assert score.verdicts["r2"]["decided_by"] == "judge"


def test_exact_match_never_calls_judge():
    judge = StaticJudge("incorrect")
    records = [
        qa_record("a", "Waves!", ["waves"]),      # normalization bridges the gap
        qa_record("b", "it's a dog", ["It's a DOG."]),
    ]
    score = score_qa(records, judge)
    assert judge.calls == 0
    assert score.acc_all == 1.0


def test_always_incorrect_judge_reduces_to_exact_match():
    records = [
        qa_record("a", "yes", ["yes"]),
        qa_record("b", "no", ["yes"]),
        qa_record("c", "maybe", ["perhaps"]),
        qa_record("d", "rain", ["rain"]),
    ]
    score = score_qa(records, StaticJudge("incorrect"))
    assert score.acc_all == pytest.approx(0.5)  # only the two exact matches


def test_unresolved_records_excluded_but_reported():
    records = [
        qa_record("a", "yes", ["yes"]),
        qa_record("b", "hmm", ["no"]),
    ]
    score = score_qa(records, StaticJudge("unresolved"))
    assert score.unresolved == 1
    assert score.acc_all == 1.0  # 1 correct out of 1 resolved
    assert score.verdicts["b"]["outcome"] == "unresolved"


def test_unanimity_requires_three_annotators():
    records = [
        qa_record("a", "yes", ["yes", "yes"]),  # two annotators only
        qa_record("b", "no", ["no", "no", "no"]),
    ]
    score = score_qa(records, StaticJudge("incorrect"))
    assert score.unanimous_total == 1
    assert score.acc_una == 1.0


def test_score_qa_parallel_matches_serial():
    records = [qa_record(f"r{i}", "yes" if i % 3 else "nah", ["yes"]) for i in range(12)]
    serial = score_qa(records, ScriptedJudge({"nah": "correct"}))
    parallel = score_qa(records, ScriptedJudge({"nah": "correct"}), jobs=4)
    assert serial.acc_all == parallel.acc_all
    assert serial.verdicts == parallel.verdicts


def test_map_label_identity_shortcut_skips_embedding():
    embedder = CountingEmbedder()
    assert map_label("Dog Bark", ["dog bark", "rain"], embedder) == "dog bark"
    assert embedder.calls == 0


def test_map_label_trigram_fallback_picks_nearest():
    # independent trigram-overlap oracle on the padded character trigrams
    def trigram_cosine(a, b):
        from collections import Counter
        from math import sqrt

        def grams(s):
            padded = f"  {s.lower()}  "
            return Counter(padded[i : i + 3] for i in range(len(padded) - 2))

        ca, cb = grams(a), grams(b)
        dot = sum(ca[g] * cb[g] for g in ca)
        return dot / (sqrt(sum(v * v for v in ca.values())) * sqrt(sum(v * v for v in cb.values())))

    assert trigram_cosine("dog barking", "dog bark") > trigram_cosine("dog barking", "rain")
    assert map_label("dog barking", ["dog bark", "rain"], TrigramEmbedder()) == "dog bark"


def test_map_label_tie_breaks_lexicographically():
    class ConstantEmbedder:
        def embed(self, text):
            return np.ones(8)

    assert map_label("mystery", ["zebra", "apple"], ConstantEmbedder()) == "apple"


def test_map_label_requires_labels():
    with pytest.raises(ValueError):
        map_label("x", [], TrigramEmbedder())


def test_split_label_list():
    assert split_label_list("dog bark, rain and thunder; wind") == [
        "dog bark",
        "rain",
        "thunder",
        "wind",
    ]
    assert split_label_list("sand") == ["sand"]
    assert split_label_list("") == []


def ml_record(entry_id, prediction, truth):
    return EvalRecord(
        entry_id=entry_id,
        task="classification_multi",
        prediction=prediction,
        references=tuple(truth),
    )


def test_macro_f1_perfect_predictions():
    records = [
        ml_record("a", ["dog"], ["dog"]),
        ml_record("b", ["rain", "wind"], ["rain", "wind"]),
    ]
    assert macro_f1_multilabel(records, ["dog", "rain", "wind"], TrigramEmbedder()) == 1.0


def test_macro_f1_two_label_confusion_fixture():
    # per-label counts: a: tp=2 fp=0 fn=1 -> P=1, R=2/3, F1=0.8
    #                   b: tp=1 fp=1 fn=1 -> P=1/2, R=1/2, F1=0.5
    # macro = (0.8 + 0.5) / 2 = 0.65
    records = [
        ml_record("r1", ["a"], ["a"]),
        ml_record("r2", ["b"], ["a"]),
        ml_record("r3", ["b"], ["b"]),
        ml_record("r4", ["a"], ["a", "b"]),
    ]
    value = macro_f1_multilabel(records, ["a", "b"], TrigramEmbedder())
    assert value == pytest.approx(0.65, abs=1e-9)


def test_macro_f1_permutation_invariant():
    records = [
        ml_record("r1", ["dog"], ["dog", "rain"]),
        ml_record("r2", ["rain"], ["rain"]),
        ml_record("r3", ["wind", "dog"], ["wind"]),
    ]
    space = ["dog", "rain", "wind"]
    base = macro_f1_multilabel(records, space, TrigramEmbedder())
    assert macro_f1_multilabel(records[::-1], space[::-1], TrigramEmbedder()) == base


def test_macro_f1_unused_labels_excluded():
    records = [ml_record("r1", ["dog"], ["dog"])]
    with_unused = macro_f1_multilabel(records, ["dog", "never-seen"], TrigramEmbedder())
    assert with_unused == 1.0


def test_macro_f1_exact_predictions_identical_with_or_without_embedder():
    records = [
        ml_record("r1", ["dog"], ["dog"]),
        ml_record("r2", ["rain"], ["wind"]),
    ]
    space = ["dog", "rain", "wind"]
    counting = CountingEmbedder()
    value = macro_f1_multilabel(records, space, counting)
    assert counting.calls == 0
    assert value == macro_f1_multilabel(records, space, TrigramEmbedder())


def test_macro_f1_splits_string_predictions():
    records = [ml_record("r1", "dog, rain", ["dog", "rain"])]
    assert macro_f1_multilabel(records, ["dog", "rain"], TrigramEmbedder()) == 1.0


def test_macro_f1_empty_records_rejected():
    with pytest.raises(ValueError):
        macro_f1_multilabel([], ["a"], TrigramEmbedder())


def test_instruction_following_fixture():
    # 10 parsed outputs, 9 affirmed by the judge -> 0.9
    items = [(parse_assisted_output(f"Answer: label {i}"), "classification_single") for i in range(10)]
    judge = ScriptedJudge({f"label {i}": "correct" for i in range(9)}, default="incorrect")
    score = instruction_following_accuracy(items, judge)
    assert score.accuracy == pytest.approx(0.9)
    assert score.judge_calls == 10


def test_instruction_following_short_circuits_empty_answers():
    judge = StaticJudge("correct")
    items = [
        (parse_assisted_output("Transcription: x Answer:"), "qa"),  # malformed
        (parse_assisted_output(""), "qa"),                          # empty
    ]
    score = instruction_following_accuracy(items, judge)
    assert judge.calls == 0
    assert score.accuracy == 0.0
    assert score.following == 0


def test_instruction_following_unresolved_reported():
    items = [(parse_assisted_output("Answer: yes"), "qa")]
    score = instruction_following_accuracy(items, StaticJudge("unresolved"))
    assert score.unresolved == 1
    assert score.accuracy == 0.0


def test_corpus_wer_totals_errors_over_words():
    pairs = [
        ("are there waves", "are there waves"),  # 0 errors / 3 words
        ("is it raining", "is raining"),         # 1 error  / 3 words
    ]
    assert corpus_wer(pairs) == pytest.approx(1 / 6)
    with pytest.raises(ValueError):
        corpus_wer([("", "x")])


def test_eval_record_requires_references():
    with pytest.raises(ValueError):
        EvalRecord(entry_id="x", task="qa", prediction="y", references=())
