"""Metrics are validated against brute-force reference implementations
built independently inside this module."""

import numpy as np
import pytest

from ruletag.corpus import Tagset
from ruletag.errors import SchemaError, ShapeError
from ruletag.evaluate import (
    bio_spans,
    confusion_matrix,
    confusion_to_csv,
    confusion_to_text,
    macro_f1,
    mean_stdev,
    span_f1,
    word_accuracy,
)

AB = Tagset(["A", "B"])
ABC = Tagset(["A", "B", "C"])


# -- reference implementations -------------------------------------------------------


def ref_accuracy(gold, pred):
    return sum(1 for g, p in zip(gold, pred) if g == p) / len(gold) if gold else 0.0


def ref_tag_prf(gold, pred, tag):
    tp = sum(1 for g, p in zip(gold, pred) if g == tag and p == tag)
    fp = sum(1 for g, p in zip(gold, pred) if g != tag and p == tag)
    fn = sum(1 for g, p in zip(gold, pred) if g == tag and p != tag)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def ref_macro(gold, pred, tagset):
    scores = []
    for tag in tagset:
        seen = tag in gold or tag in pred
        if not seen:
            continue
        scores.append(ref_tag_prf(gold, pred, tag)[2])
    return sum(scores) / len(scores) if scores else 0.0


def ref_spans(tags):
    """Second, index-scanning BIO decoder (lenient)."""
    spans = set()
    i = 0
    while i < len(tags):
        tag = tags[i]
        if tag == "O":
            i += 1
            continue
        kind = tag[2:]
        j = i + 1
        while j < len(tags) and tags[j] == f"I-{kind}":
            j += 1
        spans.add((i, j - 1, kind))
        i = j
    return spans


def ref_span_f1(gold_sentences, pred_sentences):
    tp = fp = fn = 0
    for gold_tags, pred_tags in zip(gold_sentences, pred_sentences):
        g, p = ref_spans(gold_tags), ref_spans(pred_tags)
        tp += len(g & p)
        fp += len(p - g)
        fn += len(g - p)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


class TestWordAccuracy:
    def test_identical(self):
        assert word_accuracy(["A", "B"], ["A", "B"]) == 1.0

    def test_disjoint(self):
        assert word_accuracy(["A", "A"], ["B", "B"]) == 0.0

    def test_three_of_four(self):
        assert word_accuracy(["A", "B", "A", "B"], ["A", "B", "A", "A"]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            word_accuracy(["A"], ["A", "B"])


class TestMacroF1:
    def test_perfect_two_tags(self):
        report = macro_f1(["A", "B", "A"], ["A", "B", "A"], AB)
        assert report.macro_f1 == 1.0
        assert report.word_accuracy == 1.0

    def test_fully_wrong_two_tags(self):
        report = macro_f1(["A", "A"], ["B", "B"], AB)
        assert report.macro_f1 == 0.0

    def test_hand_case_two_thirds_exact(self):
        report = macro_f1(["A", "A", "B"], ["A", "B", "B"], AB)
        assert report.f1["A"] == 2 / 3
        assert report.f1["B"] == 2 / 3
        assert report.macro_f1 == 2 / 3

    def test_unknown_tag_rejected(self):
        with pytest.raises(SchemaError):
            macro_f1(["A", "Z"], ["A", "A"], AB)

    def test_unused_tags_skipped_in_macro(self):
        # C never appears: macro over A and B only
        report = macro_f1(["A", "B"], ["A", "B"], ABC)
        assert report.macro_f1 == 1.0

    def test_predicted_but_absent_tag_scores_zero(self):
        report = macro_f1(["A", "A"], ["A", "C"], ABC)
        # A: p=1, r=0.5 -> 2/3; C predicted but never gold -> 0
        assert report.macro_f1 == pytest.approx((2 / 3 + 0.0) / 2)

    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(0)
        tagset = Tagset(["A", "B", "C", "D"])
        for _ in range(150):
            n = int(rng.integers(1, 20))
            gold = [tagset.tag(int(i)) for i in rng.integers(0, 4, n)]
            pred = [tagset.tag(int(i)) for i in rng.integers(0, 4, n)]
            report = macro_f1(gold, pred, tagset)
            assert report.macro_f1 == ref_macro(gold, pred, tagset)
            assert report.word_accuracy == ref_accuracy(gold, pred)
            for tag in tagset:
                assert (report.precision[tag], report.recall[tag], report.f1[tag]) == (
                    ref_tag_prf(gold, pred, tag)
                )


class TestConfusion:
    def test_perfect_is_diagonal(self):
        matrix = confusion_matrix(["A", "B", "A"], ["A", "B", "A"], AB)
        np.testing.assert_array_equal(matrix, [[2, 0], [0, 1]])

    def test_empty_is_zero(self):
        matrix = confusion_matrix([], [], AB)
        np.testing.assert_array_equal(matrix, np.zeros((2, 2)))

    def test_four_token_tally(self):
        matrix = confusion_matrix(["A", "A", "B", "B"], ["A", "B", "B", "A"], AB)
        np.testing.assert_array_equal(matrix, [[1, 1], [1, 1]])

    def test_accuracy_equals_trace_over_sum(self):
        rng = np.random.default_rng(1)
        gold = [ABC.tag(int(i)) for i in rng.integers(0, 3, 50)]
        pred = [ABC.tag(int(i)) for i in rng.integers(0, 3, 50)]
        matrix = confusion_matrix(gold, pred, ABC)
        assert word_accuracy(gold, pred) == pytest.approx(
            np.trace(matrix) / matrix.sum()
        )

    def test_row_sums_are_gold_counts(self):
        gold = ["A", "B", "B", "C"]
        pred = ["B", "B", "A", "C"]
        matrix = confusion_matrix(gold, pred, ABC)
        assert matrix.sum(axis=1).tolist() == [1, 2, 1]
        assert matrix.sum(axis=0).tolist() == [1, 2, 1]

    def test_renderings(self, tmp_path):
        matrix = confusion_matrix(["A", "B"], ["A", "A"], AB)
        path = tmp_path / "confusion.csv"
        confusion_to_csv(matrix, AB, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "gold\\pred,A,B"
        assert lines[1] == "A,1,0"
        text = confusion_to_text(matrix, AB)
        assert "A" in text and "1" in text


class TestBioSpans:
    def test_simple_span(self):
        assert bio_spans(["B-PER", "I-PER", "O"]) == {(0, 1, "PER")}

    def test_orphan_i_starts_span(self):
        assert bio_spans(["O", "I-PER", "I-PER"]) == {(1, 2, "PER")}

    def test_type_switch_closes_span(self):
        assert bio_spans(["B-PER", "I-LOC"]) == {(0, 0, "PER"), (1, 1, "LOC")}

    def test_adjacent_b_tags(self):
        assert bio_spans(["B-PER", "B-PER"]) == {(0, 0, "PER"), (1, 1, "PER")}

    def test_malformed_tag_rejected(self):
        with pytest.raises(SchemaError):
            bio_spans(["B-PER", "X-LOC"])
        with pytest.raises(SchemaError):
            bio_spans(["B"])


class TestSpanF1:
    def test_identical_single_span(self):
        gold = [["B-PER", "I-PER", "O"]]
        report = span_f1(gold, gold)
        assert report.micro.f1 == 1.0
        assert report.per_type["PER"].f1 == 1.0

    def test_shifted_span_scores_zero(self):
        gold = [["O", "B-PER", "I-PER", "O"]]
        pred = [["B-PER", "I-PER", "O", "O"]]
        report = span_f1(gold, pred)
        assert report.micro.f1 == 0.0

    def test_truncated_span_scores_zero(self):
        gold = [["B-PER", "I-PER", "O"]]
        pred = [["B-PER", "O", "O"]]
        report = span_f1(gold, pred)
        assert report.per_type["PER"].precision == 0.0
        assert report.per_type["PER"].recall == 0.0
        assert report.per_type["PER"].f1 == 0.0

    def test_type_restriction_enforced(self):
        with pytest.raises(SchemaError):
            span_f1([["B-PER"]], [["B-PER"]], types=["LOC"])

    def test_sentence_order_invariant(self):
        gold = [["B-PER", "O"], ["O", "B-LOC", "I-LOC"]]
        pred = [["B-PER", "O"], ["O", "B-LOC", "O"]]
        fwd = span_f1(gold, pred)
        rev = span_f1(gold[::-1], pred[::-1])
        assert fwd.micro.f1 == rev.micro.f1
        assert fwd.as_dict() == rev.as_dict()

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            span_f1([["O", "O"]], [["O"]])

    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(2)
        vocabulary = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC"]
        for _ in range(150):
            n_sentences = int(rng.integers(1, 4))
            gold, pred = [], []
            for _ in range(n_sentences):
                n = int(rng.integers(1, 15))
                gold.append([vocabulary[int(i)] for i in rng.integers(0, 5, n)])
                pred.append([vocabulary[int(i)] for i in rng.integers(0, 5, n)])
            report = span_f1(gold, pred)
            assert report.micro.f1 == ref_span_f1(gold, pred)


class TestSeedAggregation:
    def test_mean_and_sample_stdev(self):
        mean, stdev = mean_stdev([0.9, 1.0, 1.1])
        assert mean == pytest.approx(1.0)
        assert stdev == pytest.approx(0.1)

    def test_single_value_has_zero_stdev(self):
        assert mean_stdev([0.5]) == (0.5, 0.0)
