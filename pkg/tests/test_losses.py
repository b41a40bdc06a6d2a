"""Loss components are checked against independent transliterations of
the defining formulas; expected constants below were produced by the
oracles in this file."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ruletag.corpus import Tagset
from ruletag.errors import ConfigError, ShapeError
from ruletag.losses import (
    SFT,
    UNSUPERVISED,
    LossBreakdown,
    LossWeights,
    dist_loss,
    lex_loss,
    oov_loss,
    syn_loss,
    total_loss,
)
from ruletag.rules import RuleMatch

TAGS3 = Tagset(["A", "B", "C"])
TAGS9 = Tagset([f"T{i}" for i in range(9)])


# -- independent oracles -------------------------------------------------------


def oracle_lex_unambig(probs, index):
    return -math.log(probs[index])


def oracle_lex_ambig(probs, indices):
    return -math.log(sum(probs[i] for i in indices))


def oracle_syn(rows, matrix):
    n = len(rows)
    if n < 2:
        return 0.0
    total = 0.0
    for i in range(n - 1):
        total += float(np.asarray(rows[i]) @ matrix @ np.asarray(rows[i + 1]))
    return total / (n - 1)


def oracle_kl_uniform(probs):
    size = len(probs)
    return sum(p * math.log(p * size) for p in probs if p > 0)


def random_distribution(rng, size):
    raw = rng.random(size) + 1e-3
    return raw / raw.sum()


# -- lexical ----------------------------------------------------------------------


class TestLexLoss:
    def test_perfect_prediction_is_zero(self):
        value = lex_loss([1.0, 0.0, 0.0], RuleMatch.unambiguous("A"), TAGS3)
        assert float(value) == pytest.approx(0.0, abs=1e-12)

    def test_half_probability(self):
        value = lex_loss([0.5, 0.25, 0.25], RuleMatch.unambiguous("A"), TAGS3)
        assert float(value) == pytest.approx(0.6931471805599453, abs=1e-12)

    def test_ambiguous_sums_valid_options(self):
        tagset = Tagset(["AUX", "VERB", "NOUN"])
        value = lex_loss([0.3, 0.6, 0.1], RuleMatch.ambiguous({"AUX", "VERB"}), tagset)
        assert float(value) == pytest.approx(0.10536051565782628, abs=1e-12)

    def test_morphological_match_is_hard_target(self):
        probs = [0.2, 0.5, 0.3]
        morph = lex_loss(probs, RuleMatch.morphological("B"), TAGS3)
        unambig = lex_loss(probs, RuleMatch.unambiguous("B"), TAGS3)
        assert float(morph) == float(unambig)

    def test_no_match_returns_none(self):
        assert lex_loss([0.4, 0.3, 0.3], RuleMatch.no_match(), TAGS3) is None

    def test_zero_probability_is_clamped(self):
        value = lex_loss([0.0, 1.0, 0.0], RuleMatch.unambiguous("A"), TAGS3)
        assert float(value) == pytest.approx(-math.log(1e-12))

    @given(st.integers(0, 2), st.integers(0, 10_000))
    def test_matches_oracle(self, target, seed):
        rng = np.random.default_rng(seed)
        probs = random_distribution(rng, 3)
        value = lex_loss(probs, RuleMatch.unambiguous(TAGS3.tag(target)), TAGS3)
        assert float(value) == pytest.approx(oracle_lex_unambig(probs, target), abs=1e-9)

    @given(st.integers(0, 10_000))
    def test_ambiguous_never_exceeds_member_loss(self, seed):
        rng = np.random.default_rng(seed)
        probs = random_distribution(rng, 3)
        ambig = float(lex_loss(probs, RuleMatch.ambiguous({"A", "B"}), TAGS3))
        for tag in ("A", "B"):
            single = float(lex_loss(probs, RuleMatch.unambiguous(tag), TAGS3))
            assert ambig <= single + 1e-12


# -- syntactic -----------------------------------------------------------------------


class TestSynLoss:
    def test_valid_one_hot_transition_is_zero(self):
        matrix = np.full((3, 3), 0.5)
        matrix[0, 1] = 0.0  # A -> B allowed
        rows = [np.array([1.0, 0, 0]), np.array([0, 1.0, 0])]
        assert float(syn_loss(rows, matrix)) == 0.0

    def test_invalid_one_hot_transition_is_one(self):
        matrix = np.full((3, 3), 0.5)
        matrix[0, 2] = 1.0
        rows = [np.array([1.0, 0, 0]), np.array([0, 0, 1.0])]
        assert float(syn_loss(rows, matrix)) == 1.0

    def test_uniform_rows_average_all_entries(self):
        rng = np.random.default_rng(0)
        matrix = rng.random((3, 3))
        rows = [np.full(3, 1 / 3), np.full(3, 1 / 3)]
        # brute force: (1/9) * sum of all entries
        assert float(syn_loss(rows, matrix)) == pytest.approx(matrix.sum() / 9, abs=1e-12)

    def test_single_token_sentence_is_zero(self):
        assert float(syn_loss([np.array([1.0, 0, 0])], np.zeros((3, 3)))) == 0.0

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ShapeError):
            syn_loss([np.full(3, 1 / 3)] * 2, np.zeros((4, 4)))

    @given(st.integers(2, 6), st.integers(0, 10_000))
    @settings(max_examples=40)
    def test_matches_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        matrix = rng.random((4, 4))
        rows = [random_distribution(rng, 4) for _ in range(n)]
        assert float(syn_loss(rows, matrix)) == pytest.approx(
            oracle_syn(rows, matrix), abs=1e-9
        )

    def test_result_within_unit_interval(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            matrix = rng.random((5, 5))
            rows = [random_distribution(rng, 5) for _ in range(4)]
            value = float(syn_loss(rows, matrix))
            assert 0.0 <= value <= 1.0


# -- distributional and OOV ---------------------------------------------------------


class TestKlLosses:
    def test_uniform_is_zero(self):
        assert float(dist_loss(np.full(9, 1 / 9))) == pytest.approx(0.0, abs=1e-12)
        assert float(oov_loss(np.full(9, 1 / 9))) == pytest.approx(0.0, abs=1e-12)

    def test_one_hot_is_log_tagset_size(self):
        one_hot = np.zeros(9)
        one_hot[4] = 1.0
        assert float(dist_loss(one_hot)) == pytest.approx(math.log(9), abs=1e-12)
        assert float(oov_loss(one_hot)) == pytest.approx(math.log(9), abs=1e-12)

    def test_dist_hand_value(self):
        # oracle: 0.5 ln 1.5 + 0.5 ln 0.75
        value = float(dist_loss([0.5, 0.25, 0.25]))
        assert value == pytest.approx(0.05889151782819174, abs=1e-12)

    def test_oov_hand_value(self):
        # oracle: 0.4 ln 1.2 + 0.6 ln 0.9
        value = float(oov_loss([0.4, 0.3, 0.3]))
        assert value == pytest.approx(0.00971231332288608, abs=1e-12)

    @given(st.integers(2, 12), st.integers(0, 10_000))
    @settings(max_examples=60)
    def test_matches_oracle_and_nonnegative(self, size, seed):
        rng = np.random.default_rng(seed)
        probs = random_distribution(rng, size)
        value = float(oov_loss(probs))
        assert value == pytest.approx(oracle_kl_uniform(probs), abs=1e-9)
        assert value >= 0.0

    def test_zero_iff_uniform(self):
        assert float(oov_loss(np.full(5, 0.2))) == pytest.approx(0.0, abs=1e-12)
        skewed = np.array([0.2001, 0.1999, 0.2, 0.2, 0.2])
        assert float(oov_loss(skewed)) > 0.0

    def test_zero_entries_contribute_nothing(self):
        value = float(oov_loss([0.5, 0.5, 0.0]))
        assert value == pytest.approx(0.5 * math.log(1.5) * 2, abs=1e-12)
        assert math.isfinite(value)


# -- combined objective ----------------------------------------------------------------


def spread(center: np.ndarray, n: int) -> list[np.ndarray]:
    return [np.asarray(center, dtype=float) for _ in range(n)]


class TestTotalLoss:
    def test_zero_components_zero_total(self):
        # uniform everywhere, all tokens OOV, zero penalties
        uniform = np.full((4, 3), 1 / 3)
        matches = [[RuleMatch.no_match()] * 4]
        total, breakdown = total_loss(
            [uniform],
            matches=matches,
            transition=np.zeros((3, 3)),
            weights=LossWeights(0.85, 0.08, 0.02, 0.05),
            tagset=TAGS3,
        )
        assert float(total) == pytest.approx(0.0, abs=1e-12)
        assert breakdown.total == pytest.approx(0.0, abs=1e-12)

    def test_unit_components_sum_to_one_with_default_weights(self):
        # Table of weights sums to 1: 0.85 + 0.08 + 0.02 + 0.05
        weights = LossWeights()
        assert weights.alpha + weights.beta + weights.gamma + weights.delta == pytest.approx(1.0)

    def test_breakdown_identity(self):
        rng = np.random.default_rng(3)
        dists = [np.array([random_distribution(rng, 3) for _ in range(5)])]
        matches = [[
            RuleMatch.unambiguous("A"),
            RuleMatch.ambiguous({"A", "B"}),
            RuleMatch.no_match(),
            RuleMatch.morphological("C"),
            RuleMatch.no_match(),
        ]]
        weights = LossWeights(0.85, 0.08, 0.02, 0.05)
        transition = rng.random((3, 3))
        total, b = total_loss(
            dists, matches=matches, transition=transition, weights=weights, tagset=TAGS3
        )
        recombined = 0.85 * b.lex + 0.08 * b.syn + 0.02 * b.dist + 0.05 * b.oov
        assert b.total == pytest.approx(recombined, abs=1e-12)
        assert float(total) == pytest.approx(b.total, abs=1e-12)
        assert b.lex_tokens == 3 and b.oov_tokens == 2 and b.syn_pairs == 4
        assert b.total_tokens == 5

    def test_components_match_per_token_functions(self):
        rng = np.random.default_rng(11)
        rows = [random_distribution(rng, 3) for _ in range(4)]
        matches = [
            RuleMatch.unambiguous("B"),
            RuleMatch.no_match(),
            RuleMatch.ambiguous({"A", "C"}),
            RuleMatch.no_match(),
        ]
        transition = rng.random((3, 3))
        _, b = total_loss(
            [np.array(rows)],
            matches=[matches],
            transition=transition,
            weights=LossWeights(),
            tagset=TAGS3,
        )
        lex_values = [
            float(lex_loss(rows[0], matches[0], TAGS3)),
            float(lex_loss(rows[2], matches[2], TAGS3)),
        ]
        oov_values = [float(oov_loss(rows[1])), float(oov_loss(rows[3]))]
        assert b.lex == pytest.approx(np.mean(lex_values), abs=1e-12)
        assert b.oov == pytest.approx(np.mean(oov_values), abs=1e-12)
        assert b.syn == pytest.approx(oracle_syn(rows, transition), abs=1e-12)
        assert b.dist == pytest.approx(
            oracle_kl_uniform(np.mean(rows, axis=0)), abs=1e-12
        )

    def test_fully_covered_perfect_predictions_leave_only_dist(self):
        # one-hot predictions agreeing with Tier 1, all transitions valid
        rows = np.zeros((3, 3))
        rows[0, 0] = rows[1, 1] = rows[2, 0] = 1.0
        matches = [[
            RuleMatch.unambiguous("A"),
            RuleMatch.unambiguous("B"),
            RuleMatch.unambiguous("A"),
        ]]
        transition = np.ones((3, 3))
        transition[0, 1] = transition[1, 0] = 0.0  # used transitions valid
        weights = LossWeights()
        total, b = total_loss(
            [rows], matches=matches, transition=transition, weights=weights, tagset=TAGS3
        )
        assert b.lex == pytest.approx(0.0, abs=1e-9)
        assert b.syn == pytest.approx(0.0, abs=1e-12)
        assert b.oov == 0.0
        assert b.dist > 0.0
        assert float(total) == pytest.approx(weights.gamma * b.dist, abs=1e-12)

    def test_dist_invariant_under_token_permutation(self):
        rng = np.random.default_rng(5)
        rows = [random_distribution(rng, 4) for _ in range(6)]
        matches = [RuleMatch.no_match()] * 6
        transition = np.zeros((4, 4))
        tagset = Tagset(["A", "B", "C", "D"])
        _, fwd = total_loss(
            [np.array(rows)], matches=[matches], transition=transition, tagset=tagset
        )
        _, rev = total_loss(
            [np.array(rows[::-1])], matches=[matches], transition=transition, tagset=tagset
        )
        assert fwd.dist == pytest.approx(rev.dist, abs=1e-12)

    def test_ambiguous_tokens_are_not_oov(self):
        rows = np.full((2, 3), 1 / 3)
        matches = [[RuleMatch.ambiguous({"A", "B"}), RuleMatch.no_match()]]
        _, b = total_loss(
            [rows], matches=matches, transition=np.zeros((3, 3)), tagset=TAGS3
        )
        assert b.lex_tokens == 1 and b.oov_tokens == 1

    def test_sft_mode_is_mean_gold_nll(self):
        rng = np.random.default_rng(9)
        rows = [random_distribution(rng, 3) for _ in range(3)]
        gold = [0, 2, 1]
        total, b = total_loss([np.array(rows)], mode=SFT, gold=[gold])
        expected = np.mean([-math.log(rows[i][gold[i]]) for i in range(3)])
        assert float(total) == pytest.approx(expected, abs=1e-12)
        assert b.total == pytest.approx(expected, abs=1e-12)

    def test_sft_requires_gold(self):
        with pytest.raises(ConfigError):
            total_loss([np.full((2, 3), 1 / 3)], mode=SFT)

    def test_unsupervised_requires_rule_inputs(self):
        with pytest.raises(ConfigError):
            total_loss([np.full((2, 3), 1 / 3)], mode=UNSUPERVISED)

    def test_negative_weights_rejected(self):
        with pytest.raises(ConfigError):
            LossWeights(alpha=-0.1)

    @given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_brute_force_equivalence(self, n_tags, n_tokens, seed):
        rng = np.random.default_rng(seed)
        tagset = Tagset([f"T{i}" for i in range(n_tags)])
        rows = [random_distribution(rng, n_tags) for _ in range(n_tokens)]
        transition = rng.random((n_tags, n_tags))
        kinds = rng.integers(0, 3, size=n_tokens)
        matches = []
        for kind in kinds:
            if kind == 0:
                matches.append(RuleMatch.unambiguous(tagset.tag(int(rng.integers(n_tags)))))
            elif kind == 1 and n_tags >= 2:
                pair = rng.choice(n_tags, size=2, replace=False)
                matches.append(RuleMatch.ambiguous({tagset.tag(int(i)) for i in pair}))
            else:
                matches.append(RuleMatch.no_match())
        weights = LossWeights(*rng.random(4))
        total, b = total_loss(
            [np.array(rows)],
            matches=[matches],
            transition=transition,
            weights=weights,
            tagset=tagset,
        )
        # oracle recomputation
        lex_vals, oov_vals = [], []
        for row, match in zip(rows, matches):
            if match.kind == RuleMatch.UNAMBIGUOUS:
                lex_vals.append(oracle_lex_unambig(row, tagset.index(match.tag)))
            elif match.kind == RuleMatch.AMBIGUOUS:
                lex_vals.append(
                    oracle_lex_ambig(row, [tagset.index(t) for t in match.tags])
                )
            else:
                oov_vals.append(oracle_kl_uniform(row))
        expected = (
            weights.alpha * (np.mean(lex_vals) if lex_vals else 0.0)
            + weights.beta * oracle_syn(rows, transition)
            + weights.gamma * oracle_kl_uniform(np.mean(rows, axis=0))
            + weights.delta * (np.mean(oov_vals) if oov_vals else 0.0)
        )
        assert float(total) == pytest.approx(expected, abs=1e-9)

    def test_all_components_nonnegative(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            n = int(rng.integers(1, 5))
            rows = np.array([random_distribution(rng, 3) for _ in range(n)])
            matches = [
                [
                    (
                        RuleMatch.no_match()
                        if rng.random() < 0.5
                        else RuleMatch.unambiguous(TAGS3.tag(int(rng.integers(3))))
                    )
                    for _ in range(n)
                ]
            ]
            _, b = total_loss(
                [rows], matches=matches, transition=rng.random((3, 3)), tagset=TAGS3
            )
            assert b.lex >= 0 and b.syn >= 0 and b.dist >= -1e-15 and b.oov >= 0
            assert b.total >= -1e-15
