import json
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from ruletag.corpus import (
    CorpusSplit,
    Sentence,
    TaggedSentence,
    Tagset,
    check_splits_disjoint,
    read_jsonl,
    read_plain_text,
    tag_histogram,
    tokenize_wordpunct,
    write_jsonl,
)
from ruletag.errors import EmptyInput, ParseError, SchemaError


class TestTokenizer:
    def test_sentence_with_final_period(self):
        assert tokenize_wordpunct("Waybora di alboro.") == ["Waybora", "di", "alboro", "."]

    def test_single_word(self):
        assert tokenize_wordpunct("a") == ["a"]

    def test_punctuation_split_from_word(self):
        # "moo." must become two tokens, not one
        assert tokenize_wordpunct("Ni neera moo.") == ["Ni", "neera", "moo", "."]

    def test_punctuation_runs_stay_together(self):
        assert tokenize_wordpunct("a?! b") == ["a", "?!", "b"]

    def test_interior_apostrophe_splits(self):
        assert tokenize_wordpunct("don't") == ["don", "'", "t"]

    def test_digits_count_as_word_chars(self):
        assert tokenize_wordpunct("12 moo3") == ["12", "moo3"]

    def test_special_letters_stay_inside_tokens(self):
        # Latin letters outside ASCII and combining marks are word chars
        assert tokenize_wordpunct("cɛ surun") == ["cɛ", "surun"]
        assert tokenize_wordpunct("móo.") == ["móo", "."]

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            tokenize_wordpunct("")
        with pytest.raises(EmptyInput):
            tokenize_wordpunct("   \t\n")

    @given(st.text(min_size=1, max_size=60))
    def test_idempotence(self, text):
        try:
            tokens = tokenize_wordpunct(text)
        except EmptyInput:
            return
        rejoined = " ".join(tokens)
        assert tokenize_wordpunct(rejoined) == tokens

    @given(st.text(min_size=1, max_size=60))
    def test_no_whitespace_inside_tokens(self, text):
        try:
            tokens = tokenize_wordpunct(text)
        except EmptyInput:
            return
        for token in tokens:
            assert token
            assert not any(ch.isspace() for ch in token)


class TestTagset:
    def test_default_inventory(self):
        tagset = Tagset.default_pos()
        assert len(tagset) == 8
        assert "NOUN" in tagset and "OTHER" not in tagset

    def test_index_round_trip(self):
        tagset = Tagset(["A", "B", "C"])
        for i, tag in enumerate(tagset):
            assert tagset.index(tag) == i
            assert tagset.tag(i) == tag

    def test_unknown_tag_raises(self):
        with pytest.raises(KeyError):
            Tagset(["A", "B"]).index("Z")

    def test_duplicates_rejected(self):
        with pytest.raises(SchemaError):
            Tagset(["A", "A"])

    def test_too_small_rejected(self):
        with pytest.raises(SchemaError):
            Tagset(["A"])

    def test_empty_name_rejected(self):
        with pytest.raises(SchemaError):
            Tagset(["A", ""])


def make_tagged(text, tags):
    return TaggedSentence(sentence=Sentence.from_text(text), tags=tuple(tags))


class TestJsonl:
    def test_read_example_record(self, tmp_path):
        path = tmp_path / "c.jsonl"
        record = {
            "text": "Waybora di alboro.",
            "tokens": ["Waybora", "di", "alboro", "."],
            "tags": ["NOUN", "VERB", "NOUN", "PUNCT"],
        }
        path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        sentences = read_jsonl(path)
        assert len(sentences) == 1
        assert sentences[0].tokens == ("Waybora", "di", "alboro", ".")
        assert sentences[0].tags == ("NOUN", "VERB", "NOUN", "PUNCT")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.jsonl"
        path.write_text("", encoding="utf-8")
        assert read_jsonl(path) == []

    def test_length_mismatch_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        record = {"text": "a b c", "tokens": ["a", "b", "c"], "tags": ["A", "B", "C", "D"]}
        path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            read_jsonl(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps({"text": "a", "tokens": ["a"], "tags": ["A"]})
        path.write_text(good + "\n{broken\n", encoding="utf-8")
        with pytest.raises(ParseError) as err:
            read_jsonl(path)
        assert err.value.line == 2

    def test_missing_key_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"text": "a", "tokens": ["a"]}) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            read_jsonl(path)

    def test_write_single_line_with_three_keys(self, tmp_path):
        path = tmp_path / "out.jsonl"
        write_jsonl([make_tagged("Ni di.", ["PRON", "VERB", "PUNCT"])], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert list(record) == ["text", "tokens", "tags"]

    def test_write_empty_gives_empty_file(self, tmp_path):
        path = tmp_path / "out.jsonl"
        write_jsonl([], path)
        assert path.read_text(encoding="utf-8") == ""

    @given(
        st.lists(
            st.lists(
                st.tuples(
                    st.text(
                        alphabet=st.characters(blacklist_categories=("Cs",)),
                        min_size=1,
                        max_size=8,
                    ),
                    st.sampled_from(["NOUN", "VERB", "PUNCT"]),
                ),
                min_size=1,
                max_size=6,
            ),
            min_size=0,
            max_size=5,
        )
    )
    def test_round_trip_lossless(self, data):
        sentences = []
        for pairs in data:
            tokens = tuple(tok for tok, _ in pairs)
            tags = tuple(tag for _, tag in pairs)
            sentences.append(
                TaggedSentence(sentence=Sentence(text=" ".join(tokens), tokens=tokens), tags=tags)
            )
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "corpus.jsonl"
            write_jsonl(sentences, path)
            assert read_jsonl(path) == sentences


class TestHistogram:
    def test_empty_corpus(self):
        assert tag_histogram([]) == {}

    def test_single_sentence(self):
        hist = tag_histogram([make_tagged("Waybora di alboro.", ["NOUN", "VERB", "NOUN", "PUNCT"])])
        assert hist == {"NOUN": 2, "VERB": 1, "PUNCT": 1}

    def test_totals_match_token_count(self):
        corpus = [
            make_tagged("a b", ["A", "B"]),
            make_tagged("c d e", ["A", "A", "B"]),
        ]
        hist = tag_histogram(corpus)
        assert sum(hist.values()) == sum(len(s) for s in corpus)


class TestSentenceTypes:
    def test_tag_length_mismatch_rejected(self):
        with pytest.raises(SchemaError):
            make_tagged("a b", ["A"])

    def test_plain_text_reader(self, tmp_path):
        path = tmp_path / "u.txt"
        path.write_text("Ni di.\n\nAy no.\n", encoding="utf-8")
        sentences = read_plain_text(path)
        assert [s.tokens for s in sentences] == [("Ni", "di", "."), ("Ay", "no", ".")]

    def test_split_names_checked(self):
        with pytest.raises(SchemaError):
            CorpusSplit(name="bogus")

    def test_disjoint_splits_pass(self):
        a = CorpusSplit(name="gold-train", sentences=[make_tagged("a", ["A"])])
        b = CorpusSplit(name="gold-test", sentences=[make_tagged("b", ["A"])])
        check_splits_disjoint([a, b])

    def test_overlapping_splits_fail(self):
        a = CorpusSplit(name="gold-train", sentences=[make_tagged("a", ["A"])])
        b = CorpusSplit(name="gold-test", sentences=[make_tagged("a", ["A"])])
        with pytest.raises(SchemaError):
            check_splits_disjoint([a, b])
