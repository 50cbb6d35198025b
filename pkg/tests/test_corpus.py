import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfill import (
    CorpusError,
    build_frequency_table,
    corpus_from_lines,
    load_corpus,
    save_corpus,
)

tokens_st = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_", min_size=1, max_size=8)
sentence_st = st.lists(tokens_st, min_size=1, max_size=10)
corpus_st = st.lists(sentence_st, min_size=0, max_size=12)


def write_lines(tmp_path, lines, name="corpus.txt"):
    p = tmp_path / name
    p.write_bytes(("".join(line + "\n" for line in lines)).encode("utf-8"))
    return p


def test_load_overview_example(tmp_path):
    p = write_lines(tmp_path, ["tom lives in chicago"])
    c = load_corpus(p)
    assert len(c) == 1
    assert c.token_count == 4
    assert c.sentences[0].tokens == ("tom", "lives", "in", "chicago")


def test_load_empty_file(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_bytes(b"")
    c = load_corpus(p)
    assert len(c) == 0
    assert c.token_count == 0
    assert c.diagnostics.skipped_lines == 0


def test_load_skips_blank_lines(tmp_path):
    p = write_lines(tmp_path, ["a b", "", "c"])
    c = load_corpus(p)
    assert len(c) == 2
    assert c.token_count == 3
    assert c.diagnostics.skipped_lines == 1
    assert c.diagnostics.to_json() == {"skipped_lines": 1, "sentences": 2, "tokens": 3}


def test_load_rejects_marker_in_unmasked_file(tmp_path):
    p = write_lines(tmp_path, ["a b", "c [MASK] d"])
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(p)
    masked = load_corpus(p, allow_mask=True)
    assert masked.token_count == 5


def test_load_rejects_invalid_utf8(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_bytes(b"ok line\n\xff\xfe broken\n")
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(p)


def test_load_normalizes_nfc(tmp_path):
    decomposed = "café"
    p = write_lines(tmp_path, [decomposed])
    c = load_corpus(p)
    assert c.sentences[0].tokens == ("café",)


def test_sentence_indexes_follow_file_order(tmp_path):
    p = write_lines(tmp_path, ["a", "", "b", "c"])
    c = load_corpus(p)
    assert [s.index for s in c.sentences] == [0, 1, 2]


def test_save_round_trip_single_sentence(tmp_path):
    c = corpus_from_lines(["tom lives in chicago"])
    p = tmp_path / "out.txt"
    save_corpus(c, p)
    again = load_corpus(p)
    assert [s.tokens for s in again.sentences] == [s.tokens for s in c.sentences]


def test_save_collapses_spacing_and_is_idempotent(tmp_path):
    p = write_lines(tmp_path, ["a   b\tc"])
    c = load_corpus(p)
    out1 = tmp_path / "o1.txt"
    save_corpus(c, out1)
    assert out1.read_bytes() == b"a b c\n"
    out2 = tmp_path / "o2.txt"
    save_corpus(load_corpus(out1), out2)
    assert out2.read_bytes() == out1.read_bytes()


def test_save_empty_corpus(tmp_path):
    c = corpus_from_lines([])
    p = tmp_path / "o.txt"
    save_corpus(c, p)
    assert p.read_bytes() == b""


def test_frequency_table_hand_counts():
    c = corpus_from_lines(["a b", "a"])
    table = build_frequency_table(c)
    assert table.counts == {"a": 2, "b": 1}
    assert table.total == 3


def test_frequency_table_empty_and_repeats():
    assert build_frequency_table(corpus_from_lines([])).counts == {}
    table = build_frequency_table(corpus_from_lines(["x x x"]))
    assert table.counts == {"x": 3}
    assert table.total == 3


def test_loading_is_deterministic(tmp_path):
    p = write_lines(tmp_path, ["a b c", "d e"])
    assert load_corpus(p) == load_corpus(p)


@settings(max_examples=50, deadline=None)
@given(corpus_st)
def test_round_trip_preserves_structure(sentences):
    import tempfile
    from pathlib import Path

    c = corpus_from_lines(" ".join(s) for s in sentences)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "c.txt"
        save_corpus(c, p)
        again = load_corpus(p)
    assert [s.tokens for s in again.sentences] == [s.tokens for s in c.sentences]


@settings(max_examples=50, deadline=None)
@given(corpus_st, corpus_st)
def test_token_count_additive_under_concatenation(a, b):
    ca = corpus_from_lines(" ".join(s) for s in a)
    cb = corpus_from_lines(" ".join(s) for s in b)
    both = corpus_from_lines([" ".join(s) for s in a] + [" ".join(s) for s in b])
    assert both.token_count == ca.token_count + cb.token_count
