import random

import pytest

from maskfill import (
    BOS,
    EOS,
    MASK,
    UNK,
    StatFiller,
    corpus_from_lines,
    train_background,
)

from reference import RefLM, ref_filler_scores


def test_pool_contains_vocabulary_without_technical_symbols():
    f = train_background(corpus_from_lines(["a b"]))
    assert set(f.pool) == {"a", "b"}
    for sym in (UNK, MASK, BOS, EOS):
        assert sym not in f.pool


def test_training_is_deterministic():
    c = corpus_from_lines(["a b c", "b a"])
    f1, f2 = train_background(c), train_background(c)
    assert f1.version == f2.version == 0
    assert f1.pool == f2.pool
    left, right = ["a"], ["c"]
    assert f1.candidates(left, right, 3) == f2.candidates(left, right, 3)


def test_documented_scoring_example():
    f = train_background(corpus_from_lines(["a b c", "a b d"]))
    cands = f.candidates(["a"], ["c"], 2)
    assert cands[0].token == "b"
    lm = f.lm
    expected = lm.prob("b", BOS, "a") * lm.prob("c", "a", "b")
    assert cands[0].score == pytest.approx(expected, rel=1e-12)


def test_candidates_match_bruteforce_reference():
    rng = random.Random(11)
    pool_tokens = [f"t{i}" for i in range(9)]
    for trial in range(15):
        lines = [
            " ".join(rng.choice(pool_tokens) for _ in range(rng.randint(1, 7)))
            for _ in range(rng.randint(2, 12))
        ]
        c = corpus_from_lines(lines)
        f = train_background(c)
        ref = RefLM([list(s.tokens) for s in c.sentences])
        for _ in range(6):
            left = [rng.choice(pool_tokens) for _ in range(rng.randint(0, 3))]
            right = [rng.choice(pool_tokens) for _ in range(rng.randint(0, 3))]
            k = rng.randint(1, len(f.pool) + 2)
            got = f.candidates(left, right, k)
            expected = ref_filler_scores(ref, f.pool, left, right)[:k]
            assert [c.token for c in got] == [w for _, w in expected]
            for cand, (score, _) in zip(got, expected):
                assert cand.score == pytest.approx(score, rel=1e-12)
                assert cand.score > 0


def test_k_larger_than_pool_returns_whole_pool_sorted():
    f = train_background(corpus_from_lines(["a b"]))
    cands = f.candidates([], [], 50)
    assert len(cands) == len(f.pool)
    scores = [c.score for c in cands]
    assert scores == sorted(scores, reverse=True)


def test_empty_context_uses_boundary_padding():
    f = train_background(corpus_from_lines(["a b", "a c"]))
    lm = f.lm
    cands = f.candidates([], [], len(f.pool))
    by_token = {c.token: c.score for c in cands}
    for w in f.pool:
        expected = lm.prob(w, BOS, BOS) * lm.prob(EOS, BOS, w)
        assert by_token[w] == pytest.approx(expected, rel=1e-12)


def test_single_left_token_pads_one_boundary():
    f = train_background(corpus_from_lines(["a b c"]))
    lm = f.lm
    cands = f.candidates(["a"], ["c"], len(f.pool))
    by_token = {c.token: c.score for c in cands}
    assert by_token["b"] == pytest.approx(lm.prob("b", BOS, "a") * lm.prob("c", "a", "b"), rel=1e-12)


def test_finetune_mu_zero_keeps_rankings():
    f = train_background(corpus_from_lines(["a b c", "c b a"]), mu=0.0)
    tuned = f.finetune(corpus_from_lines(["a z c"]))
    assert tuned.version == 1
    assert tuned.candidates(["a"], ["c"], 3) == f.candidates(["a"], ["c"], 3)


def test_finetune_boosts_in_domain_token():
    bg = corpus_from_lines(["a b c"] * 3 + ["a z c"])
    f = train_background(bg)
    before = [c.token for c in f.candidates(["a"], ["c"], len(f.pool))]
    tuned = f.finetune(corpus_from_lines(["a z c"] * 10))
    after = [c.token for c in tuned.candidates(["a"], ["c"], len(tuned.pool))]
    assert after.index("z") <= before.index("z")


def test_finetune_increments_version_and_adds_vocabulary():
    f = train_background(corpus_from_lines(["a b"]))
    tuned = f.finetune(corpus_from_lines(["a q"]))
    assert tuned.version == f.version + 1
    assert "q" in tuned.pool
    again = tuned.finetune(corpus_from_lines(["a q"]))
    assert again.version == 2


def test_finetune_rejects_empty_corpus():
    f = train_background(corpus_from_lines(["a b"]))
    with pytest.raises(ValueError):
        f.finetune(corpus_from_lines([]))


def test_candidates_validate_k():
    f = train_background(corpus_from_lines(["a b"]))
    with pytest.raises(ValueError):
        f.candidates([], [], 0)


def test_snapshot_round_trip(tmp_path):
    f = train_background(corpus_from_lines(["a b c", "b c a"]))
    tuned = f.finetune(corpus_from_lines(["a z c"]))
    p1 = tmp_path / "f1.snap"
    tuned.save(p1)
    loaded = StatFiller.load(p1)
    assert loaded.version == tuned.version
    assert loaded.pool == tuned.pool
    assert loaded.candidates(["a"], ["c"], 4) == tuned.candidates(["a"], ["c"], 4)
    p2 = tmp_path / "f2.snap"
    loaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()
