"""Seeded synthetic corpora with stationary trigram structure.

The shipped datasets of the original studies are licensed, so the repo
generates its own: token frequencies follow a Zipf law and every
two-token context maps to a fixed, hash-derived candidate distribution.
The same context always yields the same distribution, which gives
n-gram learners something real to learn while staying fully hermetic.
"""

from __future__ import annotations

import bisect
import hashlib
import random

from .corpus import Corpus, Sentence

_START = "\x00start"


class TrigramSource:
    """Deterministic sentence sampler over a synthetic vocabulary."""

    def __init__(
        self,
        vocab_size: int = 200,
        *,
        seed: int = 0,
        support: int = 30,
        zipf_exponent: float = 1.0,
        min_len: int = 3,
        max_len: int = 20,
        stop_prob: float = 0.08,
    ):
        if vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        self.seed = int(seed)
        self.tokens = tuple(f"w{i:03d}" for i in range(vocab_size))
        self.support = min(support, vocab_size)
        self.min_len = min_len
        self.max_len = max_len
        self.stop_prob = stop_prob
        self._zipf = [1.0 / (r + 1) ** zipf_exponent for r in range(vocab_size)]
        self._ctx_cache: dict[tuple[str, str], tuple[list[str], list[float]]] = {}

    def _stream(self, *parts) -> random.Random:
        material = "|".join(str(p) for p in parts).encode("utf-8")
        digest = hashlib.sha256(material).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _ctx_dist(self, u: str, v: str) -> tuple[list[str], list[float]]:
        """Support tokens and cumulative weights for a context."""
        cached = self._ctx_cache.get((u, v))
        if cached is not None:
            return cached
        rng = self._stream(self.seed, "ctx", u, v)
        pool = list(range(len(self.tokens)))
        weights = list(self._zipf)
        chosen: list[int] = []
        for _ in range(self.support):
            total = sum(weights)
            x = rng.random() * total
            idx = 0
            for i, w in enumerate(weights):
                x -= w
                if x < 0:
                    idx = i
                    break
            chosen.append(pool.pop(idx))
            weights.pop(idx)
        chosen.sort()
        support_tokens = [self.tokens[i] for i in chosen]
        cums: list[float] = []
        acc = 0.0
        for i in chosen:
            acc += self._zipf[i]
            cums.append(acc)
        result = (support_tokens, cums)
        self._ctx_cache[(u, v)] = result
        return result

    def _sample_sentence(self, rng: random.Random) -> list[str]:
        u, v = _START, _START
        out: list[str] = []
        while len(out) < self.max_len:
            support, cums = self._ctx_dist(u, v)
            x = rng.random() * cums[-1]
            tok = support[bisect.bisect_right(cums, x)]
            out.append(tok)
            u, v = v, tok
            if len(out) >= self.min_len and rng.random() < self.stop_prob:
                break
        return out

    def sample_corpus(self, n_sentences: int, *, seed: int, source_id: str | None = None) -> Corpus:
        sentences = []
        for i in range(n_sentences):
            rng = self._stream(self.seed, "sent", seed, i)
            sentences.append(Sentence(tuple(self._sample_sentence(rng)), i))
        return Corpus(tuple(sentences), source_id or f"synth-{self.seed}-{seed}")
