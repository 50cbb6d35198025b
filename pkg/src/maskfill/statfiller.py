"""Deterministic trigram-backed mask filler.

Serves as the hermetic stand-in for a pre-trained masked LM: every pool
token w is scored by P(w | l2, l1) * P(r1 | l1, w), where l2 and l1 are
the last two left-context tokens (boundary-padded) and r1 is the first
right-context token (end symbol if the right context is empty).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import MASK, Corpus
from .lm import BOS, EOS, UNK, TrigramLM, combine_counts, train_lm
from .obfuscate import FillCandidate

_SNAPSHOT_MAGIC = "statfiller 1"


class StatFiller:
    """Immutable trigram filler; fine-tuning returns a new instance."""

    def __init__(self, lm: TrigramLM, *, version: int = 0, mu: float = 1.0):
        self.lm = lm
        self.version = version
        self.mu = mu
        self.pool: tuple[str, ...] = tuple(
            sorted(t for t in lm.vocab if t not in (UNK, MASK, BOS, EOS))
        )
        if not self.pool:
            raise ValueError("candidate pool is empty; train on a larger corpus")
        # Score vectors over the pool, keyed by canonicalized context.
        # Entries are deterministic, so concurrent recomputation is benign.
        self._left_cache: dict[tuple[str, str], np.ndarray] = {}
        self._right_cache: dict[tuple[str, str], np.ndarray] = {}

    def candidates(
        self, left: Sequence[str], right: Sequence[str], k: int
    ) -> list[FillCandidate]:
        """Top-k pool tokens by bidirectional trigram score.

        Sorted by score descending, ties by token order; if k exceeds the
        pool the whole pool is returned.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        lm = self.lm
        l2 = left[-2] if len(left) >= 2 else BOS
        l1 = left[-1] if len(left) >= 1 else BOS
        r1 = right[0] if right else EOS
        l2m, l1m = lm.map_context(l2), lm.map_context(l1)
        r1m = lm.map_target(r1)

        lkey = (l2m, l1m)
        lvec = self._left_cache.get(lkey)
        if lvec is None:
            lvec = np.array([lm.prob(w, l2m, l1m) for w in self.pool])
            self._left_cache[lkey] = lvec
        rkey = (l1m, r1m)
        rvec = self._right_cache.get(rkey)
        if rvec is None:
            rvec = np.array([lm.prob(r1m, l1m, w) for w in self.pool])
            self._right_cache[rkey] = rvec

        scores = lvec * rvec
        # Stable argsort on the lexicographically sorted pool realizes the
        # (-score, token) tie rule without per-call tuple sorting.
        order = np.argsort(-scores, kind="stable")[: min(k, len(self.pool))]
        return [FillCandidate(self.pool[i], float(scores[i])) for i in order]

    def finetune(self, corpus: Corpus) -> "StatFiller":
        """New filler with counts = background + mu * in-domain counts."""
        if not corpus.sentences:
            raise ValueError("cannot fine-tune on an empty corpus")
        if self.mu == 0:
            return StatFiller(self.lm, version=self.version + 1, mu=self.mu)
        dom = train_lm(
            corpus,
            "obfuscated",
            min_count=self.lm.min_count,
            lambda3=self.lm.lambda3,
            lambda2=self.lm.lambda2,
            lambda1=self.lm.lambda1,
        )
        mixed = combine_counts([(self.lm, 1.0), (dom, self.mu)])
        return StatFiller(mixed, version=self.version + 1, mu=self.mu)

    def save(self, path) -> None:
        lines = [_SNAPSHOT_MAGIC, f"version {self.version}", f"mu {self.mu!r}"]
        lines.extend(self.lm.dump_lines())
        Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    @classmethod
    def load(cls, path) -> "StatFiller":
        lines = Path(path).read_bytes().decode("utf-8").rstrip("\n").split("\n")
        if not lines or lines[0] != _SNAPSHOT_MAGIC:
            raise ValueError("not a statfiller snapshot")
        version = int(lines[1].split(" ")[1])
        mu = float(lines[2].split(" ")[1])
        lm = TrigramLM.parse_lines(lines[3:])
        return cls(lm, version=version, mu=mu)


def train_background(
    corpus: Corpus,
    *,
    min_count: int = 1,
    lambda3: float = 0.5,
    lambda2: float = 0.5,
    lambda1: float = 0.5,
    mu: float = 1.0,
) -> StatFiller:
    """Train a version-0 filler on an unmasked background corpus."""
    lm = train_lm(
        corpus,
        "oracle",
        min_count=min_count,
        lambda3=lambda3,
        lambda2=lambda2,
        lambda1=lambda1,
    )
    return StatFiller(lm, version=0, mu=mu)
