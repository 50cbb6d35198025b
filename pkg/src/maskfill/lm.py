"""Interpolated trigram language model with exact normalization.

The estimator mixes trigram, bigram, unigram, and uniform levels. Each
interpolation weight is zeroed when its context was never observed, so
at every context the result is a convex combination of proper
distributions over the vocabulary plus the end-of-sentence symbol, and
therefore sums to one exactly.

Training modes control how masked corpora are admitted:

* ``oracle`` / ``obfuscated`` -- markers are rejected; the two labels
  differ only in provenance.
* ``baseline0`` -- the marker is an ordinary vocabulary item.
* ``baseline1`` -- events whose predicted token is the marker are
  excluded from every count table, while markers still appear in
  contexts.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import MASK, Corpus

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

TRAINING_MODES = ("oracle", "baseline0", "baseline1", "obfuscated")

_SNAPSHOT_MAGIC = "trigram-lm 1"


class TrainingError(ValueError):
    """Corpus cannot be admitted under the requested training mode."""


@dataclass(frozen=True)
class PerplexityReport:
    perplexity: float
    token_count: int
    oov_rate: float

    def to_json(self) -> dict:
        return {
            "ppl": self.perplexity,
            "tokens": self.token_count,
            "oov_rate": self.oov_rate,
        }


class TrigramLM:
    """Count-based trigram model; immutable once constructed."""

    def __init__(
        self,
        *,
        vocab,
        lambda3: float,
        lambda2: float,
        lambda1: float,
        min_count: int,
        mode: str | None,
        uni,
        bi,
        tri,
        ctx_extra=frozenset(),
    ):
        self.vocab = frozenset(vocab)
        self.lambda3 = lambda3
        self.lambda2 = lambda2
        self.lambda1 = lambda1
        self.min_count = min_count
        self.mode = mode
        self.ctx_extra = frozenset(ctx_extra)
        self._uni = dict(uni)
        self._bi = {v: dict(ws) for v, ws in bi.items()}
        self._tri = {ctx: dict(ws) for ctx, ws in tri.items()}
        # Context totals are sums of the recorded events, accumulated in
        # sorted key order so mixed (float) counts stay deterministic.
        self._uni_total = sum(self._uni[w] for w in sorted(self._uni))
        self._bi_ctx = {v: sum(ws[w] for w in sorted(ws)) for v, ws in self._bi.items()}
        self._tri_ctx = {c: sum(ws[w] for w in sorted(ws)) for c, ws in self._tri.items()}

    # -- token admission -------------------------------------------------

    def map_target(self, token: str) -> str:
        if token == EOS or token in self.vocab:
            return token
        return UNK

    def map_context(self, token: str) -> str:
        if token == BOS or token in self.vocab or token in self.ctx_extra:
            return token
        return UNK

    @property
    def target_space_size(self) -> int:
        return len(self.vocab) + 1  # vocabulary plus the end symbol

    # -- probability -----------------------------------------------------

    def prob(self, token: str, u: str, v: str) -> float:
        """P(token | u, v) with OOV mapping applied to all arguments."""
        w = self.map_target(token)
        um = self.map_context(u)
        vm = self.map_context(v)
        floor = 1.0 / self.target_space_size
        if self._uni_total > 0:
            f1 = self._uni.get(w, 0) / self._uni_total
            p = self.lambda1 * f1 + (1.0 - self.lambda1) * floor
        else:
            p = floor
        ctx2 = self._bi_ctx.get(vm, 0)
        if ctx2 > 0:
            f2 = self._bi[vm].get(w, 0) / ctx2
            p = self.lambda2 * f2 + (1.0 - self.lambda2) * p
        ctx3 = self._tri_ctx.get((um, vm), 0)
        if ctx3 > 0:
            f3 = self._tri[(um, vm)].get(w, 0) / ctx3
            p = self.lambda3 * f3 + (1.0 - self.lambda3) * p
        return p

    # -- persistence -----------------------------------------------------

    def dump_lines(self) -> list[str]:
        """Snapshot lines: versioned header, then count records in sorted
        key order. Captures the distribution, not training provenance."""
        lines = [
            _SNAPSHOT_MAGIC,
            f"lambda3 {self.lambda3!r}",
            f"lambda2 {self.lambda2!r}",
            f"lambda1 {self.lambda1!r}",
            f"min_count {self.min_count}",
        ]
        for t in sorted(self.ctx_extra):
            lines.append(f"ctx {t}")
        for t in sorted(self.vocab):
            lines.append(f"vocab {t}")
        for w in sorted(self._uni):
            lines.append(f"1 {w} {_fmt_count(self._uni[w])}")
        for v in sorted(self._bi):
            ws = self._bi[v]
            for w in sorted(ws):
                lines.append(f"2 {v} {w} {_fmt_count(ws[w])}")
        for u, v in sorted(self._tri):
            ws = self._tri[(u, v)]
            for w in sorted(ws):
                lines.append(f"3 {u} {v} {w} {_fmt_count(ws[w])}")
        return lines

    def save(self, path) -> None:
        Path(path).write_bytes(("\n".join(self.dump_lines()) + "\n").encode("utf-8"))

    @classmethod
    def parse_lines(cls, lines: Sequence[str]) -> "TrigramLM":
        if not lines or lines[0] != _SNAPSHOT_MAGIC:
            raise ValueError("not a trigram LM snapshot")
        params: dict[str, str] = {}
        vocab: set[str] = set()
        ctx_extra: set[str] = set()
        uni: dict[str, float] = {}
        bi: dict[str, dict] = defaultdict(dict)
        tri: dict[tuple[str, str], dict] = defaultdict(dict)
        for line in lines[1:]:
            parts = line.split(" ")
            key = parts[0]
            if key in ("lambda3", "lambda2", "lambda1", "min_count"):
                params[key] = parts[1]
            elif key == "ctx":
                ctx_extra.add(parts[1])
            elif key == "vocab":
                vocab.add(parts[1])
            elif key == "1":
                uni[parts[1]] = _parse_count(parts[2])
            elif key == "2":
                bi[parts[1]][parts[2]] = _parse_count(parts[3])
            elif key == "3":
                tri[(parts[1], parts[2])][parts[3]] = _parse_count(parts[4])
            else:
                raise ValueError(f"bad snapshot record: {line!r}")
        return cls(
            vocab=vocab,
            lambda3=float(params["lambda3"]),
            lambda2=float(params["lambda2"]),
            lambda1=float(params["lambda1"]),
            min_count=int(params["min_count"]),
            mode=None,
            uni=uni,
            bi=bi,
            tri=tri,
            ctx_extra=ctx_extra,
        )

    @classmethod
    def load(cls, path) -> "TrigramLM":
        text = Path(path).read_bytes().decode("utf-8")
        return cls.parse_lines(text.rstrip("\n").split("\n"))


def _fmt_count(c) -> str:
    f = float(c)
    return str(int(f)) if f.is_integer() else repr(f)


def _parse_count(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def train_lm(
    corpus: Corpus,
    mode: str = "oracle",
    *,
    min_count: int = 1,
    lambda3: float = 0.5,
    lambda2: float = 0.5,
    lambda1: float = 0.5,
) -> TrigramLM:
    """Train on a corpus under the given admission mode.

    Tokens occurring fewer than ``min_count`` times are replaced by the
    unknown symbol. Sentences are padded with two start symbols and one
    predicted end symbol.
    """
    if mode not in TRAINING_MODES:
        raise TrainingError(f"unknown training mode {mode!r}")
    for lam in (lambda3, lambda2, lambda1):
        if not 0.0 < lam < 1.0:
            raise TrainingError("interpolation weights must lie in (0, 1)")
    if min_count < 1:
        raise TrainingError("min_count must be >= 1")
    if not corpus.sentences:
        raise TrainingError("cannot train on an empty corpus")

    raw = Counter(tok for s in corpus.sentences for tok in s.tokens)
    has_mask = MASK in raw
    if has_mask and mode in ("oracle", "obfuscated"):
        raise TrainingError(f"corpus contains {MASK}; not admitted in mode {mode!r}")

    kept = {t for t, c in raw.items() if c >= min_count}
    if mode == "baseline1":
        kept.discard(MASK)
    vocab = kept | {UNK}
    baseline1 = mode == "baseline1"
    ctx_extra = {MASK} if (baseline1 and has_mask) else set()

    def admit(t: str) -> str:
        if t in vocab:
            return t
        if baseline1 and t == MASK:
            return MASK
        return UNK

    uni: Counter = Counter()
    bi: dict[str, Counter] = defaultdict(Counter)
    tri: dict[tuple[str, str], Counter] = defaultdict(Counter)
    for s in corpus.sentences:
        seq = [BOS, BOS] + [admit(t) for t in s.tokens] + [EOS]
        for i in range(2, len(seq)):
            w, u, v = seq[i], seq[i - 2], seq[i - 1]
            if baseline1 and w == MASK:
                continue
            uni[w] += 1
            bi[v][w] += 1
            tri[(u, v)][w] += 1

    return TrigramLM(
        vocab=vocab,
        lambda3=lambda3,
        lambda2=lambda2,
        lambda1=lambda1,
        min_count=min_count,
        mode=mode,
        uni=uni,
        bi=bi,
        tri=tri,
        ctx_extra=ctx_extra,
    )


def combine_counts(
    components: Sequence[tuple[TrigramLM, float]],
    *,
    extra_vocab=frozenset(),
    mode: str | None = None,
) -> TrigramLM:
    """Linear mix of count tables: sum of weight * counts per n-gram.

    Components with weight zero contribute neither counts nor vocabulary;
    ``extra_vocab`` forces tokens into the result vocabulary regardless.
    All components must share interpolation weights and min_count.
    """
    for _, w in components:
        if w < 0:
            raise ValueError("component weights must be non-negative")
    active = [(m, w) for m, w in components if w > 0]
    if not active:
        raise ValueError("at least one component must have positive weight")
    ref = active[0][0]
    for m, _ in active[1:]:
        if (m.lambda3, m.lambda2, m.lambda1, m.min_count) != (
            ref.lambda3,
            ref.lambda2,
            ref.lambda1,
            ref.min_count,
        ):
            raise ValueError("components disagree on hyperparameters")

    vocab = set(extra_vocab)
    ctx_extra: set[str] = set()
    for m, _ in active:
        vocab |= m.vocab
        ctx_extra |= m.ctx_extra

    def merge(get_table):
        tables = [(get_table(m), w) for m, w in active]
        keys = sorted(set().union(*(t.keys() for t, _ in tables)))
        return {k: sum(w * t.get(k, 0) for t, w in tables) for k in keys}

    uni = merge(lambda m: m._uni)
    bi_flat = merge(lambda m: {(v, w): c for v, ws in m._bi.items() for w, c in ws.items()})
    tri_flat = merge(
        lambda m: {(u, v, w): c for (u, v), ws in m._tri.items() for w, c in ws.items()}
    )
    bi: dict[str, dict] = defaultdict(dict)
    for (v, w), c in bi_flat.items():
        bi[v][w] = c
    tri: dict[tuple[str, str], dict] = defaultdict(dict)
    for (u, v, w), c in tri_flat.items():
        tri[(u, v)][w] = c

    return TrigramLM(
        vocab=vocab,
        lambda3=ref.lambda3,
        lambda2=ref.lambda2,
        lambda1=ref.lambda1,
        min_count=ref.min_count,
        mode=mode or ref.mode,
        uni=uni,
        bi=bi,
        tri=tri,
        ctx_extra=ctx_extra,
    )


def adapt_lm(
    background: TrigramLM,
    in_domain: Corpus,
    alpha: float = 1.0,
    *,
    mode: str = "obfuscated",
) -> TrigramLM:
    """Blend in-domain counts with a background model.

    counts = alpha * in_domain + (1 - alpha) * background. With alpha 1
    this reduces to a fresh in-domain model; with alpha < 1 the
    background vocabulary enlarges the uniform floor.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    in_model = train_lm(
        in_domain,
        mode,
        min_count=background.min_count,
        lambda3=background.lambda3,
        lambda2=background.lambda2,
        lambda1=background.lambda1,
    )
    if alpha == 1.0:
        return in_model
    return combine_counts(
        [(in_model, alpha), (background, 1.0 - alpha)],
        extra_vocab=in_model.vocab,
        mode=in_model.mode,
    )


def perplexity(lm: TrigramLM, test: Corpus) -> PerplexityReport:
    """Evaluate on an unmasked test set.

    Every real token plus each sentence's end symbol is one predicted
    event; OOV tokens map to the unknown symbol. Log-probabilities are
    accumulated in sentence order so the result is deterministic.
    """
    if not test.sentences:
        raise TrainingError("empty test corpus")
    total_logp = 0.0
    events = 0
    oov = 0
    real = 0
    for s in test.sentences:
        if MASK in s.tokens:
            raise TrainingError(f"test sentence {s.index} contains {MASK}")
        mapped = [lm.map_target(t) for t in s.tokens]
        oov += sum(1 for t in s.tokens if t not in lm.vocab)
        real += len(mapped)
        seq = [BOS, BOS] + mapped + [EOS]
        for i in range(2, len(seq)):
            total_logp += math.log(lm.prob(seq[i], seq[i - 2], seq[i - 1]))
            events += 1
    ppl = math.exp(-total_logp / events)
    return PerplexityReport(ppl, events, oov / real if real else 0.0)
