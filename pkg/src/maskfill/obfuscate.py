"""Mask substitution: Top-1, Top-K, and fill-finetune rounds.

Markers are filled strictly left to right, one at a time, so every
already-filled token is visible as left context for the masks after it.
Consecutive markers must be merged to a single marker before filling.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

from .corpus import MASK, Corpus, Sentence
from .masking import MaskedCorpus, MaskedSentence

INSTRUCTION = "Predict the [MASK] tokens in the given sentence"


@dataclass(frozen=True)
class FillCandidate:
    token: str
    score: float


@runtime_checkable
class MaskFiller(Protocol):
    """Predictor of ranked substitute tokens for one marker position."""

    def candidates(
        self, left: Sequence[str], right: Sequence[str], k: int
    ) -> list[FillCandidate]: ...


@dataclass(frozen=True)
class Top1:
    pass


@dataclass(frozen=True)
class TopK:
    k: int = 10
    forbidden: frozenset[str] = frozenset()
    weighted: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class FineTune:
    rounds: int = 1
    inner: Top1 | TopK = field(default_factory=TopK)
    tau: float = 0.5

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


FillStrategy = Top1 | TopK | FineTune


@dataclass(frozen=True)
class Prompt:
    input: str
    output: str | None = None
    instruction: str = INSTRUCTION

    def __post_init__(self):
        if self.instruction != INSTRUCTION:
            raise ValueError("prompt instruction must be the fixed instruction string")


class RandomSource:
    """Seeded factory of per-sentence RNG streams.

    Streams are derived from (seed, corpus_index, sentence_index) by
    hashing, so outputs are bit-identical under any parallel schedule.
    Refilling the same corpus replays the same streams, which makes
    repeated fill passes directly comparable.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def for_sentence(self, corpus_index: int, sentence_index: int) -> random.Random:
        material = f"{self.seed}:{corpus_index}:{sentence_index}".encode("ascii")
        digest = hashlib.sha256(material).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))


class FillError(RuntimeError):
    """The filler produced no candidates for a mask position."""

    def __init__(self, sentence_index: int, mask_position: int):
        super().__init__(
            f"no fill candidates at sentence {sentence_index}, position {mask_position}"
        )
        self.sentence_index = sentence_index
        self.mask_position = mask_position


class CorpusFillError(RuntimeError):
    """Aggregate of per-sentence fill failures."""

    def __init__(self, failures: list[FillError]):
        where = ", ".join(
            f"({e.sentence_index}, {e.mask_position})" for e in failures[:10]
        )
        super().__init__(f"{len(failures)} sentence(s) failed to fill: {where}")
        self.failures = failures


class FinetuneError(RuntimeError):
    def __init__(self, round_index: int, message: str):
        super().__init__(f"fine-tune round {round_index} failed: {message}")
        self.round_index = round_index


class ParseMisaligned(ValueError):
    """Generated text could not be aligned to the masked sentence."""


def merge_consecutive_masks(ms: MaskedSentence) -> MaskedSentence:
    """Collapse every maximal run of markers to a single marker."""
    out: list[str] = []
    for tok in ms.tokens:
        if tok == MASK and out and out[-1] == MASK:
            continue
        out.append(tok)
    return MaskedSentence(tuple(out), ms.original_len, ms.index)


def _require_merged(ms: MaskedSentence) -> None:
    for a, b in zip(ms.tokens, ms.tokens[1:]):
        if a == MASK and b == MASK:
            raise ValueError("sentence has consecutive markers; merge before filling")


def _fill(ms: MaskedSentence, filler: MaskFiller, k: int, choose) -> Sentence:
    _require_merged(ms)
    toks = list(ms.tokens)
    for pos, tok in enumerate(ms.tokens):
        if tok != MASK:
            continue
        cands = filler.candidates(toks[:pos], toks[pos + 1 :], k)
        if not cands:
            raise FillError(ms.index, pos)
        toks[pos] = choose(cands).token
    return Sentence(tuple(toks), ms.index)


def fill_top1(ms: MaskedSentence, filler: MaskFiller) -> Sentence:
    """Replace each marker with the 1-best candidate, left to right."""
    return _fill(ms, filler, 1, lambda cands: cands[0])


def _draw(cands, forbidden, rng: random.Random, weighted: bool) -> FillCandidate:
    remaining = list(cands)
    while remaining:
        if weighted:
            total = sum(c.score for c in remaining)
            x = rng.random() * total
            idx = 0
            for i, c in enumerate(remaining):
                x -= c.score
                if x < 0:
                    idx = i
                    break
        else:
            idx = rng.randrange(len(remaining))
        pick = remaining.pop(idx)
        if pick.token not in forbidden:
            return pick
    return cands[0]  # every candidate forbidden: fall back to the overall best


def fill_topk(
    ms: MaskedSentence,
    filler: MaskFiller,
    k: int,
    forbidden=frozenset(),
    rng: random.Random | None = None,
    weighted: bool = False,
) -> Sentence:
    """Replace each marker with a random draw from the top-k candidates.

    Draws are without replacement; forbidden candidates are rejected and
    redrawn. When every candidate is forbidden the overall best is used.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if rng is None:
        raise ValueError("top-k filling requires an RNG stream")
    forbidden = frozenset(forbidden)
    return _fill(ms, filler, k, lambda cands: _draw(cands, forbidden, rng, weighted))


def obfuscate_corpus(
    mc: MaskedCorpus,
    strategy: FillStrategy,
    filler: MaskFiller,
    rng: RandomSource | None = None,
    *,
    workers: int = 1,
    corpus_index: int = 0,
) -> Corpus:
    """Merge and fill every sentence; the result contains no markers."""
    if isinstance(strategy, FineTune):
        filled, _ = finetune_loop(
            mc, filler, strategy.inner, strategy.rounds, rng,
            tau=strategy.tau, workers=workers,
        )
        return filled
    if isinstance(strategy, TopK) and rng is None:
        raise ValueError("a seeded RandomSource is required for top-k filling")

    def fill_one(ms: MaskedSentence):
        merged = merge_consecutive_masks(ms)
        try:
            if isinstance(strategy, Top1):
                return fill_top1(merged, filler), None
            stream = rng.for_sentence(corpus_index, ms.index)
            return (
                fill_topk(
                    merged, filler, strategy.k, strategy.forbidden, stream,
                    strategy.weighted,
                ),
                None,
            )
        except FillError as exc:
            return None, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fill_one, mc.sentences))
    else:
        results = [fill_one(ms) for ms in mc.sentences]

    failures = [err for _, err in results if err is not None]
    if failures:
        raise CorpusFillError(failures)
    return Corpus(tuple(s for s, _ in results), mc.source_id)


def finetune_loop(
    mc: MaskedCorpus,
    filler,
    inner: Top1 | TopK | None = None,
    rounds: int = 1,
    rng: RandomSource | None = None,
    *,
    tau: float = 0.5,
    workers: int = 1,
) -> tuple[Corpus, MaskFiller]:
    """Alternate filling and fine-tuning, then fill with the final filler.

    When at least a tau fraction of sentences carry no marker, round one
    fine-tunes on those clean sentences directly instead of on a filled
    corpus. Later rounds always fill first and fine-tune on the result.
    """
    if not hasattr(filler, "finetune"):
        raise TypeError("filler does not support fine-tuning")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    inner = inner if inner is not None else TopK()

    clean = [ms for ms in mc.sentences if not ms.has_mask]
    frac_clean = len(clean) / len(mc.sentences) if mc.sentences else 0.0
    current = filler
    for rnd in range(1, rounds + 1):
        try:
            if rnd == 1 and clean and frac_clean >= tau:
                tune_corpus = Corpus(
                    tuple(Sentence(ms.tokens, i) for i, ms in enumerate(clean)),
                    mc.source_id,
                )
                current = current.finetune(tune_corpus)
            else:
                filled = obfuscate_corpus(mc, inner, current, rng, workers=workers)
                current = current.finetune(filled)
        except (FillError, CorpusFillError):
            raise
        except Exception as exc:
            raise FinetuneError(rnd, str(exc)) from exc
    final = obfuscate_corpus(mc, inner, current, rng, workers=workers)
    return final, current


def build_prompts(
    mode: str,
    *,
    masked: MaskedCorpus | None = None,
    reference: Corpus | None = None,
    rho: float = 0.15,
    rng: RandomSource | None = None,
    corpus_index: int = 0,
) -> list[Prompt]:
    """Instruction prompts for decoder-style fillers.

    Inference prompts carry a masked sentence and no output. Fine-tune
    prompts mask each reference token independently with probability rho
    and carry the original sentence as output.
    """
    if mode == "inference":
        if masked is None:
            raise ValueError("inference prompts require a masked corpus")
        return [Prompt(input=ms.text()) for ms in masked.sentences]
    if mode == "finetune":
        if reference is None:
            raise ValueError("finetune prompts require an unmasked reference corpus")
        if rng is None:
            raise ValueError("finetune prompts require an RNG source")
        if not 0.0 <= rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        prompts = []
        for s in reference.sentences:
            stream = rng.for_sentence(corpus_index, s.index)
            toks = [MASK if stream.random() < rho else t for t in s.tokens]
            prompts.append(Prompt(input=" ".join(toks), output=s.text()))
        return prompts
    raise ValueError(f"unknown prompt mode {mode!r}")


def parse_generation(generated: str, ms: MaskedSentence) -> Sentence:
    """Recover a filled sentence from generated text.

    Unmasked tokens are aligned to the generation as a subsequence
    (leftmost embedding). Each marker takes one token from the generated
    gap between its aligned neighbours: the token adjacent to its left
    anchor, or to its right anchor for a sentence-initial marker.
    """
    _require_merged(ms)
    gen = generated.split()
    anchor_positions = [i for i, t in enumerate(ms.tokens) if t != MASK]

    matched: dict[int, int] = {}
    j = 0
    for pos in anchor_positions:
        tok = ms.tokens[pos]
        while j < len(gen) and gen[j] != tok:
            j += 1
        if j == len(gen):
            raise ParseMisaligned(f"token {tok!r} not found in generated text")
        matched[pos] = j
        j += 1

    out: list[str] = []
    for pos, tok in enumerate(ms.tokens):
        if tok != MASK:
            out.append(tok)
            continue
        left = [p for p in anchor_positions if p < pos]
        right = [p for p in anchor_positions if p > pos]
        lo = matched[left[-1]] + 1 if left else 0
        hi = matched[right[0]] if right else len(gen)
        gap = [g for g in gen[lo:hi] if g != MASK]
        if not gap:
            raise ParseMisaligned(
                f"no generated tokens available for the marker at position {pos}"
            )
        out.append(gap[0] if left or not right else gap[-1])
    return Sentence(tuple(out), ms.index)
