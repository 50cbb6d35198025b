"""Privacy masking policies over corpora and their statistics.

Three policies are provided: membership in a curated allow list,
membership in the top-N keep set of a frequency table, and per-token
entity flags from a tagger. All of them replace rejected tokens with
the marker and never change sentence lengths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Protocol

import requests

from .corpus import (
    MASK,
    Corpus,
    FrequencyTable,
    Sentence,
    load_corpus,
    save_corpus,
)


class TaggerError(RuntimeError):
    """Entity tagging failed; carries the offending sentence index."""

    def __init__(self, sentence_index: int, message: str):
        super().__init__(f"sentence {sentence_index}: {message}")
        self.sentence_index = sentence_index


@dataclass(frozen=True)
class MaskedSentence:
    """A sentence whose rejected tokens were replaced by the marker."""

    tokens: tuple[str, ...]
    original_len: int
    index: int

    @property
    def mask_runs(self) -> tuple[tuple[int, int], ...]:
        """Maximal (start, length) spans of consecutive markers."""
        runs = []
        start = None
        for i, tok in enumerate(self.tokens):
            if tok == MASK:
                if start is None:
                    start = i
            elif start is not None:
                runs.append((start, i - start))
                start = None
        if start is not None:
            runs.append((start, len(self.tokens) - start))
        return tuple(runs)

    @property
    def has_mask(self) -> bool:
        return MASK in self.tokens

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class MaskedCorpus:
    sentences: tuple[MaskedSentence, ...]
    source_id: str = ""

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[MaskedSentence]:
        return iter(self.sentences)


@dataclass(frozen=True)
class MaskStats:
    masked_tokens: int
    total_tokens: int

    @property
    def percent_masked(self) -> float:
        return self.masked_tokens / self.total_tokens

    def to_json(self) -> dict:
        return {
            "masked": self.masked_tokens,
            "total": self.total_tokens,
            "percent": round(self.percent_masked * 100, 1),
        }


class EntityTagger(Protocol):
    def tag(self, sentence: Sentence) -> list[bool]: ...


@dataclass(frozen=True)
class BuiltinTagger:
    """Gazetteer membership plus a capitalization heuristic.

    The heuristic flags capitalized tokens that are not sentence-initial,
    so ordinary sentence-start capitalization is not treated as an entity.
    """

    gazetteer: frozenset[str] = frozenset()
    capitalization: bool = True

    def tag(self, sentence: Sentence) -> list[bool]:
        flags = []
        for i, tok in enumerate(sentence.tokens):
            hit = tok in self.gazetteer
            if not hit and self.capitalization and i > 0 and tok[:1].isupper():
                hit = True
            flags.append(hit)
        return flags


class HttpTagger:
    """Tagger backed by a remote NER service.

    POST {base_url}/tag with {"tokens": [...]} and expect
    {"flags": [bool, ...]} of the same length.
    """

    def __init__(self, base_url: str, *, timeout: float = 10.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def tag(self, sentence: Sentence) -> list[bool]:
        resp = self._session.post(
            self.base_url + "/tag",
            json={"tokens": list(sentence.tokens)},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        flags = resp.json().get("flags")
        if not isinstance(flags, list) or not all(isinstance(f, bool) for f in flags):
            raise ValueError("tagger service returned a malformed flags list")
        return flags


def _mask_corpus(corpus: Corpus, keep: Callable[[Sentence, int, str], bool]) -> MaskedCorpus:
    sentences = []
    for s in corpus.sentences:
        toks = tuple(t if keep(s, i, t) else MASK for i, t in enumerate(s.tokens))
        sentences.append(MaskedSentence(toks, len(s.tokens), s.index))
    return MaskedCorpus(tuple(sentences), corpus.source_id)


def mask_allowlist(corpus: Corpus, allow_set, case_fold: bool = False) -> MaskedCorpus:
    """Mask every token not present in the allow set."""
    if not allow_set:
        raise ValueError("allow set must be non-empty")
    if case_fold:
        allowed = frozenset(t.casefold() for t in allow_set)
        return _mask_corpus(corpus, lambda s, i, t: t.casefold() in allowed)
    allowed = frozenset(allow_set)
    return _mask_corpus(corpus, lambda s, i, t: t in allowed)


def keep_set(table: FrequencyTable, n_keep: int) -> frozenset[str]:
    """Top n_keep tokens by count; ties broken lexicographically."""
    if n_keep < 1:
        raise ValueError("n_keep must be >= 1")
    ranked = sorted(table.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return frozenset(t for t, _ in ranked[:n_keep])


def mask_vocabthres(corpus: Corpus, table: FrequencyTable, n_keep: int) -> MaskedCorpus:
    """Mask every token outside the top-n_keep keep set of the table.

    Tokens absent from the table count as frequency zero and are masked.
    """
    kept = keep_set(table, n_keep)
    return _mask_corpus(corpus, lambda s, i, t: t in kept)


def mask_entities(corpus: Corpus, tagger: EntityTagger) -> MaskedCorpus:
    """Mask exactly the tokens the tagger flags as entities."""
    sentences = []
    for s in corpus.sentences:
        try:
            flags = tagger.tag(s)
        except Exception as exc:
            raise TaggerError(s.index, str(exc)) from exc
        if len(flags) != len(s.tokens):
            raise TaggerError(s.index, "tagger returned a flag list of the wrong length")
        toks = tuple(MASK if flag else t for t, flag in zip(s.tokens, flags))
        sentences.append(MaskedSentence(toks, len(s.tokens), s.index))
    return MaskedCorpus(tuple(sentences), corpus.source_id)


def mask_stats(mc: MaskedCorpus) -> MaskStats:
    total = mc.token_count
    if total == 0:
        raise ValueError("cannot compute mask statistics of an empty corpus")
    masked = sum(1 for s in mc.sentences for t in s.tokens if t == MASK)
    return MaskStats(masked, total)


def load_masked_corpus(path, *, source_id: str | None = None) -> MaskedCorpus:
    corpus = load_corpus(path, source_id=source_id, allow_mask=True)
    sentences = tuple(
        MaskedSentence(s.tokens, len(s.tokens), s.index) for s in corpus.sentences
    )
    return MaskedCorpus(sentences, corpus.source_id)


def save_masked_corpus(mc: MaskedCorpus, path) -> None:
    save_corpus(masked_to_corpus(mc), path)


def masked_to_corpus(mc: MaskedCorpus) -> Corpus:
    """View a masked corpus as a plain corpus with literal marker tokens."""
    return Corpus(
        tuple(Sentence(s.tokens, s.index) for s in mc.sentences), mc.source_id
    )
