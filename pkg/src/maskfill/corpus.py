"""Corpus loading, persistence, and vocabulary statistics.

A corpus file is UTF-8 text, one sentence per line, tokens separated by
whitespace. Tokens are NFC-normalized on load so set membership and
equality checks are unambiguous downstream.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

MASK = "[MASK]"


class CorpusError(ValueError):
    """A corpus file violates the expected format."""


@dataclass(frozen=True)
class Sentence:
    """One whitespace-tokenized line of a corpus."""

    tokens: tuple[str, ...]
    index: int

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class LoadDiagnostics:
    skipped_lines: int
    sentences: int
    tokens: int

    def to_json(self) -> dict:
        return {
            "skipped_lines": self.skipped_lines,
            "sentences": self.sentences,
            "tokens": self.tokens,
        }


@dataclass(frozen=True)
class Corpus:
    """Immutable ordered collection of sentences."""

    sentences: tuple[Sentence, ...]
    source_id: str = ""
    diagnostics: LoadDiagnostics | None = None

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)


@dataclass(frozen=True)
class FrequencyTable:
    """Exact multiset counts of corpus tokens."""

    counts: Mapping[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def corpus_from_lines(lines, source_id: str = "") -> Corpus:
    """Build a corpus from in-memory strings; blank lines are dropped."""
    sentences = []
    for line in lines:
        toks = unicodedata.normalize("NFC", line).split()
        if toks:
            sentences.append(Sentence(tuple(toks), len(sentences)))
    return Corpus(tuple(sentences), source_id)


def load_corpus(path, *, source_id: str | None = None, allow_mask: bool = False) -> Corpus:
    """Load a corpus file.

    Blank lines are skipped and counted in the attached diagnostics.
    Unless ``allow_mask`` is set, a line containing the literal marker
    token is rejected: the file is already masked.
    """
    path = Path(path)
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    sentences: list[Sentence] = []
    skipped = 0
    for lineno, bline in enumerate(lines, 1):
        try:
            text = bline.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{path}: line {lineno}: invalid UTF-8 ({exc})") from exc
        toks = unicodedata.normalize("NFC", text).split()
        if not toks:
            skipped += 1
            continue
        if not allow_mask and MASK in toks:
            raise CorpusError(
                f"{path}: line {lineno}: contains {MASK}; this file is already masked"
            )
        sentences.append(Sentence(tuple(toks), len(sentences)))
    diag = LoadDiagnostics(skipped, len(sentences), sum(len(s) for s in sentences))
    return Corpus(tuple(sentences), source_id or str(path), diag)


def save_corpus(corpus: Corpus, path) -> None:
    """Write one sentence per line, single spaces, LF endings."""
    text = "".join(s.text() + "\n" for s in corpus.sentences)
    Path(path).write_bytes(text.encode("utf-8"))


def build_frequency_table(corpus: Corpus) -> FrequencyTable:
    counts = Counter(tok for s in corpus.sentences for tok in s.tokens)
    return FrequencyTable(dict(counts))
