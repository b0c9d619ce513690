"""IOB2 corpora: parsing, serialization, span decoding and language metadata.

A corpus is a sequence of sentences for one language and one split. Tags
come from a fixed three-type tagset (PER, LOC, ORG). Span decoding is
lenient: a stray I-X after O, after a different type, or at the start of
a sentence opens a new entity instead of being dropped, and B-X always
opens one. Every non-O token therefore belongs to exactly one mention.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

from .errors import MetadataError, ParseError, TagError

ENTITY_TYPES = ("PER", "LOC", "ORG")
TAGSET = ("O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG")
VALID_TAGS = frozenset(TAGSET)
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class Sentence:
    """One tokenized sentence with aligned IOB2 tags.

    Tokens must be non-empty and free of tabs and line breaks so that
    serialization round-trips. Tags must come from the fixed tagset but
    need not be well-formed IOB2; decoding is lenient.
    """

    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    language: str

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{len(self.tokens)} tokens vs {len(self.tags)} tags"
            )
        for tok in self.tokens:
            if not tok or "\t" in tok or "\n" in tok or "\r" in tok:
                raise ValueError(f"invalid token {tok!r}")
        for tag in self.tags:
            if tag not in VALID_TAGS:
                raise TagError(f"unknown tag {tag!r}")
        if not self.language:
            raise ValueError("empty language code")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class EntityMention:
    """A decoded mention: token span [start, end) of one entity type."""

    start: int
    end: int
    entity_type: str
    surface: tuple[str, ...]

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span [{self.start}, {self.end})")
        if self.entity_type not in ENTITY_TYPES:
            raise ValueError(f"unknown entity type {self.entity_type!r}")
        if len(self.surface) != self.end - self.start:
            raise ValueError("surface length does not match span")


@dataclass(frozen=True)
class Corpus:
    """Sentences of a single language and split."""

    sentences: tuple[Sentence, ...]
    language: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if not self.language:
            raise ValueError("empty language code")
        for sent in self.sentences:
            if sent.language != self.language:
                raise ValueError(
                    f"sentence language {sent.language!r} in corpus "
                    f"{self.language!r}"
                )

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)


def _lines(source: str | TextIO | Iterable[str]) -> Iterable[str]:
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def parse_iob2(
    source: str | TextIO | Iterable[str],
    language: str,
    split: str = "test",
    strip_prefix: bool = False,
    name: str = "<iob2>",
) -> Corpus:
    """Parse token/tag lines into a Corpus.

    A line holds one token and one tag separated by a tab, or by a single
    space when no tab is present. Blank lines end sentences. When
    strip_prefix is set, a leading "<language>:" on the token is removed
    (the raw export format prefixes tokens this way).

    Raises ParseError or TagError with the 1-based line number on any
    malformed line.
    """
    prefix = f"{language}:"
    sentences: list[Sentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens), tuple(tags), language))
            tokens.clear()
            tags.clear()

    lineno = 0
    for lineno, raw in enumerate(_lines(source), start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush()
            continue
        fields = line.split("\t") if "\t" in line else line.split(" ")
        if len(fields) != 2:
            raise ParseError(
                f"{name}:{lineno}: expected TOKEN<sep>TAG, "
                f"got {len(fields)} fields: {line!r}"
            )
        token, tag = fields
        if strip_prefix and token.startswith(prefix):
            token = token[len(prefix):]
        if not token:
            raise ParseError(f"{name}:{lineno}: empty token")
        if tag not in VALID_TAGS:
            raise TagError(f"{name}:{lineno}: unknown tag {tag!r}")
        tokens.append(token)
        tags.append(tag)
    flush()
    return Corpus(tuple(sentences), language, split)


def serialize_iob2(corpus: Corpus) -> str:
    """Render a corpus as tab-separated token/tag lines.

    Sentences are separated by one blank line; the output ends with one.
    parse_iob2(serialize_iob2(c)) reproduces c up to separator choice.
    """
    parts: list[str] = []
    for sent in corpus.sentences:
        for token, tag in zip(sent.tokens, sent.tags):
            parts.append(f"{token}\t{tag}\n")
        parts.append("\n")
    return "".join(parts)


def decode_spans(tags: Iterable[str]) -> list[tuple[int, int, str]]:
    """Decode a tag sequence into (start, end, type) spans, leniently.

    B-X always opens a span. I-X continues an open span of type X and
    otherwise opens a new one. O closes. Spans are maximal, sorted and
    cover exactly the non-O positions.
    """
    spans: list[tuple[int, int, str]] = []
    start = -1
    current = ""
    length = 0
    for i, tag in enumerate(tags):
        length = i + 1
        if tag == "O":
            if current:
                spans.append((start, i, current))
                current = ""
            continue
        prefix, etype = tag.split("-", 1)
        if prefix == "B" or etype != current:
            if current:
                spans.append((start, i, current))
            start, current = i, etype
    if current:
        spans.append((start, length, current))
    return spans


def extract_entities(sentence: Sentence) -> list[EntityMention]:
    """Decode a sentence's mentions in left-to-right order."""
    return [
        EntityMention(start, end, etype, sentence.tokens[start:end])
        for start, end, etype in decode_spans(sentence.tags)
    ]


def encode_tags(length: int, spans: Iterable[tuple[int, int, str]]) -> tuple[str, ...]:
    """Write spans back as strict IOB2 tags over a sentence of given length.

    Spans must be within range, typed and non-overlapping. Adjacent spans
    stay distinct because each opens with B-X.
    """
    tags = ["O"] * length
    for start, end, etype in spans:
        if not 0 <= start < end <= length:
            raise ValueError(f"span [{start}, {end}) outside sentence of {length}")
        if etype not in ENTITY_TYPES:
            raise ValueError(f"unknown entity type {etype!r}")
        for i in range(start, end):
            if tags[i] != "O":
                raise ValueError(f"overlapping spans at position {i}")
            tags[i] = f"I-{etype}"
        tags[start] = f"B-{etype}"
    return tuple(tags)


def entity_overlap(train: Corpus, test: Corpus) -> float | None:
    """Fraction of test mentions whose (type, surface) occurs in train.

    Test mentions count with multiplicity; the train side is a set.
    Returns None when the test corpus has no mentions at all.
    """
    train_keys = {
        (m.entity_type, m.surface)
        for sent in train
        for m in extract_entities(sent)
    }
    total = 0
    hits = 0
    for sent in test:
        for m in extract_entities(sent):
            total += 1
            if (m.entity_type, m.surface) in train_keys:
                hits += 1
    if total == 0:
        return None
    return hits / total


def count_mentions(corpus: Corpus) -> Counter:
    """Mention counts per entity type, for quick corpus summaries."""
    counts: Counter = Counter()
    for sent in corpus:
        for m in extract_entities(sent):
            counts[m.entity_type] += 1
    return counts


METADATA_HEADER = ("code", "script", "family", "train_size", "pretrain_pct")


@dataclass(frozen=True)
class LanguageMeta:
    """Static per-language attributes used for grouping and pool scoping."""

    code: str
    script: str
    family: str
    train_size: int
    pretrain_pct: float

    def __post_init__(self):
        if not self.code or not self.script or not self.family:
            raise MetadataError(f"empty field in metadata for {self.code!r}")
        if self.train_size <= 0:
            raise MetadataError(
                f"{self.code}: train_size must be positive, got {self.train_size}"
            )
        if self.pretrain_pct < 0:
            raise MetadataError(
                f"{self.code}: pretrain_pct must be non-negative, "
                f"got {self.pretrain_pct}"
            )


def load_language_metadata(
    source: str | TextIO | Iterable[str], name: str = "<metadata>"
) -> dict[str, LanguageMeta]:
    """Load the language metadata CSV keyed by language code.

    The header must be exactly code,script,family,train_size,pretrain_pct.
    Duplicate codes and non-numeric sizes are rejected with the offending
    line number.
    """
    reader = csv.reader(_lines(source))
    try:
        header = next(reader)
    except StopIteration:
        raise MetadataError(f"{name}: empty metadata file") from None
    if tuple(h.strip() for h in header) != METADATA_HEADER:
        raise MetadataError(
            f"{name}:1: header must be {','.join(METADATA_HEADER)}"
        )
    result: dict[str, LanguageMeta] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 5:
            raise MetadataError(f"{name}:{lineno}: expected 5 fields, got {len(row)}")
        code, script, family, size_s, pct_s = (f.strip() for f in row)
        if code in result:
            raise MetadataError(f"{name}:{lineno}: duplicate language code {code!r}")
        try:
            size = int(size_s)
        except ValueError:
            raise MetadataError(
                f"{name}:{lineno}: train_size must be an integer, got {size_s!r}"
            ) from None
        try:
            pct = float(pct_s)
        except ValueError:
            raise MetadataError(
                f"{name}:{lineno}: pretrain_pct must be a number, got {pct_s!r}"
            ) from None
        try:
            result[code] = LanguageMeta(code, script, family, size, pct)
        except MetadataError as exc:
            raise MetadataError(f"{name}:{lineno}: {exc}") from None
    return result
