"""Corpus ingestion and tokenization.

Two kinds of input are supported: verse-aligned parallel text (one file per
language, TSV or bible-style XML) and genomic coding-region datasets (FASTA
or TSV) that are split into n-gram "sentences" for embedding training.
"""

from __future__ import annotations

import logging
import unicodedata
import xml.etree.ElementTree as ElementTree
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import WeldError

logger = logging.getLogger(__name__)

DNA_ALPHABET = frozenset("ACGT")
NGRAM_SIZES = (3, 4, 5, 6)


class CorpusError(WeldError):
    """A corpus or genome dataset could not be loaded or validated."""


# ---------------------------------------------------------------------------
# vocabulary


@dataclass
class Vocabulary:
    """Dense word index, ordered by descending count with lexicographic ties.

    Ids are the positions in `words` (0..|V|-1) and are stable across
    save/load because the file stores rows in id order.
    """

    words: list[str]
    counts: list[int]
    index: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if len(self.words) != len(self.counts):
            raise ValueError("words and counts must have the same length")
        if not self.index:
            self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def count(self, word: str) -> int:
        return self.counts[self.index[word]]

    @property
    def total_count(self) -> int:
        return sum(self.counts)


def build_vocabulary(sentences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Count words in a sentence stream and keep those with count >= min_count."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counter: Counter[str] = Counter()
    for sentence in sentences:
        counter.update(sentence)
    if not counter:
        raise CorpusError("cannot build a vocabulary from an empty sentence stream")
    items = sorted(
        ((w, c) for w, c in counter.items() if c >= min_count),
        key=lambda wc: (-wc[1], wc[0]),
    )
    if not items:
        raise CorpusError(f"no words with count >= {min_count}")
    return Vocabulary([w for w, _ in items], [c for _, c in items])


def save_vocabulary(vocab: Vocabulary, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, count in zip(vocab.words, vocab.counts):
            fh.write(f"{word}\t{count}\n")


def load_vocabulary(path: Path | str) -> Vocabulary:
    words: list[str] = []
    counts: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                word, count = line.split("\t")
                counts.append(int(count))
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed vocabulary row") from exc
            words.append(word)
    if not words:
        raise CorpusError(f"{path}: empty vocabulary file")
    return Vocabulary(words, counts)


# ---------------------------------------------------------------------------
# natural-language corpora


@lru_cache(maxsize=None)
def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize_natural(text: str, punctuation: str = "delete") -> list[str]:
    """Whitespace-tokenize after removing Unicode punctuation and lowercasing.

    `punctuation="delete"` removes punctuation characters in place
    ("a--b" -> "ab"); `punctuation="split"` treats them as separators
    ("a--b" -> "a", "b").
    """
    if punctuation not in ("delete", "split"):
        raise ValueError(f"unknown punctuation mode {punctuation!r}")
    repl = "" if punctuation == "delete" else " "
    stripped = "".join(repl if _is_punctuation(ch) else ch for ch in text)
    return stripped.lower().split()


@dataclass
class ParallelCorpus:
    """Verse-aligned tokenized text; every language covers the same verse ids."""

    languages: list[str]
    verses: dict[str, dict[str, list[str]]]  # verse id -> language -> tokens
    dropped: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.verses)

    def sentences(self, language: str) -> list[list[str]]:
        if language not in self.languages:
            raise KeyError(f"language {language!r} not in corpus")
        return [tokens[language] for tokens in self.verses.values()]

    def verse_pairs(self, lang_a: str, lang_b: str) -> Iterator[tuple[list[str], list[str]]]:
        if lang_a not in self.languages or lang_b not in self.languages:
            raise KeyError(f"language pair ({lang_a!r}, {lang_b!r}) not in corpus")
        for tokens in self.verses.values():
            yield tokens[lang_a], tokens[lang_b]


def _read_tsv_verses(path: Path) -> dict[str, str]:
    verses: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}:{lineno}: expected `verse_id<TAB>text`")
            verse_id, text = line.split("\t", 1)
            if verse_id in verses:
                raise CorpusError(f"{path}:{lineno}: duplicate verse id {verse_id!r}")
            verses[verse_id] = text
    return verses


def _read_xml_verses(path: Path) -> dict[str, str]:
    try:
        tree = ElementTree.parse(path)
    except ElementTree.ParseError as exc:
        raise CorpusError(f"{path}: not parseable as XML: {exc}") from exc
    verses: dict[str, str] = {}
    for elem in tree.iter():
        tag = elem.tag.rsplit("}", 1)[-1]
        if tag != "seg":
            continue
        verse_id = elem.attrib.get("id")
        if verse_id is None:
            continue
        if verse_id in verses:
            raise CorpusError(f"{path}: duplicate verse id {verse_id!r}")
        verses[verse_id] = "".join(elem.itertext()).strip()
    return verses


def load_verse_aligned(
    path: Path | str,
    format: str = "tsv",
    punctuation: str = "delete",
) -> ParallelCorpus:
    """Load a directory of per-language verse files (filename stem = language id).

    Only verses present (and non-empty after tokenization) in every language
    are kept; per-language dropped-verse counts are recorded on the corpus.
    """
    readers = {"tsv": (".tsv", _read_tsv_verses), "bible-xml": (".xml", _read_xml_verses)}
    if format not in readers:
        raise ValueError(f"unknown corpus format {format!r}")
    suffix, reader = readers[format]

    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")
    files = sorted(root.glob(f"*{suffix}"))
    if not files:
        raise CorpusError(f"no {suffix} files in {root}")

    languages = [f.stem for f in files]
    raw_counts: dict[str, int] = {}
    per_lang: dict[str, dict[str, list[str]]] = {}
    for f in files:
        lang = f.stem
        raw = reader(f)
        raw_counts[lang] = len(raw)
        tokenized = {vid: tokenize_natural(text, punctuation) for vid, text in raw.items()}
        per_lang[lang] = {vid: toks for vid, toks in tokenized.items() if toks}
        if not per_lang[lang]:
            raise CorpusError(f"language {lang!r} has zero usable verses")

    common = set(per_lang[languages[0]])
    for lang in languages[1:]:
        common &= set(per_lang[lang])
    if not common:
        raise CorpusError(
            "no verses survive the intersection across languages: "
            + ", ".join(f"{lang} ({len(per_lang[lang])} verses)" for lang in languages)
        )

    # keep the first language's file order for determinism
    order = [vid for vid in per_lang[languages[0]] if vid in common]
    verses = {vid: {lang: per_lang[lang][vid] for lang in languages} for vid in order}
    dropped = {lang: raw_counts[lang] - len(common) for lang in languages}
    for lang in languages:
        if dropped[lang]:
            logger.info("language %s: dropped %d of %d verses", lang, dropped[lang], raw_counts[lang])
    return ParallelCorpus(languages, verses, dropped)


# ---------------------------------------------------------------------------
# genomic corpora


@dataclass
class CodingRegionSet:
    """Coding-region sequences of one organism, uppercase over {A,C,G,T}."""

    organism: str
    sequences: list[str]

    def __len__(self) -> int:
        return len(self.sequences)


def _validate_dna(sequence: str, where: str) -> None:
    extra = set(sequence) - DNA_ALPHABET
    if extra:
        pos = next(i for i, ch in enumerate(sequence) if ch in extra)
        raise CorpusError(f"{where}: invalid character {sequence[pos]!r} at position {pos}")


def genome_ngram_sentences(sequence: str, n: int) -> list[list[str]]:
    """Split a DNA sequence into non-overlapping n-grams at every start offset.

    Returns one sentence per offset 0..n-1 (offsets too short to yield a whole
    gram are omitted); trailing fragments shorter than n are discarded.
    """
    if n not in NGRAM_SIZES:
        raise ValueError(f"n must be one of {NGRAM_SIZES}, got {n}")
    _validate_dna(sequence, "sequence")
    length = len(sequence)
    sentences = []
    for offset in range(n):
        grams = [sequence[i : i + n] for i in range(offset, length - n + 1, n)]
        if grams:
            sentences.append(grams)
    return sentences


def _read_fasta(path: Path) -> list[str]:
    sequences: list[str] = []
    current: list[str] | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if current is not None:
                    sequences.append("".join(current))
                current = []
            else:
                if current is None:
                    raise CorpusError(f"{path}:{lineno}: sequence data before any FASTA header")
                current.append(line)
    if current is not None:
        sequences.append("".join(current))
    return sequences


def load_coding_regions(
    path: Path | str,
    format: str = "fasta",
    policy: str = "reject",
    organism: str | None = None,
) -> CodingRegionSet:
    """Load coding regions from FASTA or `organism<TAB>sequence` TSV.

    `policy="reject"` errors on any character outside {A,C,G,T};
    `policy="clean"` uppercases and drops the offending characters instead.
    """
    if policy not in ("reject", "clean"):
        raise ValueError(f"unknown policy {policy!r}")
    p = Path(path)
    if not p.is_file():
        raise CorpusError(f"genome file not found: {p}")

    if format == "fasta":
        raw = _read_fasta(p)
        name = organism if organism is not None else p.stem
    elif format == "tsv":
        raw = []
        name = organism
        with open(p, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if "\t" not in line:
                    raise CorpusError(f"{p}:{lineno}: expected `organism<TAB>sequence`")
                row_org, seq = line.split("\t", 1)
                if name is None:
                    name = row_org
                elif organism is None and row_org != name:
                    raise CorpusError(f"{p}:{lineno}: mixed organisms {name!r} and {row_org!r}")
                raw.append(seq)
        if name is None:
            raise CorpusError(f"{p}: empty genome TSV")
    else:
        raise ValueError(f"unknown genome format {format!r}")

    sequences: list[str] = []
    dropped = 0
    for idx, seq in enumerate(raw):
        if policy == "reject":
            _validate_dna(seq, f"{p} record {idx}")
        else:
            seq = "".join(ch for ch in seq.upper() if ch in DNA_ALPHABET)
        if seq:
            sequences.append(seq)
        else:
            dropped += 1
    if dropped:
        logger.info("%s: dropped %d empty sequences after cleaning", p, dropped)
    logger.info("%s: loaded %d coding regions for %s", p, len(sequences), name)
    return CodingRegionSet(name, sequences)
