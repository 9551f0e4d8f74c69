"""Synthetic corpus builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from weld.corpus import Vocabulary
from weld.embedding import EmbeddingConfig, EmbeddingModel


TEST_LANGS = ("deu", "eng", "fra")

# small-but-trainable settings shared by pipeline and CLI tests
FAST_EMBEDDING = dict(
    dim=8, window=3, epochs=2, negatives=3, subsample=1.0, min_count=1
)


def zipf_vocabulary(size: int, prefix: str = "w") -> list[str]:
    width = len(str(size - 1))
    return [f"{prefix}{i:0{width}d}" for i in range(size)]


def zipf_probs(size: int, exponent: float = 1.0) -> np.ndarray:
    weights = 1.0 / np.arange(1, size + 1) ** exponent
    return weights / weights.sum()


def random_verses(
    rng: np.random.Generator,
    words: list[str],
    n_verses: int,
    tokens_per_verse: int,
    exponent: float = 1.0,
) -> list[list[str]]:
    probs = zipf_probs(len(words), exponent)
    ids = rng.choice(len(words), size=(n_verses, tokens_per_verse), p=probs)
    return [[words[i] for i in row] for row in ids]


def monotone_rename(word: str, prefix_from: str = "w", prefix_to: str = "x") -> str:
    """Bijective rename that preserves lexicographic order (w012 -> x012)."""
    assert word.startswith(prefix_from)
    return prefix_to + word[len(prefix_from):]


def write_tsv_corpus(path, verses: dict[str, dict[str, list[str]]]) -> None:
    """verses: language -> verse_id -> tokens."""
    path.mkdir(parents=True, exist_ok=True)
    for lang, by_id in verses.items():
        with open(path / f"{lang}.tsv", "w", encoding="utf-8") as fh:
            for vid, tokens in by_id.items():
                fh.write(f"{vid}\t{' '.join(tokens)}\n")


def model_from_vectors(words: list[str], vectors: np.ndarray) -> EmbeddingModel:
    """Wrap raw word vectors in a model: input = 2*v, context = 0, so the
    averaged word vector equals v exactly."""
    vectors = np.asarray(vectors, dtype=np.float32)
    config = EmbeddingConfig(dim=vectors.shape[1], min_count=1)
    vocab = Vocabulary(list(words), [1] * len(words))
    return EmbeddingModel(vocab, 2.0 * vectors, np.zeros_like(vectors), config)


def random_dna(rng: np.random.Generator, length: int) -> str:
    return "".join(rng.choice(list("ACGT"), size=length))


def write_natural_corpus(root, n_verses=60, vocab=20, seed=3, langs=TEST_LANGS):
    """Verse-aligned TSVs: one shared token stream, renamed and reordered
    per language, so the languages differ but stay mutually alignable."""
    rng = np.random.default_rng(seed)
    words = zipf_vocabulary(vocab)
    verses = random_verses(rng, words, n_verses, 8)
    root.mkdir(parents=True, exist_ok=True)
    for li, lang in enumerate(langs):
        shuffler = np.random.default_rng(1000 + li)
        lines = []
        for vi, toks in enumerate(verses):
            toks = [f"{lang[0]}{t[1:]}" for t in toks]
            shuffler.shuffle(toks)
            lines.append(f"v{vi:03d}\t{' '.join(toks)}")
        (root / f"{lang}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_genome_corpus(root, organisms=("orgA", "orgB"), seed=5, identical=False):
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for org in organisms:
        r = rng if not identical else np.random.default_rng(seed)
        lines = []
        for i in range(25):
            seq = "".join(r.choice(list("ACGT"), size=90))
            lines.append(f">cr{i}\n{seq}")
        (root / f"{org}.fasta").write_text("\n".join(lines) + "\n", encoding="utf-8")
