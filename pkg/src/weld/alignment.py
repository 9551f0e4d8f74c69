"""Word alignment against a pivot language.

A lexical translation model (IBM Model 1, trained with EM on verse pairs)
links each pivot word to its most probable translation per language. The
per-language links are then intersected into a single table over the pivot
words that got a confident translation everywhere, which is what the
divergence stage consumes. Genomic runs use an identity table instead.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ParallelCorpus, Vocabulary, build_vocabulary
from .errors import WeldError

logger = logging.getLogger(__name__)

# Pivot-side fertility sink: target words may align to it, but it is never
# emitted as a pivot word (it cannot appear in tokenized text).
NULL_TOKEN = ""


class AlignmentError(WeldError):
    """Alignment training or table handling failed."""


@dataclass
class TranslationModel:
    """Lexical translation probabilities p(target word | pivot word)."""

    pivot_vocab: Vocabulary
    target_vocab: Vocabulary
    probs: dict[str, dict[str, float]]  # pivot (or NULL_TOKEN) -> target -> prob
    log_likelihoods: list[float] = field(default_factory=list)


def train_translation_model(
    corpus: ParallelCorpus, pivot: str, target: str, iterations: int = 10
) -> TranslationModel:
    """EM for IBM Model 1 over the corpus's (pivot, target) verse pairs.

    log_likelihoods[i] is the corpus log-likelihood under the parameters
    that iteration i started from (uniform for i = 0), so the list is
    non-decreasing.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if pivot == target:
        raise ValueError("pivot and target language must differ")
    pairs = list(corpus.verse_pairs(pivot, target))
    if not pairs:
        raise AlignmentError(f"no verse pairs between {pivot!r} and {target!r}")
    pivot_vocab = build_vocabulary([p for p, _ in pairs])
    target_vocab = build_vocabulary([t for _, t in pairs])

    uniform = 1.0 / len(target_vocab)
    probs: dict[str, dict[str, float]] | None = None
    log_likelihoods: list[float] = []

    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        totals: dict[str, float] = defaultdict(float)
        ll = 0.0
        for pivot_tokens, target_tokens in pairs:
            sources = [NULL_TOKEN] + pivot_tokens
            log_len = math.log(len(sources))
            for f in target_tokens:
                if probs is None:
                    scores = [uniform] * len(sources)
                else:
                    scores = [probs[e].get(f, 0.0) for e in sources]
                z = sum(scores)
                ll += math.log(z) - log_len
                for e, s in zip(sources, scores):
                    share = s / z
                    counts[e][f] += share
                    totals[e] += share
        log_likelihoods.append(ll)
        probs = {
            e: {f: c / totals[e] for f, c in fs.items()} for e, fs in counts.items()
        }

    assert probs is not None
    return TranslationModel(pivot_vocab, target_vocab, probs, log_likelihoods)


def extract_alignment(
    model: TranslationModel, threshold: float = 0.5
) -> dict[str, tuple[str, float]]:
    """Best translation per pivot word, kept only if its probability passes
    the threshold. Ties break toward the more frequent, then lexicographically
    smaller, target word.
    """
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    out: dict[str, tuple[str, float]] = {}
    for word in model.pivot_vocab.words:
        table = model.probs.get(word)
        if not table:
            continue
        target, prob = min(
            table.items(),
            key=lambda kv: (-kv[1], -model.target_vocab.count(kv[0]), kv[0]),
        )
        if prob >= threshold:
            out[word] = (target, prob)
    return out


# ---------------------------------------------------------------------------
# alignment tables


@dataclass
class AlignmentTable:
    """One confident translation per (pivot word, language).

    Complete by construction: every pivot word has an entry for every
    language. pivot_words keeps the frequency order used downstream.
    """

    pivot_words: list[str]
    languages: list[str]
    entries: dict[tuple[str, str], tuple[str, float]]

    def __post_init__(self) -> None:
        self.languages = sorted(self.languages)
        if len(set(self.pivot_words)) != len(self.pivot_words):
            raise AlignmentError("duplicate pivot words in table")
        for pivot in self.pivot_words:
            for lang in self.languages:
                key = (pivot, lang)
                if key not in self.entries:
                    raise AlignmentError(f"table is missing entry for {key!r}")
                score = self.entries[key][1]
                if not (math.isfinite(score) and score >= 0):
                    raise AlignmentError(f"bad score {score!r} for {key!r}")

    def target(self, pivot: str, language: str) -> str:
        return self.entries[(pivot, language)][0]


def intersect_tables(
    entries_by_language: dict[str, dict[str, tuple[str, float]]],
    pivot_vocab: Vocabulary,
) -> AlignmentTable:
    """Keep pivot words that received a translation in every language, in
    descending pivot-frequency order."""
    if not entries_by_language:
        raise AlignmentError("no per-language alignments to intersect")
    languages = sorted(entries_by_language)
    common: set[str] | None = None
    for lang in languages:
        keys = set(entries_by_language[lang])
        common = keys if common is None else common & keys
    assert common is not None
    pivot_words = [w for w in pivot_vocab.words if w in common]
    if not pivot_words:
        raise AlignmentError(
            "no pivot word is aligned in all languages: " + ", ".join(languages)
        )
    entries = {
        (pivot, lang): entries_by_language[lang][pivot]
        for pivot in pivot_words
        for lang in languages
    }
    dropped = len(pivot_vocab) - len(pivot_words)
    if dropped:
        logger.info("alignment intersection kept %d of %d pivot words", len(pivot_words), len(pivot_vocab))
    return AlignmentTable(pivot_words, languages, entries)


def identity_table(vocab: Vocabulary, languages: list[str]) -> AlignmentTable:
    """Table mapping every word to itself in every language (shared vocabulary)."""
    if not languages:
        raise AlignmentError("identity table needs at least one language")
    entries = {(w, lang): (w, 1.0) for w in vocab.words for lang in languages}
    return AlignmentTable(list(vocab.words), list(languages), entries)


def save_table(table: AlignmentTable, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pivot in table.pivot_words:
            for lang in table.languages:
                target, score = table.entries[(pivot, lang)]
                fh.write(f"{pivot}\t{lang}\t{target}\t{score!r}\n")


def load_table(path: Path | str) -> AlignmentTable:
    pivot_words: list[str] = []
    seen_pivots: set[str] = set()
    languages: set[str] = set()
    entries: dict[tuple[str, str], tuple[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise AlignmentError(
                    f"{path}:{lineno}: expected `pivot<TAB>lang<TAB>target<TAB>score`"
                )
            pivot, lang, target, score_text = parts
            try:
                score = float(score_text)
            except ValueError as exc:
                raise AlignmentError(f"{path}:{lineno}: bad score {score_text!r}") from exc
            if not math.isfinite(score):
                raise AlignmentError(f"{path}:{lineno}: non-finite score {score_text!r}")
            if (pivot, lang) in entries:
                raise AlignmentError(f"{path}:{lineno}: duplicate entry for {(pivot, lang)!r}")
            if pivot not in seen_pivots:
                seen_pivots.add(pivot)
                pivot_words.append(pivot)
            languages.add(lang)
            entries[(pivot, lang)] = (target, score)
    if not entries:
        raise AlignmentError(f"{path}: empty alignment table")
    return AlignmentTable(pivot_words, sorted(languages), entries)
