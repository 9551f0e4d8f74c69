"""Language distance as divergence between similarity distributions.

For each language, the words linked to the shared pivot words are embedded,
every unordered pivot-pair's cosine similarity is shifted into [0, 1], and
the result is normalized into a distribution over pairs. The distance
between two languages is the Jensen-Shannon divergence (base 2, so in
[0, 1]) between their distributions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment import AlignmentTable
from .embedding import EmbeddingModel
from .errors import WeldError

logger = logging.getLogger(__name__)


class DivergenceError(WeldError):
    """Distribution construction or distance computation failed."""


@dataclass
class SimilarityDistribution:
    """Distribution over the K(K-1)/2 unordered pivot-word pairs.

    Pairs are laid out in row-major upper-triangle order: (0,1), (0,2), ...,
    (0,K-1), (1,2), ... so distributions built from the same table line up
    index by index.
    """

    num_pivots: int
    probs: np.ndarray

    def __post_init__(self) -> None:
        expected = self.num_pivots * (self.num_pivots - 1) // 2
        if self.probs.shape != (expected,):
            raise ValueError(
                f"expected {expected} pair probabilities for {self.num_pivots} pivots, "
                f"got shape {self.probs.shape}"
            )


def similarity_distribution(
    model: EmbeddingModel, table: AlignmentTable, language: str
) -> SimilarityDistribution:
    """Build the pairwise-similarity distribution for one language.

    Every pivot word's target must be in the model vocabulary; prune the
    table first (prune_table) if it may reference missing words.
    """
    if language not in table.languages:
        raise DivergenceError(f"language {language!r} not in alignment table")
    k = len(table.pivot_words)
    if k < 2:
        raise DivergenceError(f"need at least 2 pivot words, got {k}")
    targets = [table.target(p, language) for p in table.pivot_words]
    missing = sorted({t for t in targets if t not in model.vocab})
    if missing:
        raise DivergenceError(
            f"words missing from the {language!r} model: " + ", ".join(missing)
        )
    rows = np.empty((k, model.config.dim), dtype=np.float64)
    for i, word in enumerate(targets):
        rows[i] = model.word_vector(word)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DivergenceError(
            f"zero-norm vector for {targets[zero[0]]!r} in language {language!r}"
        )
    unit = rows / norms[:, None]
    gram = unit @ unit.T
    iu = np.triu_indices(k, 1)
    raw = np.maximum(0.0, (gram[iu] + 1.0) / 2.0)
    total = raw.sum()
    if total <= 0.0:
        raise DivergenceError(f"similarity mass is zero for language {language!r}")
    return SimilarityDistribution(k, raw / total)


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in bits; 0 <= jsd <= 1, and exactly 0 for
    elementwise-equal inputs."""
    a = np.asarray(p, dtype=np.float64)
    b = np.asarray(q, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"distributions must be 1-d and equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValueError("distributions must be non-empty")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("distributions must be nonnegative")
    for name, arr in (("p", a), ("q", b)):
        total = arr.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"{name} sums to {total!r}, not 1 within 1e-6")
    a = a / a.sum()
    b = b / b.sum()
    m = (a + b) / 2.0

    def entropy(dist: np.ndarray) -> float:
        nz = dist[dist > 0.0]
        return float(-(nz * np.log2(nz)).sum())

    value = entropy(m) - (entropy(a) + entropy(b)) / 2.0
    return min(1.0, max(0.0, value))


def weld_distance(a: SimilarityDistribution, b: SimilarityDistribution) -> float:
    if a.num_pivots != b.num_pivots:
        raise DivergenceError(
            f"distributions built on different pivot sets ({a.num_pivots} vs {b.num_pivots})"
        )
    return jsd(a.probs, b.probs)


def prune_table(
    table: AlignmentTable, models: dict[str, EmbeddingModel]
) -> tuple[AlignmentTable, dict[str, list[str]]]:
    """Drop pivot words whose target is missing from any language's model.

    Returns the pruned table and, per language, the pivot words it caused
    to be dropped.
    """
    missing: dict[str, list[str]] = {lang: [] for lang in table.languages}
    kept: list[str] = []
    for pivot in table.pivot_words:
        ok = True
        for lang in table.languages:
            if lang not in models:
                raise DivergenceError(f"no model for language {lang!r}")
            if table.target(pivot, lang) not in models[lang].vocab:
                missing[lang].append(pivot)
                ok = False
        if ok:
            kept.append(pivot)
    if not kept:
        raise DivergenceError("no pivot word is covered by every language model")
    if len(kept) < len(table.pivot_words):
        logger.info(
            "pruned alignment table from %d to %d pivot words",
            len(table.pivot_words),
            len(kept),
        )
    entries = {
        (pivot, lang): table.entries[(pivot, lang)]
        for pivot in kept
        for lang in table.languages
    }
    return AlignmentTable(kept, list(table.languages), entries), missing


@dataclass
class DistanceMatrix:
    labels: list[str]
    values: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.labels)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (n, n):
            raise ValueError(f"matrix shape {self.values.shape} does not match {n} labels")
        if len(set(self.labels)) != n:
            raise ValueError("labels must be unique")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix entries must be finite")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("matrix entries must lie in [0, 1]")
        if np.any(np.abs(self.values - self.values.T) > 1e-12):
            raise ValueError("matrix must be symmetric")
        if np.any(np.diag(self.values) != 0):
            raise ValueError("matrix diagonal must be zero")

    def value(self, label_a: str, label_b: str) -> float:
        i = self.labels.index(label_a)
        j = self.labels.index(label_b)
        return float(self.values[i, j])


def distance_matrix(
    models: dict[str, EmbeddingModel], table: AlignmentTable
) -> DistanceMatrix:
    """Pairwise divergences for every language in the table.

    The table is pruned to the pivot words covered by every model, so all
    distributions share one support.
    """
    languages = list(table.languages)
    if len(languages) < 2:
        raise DivergenceError(f"need at least 2 languages, got {len(languages)}")
    pruned, _ = prune_table(table, models)
    dists = {lang: similarity_distribution(models[lang], pruned, lang) for lang in languages}
    n = len(languages)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = weld_distance(dists[languages[i]], dists[languages[j]])
            values[i, j] = d
            values[j, i] = d
    return DistanceMatrix(languages, values)


# ---------------------------------------------------------------------------
# serialization


def save_matrix_json(matrix: DistanceMatrix, path: Path | str) -> None:
    payload = {"labels": matrix.labels, "values": matrix.values.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_matrix_json(path: Path | str) -> DistanceMatrix:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DivergenceError(f"{path}: not valid JSON: {exc}") from exc
    try:
        labels = list(payload["labels"])
        values = np.asarray(payload["values"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DivergenceError(f"{path}: expected labels and values fields") from exc
    try:
        return DistanceMatrix(labels, values)
    except ValueError as exc:
        raise DivergenceError(f"{path}: {exc}") from exc


def save_matrix_tsv(matrix: DistanceMatrix, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join([""] + matrix.labels) + "\n")
        for label, row in zip(matrix.labels, matrix.values):
            fh.write("\t".join([label] + [repr(float(v)) for v in row]) + "\n")


def save_distribution(dist: SimilarityDistribution, path: Path | str) -> None:
    np.save(path, dist.probs, allow_pickle=False)


def load_distribution(path: Path | str, num_pivots: int) -> SimilarityDistribution:
    probs = np.load(path, allow_pickle=False)
    return SimilarityDistribution(num_pivots, probs)
