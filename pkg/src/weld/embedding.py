"""Skip-gram negative-sampling word embeddings.

The trainer follows the classic word2vec conventions: dynamic context
windows, frequency subsampling, unigram^0.75 noise distribution, linear
learning-rate decay, and (input + context) / 2 as the final word vector.

Determinism contract: with workers == 1 and a fixed seed, training is
bit-identical across runs. All randomness is drawn from one NumPy generator
in a fixed per-sentence order (one uniform per in-vocab token for
subsampling, one window size per kept token, then k negatives per pair);
the compiled kernel itself is purely deterministic. With workers > 1 the
sentence shards interleave nondeterministically (Hogwild), and only the
statistical properties of the result are guaranteed.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit

from .corpus import Vocabulary, build_vocabulary
from .errors import WeldError

logger = logging.getLogger(__name__)

_MAGIC = b"WELDEMB\x00"
_FORMAT_VERSION = 1


class EmbeddingError(WeldError):
    """Embedding training or model I/O failed."""


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 100
    window: int = 10
    subsample: float = 1e-3
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_count: int = 5
    seed: int = 1
    dynamic_window: bool = True

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not 0 < self.subsample <= 1:
            # t = 1 keeps every token, effectively disabling subsampling
            raise ValueError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.negatives < 1:
            raise ValueError(f"negatives must be >= 1, got {self.negatives}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.initial_lr > 0:
            raise ValueError(f"initial_lr must be > 0, got {self.initial_lr}")
        if self.min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {self.min_count}")


@dataclass
class EmbeddingModel:
    vocab: Vocabulary
    input_vectors: np.ndarray  # (|V|, dim) float32
    context_vectors: np.ndarray  # (|V|, dim) float32
    config: EmbeddingConfig

    def __post_init__(self) -> None:
        expected = (len(self.vocab), self.config.dim)
        if self.input_vectors.shape != expected or self.context_vectors.shape != expected:
            raise ValueError(
                f"matrix shapes {self.input_vectors.shape}/{self.context_vectors.shape} "
                f"do not match vocabulary and dim {expected}"
            )

    def word_vector(self, word: str) -> np.ndarray:
        """Average of the input and context rows, as float64."""
        i = self.vocab.index[word]
        return (
            self.input_vectors[i].astype(np.float64) + self.context_vectors[i].astype(np.float64)
        ) / 2.0


# ---------------------------------------------------------------------------
# closed-form pieces, exposed for direct verification


def subsample_discard_prob(frequency: float, threshold: float) -> float:
    """Probability of dropping a token whose word has relative frequency f."""
    if not 0 < frequency <= 1:
        raise ValueError(f"frequency must be in (0, 1], got {frequency}")
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    return max(0.0, 1.0 - math.sqrt(threshold / frequency))


def negative_sampling_distribution(vocab: Vocabulary) -> np.ndarray:
    """Noise distribution proportional to count^0.75."""
    weights = np.asarray(vocab.counts, dtype=np.float64) ** 0.75
    return weights / weights.sum()


def _stable_sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softplus(x: float) -> float:
    # log(1 + exp(x)) without overflow
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def pair_loss(center: np.ndarray, context: np.ndarray, label: int) -> float:
    """-log sigma(u.v) for a positive pair, -log sigma(-u.v) for a negative."""
    x = float(np.dot(np.asarray(center, dtype=np.float64), np.asarray(context, dtype=np.float64)))
    return _softplus(-x) if label else _softplus(x)


def pair_gradient(
    center: np.ndarray, context: np.ndarray, label: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of pair_loss with respect to the center and context vectors."""
    u = np.asarray(center, dtype=np.float64)
    v = np.asarray(context, dtype=np.float64)
    g = _stable_sigmoid(float(np.dot(u, v))) - (1.0 if label else 0.0)
    return g * v, g * u


def train_pair_gradient(
    model: EmbeddingModel, center_id: int, context_id: int, label: int
) -> tuple[np.ndarray, np.ndarray]:
    """pair_gradient evaluated on a model's rows (input row vs context row)."""
    return pair_gradient(
        model.input_vectors[center_id].astype(np.float64),
        model.context_vectors[context_id].astype(np.float64),
        label,
    )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


# ---------------------------------------------------------------------------
# training kernel


@njit(cache=True, nogil=True)
def _sgns_sentence(inp, ctx, words, spans, negatives, k, alpha):
    """Run all skip-gram updates for one subsampled sentence.

    words: kept word ids; spans[i] = (lo, hi) context range for position i;
    negatives: k draws per (center, context) pair, consumed in order.
    Returns (loss, pair_count). Updates are applied in word2vec order: the
    context/negative rows immediately, the accumulated center gradient after
    each pair's negatives.
    """
    dim = inp.shape[1]
    loss = 0.0
    pair = 0
    grad = np.zeros(dim, dtype=np.float64)
    for i in range(words.shape[0]):
        center = words[i]
        for j in range(spans[i, 0], spans[i, 1]):
            if j == i:
                continue
            target = words[j]
            for d in range(dim):
                grad[d] = 0.0
            # positive sample
            x = 0.0
            for d in range(dim):
                x += inp[center, d] * ctx[target, d]
            if x >= 0:
                sig = 1.0 / (1.0 + math.exp(-x))
                loss += math.log1p(math.exp(-x))
            else:
                e = math.exp(x)
                sig = e / (1.0 + e)
                loss += -x + math.log1p(e)
            g = sig - 1.0
            for d in range(dim):
                grad[d] += g * ctx[target, d]
                ctx[target, d] -= np.float32(alpha * g * inp[center, d])
            # negative samples; a draw equal to the positive word is skipped
            for s in range(k):
                neg = negatives[pair * k + s]
                if neg == target:
                    continue
                x = 0.0
                for d in range(dim):
                    x += inp[center, d] * ctx[neg, d]
                if x >= 0:
                    sig = 1.0 / (1.0 + math.exp(-x))
                    loss += x + math.log1p(math.exp(-x))
                else:
                    e = math.exp(x)
                    sig = e / (1.0 + e)
                    loss += math.log1p(e)
                for d in range(dim):
                    grad[d] += sig * ctx[neg, d]
                    ctx[neg, d] -= np.float32(alpha * sig * inp[center, d])
            for d in range(dim):
                inp[center, d] -= np.float32(alpha * grad[d])
            pair += 1
    return loss, pair


class _Trainer:
    """Per-run state shared by the worker threads."""

    def __init__(
        self,
        sentences: list[np.ndarray],
        vocab: Vocabulary,
        config: EmbeddingConfig,
        inp: np.ndarray,
        ctx: np.ndarray,
    ):
        self.sentences = sentences
        self.config = config
        self.inp = inp
        self.ctx = ctx
        total = vocab.total_count
        freqs = np.asarray(vocab.counts, dtype=np.float64) / total
        self.keep_probs = np.minimum(1.0, np.sqrt(config.subsample / freqs))
        cum = np.cumsum(negative_sampling_distribution(vocab))
        self.noise_cum = cum / cum[-1]
        self.total_updates = max(1, config.epochs * total)
        self.min_alpha = 1e-4 * config.initial_lr
        self.processed = 0
        self.lock = threading.Lock()

    def alpha(self) -> float:
        frac = self.processed / self.total_updates
        return max(self.min_alpha, self.config.initial_lr * (1.0 - frac))

    def run_shard(self, shard: Sequence[np.ndarray], rng: np.random.Generator) -> float:
        cfg = self.config
        k = cfg.negatives
        loss = 0.0
        for ids in shard:
            n_in_vocab = ids.shape[0]
            alpha = self.alpha()
            uniforms = rng.random(n_in_vocab)
            kept = ids[uniforms < self.keep_probs[ids]]
            n = kept.shape[0]
            if cfg.dynamic_window:
                windows = rng.integers(1, cfg.window + 1, size=n)
            else:
                windows = np.full(n, cfg.window, dtype=np.int64)
            pos = np.arange(n)
            lo = np.maximum(0, pos - windows)
            hi = np.minimum(n, pos + windows + 1)
            n_pairs = int(np.sum(hi - lo)) - n
            if n_pairs > 0:
                draws = rng.random(n_pairs * k)
                negatives = np.searchsorted(self.noise_cum, draws, side="right").astype(np.int32)
                spans = np.stack([lo, hi], axis=1).astype(np.int32)
                part, _ = _sgns_sentence(
                    self.inp, self.ctx, kept.astype(np.int32), spans, negatives, k, alpha
                )
                loss += part
            with self.lock:
                self.processed += n_in_vocab
        return loss


def train_embedding(
    sentences: Iterable[Sequence[str]],
    config: EmbeddingConfig | None = None,
    vocab: Vocabulary | None = None,
    workers: int = 1,
    on_epoch: Callable[[int, float, EmbeddingModel], None] | None = None,
) -> EmbeddingModel:
    """Train a skip-gram model over tokenized sentences.

    The sentence stream is materialized and re-used each epoch. If `vocab`
    is not given it is built from the stream with config.min_count.
    """
    if config is None:
        config = EmbeddingConfig()
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    materialized = [list(s) for s in sentences]
    if vocab is None:
        vocab = build_vocabulary(materialized, min_count=config.min_count)
    if len(vocab) < 2:
        raise EmbeddingError(
            f"need at least 2 vocabulary words to train, got {len(vocab)}"
        )

    index = vocab.index
    encoded = []
    for sent in materialized:
        ids = np.asarray([index[w] for w in sent if w in index], dtype=np.int32)
        if ids.shape[0] > 0:
            encoded.append(ids)
    if not encoded:
        raise EmbeddingError("no sentence contains any in-vocabulary word")

    rng = np.random.default_rng(config.seed)
    size = len(vocab)
    bound = 0.5 / config.dim
    inp = rng.uniform(-bound, bound, size=(size, config.dim)).astype(np.float32)
    ctx = np.zeros((size, config.dim), dtype=np.float32)

    trainer = _Trainer(encoded, vocab, config, inp, ctx)
    model = EmbeddingModel(vocab, inp, ctx, config)

    for epoch in range(config.epochs):
        if workers == 1:
            epoch_loss = trainer.run_shard(encoded, rng)
        else:
            shards = [encoded[w::workers] for w in range(workers)]
            rngs = rng.spawn(workers)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(trainer.run_shard, shard, r)
                    for shard, r in zip(shards, rngs)
                ]
                epoch_loss = sum(f.result() for f in futures)
        if not math.isfinite(epoch_loss):
            raise EmbeddingError(f"non-finite training loss in epoch {epoch + 1}")
        logger.debug("epoch %d/%d loss %.4f", epoch + 1, config.epochs, epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss, model)
    return model


# ---------------------------------------------------------------------------
# model I/O


def save_model(model: EmbeddingModel, path: Path | str) -> None:
    """Write the model in a little-endian binary container."""
    vocab = model.vocab
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQI", _FORMAT_VERSION, len(vocab), model.config.dim))
        for word, count in zip(vocab.words, vocab.counts):
            data = word.encode("utf-8")
            fh.write(struct.pack("<I", len(data)))
            fh.write(data)
            fh.write(struct.pack("<Q", count))
        fh.write(np.ascontiguousarray(model.input_vectors, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.context_vectors, dtype="<f4").tobytes())
        blob = json.dumps(asdict(model.config), sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def _read_exact(fh, n: int, path: Path | str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise EmbeddingError(f"{path}: truncated model file")
    return data


def load_model(path: Path | str) -> EmbeddingModel:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(_MAGIC), path) != _MAGIC:
            raise EmbeddingError(f"{path}: not a model file (bad magic)")
        version, size, dim = struct.unpack("<IQI", _read_exact(fh, 16, path))
        if version != _FORMAT_VERSION:
            raise EmbeddingError(f"{path}: unsupported model format version {version}")
        words: list[str] = []
        counts: list[int] = []
        for _ in range(size):
            (wlen,) = struct.unpack("<I", _read_exact(fh, 4, path))
            words.append(_read_exact(fh, wlen, path).decode("utf-8"))
            (count,) = struct.unpack("<Q", _read_exact(fh, 8, path))
            counts.append(count)
        n_bytes = size * dim * 4
        inp = np.frombuffer(_read_exact(fh, n_bytes, path), dtype="<f4").reshape(size, dim)
        ctx = np.frombuffer(_read_exact(fh, n_bytes, path), dtype="<f4").reshape(size, dim)
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
        try:
            fields = json.loads(_read_exact(fh, blob_len, path).decode("utf-8"))
            config = EmbeddingConfig(**fields)
        except (ValueError, TypeError) as exc:
            raise EmbeddingError(f"{path}: bad config block: {exc}") from exc
        if fh.read(1):
            raise EmbeddingError(f"{path}: trailing bytes after model data")
    return EmbeddingModel(
        Vocabulary(words, counts),
        np.array(inp, dtype=np.float32),
        np.array(ctx, dtype=np.float32),
        config,
    )


def export_text(model: EmbeddingModel, path: Path | str) -> None:
    """Write averaged word vectors in the plain `word v1 .. vd` text format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(model.vocab)} {model.config.dim}\n")
        for word in model.vocab.words:
            vec = model.word_vector(word)
            fh.write(word + " " + " ".join(f"{x:.8g}" for x in vec) + "\n")
