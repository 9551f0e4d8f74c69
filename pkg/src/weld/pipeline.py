"""End-to-end runs: ingest, train, align, diverge, cluster.

A run is driven by one declarative TOML config. Artifacts land in the output
directory and are cached by content: each artifact's cache key hashes the
input files plus the config subsection that produced it, so reruns with
unchanged inputs do no retraining. A manifest records every artifact path,
its sha256, whether it came from cache, and per-stage timings.

Determinism: the run seed is the single embedding seed for every language
and organism. Per-language/per-organism tasks may run on several threads
(`threads`), but each training is internally single-worker, so results are
byte-identical for a fixed config and seed regardless of thread count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence, TypeVar

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import _version
from .alignment import (
    AlignmentTable,
    extract_alignment,
    identity_table,
    intersect_tables,
    load_table,
    save_table,
    train_translation_model,
)
from .clustering import render_dendrogram, to_newick, upgma
from .corpus import (
    NGRAM_SIZES,
    CorpusError,
    Vocabulary,
    build_vocabulary,
    genome_ngram_sentences,
    load_coding_regions,
    load_verse_aligned,
    save_vocabulary,
)
from .divergence import (
    DistanceMatrix,
    distance_matrix,
    load_matrix_json,
    save_matrix_json,
    save_matrix_tsv,
)
from .embedding import EmbeddingConfig, EmbeddingModel, load_model, save_model, train_embedding
from .errors import WeldError

logger = logging.getLogger(__name__)

T = TypeVar("T")
U = TypeVar("U")

_CORPUS_SUFFIX = {"tsv": ".tsv", "bible-xml": ".xml", "fasta": ".fasta"}
_WORKFLOW_DEFAULT_FORMAT = {"natural": "tsv", "genome": "fasta"}


class ConfigError(WeldError):
    """The run configuration is malformed."""


class ManifestError(WeldError):
    """A manifest does not match the artifacts on disk."""


class StageError(WeldError):
    """A pipeline stage failed; carries the stage name and its input digest."""

    def __init__(self, stage: str, digest: str, message: str):
        super().__init__(f"[{stage}] {message} (input digest {digest[:12]})")
        self.stage = stage
        self.digest = digest


# ---------------------------------------------------------------------------
# configuration


def default_embedding_config(workflow: str, seed: int = 1) -> EmbeddingConfig:
    """Workflow defaults: genomes use the wide window and keep all n-grams."""
    if workflow == "genome":
        return EmbeddingConfig(window=40, min_count=1, seed=seed)
    return EmbeddingConfig(seed=seed)


@dataclass(frozen=True)
class RunConfig:
    workflow: str
    corpus: Path
    out: Path
    format: str = ""
    seed: int = 1
    threads: int = 1
    pivot: str | None = None
    punctuation: str = "delete"
    alignment_threshold: float = 0.5
    alignment_iterations: int = 10
    ngrams: tuple[int, ...] = NGRAM_SIZES
    policy: str = "reject"
    embedding: EmbeddingConfig | None = None

    def __post_init__(self) -> None:
        if self.workflow not in ("natural", "genome"):
            raise ConfigError(f"unknown workflow {self.workflow!r}")
        object.__setattr__(self, "corpus", Path(self.corpus))
        object.__setattr__(self, "out", Path(self.out))
        fmt = self.format or _WORKFLOW_DEFAULT_FORMAT[self.workflow]
        if fmt not in _CORPUS_SUFFIX:
            raise ConfigError(f"unknown corpus format {fmt!r}")
        object.__setattr__(self, "format", fmt)
        if self.workflow == "natural" and fmt == "fasta":
            raise ConfigError("fasta input is for the genome workflow")
        if self.workflow == "natural" and not self.pivot:
            raise ConfigError("natural workflow requires a pivot language")
        if self.punctuation not in ("delete", "split"):
            raise ConfigError(f"unknown punctuation mode {self.punctuation!r}")
        if self.policy not in ("reject", "clean"):
            raise ConfigError(f"unknown sequence policy {self.policy!r}")
        if not 0 <= self.alignment_threshold <= 1:
            raise ConfigError(f"alignment_threshold must be in [0, 1], got {self.alignment_threshold}")
        if self.alignment_iterations < 1:
            raise ConfigError(f"alignment_iterations must be >= 1, got {self.alignment_iterations}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        ngrams = tuple(sorted(set(self.ngrams)))
        if not ngrams or any(n not in NGRAM_SIZES for n in ngrams):
            raise ConfigError(f"ngrams must be a nonempty subset of {NGRAM_SIZES}, got {self.ngrams}")
        object.__setattr__(self, "ngrams", ngrams)
        emb = self.embedding or default_embedding_config(self.workflow, self.seed)
        if emb.seed != self.seed:
            # one seed governs the whole run
            emb = replace(emb, seed=self.seed)
        object.__setattr__(self, "embedding", emb)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["corpus"] = str(self.corpus)
        d["out"] = str(self.out)
        d["ngrams"] = list(self.ngrams)
        return d


_TOP_KEYS = {
    "workflow", "corpus", "out", "format", "seed", "threads", "pivot",
    "punctuation", "alignment_threshold", "alignment_iterations",
    "ngrams", "policy", "embedding",
}
_EMBEDDING_KEYS = {
    "dim", "window", "subsample", "negatives", "epochs",
    "initial_lr", "min_count", "dynamic_window",
}


def load_run_config(path: Path | str) -> RunConfig:
    """Parse a TOML run config; relative paths resolve against the file."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    if "workflow" not in raw or "corpus" not in raw:
        raise ConfigError(f"{path}: config must set workflow and corpus")
    workflow = raw["workflow"]
    if workflow not in ("natural", "genome"):
        raise ConfigError(f"{path}: unknown workflow {workflow!r}")
    seed = raw.get("seed", 1)

    emb_raw = raw.get("embedding", {})
    if not isinstance(emb_raw, dict):
        raise ConfigError(f"{path}: embedding must be a table")
    unknown = set(emb_raw) - _EMBEDDING_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown embedding keys: {', '.join(sorted(unknown))}")
    defaults = default_embedding_config(workflow, seed)
    try:
        embedding = replace(defaults, **emb_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad embedding config: {exc}") from exc

    base = path.parent
    try:
        return RunConfig(
            workflow=workflow,
            corpus=base / raw["corpus"],
            out=base / raw.get("out", "out"),
            format=raw.get("format", ""),
            seed=seed,
            threads=raw.get("threads", 1),
            pivot=raw.get("pivot"),
            punctuation=raw.get("punctuation", "delete"),
            alignment_threshold=raw.get("alignment_threshold", 0.5),
            alignment_iterations=raw.get("alignment_iterations", 10),
            ngrams=tuple(raw.get("ngrams", NGRAM_SIZES)),
            policy=raw.get("policy", "reject"),
            embedding=embedding,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad config value: {exc}") from exc


# ---------------------------------------------------------------------------
# hashing, caching, manifest


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def digest_json(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def corpus_digest(files: Sequence[Path]) -> str:
    return digest_json([[f.name, sha256_file(f)] for f in sorted(files)])


class ArtifactCache:
    """Index of artifact files already produced for a given cache key."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.path = out_dir / "cache.json"
        self.entries: dict[str, dict[str, str]] = {}
        if self.path.is_file():
            try:
                self.entries = json.loads(self.path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                logger.warning("ignoring unreadable cache index %s", self.path)

    def fresh(self, rel: str, key: str) -> bool:
        entry = self.entries.get(rel)
        if entry is None or entry.get("key") != key:
            return False
        target = self.out_dir / rel
        return target.is_file() and sha256_file(target) == entry.get("sha256")

    def record(self, rel: str, key: str) -> str:
        sha = sha256_file(self.out_dir / rel)
        self.entries[rel] = {"key": key, "sha256": sha}
        return sha

    def save(self) -> None:
        self.path.write_text(json.dumps(self.entries, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class Artifact:
    path: str  # relative to the manifest's directory
    sha256: str
    cached: bool


@dataclass
class RunManifest:
    workflow: str
    tool_version: str
    config_hash: str
    artifacts: dict[str, Artifact] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, path: str, sha256: str, cached: bool) -> None:
        self.artifacts[name] = Artifact(path, sha256, cached)

    def save(self, path: Path | str) -> None:
        payload = {
            "workflow": self.workflow,
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
            "artifacts": {name: asdict(a) for name, a in sorted(self.artifacts.items())},
            "timings": self.timings,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def load_manifest(path: Path | str) -> RunManifest:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: not valid JSON: {exc}") from exc
    try:
        artifacts = {
            name: Artifact(a["path"], a["sha256"], bool(a["cached"]))
            for name, a in payload["artifacts"].items()
        }
        return RunManifest(
            payload["workflow"],
            payload["tool_version"],
            payload["config_hash"],
            artifacts,
            dict(payload["timings"]),
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"{path}: missing manifest field: {exc}") from exc


def verify_manifest(path: Path | str) -> RunManifest:
    """Check that every artifact exists and matches its recorded hash."""
    path = Path(path)
    manifest = load_manifest(path)
    for name, artifact in manifest.artifacts.items():
        target = path.parent / artifact.path
        if not target.is_file():
            raise ManifestError(f"artifact {name} missing: {target}")
        actual = sha256_file(target)
        if actual != artifact.sha256:
            raise ManifestError(
                f"artifact {name} hash mismatch: recorded {artifact.sha256[:12]}, "
                f"found {actual[:12]}"
            )
    return manifest


# ---------------------------------------------------------------------------
# run orchestration


@contextmanager
def _stage(name: str, digest: str, timings: dict[str, float]) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (WeldError, OSError, ValueError, KeyError) as exc:
        raise StageError(name, digest, str(exc)) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start
        logger.info("stage %s finished in %.2fs", name, timings[name])


def _parallel(fn: Callable[[T], U], items: Sequence[T], threads: int) -> list[U]:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _corpus_files(config: RunConfig) -> list[Path]:
    root = config.corpus
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")
    files = sorted(root.glob(f"*{_CORPUS_SUFFIX[config.format]}"))
    if not files:
        raise CorpusError(f"no {_CORPUS_SUFFIX[config.format]} files in {root}")
    return files


def _prepare_out(config: RunConfig) -> None:
    for sub in ("", "models", "vocab"):
        (config.out / sub).mkdir(parents=True, exist_ok=True)


def run(config: RunConfig) -> RunManifest:
    if config.workflow == "natural":
        return run_natural(config)
    return run_genome(config)


def run_natural(config: RunConfig) -> RunManifest:
    if config.workflow != "natural":
        raise ConfigError(f"run_natural called with workflow {config.workflow!r}")
    assert config.embedding is not None
    _prepare_out(config)
    cache = ArtifactCache(config.out)
    manifest = RunManifest("natural", _version.__version__, digest_json(config.as_dict()))
    timings = manifest.timings
    emb_dict = asdict(config.embedding)
    ingest_params = {"format": config.format, "punctuation": config.punctuation}

    files = _corpus_files(config)
    digest = corpus_digest(files)

    with _stage("ingest", digest, timings):
        corpus = load_verse_aligned(config.corpus, config.format, config.punctuation)
        if len(corpus.languages) < 2:
            raise CorpusError(f"need at least 2 languages, got {len(corpus.languages)}")
        if config.pivot not in corpus.languages:
            raise CorpusError(
                f"pivot {config.pivot!r} not among languages {corpus.languages}"
            )

    models: dict[str, EmbeddingModel] = {}
    with _stage("train", digest, timings):

        def train_one(lang: str) -> tuple[str, EmbeddingModel, bool]:
            rel_model = f"models/{lang}.bin"
            rel_vocab = f"vocab/{lang}.tsv"
            key = digest_json(
                {
                    "stage": "train",
                    "corpus": digest,
                    "ingest": ingest_params,
                    "language": lang,
                    "embedding": emb_dict,
                }
            )
            if cache.fresh(rel_model, key) and cache.fresh(rel_vocab, key):
                return lang, load_model(config.out / rel_model), True
            model = train_embedding(corpus.sentences(lang), config.embedding)
            save_model(model, config.out / rel_model)
            save_vocabulary(model.vocab, config.out / rel_vocab)
            cache.record(rel_model, key)
            cache.record(rel_vocab, key)
            return lang, model, False

        for lang, model, was_cached in _parallel(train_one, corpus.languages, config.threads):
            models[lang] = model
            entry = cache.entries[f"models/{lang}.bin"]
            manifest.add(f"model:{lang}", f"models/{lang}.bin", entry["sha256"], was_cached)
            ventry = cache.entries[f"vocab/{lang}.tsv"]
            manifest.add(f"vocab:{lang}", f"vocab/{lang}.tsv", ventry["sha256"], was_cached)

    with _stage("align", digest, timings):
        rel_table = "alignment.tsv"
        align_key = digest_json(
            {
                "stage": "align",
                "corpus": digest,
                "ingest": ingest_params,
                "pivot": config.pivot,
                "threshold": config.alignment_threshold,
                "iterations": config.alignment_iterations,
            }
        )
        if cache.fresh(rel_table, align_key):
            table = load_table(config.out / rel_table)
            table_cached = True
        else:
            pivot = config.pivot
            assert pivot is not None
            others = [lang for lang in corpus.languages if lang != pivot]

            def align_one(lang: str) -> tuple[str, dict[str, tuple[str, float]]]:
                model = train_translation_model(
                    corpus, pivot, lang, config.alignment_iterations
                )
                return lang, extract_alignment(model, config.alignment_threshold)

            entries = dict(_parallel(align_one, others, config.threads))
            pivot_vocab = build_vocabulary(corpus.sentences(pivot))
            entries[pivot] = {w: (w, 1.0) for w in pivot_vocab.words}
            table = intersect_tables(entries, pivot_vocab)
            save_table(table, config.out / rel_table)
            cache.record(rel_table, align_key)
            table_cached = False
        manifest.add("table", rel_table, cache.entries[rel_table]["sha256"], table_cached)

    with _stage("diverge", digest, timings):
        matrix_key = digest_json(
            {
                "stage": "diverge",
                "models": sorted(
                    (lang, manifest.artifacts[f"model:{lang}"].sha256) for lang in models
                ),
                "table": manifest.artifacts["table"].sha256,
            }
        )
        rel_json, rel_tsv = "matrix.json", "matrix.tsv"
        if cache.fresh(rel_json, matrix_key) and cache.fresh(rel_tsv, matrix_key):
            matrix = load_matrix_json(config.out / rel_json)
            matrix_cached = True
        else:
            matrix = distance_matrix(models, table)
            save_matrix_json(matrix, config.out / rel_json)
            save_matrix_tsv(matrix, config.out / rel_tsv)
            cache.record(rel_json, matrix_key)
            cache.record(rel_tsv, matrix_key)
            matrix_cached = False
        manifest.add("matrix:json", rel_json, cache.entries[rel_json]["sha256"], matrix_cached)
        manifest.add("matrix:tsv", rel_tsv, cache.entries[rel_tsv]["sha256"], matrix_cached)

    with _stage("cluster", digest, timings):
        tree_key = digest_json(
            {"stage": "cluster", "matrix": manifest.artifacts["matrix:json"].sha256}
        )
        rel_nwk, rel_svg = "tree.nwk", "tree.svg"
        if cache.fresh(rel_nwk, tree_key) and cache.fresh(rel_svg, tree_key):
            tree_cached = True
        else:
            dendrogram = upgma(matrix)
            (config.out / rel_nwk).write_text(to_newick(dendrogram) + "\n", encoding="utf-8")
            (config.out / rel_svg).write_text(
                render_dendrogram(dendrogram, "svg"), encoding="utf-8"
            )
            cache.record(rel_nwk, tree_key)
            cache.record(rel_svg, tree_key)
            tree_cached = False
        manifest.add("tree:newick", rel_nwk, cache.entries[rel_nwk]["sha256"], tree_cached)
        manifest.add("tree:svg", rel_svg, cache.entries[rel_svg]["sha256"], tree_cached)

    cache.save()
    manifest.save(config.out / "manifest.json")
    return manifest


def _ngram_counts(sequences: Sequence[str], n: int) -> Counter:
    counter: Counter[str] = Counter()
    for seq in sequences:
        for sentence in genome_ngram_sentences(seq, n):
            counter.update(sentence)
    return counter


def _restricted_vocab(counter: Counter, shared: set[str]) -> Vocabulary:
    items = sorted(((w, counter[w]) for w in shared), key=lambda wc: (-wc[1], wc[0]))
    return Vocabulary([w for w, _ in items], [c for _, c in items])


def run_genome(config: RunConfig) -> RunManifest:
    if config.workflow != "genome":
        raise ConfigError(f"run_genome called with workflow {config.workflow!r}")
    assert config.embedding is not None
    _prepare_out(config)
    cache = ArtifactCache(config.out)
    manifest = RunManifest("genome", _version.__version__, digest_json(config.as_dict()))
    timings = manifest.timings
    emb_dict = asdict(config.embedding)

    files = _corpus_files(config)
    digest = corpus_digest(files)

    with _stage("ingest", digest, timings):
        organisms: dict[str, list[str]] = {}
        for f in files:
            fmt = "fasta" if config.format == "fasta" else "tsv"
            regions = load_coding_regions(f, fmt, config.policy, organism=f.stem)
            if len(regions) == 0:
                raise CorpusError(f"organism {f.stem!r} has zero sequences")
            organisms[f.stem] = regions.sequences
        if len(organisms) < 2:
            raise CorpusError(f"need at least 2 organisms, got {len(organisms)}")
    names = sorted(organisms)

    for n in config.ngrams:
        stage_name = f"train[n={n}]"
        with _stage(stage_name, digest, timings):
            counts = {org: _ngram_counts(organisms[org], n) for org in names}
            min_count = config.embedding.min_count
            shared: set[str] | None = None
            for org in names:
                eligible = {w for w, c in counts[org].items() if c >= min_count}
                shared = eligible if shared is None else shared & eligible
            assert shared is not None
            if len(shared) < 2:
                raise CorpusError(
                    f"shared {n}-gram vocabulary has {len(shared)} entries; "
                    "need at least 2 across all organisms"
                )
            summed: Counter[str] = Counter()
            for org in names:
                summed.update({w: counts[org][w] for w in shared})
            shared_vocab = _restricted_vocab(summed, shared)

            models: dict[str, EmbeddingModel] = {}

            def train_one(org: str) -> tuple[str, EmbeddingModel, bool]:
                rel_model = f"models/{org}.n{n}.bin"
                rel_vocab = f"vocab/{org}.n{n}.tsv"
                key = digest_json(
                    {
                        "stage": "train",
                        "corpus": digest,
                        "organism": org,
                        "n": n,
                        "policy": config.policy,
                        "embedding": emb_dict,
                    }
                )
                if cache.fresh(rel_model, key) and cache.fresh(rel_vocab, key):
                    return org, load_model(config.out / rel_model), True
                vocab = _restricted_vocab(counts[org], shared)
                sentences = [
                    sent
                    for seq in organisms[org]
                    for sent in genome_ngram_sentences(seq, n)
                ]
                model = train_embedding(sentences, config.embedding, vocab=vocab)
                save_model(model, config.out / rel_model)
                save_vocabulary(model.vocab, config.out / rel_vocab)
                cache.record(rel_model, key)
                cache.record(rel_vocab, key)
                return org, model, False

            for org, model, was_cached in _parallel(train_one, names, config.threads):
                models[org] = model
                entry = cache.entries[f"models/{org}.n{n}.bin"]
                manifest.add(f"model:{org}:n{n}", f"models/{org}.n{n}.bin", entry["sha256"], was_cached)
                ventry = cache.entries[f"vocab/{org}.n{n}.tsv"]
                manifest.add(f"vocab:{org}:n{n}", f"vocab/{org}.n{n}.tsv", ventry["sha256"], was_cached)

            rel_table = f"identity.n{n}.tsv"
            table_key = digest_json(
                {
                    "stage": "align",
                    "corpus": digest,
                    "n": n,
                    "policy": config.policy,
                    "min_count": min_count,
                }
            )
            if cache.fresh(rel_table, table_key):
                table = load_table(config.out / rel_table)
                table_cached = True
            else:
                table = identity_table(shared_vocab, names)
                save_table(table, config.out / rel_table)
                cache.record(rel_table, table_key)
                table_cached = False
            manifest.add(
                f"table:n{n}", rel_table, cache.entries[rel_table]["sha256"], table_cached
            )

        with _stage(f"diverge[n={n}]", digest, timings):
            matrix_key = digest_json(
                {
                    "stage": "diverge",
                    "models": sorted(
                        (org, manifest.artifacts[f"model:{org}:n{n}"].sha256) for org in names
                    ),
                    "table": manifest.artifacts[f"table:n{n}"].sha256,
                }
            )
            rel_json, rel_tsv = f"matrix.n{n}.json", f"matrix.n{n}.tsv"
            rel_heat = f"heatmap.n{n}.json"
            if all(cache.fresh(r, matrix_key) for r in (rel_json, rel_tsv, rel_heat)):
                matrix_cached = True
            else:
                matrix = distance_matrix(models, table)
                save_matrix_json(matrix, config.out / rel_json)
                save_matrix_tsv(matrix, config.out / rel_tsv)
                heat = {"labels": matrix.labels, "n": n, "values": matrix.values.tolist()}
                with open(config.out / rel_heat, "w", encoding="utf-8") as fh:
                    json.dump(heat, fh, indent=2)
                    fh.write("\n")
                for r in (rel_json, rel_tsv, rel_heat):
                    cache.record(r, matrix_key)
                matrix_cached = False
            manifest.add(f"matrix:n{n}:json", rel_json, cache.entries[rel_json]["sha256"], matrix_cached)
            manifest.add(f"matrix:n{n}:tsv", rel_tsv, cache.entries[rel_tsv]["sha256"], matrix_cached)
            manifest.add(f"heatmap:n{n}", rel_heat, cache.entries[rel_heat]["sha256"], matrix_cached)

    cache.save()
    manifest.save(config.out / "manifest.json")
    return manifest
