"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, train, align, diverge,
cluster) so each can be run by hand against files, plus `run` which executes
a whole configured workflow with caching. Exit codes: 0 on success, 1 on a
stage failure (message names the stage), 2 on usage or config errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from ._version import __version__
from .alignment import (
    extract_alignment,
    intersect_tables,
    load_table,
    save_table,
    train_translation_model,
)
from .clustering import load_annotations, render_dendrogram, to_newick, upgma
from .corpus import (
    NGRAM_SIZES,
    build_vocabulary,
    genome_ngram_sentences,
    load_coding_regions,
    load_verse_aligned,
    save_vocabulary,
)
from .divergence import (
    DivergenceError,
    distance_matrix,
    load_matrix_json,
    prune_table,
    save_matrix_json,
    save_matrix_tsv,
)
from .embedding import load_model, save_model, train_embedding
from .errors import WeldError
from .pipeline import (
    ConfigError,
    _ngram_counts,
    _parallel,
    _restricted_vocab,
    default_embedding_config,
    load_run_config,
    run,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="random seed (default 1)")
    parser.add_argument("--threads", type=int, default=None, help="parallel tasks (default 1)")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--verbose", action="store_true", help="log stage progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weld",
        description="Language distance from word embeddings, for text and genomes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a corpus and report/write vocabularies")
    p.add_argument("--workflow", choices=("natural", "genome"), required=True)
    p.add_argument("--corpus", type=Path, required=True, help="corpus directory")
    p.add_argument("--format", default=None, help="tsv | bible-xml (natural), fasta | tsv (genome)")
    p.add_argument("--punctuation", choices=("delete", "split"), default="delete")
    p.add_argument("--policy", choices=("reject", "clean"), default="reject")
    p.add_argument("--ngrams", type=int, nargs="+", default=list(NGRAM_SIZES))
    p.add_argument("--min-count", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("train", help="train embedding models")
    p.add_argument("--workflow", choices=("natural", "genome"), required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--format", default=None)
    p.add_argument("--punctuation", choices=("delete", "split"), default="delete")
    p.add_argument("--policy", choices=("reject", "clean"), default="reject")
    p.add_argument("--language", action="append", help="train only this language (repeatable)")
    p.add_argument("--ngrams", type=int, nargs="+", default=list(NGRAM_SIZES))
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--negatives", type=int, default=None)
    p.add_argument("--subsample", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--min-count", type=int, default=None)
    p.add_argument("--fixed-window", action="store_true", help="disable dynamic window sizing")
    _add_common(p)

    p = sub.add_parser("align", help="train translation models and write the alignment table")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--format", default="tsv")
    p.add_argument("--punctuation", choices=("delete", "split"), default="delete")
    p.add_argument("--pivot", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--iterations", type=int, default=10)
    _add_common(p)

    p = sub.add_parser("diverge", help="compute the distance matrix from models and a table")
    p.add_argument("--models", type=Path, required=True, help="directory of <language>.bin models")
    p.add_argument("--table", type=Path, required=True, help="alignment table TSV")
    p.add_argument(
        "--prune-missing",
        action="store_true",
        help="drop pivot words not covered by every model instead of failing",
    )
    _add_common(p)

    p = sub.add_parser("cluster", help="build the tree from a distance matrix")
    p.add_argument("--input", type=Path, required=True, help="matrix JSON")
    p.add_argument("--newick", type=Path, required=True, help="output Newick path")
    p.add_argument("--svg", type=Path, default=None, help="also render an SVG here")
    p.add_argument("--dot", type=Path, default=None, help="also render a dot graph here")
    p.add_argument("--annotations", type=Path, default=None, help="label TSV for leaf coloring")
    _add_common(p)

    p = sub.add_parser("run", help="execute a configured end-to-end run")
    p.add_argument("--config", type=Path, required=True, help="TOML run config")
    _add_common(p)

    return parser


def _natural_format(fmt: str | None) -> str:
    fmt = fmt or "tsv"
    if fmt not in ("tsv", "bible-xml"):
        raise ConfigError(f"unknown natural-corpus format {fmt!r}")
    return fmt


def _genome_format(fmt: str | None) -> str:
    fmt = fmt or "fasta"
    if fmt not in ("fasta", "tsv"):
        raise ConfigError(f"unknown genome format {fmt!r}")
    return fmt


def _genome_files(corpus: Path, fmt: str) -> list[Path]:
    suffix = ".fasta" if fmt == "fasta" else ".tsv"
    files = sorted(corpus.glob(f"*{suffix}"))
    if not files:
        raise WeldError(f"no {suffix} files in {corpus}")
    return files


def _check_ngrams(values: list[int]) -> list[int]:
    bad = [n for n in values if n not in NGRAM_SIZES]
    if bad:
        raise ConfigError(f"ngrams must be within {NGRAM_SIZES}, got {bad}")
    return sorted(set(values))


def cmd_ingest(args: argparse.Namespace) -> int:
    if args.workflow == "natural":
        corpus = load_verse_aligned(args.corpus, _natural_format(args.format), args.punctuation)
        for lang in corpus.languages:
            sentences = corpus.sentences(lang)
            vocab = build_vocabulary(sentences, args.min_count)
            tokens = sum(len(s) for s in sentences)
            print(
                f"language {lang}: {len(corpus)} verses, {tokens} tokens, "
                f"{len(vocab)} vocabulary words (min_count {args.min_count})"
            )
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                save_vocabulary(vocab, args.out / f"{lang}.tsv")
        return 0

    fmt = _genome_format(args.format)
    for f in _genome_files(args.corpus, fmt):
        regions = load_coding_regions(f, fmt, args.policy, organism=f.stem)
        print(f"organism {f.stem}: {len(regions)} coding regions")
        for n in _check_ngrams(args.ngrams):
            counter = _ngram_counts(regions.sequences, n)
            total = sum(counter.values())
            kept = sum(1 for c in counter.values() if c >= args.min_count)
            print(f"organism {f.stem}: n={n} grams {total} distinct {len(counter)} kept {kept}")
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                eligible = {w for w, c in counter.items() if c >= args.min_count}
                save_vocabulary(
                    _restricted_vocab(counter, eligible), args.out / f"{f.stem}.n{n}.tsv"
                )
    return 0


def _embedding_from_args(args: argparse.Namespace, workflow: str, seed: int):
    emb = default_embedding_config(workflow, seed)
    overrides = {
        "dim": args.dim,
        "window": args.window,
        "epochs": args.epochs,
        "negatives": args.negatives,
        "subsample": args.subsample,
        "initial_lr": args.lr,
        "min_count": args.min_count,
    }
    emb = replace(emb, **{k: v for k, v in overrides.items() if v is not None})
    if args.fixed_window:
        emb = replace(emb, dynamic_window=False)
    return emb


def cmd_train(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 1
    threads = args.threads if args.threads is not None else 1
    out = args.out if args.out is not None else Path("out")
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "vocab").mkdir(parents=True, exist_ok=True)
    emb = _embedding_from_args(args, args.workflow, seed)

    if args.workflow == "natural":
        corpus = load_verse_aligned(args.corpus, _natural_format(args.format), args.punctuation)
        languages = args.language or corpus.languages
        unknown = [lang for lang in languages if lang not in corpus.languages]
        if unknown:
            raise WeldError(f"languages not in corpus: {', '.join(unknown)}")

        def train_one(lang: str) -> str:
            model = train_embedding(corpus.sentences(lang), emb)
            save_model(model, out / "models" / f"{lang}.bin")
            save_vocabulary(model.vocab, out / "vocab" / f"{lang}.tsv")
            return lang

        for lang in _parallel(train_one, list(languages), threads):
            print(f"trained {lang} -> {out / 'models' / (lang + '.bin')}")
        return 0

    fmt = _genome_format(args.format)
    files = _genome_files(args.corpus, fmt)
    organisms = {}
    for f in files:
        regions = load_coding_regions(f, fmt, args.policy, organism=f.stem)
        if len(regions) == 0:
            raise WeldError(f"organism {f.stem!r} has zero sequences")
        organisms[f.stem] = regions.sequences
    names = sorted(organisms)
    if args.language:
        unknown = [o for o in args.language if o not in names]
        if unknown:
            raise WeldError(f"organisms not in corpus: {', '.join(unknown)}")
    wanted = args.language or names

    for n in _check_ngrams(args.ngrams):
        counts = {org: _ngram_counts(organisms[org], n) for org in names}
        shared = None
        for org in names:
            eligible = {w for w, c in counts[org].items() if c >= emb.min_count}
            shared = eligible if shared is None else shared & eligible
        if not shared or len(shared) < 2:
            raise WeldError(f"shared {n}-gram vocabulary too small across organisms")

        def train_one(org: str) -> str:
            vocab = _restricted_vocab(counts[org], shared)
            sentences = [
                s for seq in organisms[org] for s in genome_ngram_sentences(seq, n)
            ]
            model = train_embedding(sentences, emb, vocab=vocab)
            save_model(model, out / "models" / f"{org}.n{n}.bin")
            save_vocabulary(model.vocab, out / "vocab" / f"{org}.n{n}.tsv")
            return org

        for org in _parallel(train_one, list(wanted), threads):
            print(f"trained {org} (n={n}) -> {out / 'models' / (org + f'.n{n}.bin')}")
    return 0


def cmd_align(args: argparse.Namespace) -> int:
    threads = args.threads if args.threads is not None else 1
    out = args.out if args.out is not None else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_verse_aligned(args.corpus, _natural_format(args.format), args.punctuation)
    if args.pivot not in corpus.languages:
        raise WeldError(f"pivot {args.pivot!r} not among languages {corpus.languages}")
    others = [lang for lang in corpus.languages if lang != args.pivot]

    def align_one(lang: str):
        model = train_translation_model(corpus, args.pivot, lang, args.iterations)
        return lang, extract_alignment(model, args.threshold)

    entries = dict(_parallel(align_one, others, threads))
    pivot_vocab = build_vocabulary(corpus.sentences(args.pivot))
    entries[args.pivot] = {w: (w, 1.0) for w in pivot_vocab.words}
    table = intersect_tables(entries, pivot_vocab)
    save_table(table, out / "alignment.tsv")
    print(f"aligned {len(table.pivot_words)} pivot words -> {out / 'alignment.tsv'}")
    return 0


def cmd_diverge(args: argparse.Namespace) -> int:
    out = args.out if args.out is not None else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    table = load_table(args.table)
    models = {}
    absent = []
    for lang in table.languages:
        path = args.models / f"{lang}.bin"
        if not path.is_file():
            absent.append(lang)
        else:
            models[lang] = load_model(path)
    if absent:
        raise WeldError(f"no model file for: {', '.join(absent)} (in {args.models})")
    pruned, missing = prune_table(table, models)
    report = {lang: words for lang, words in missing.items() if words}
    if report and not args.prune_missing:
        detail = "; ".join(
            f"{lang}: {', '.join(words)}" for lang, words in sorted(report.items())
        )
        raise DivergenceError(
            f"model vocabularies do not cover the table (rerun with --prune-missing "
            f"to drop these pivot words): {detail}"
        )
    matrix = distance_matrix(models, pruned)
    save_matrix_json(matrix, out / "matrix.json")
    save_matrix_tsv(matrix, out / "matrix.tsv")
    print(
        f"distance matrix over {len(matrix.labels)} languages, "
        f"{len(pruned.pivot_words)} pivot words -> {out / 'matrix.json'}"
    )
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    matrix = load_matrix_json(args.input)
    dendrogram = upgma(matrix)
    annotations = load_annotations(args.annotations) if args.annotations else None
    args.newick.parent.mkdir(parents=True, exist_ok=True)
    args.newick.write_text(to_newick(dendrogram) + "\n", encoding="utf-8")
    print(f"tree -> {args.newick}")
    if args.svg is not None:
        args.svg.write_text(render_dendrogram(dendrogram, "svg", annotations), encoding="utf-8")
        print(f"svg -> {args.svg}")
    if args.dot is not None:
        args.dot.write_text(render_dendrogram(dendrogram, "dot", annotations), encoding="utf-8")
        print(f"dot -> {args.dot}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.threads is not None:
        config = replace(config, threads=args.threads)
    out_override = args.out or (Path(os.environ["WELD_OUT"]) if os.environ.get("WELD_OUT") else None)
    if out_override is not None:
        config = replace(config, out=out_override)
    manifest = run(config)
    cached = sum(1 for a in manifest.artifacts.values() if a.cached)
    print(
        f"run complete: {len(manifest.artifacts)} artifacts ({cached} from cache) "
        f"-> {config.out / 'manifest.json'}"
    )
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "align": cmd_align,
    "diverge": cmd_diverge,
    "cluster": cmd_cluster,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"weld {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (WeldError, OSError, ValueError, KeyError) as exc:
        print(f"weld {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
