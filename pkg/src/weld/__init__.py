"""weld: word-embedding language divergence.

Quantifies how far apart languages (natural or genomic) are by comparing
the geometry of their word embeddings over a shared pivot vocabulary, and
clusters the resulting distance matrix into an ultrametric tree.
"""

from ._version import __version__
from .errors import WeldError
from .corpus import (
    CodingRegionSet,
    CorpusError,
    ParallelCorpus,
    Vocabulary,
    build_vocabulary,
    genome_ngram_sentences,
    load_coding_regions,
    load_verse_aligned,
    tokenize_natural,
)
from .embedding import (
    EmbeddingConfig,
    EmbeddingError,
    EmbeddingModel,
    cosine,
    load_model,
    save_model,
    train_embedding,
)
from .alignment import (
    AlignmentError,
    AlignmentTable,
    TranslationModel,
    extract_alignment,
    identity_table,
    intersect_tables,
    train_translation_model,
)
from .divergence import (
    DistanceMatrix,
    DivergenceError,
    SimilarityDistribution,
    distance_matrix,
    jsd,
    similarity_distribution,
    weld_distance,
)
from .clustering import (
    ClusteringError,
    Dendrogram,
    Linkage,
    TreeNode,
    cophenetic_matrix,
    render_dendrogram,
    to_newick,
    upgma,
)
from .pipeline import (
    ConfigError,
    ManifestError,
    RunConfig,
    RunManifest,
    StageError,
    load_run_config,
    run,
    run_genome,
    run_natural,
    verify_manifest,
)

__all__ = [
    "__version__",
    "WeldError",
    "CodingRegionSet",
    "CorpusError",
    "ParallelCorpus",
    "Vocabulary",
    "build_vocabulary",
    "genome_ngram_sentences",
    "load_coding_regions",
    "load_verse_aligned",
    "tokenize_natural",
    "EmbeddingConfig",
    "EmbeddingError",
    "EmbeddingModel",
    "cosine",
    "load_model",
    "save_model",
    "train_embedding",
    "AlignmentError",
    "AlignmentTable",
    "TranslationModel",
    "extract_alignment",
    "identity_table",
    "intersect_tables",
    "train_translation_model",
    "DistanceMatrix",
    "DivergenceError",
    "SimilarityDistribution",
    "distance_matrix",
    "jsd",
    "similarity_distribution",
    "weld_distance",
    "ClusteringError",
    "Dendrogram",
    "Linkage",
    "TreeNode",
    "cophenetic_matrix",
    "render_dendrogram",
    "to_newick",
    "upgma",
    "ConfigError",
    "ManifestError",
    "RunConfig",
    "RunManifest",
    "StageError",
    "load_run_config",
    "run",
    "run_genome",
    "run_natural",
    "verify_manifest",
]
