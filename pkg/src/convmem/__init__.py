"""convmem: hybrid dense + symbolic retrieval over long-term dialogue memory.

Utterances are stored as structured entries (entities with coreference ids,
dependency triples, discourse labels, a unit-norm embedding) in two indexes
at once: an HNSW graph for cosine search and an inverted index over the
symbolic features. Queries are answered by fusing both signals with tunable
weights.
"""

__version__ = "0.1.0"

from .dense import DenseIndex, HnswParams
from .engine import (
    RetrievalConfig,
    discourse_match,
    entity_match,
    fuse_score,
    retrieve,
    serialize_context,
    tune_weights,
)
from .ingest import AnnotatedDialogue, Session, Turn, read_annotated, write_annotated
from .model import (
    DEFAULT_DIM,
    DependencyTriple,
    DiscourseLabel,
    Embedding,
    EntityMention,
    FusionWeights,
    GoldInfo,
    MemoryEntry,
    Query,
    RankedResult,
    normalize_embedding,
    validate_entry,
)
from .store import MemoryStore, build_store, open_store, save_store
from .symbolic import ClusterStats, SymbolicIndex
from .toynlp import toy_annotate, toy_embed

__all__ = [
    "AnnotatedDialogue",
    "ClusterStats",
    "DEFAULT_DIM",
    "DenseIndex",
    "DependencyTriple",
    "DiscourseLabel",
    "Embedding",
    "EntityMention",
    "FusionWeights",
    "GoldInfo",
    "HnswParams",
    "MemoryEntry",
    "MemoryStore",
    "Query",
    "RankedResult",
    "RetrievalConfig",
    "Session",
    "SymbolicIndex",
    "Turn",
    "build_store",
    "discourse_match",
    "entity_match",
    "fuse_score",
    "normalize_embedding",
    "open_store",
    "read_annotated",
    "retrieve",
    "save_store",
    "serialize_context",
    "toy_annotate",
    "toy_embed",
    "tune_weights",
    "validate_entry",
    "write_annotated",
]
