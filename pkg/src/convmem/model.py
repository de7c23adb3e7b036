"""Domain types shared across the engine: memory entries, queries, scores.

Every type here is an immutable value object; construction is cheap and
validation is explicit (``validate_entry`` reports violations as data
rather than raising, so callers can collect them per input line).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

DEFAULT_DIM = 768

# Coarse discourse label inventory. Anything outside this set is kept as
# OTHER(tag) so the original annotation is never lost.
COARSE_DISCOURSE_LABELS = frozenset(
    {"ELABORATION", "CONTRAST", "CAUSE", "CONDITION", "TEMPORAL", "EXPANSION"}
)

UNIT_NORM_TOL = 1e-6


class EmbeddingError(ValueError):
    """Raised for vectors that cannot become valid embeddings."""


def normalize_lemma(raw: str) -> str:
    """Canonical lemma form: trimmed, lowercased, ':' replaced by '_'.

    ':' is reserved as the separator in dependency posting keys.
    """
    return raw.strip().lower().replace(":", "_")


@dataclass(frozen=True)
class EntityMention:
    """One entity occurrence: surface name, coreference cluster id, NER type."""

    name: str
    coref_id: str
    ner_type: str = "MISC"
    span: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.span is not None:
            object.__setattr__(self, "span", (int(self.span[0]), int(self.span[1])))


@dataclass(frozen=True)
class DependencyTriple:
    """(head lemma, relation label, child lemma) from a dependency parse."""

    head: str
    label: str
    child: str

    @classmethod
    def from_raw(cls, head: str, label: str, child: str) -> "DependencyTriple":
        """Build a triple with all three fields lemma-normalized."""
        return cls(normalize_lemma(head), normalize_lemma(label), normalize_lemma(child))

    def key(self) -> str:
        """Posting-list key: head:label:child."""
        return f"{self.head}:{self.label}:{self.child}"


@dataclass(frozen=True)
class DiscourseLabel:
    """Coarse discourse relation of an utterance to its context.

    ``label`` is always one of COARSE_DISCOURSE_LABELS or "OTHER"; for
    OTHER the original (uppercased, trimmed) tag is preserved in ``tag``.
    """

    label: str
    tag: Optional[str] = None

    @classmethod
    def parse(cls, raw: str) -> "DiscourseLabel":
        text = raw.strip().upper()
        if text in COARSE_DISCOURSE_LABELS:
            return cls(text)
        if text.startswith("OTHER(") and text.endswith(")"):
            return cls("OTHER", text[len("OTHER(") : -1])
        if text == "OTHER":
            return cls("OTHER")
        return cls("OTHER", text)

    @property
    def canonical(self) -> str:
        if self.label == "OTHER" and self.tag:
            return f"OTHER({self.tag})"
        return self.label


class Embedding:
    """Fixed-length dense vector. Stored embeddings are unit-norm float64.

    The constructor stores values as given (so invalid vectors can still be
    inspected and reported); use :func:`normalize_embedding` to build a
    validated unit-norm embedding from raw values.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise EmbeddingError(f"embedding must be 1-d, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Embedding is immutable")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def dot(self, other: "Embedding") -> float:
        if other.dim != self.dim:
            raise EmbeddingError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return float(np.dot(self.values, other.values))

    def tolist(self) -> list[float]:
        return self.values.tolist()

    def __eq__(self, other):
        return isinstance(other, Embedding) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"Embedding(dim={self.dim})"


def normalize_embedding(values, dim: Optional[int] = None) -> Embedding:
    """Validate raw values and return the unit-norm embedding.

    Raises EmbeddingError on wrong dimensionality, non-finite values, or a
    zero-norm vector. Direction is preserved exactly.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise EmbeddingError(f"embedding must be 1-d, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise EmbeddingError(f"expected dim {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise EmbeddingError("embedding contains non-finite values")
    norm = float(np.linalg.norm(arr))
    if norm <= 0.0:
        raise EmbeddingError("zero-norm embedding")
    return Embedding(arr / norm)


def _as_tuple(items: Iterable) -> tuple:
    return tuple(items) if items is not None else ()


@dataclass(frozen=True)
class GoldInfo:
    """Evaluation ground truth attached to a query turn."""

    supporting_entry_ids: tuple[int, ...] = ()
    answer_span: str = ""
    coref_assignments: Optional[Mapping[str, str]] = None

    def __post_init__(self):
        object.__setattr__(
            self, "supporting_entry_ids", tuple(int(i) for i in self.supporting_entry_ids)
        )
        if self.coref_assignments is not None:
            object.__setattr__(self, "coref_assignments", dict(self.coref_assignments))


@dataclass(frozen=True)
class MemoryEntry:
    """One stored utterance with its linguistic structure and embedding."""

    id: int
    utterance: str
    speaker: str
    timestamp: str
    dialogue_id: str
    session_id: int
    turn_id: int
    entities: tuple[EntityMention, ...] = ()
    dep_triples: tuple[DependencyTriple, ...] = ()
    discourse: tuple[DiscourseLabel, ...] = ()
    embedding: Embedding = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "entities", _as_tuple(self.entities))
        object.__setattr__(self, "dep_triples", _as_tuple(self.dep_triples))
        object.__setattr__(self, "discourse", _as_tuple(self.discourse))


@dataclass(frozen=True)
class Query:
    """Features extracted from a query turn, plus optional gold info."""

    text: str
    embedding: Embedding
    entities: tuple[EntityMention, ...] = ()
    discourse: tuple[DiscourseLabel, ...] = ()
    gold: Optional[GoldInfo] = None
    query_class: Optional[str] = None  # difficulty label carried from corpus metadata

    def __post_init__(self):
        object.__setattr__(self, "entities", _as_tuple(self.entities))
        object.__setattr__(self, "discourse", _as_tuple(self.discourse))


@dataclass(frozen=True)
class FusionWeights:
    """Weights (lambda_s, lambda_e, lambda_c) on the probability simplex."""

    lambda_s: float
    lambda_e: float
    lambda_c: float

    SUM_TOL = 1e-9

    def __post_init__(self):
        for name in ("lambda_s", "lambda_e", "lambda_c"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        total = self.lambda_s + self.lambda_e + self.lambda_c
        if abs(total - 1.0) > self.SUM_TOL:
            raise ValueError(f"weights must sum to 1 within {self.SUM_TOL}, got {total}")

    @classmethod
    def default(cls) -> "FusionWeights":
        return cls(0.6, 0.25, 0.15)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lambda_s, self.lambda_e, self.lambda_c)


@dataclass(frozen=True)
class RankedResult:
    """One retrieval hit: total score plus the pre-weighting term values."""

    entry_id: int
    score: float
    sim_term: float
    entity_term: float
    discourse_term: float


def _validate_components(
    text: str,
    entities: Sequence[EntityMention],
    dep_triples: Sequence[DependencyTriple],
    discourse: Sequence[DiscourseLabel],
    embedding: Optional[Embedding],
    expected_dim: Optional[int],
) -> list[str]:
    violations: list[str] = []
    for i, ent in enumerate(entities):
        if not ent.name:
            violations.append(f"entity {i}: empty name")
        if not ent.coref_id:
            violations.append(f"entity {i}: empty coref_id")
        if ent.span is not None:
            start, end = ent.span
            if not (0 <= start < end <= len(text)):
                violations.append(
                    f"entity {i}: span ({start}, {end}) out of bounds for text of length {len(text)}"
                )
    for i, trip in enumerate(dep_triples):
        for fname in ("head", "label", "child"):
            value = getattr(trip, fname)
            if not value:
                violations.append(f"dep_triple {i}: empty {fname}")
                continue
            if ":" in value:
                violations.append(f"dep_triple {i}: separator in lemma {value!r}")
            if value != value.strip().lower():
                violations.append(f"dep_triple {i}: {fname} {value!r} not lowercased/trimmed")
    for i, lab in enumerate(discourse):
        if lab.label not in COARSE_DISCOURSE_LABELS and lab.label != "OTHER":
            violations.append(f"discourse {i}: unknown label {lab.label!r}")
        if lab.label != lab.label.strip().upper():
            violations.append(f"discourse {i}: label {lab.label!r} not uppercased/trimmed")
    if embedding is None:
        violations.append("missing embedding")
    else:
        arr = embedding.values
        if expected_dim is not None and arr.shape[0] != expected_dim:
            violations.append(
                f"embedding dimension mismatch: expected {expected_dim}, got {arr.shape[0]}"
            )
        if not np.all(np.isfinite(arr)):
            violations.append("non-finite embedding value")
        else:
            norm = float(np.linalg.norm(arr))
            if norm <= 0.0:
                violations.append("zero-norm embedding")
            elif abs(norm - 1.0) > UNIT_NORM_TOL:
                violations.append(f"embedding not unit-norm (norm={norm})")
    return violations


def validate_entry(entry: MemoryEntry, expected_dim: Optional[int] = None) -> list[str]:
    """Report every violated invariant of ``entry``; empty list means valid.

    Store-level invariants (id uniqueness, unique (dialogue, session, turn))
    are checked by the store at insert time, not here.
    """
    return _validate_components(
        entry.utterance,
        entry.entities,
        entry.dep_triples,
        entry.discourse,
        entry.embedding,
        expected_dim,
    )
