"""Retrieval: fused dense + symbolic scoring over a memory store.

The combined relevance of an entry for a query is

    score = lambda_s * sim  +  lambda_e * entity_match  +  lambda_c * discourse_match

where sim is the cosine of the unit-norm embeddings, entity_match is the
cluster-size-weighted fraction of query entities found in the entry, and
discourse_match compares discourse label sets (binary or graded/Jaccard).

Candidates come from both indexes (queried concurrently), are deduplicated,
scored, and ranked by (score desc, timestamp desc, entry id asc).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from .model import (
    DiscourseLabel,
    EntityMention,
    FusionWeights,
    GoldInfo,
    MemoryEntry,
    Query,
    RankedResult,
)
from .store import MemoryStore
from .symbolic import ClusterStats

_EXECUTOR: Optional[ThreadPoolExecutor] = None

DISCOURSE_MODES = ("graded", "binary")
ENTITY_WEIGHTINGS = ("log", "linear", "uniform")


class EmptyStoreError(LookupError):
    pass


class UnknownEntryError(KeyError):
    pass


@dataclass(frozen=True)
class RetrievalConfig:
    weights: FusionWeights = FusionWeights.default()
    dense_n: int = 50
    symbolic_cap: int = 200
    k: int = 5
    discourse_mode: str = "graded"
    exact_dense: bool = False
    entity_weighting: str = "log"
    coref_matching: bool = True   # False: entity evidence via surface names only
    dep_postings: bool = True     # kept for ablation reporting; dep keys never
                                  # drive candidate lookup (queries carry no triples)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.dense_n < self.k:
            raise ValueError("dense_n must be >= k")
        if self.symbolic_cap < 0:
            raise ValueError("symbolic_cap must be >= 0")
        if self.discourse_mode not in DISCOURSE_MODES:
            raise ValueError(f"discourse_mode must be one of {DISCOURSE_MODES}")
        if self.entity_weighting not in ENTITY_WEIGHTINGS:
            raise ValueError(f"entity_weighting must be one of {ENTITY_WEIGHTINGS}")


def _mention_weight(cluster_size: int, weighting: str) -> float:
    """Weight of a query entity by its coreference cluster size.

    Log damping keeps one giant cluster from dominating; unseen ids count
    as singletons (weight ln 2 under log) so they still contribute.
    """
    if weighting == "uniform":
        return 1.0
    effective = max(cluster_size, 1)
    if weighting == "linear":
        return float(effective)
    return math.log(1 + effective)


def entity_match(
    entry_entities: Sequence[EntityMention],
    query_entities: Sequence[EntityMention],
    stats: ClusterStats,
    weighting: str = "log",
    use_coref: bool = True,
) -> float:
    """Weighted fraction of query entities present in the entry, in [0, 1].

    A query entity matches on a shared coref id, falling back to the
    lowercased surface name (which recovers from upstream coref failures).
    Empty query entity sets score 0 by convention.
    """
    if not query_entities:
        return 0.0
    entry_corefs = {e.coref_id for e in entry_entities}
    entry_names = {e.name.lower() for e in entry_entities}
    num = denom = 0.0
    for ent in query_entities:
        w = _mention_weight(stats.cluster_size(ent.coref_id), weighting)
        denom += w
        matched = (use_coref and ent.coref_id in entry_corefs) or (
            ent.name.lower() in entry_names
        )
        if matched:
            num += w
    return num / denom


def discourse_match(
    entry_labels: Sequence[DiscourseLabel],
    query_labels: Sequence[DiscourseLabel],
    mode: str = "graded",
) -> float:
    """Discourse-role alignment in [0, 1]: binary overlap or Jaccard."""
    set_i = {l.canonical for l in entry_labels}
    set_q = {l.canonical for l in query_labels}
    if mode == "binary":
        return 1.0 if set_i & set_q else 0.0
    union = set_i | set_q
    if not union:
        return 0.0
    return len(set_i & set_q) / len(union)


def combine_terms(weights: FusionWeights, sim: float, ent: float, disc: float) -> float:
    # single shared expression so every scoring path is bit-identical
    return weights.lambda_s * sim + weights.lambda_e * ent + weights.lambda_c * disc


def fuse_score(
    entry: MemoryEntry,
    query: Query,
    weights: FusionWeights,
    stats: ClusterStats,
    mode: str = "graded",
    entity_weighting: str = "log",
    coref_matching: bool = True,
) -> RankedResult:
    sim = entry.embedding.dot(query.embedding)
    ent = entity_match(entry.entities, query.entities, stats,
                       weighting=entity_weighting, use_coref=coref_matching)
    disc = discourse_match(entry.discourse, query.discourse, mode)
    return RankedResult(entry.id, combine_terms(weights, sim, ent, disc), sim, ent, disc)


def _executor() -> ThreadPoolExecutor:
    global _EXECUTOR
    if _EXECUTOR is None:
        _EXECUTOR = ThreadPoolExecutor(max_workers=2,
                                       thread_name_prefix="convmem-lookup")
    return _EXECUTOR


def candidate_pool(store: MemoryStore, query: Query, config: RetrievalConfig,
                   parallel: bool = True) -> list[int]:
    """Merged, deduplicated candidate ids from both indexes, ascending.

    The dense and symbolic lookups are independent reads and run on two
    threads, joining before fusion.
    """
    if len(store) == 0:
        raise EmptyStoreError("store has no indexed entries")
    dense_lookup = store.dense.search_exact if config.exact_dense else store.dense.search

    def dense_part():
        return dense_lookup(query.embedding, config.dense_n)

    def symbolic_part():
        return store.symbolic.candidates(query, config.symbolic_cap,
                                         include_coref=config.coref_matching)

    if parallel:
        pool = _executor()
        dense_future = pool.submit(dense_part)
        symbolic_ids = symbolic_part()
        dense_ids = {eid for eid, _ in dense_future.result()}
    else:
        dense_ids = {eid for eid, _ in dense_part()}
        symbolic_ids = symbolic_part()
    return sorted(dense_ids | symbolic_ids)


def rank_results(
    scored: list[RankedResult], store: MemoryStore, k: int
) -> list[RankedResult]:
    """Order by (score desc, timestamp desc, entry id asc) and truncate."""
    ordered = sorted(scored, key=lambda r: r.entry_id)
    ordered.sort(key=lambda r: store.entries[r.entry_id].timestamp, reverse=True)
    ordered.sort(key=lambda r: r.score, reverse=True)
    return ordered[:k]


def retrieve(store: MemoryStore, query: Query, config: Optional[RetrievalConfig] = None,
             parallel: bool = True) -> list[RankedResult]:
    """Top-k fused results with per-term score breakdowns."""
    config = config or RetrievalConfig()
    ids = candidate_pool(store, query, config, parallel=parallel)
    stats = store.symbolic.cluster_stats
    scored = [
        fuse_score(store.entries[eid], query, config.weights, stats,
                   mode=config.discourse_mode,
                   entity_weighting=config.entity_weighting,
                   coref_matching=config.coref_matching)
        for eid in ids
    ]
    return rank_results(scored, store, config.k)


def retrieve_exhaustive(store: MemoryStore, query: Query,
                        config: Optional[RetrievalConfig] = None) -> list[RankedResult]:
    """Score every stored entry (no candidate pooling); oracle mode."""
    config = config or RetrievalConfig()
    stats = store.symbolic.cluster_stats
    scored = [
        fuse_score(entry, query, config.weights, stats,
                   mode=config.discourse_mode,
                   entity_weighting=config.entity_weighting,
                   coref_matching=config.coref_matching)
        for entry in store.entries.values()
    ]
    return rank_results(scored, store, config.k)


# --- gold-hit predicate (shared by the tuner and the eval harness) ---------

def normalize_span(text: str) -> str:
    """Lowercase and collapse whitespace; no stemming."""
    return " ".join(text.lower().split())


def gold_hit(entry: MemoryEntry, gold: GoldInfo) -> bool:
    """An entry counts as gold evidence by id or by contained answer span."""
    if entry.id in gold.supporting_entry_ids:
        return True
    span = normalize_span(gold.answer_span)
    return bool(span) and span in normalize_span(entry.utterance)


# --- context serialization --------------------------------------------------

def format_prompt_timestamp(iso_timestamp: str) -> str:
    """ISO-8601 -> 'YYYY-MM-DD HH:MM' (purely textual, no date arithmetic)."""
    return iso_timestamp.replace("T", " ")[:16]


def _entity_line(ent: EntityMention, elided: int = 0) -> str:
    suffix = f" | +{elided} more" if elided else ""
    return f"[ENTITY: {ent.name} | CorefID={ent.coref_id} | NER={ent.ner_type}{suffix}]"


def serialize_entry(entry: MemoryEntry, budget_lines_per_entry: int = 2) -> str:
    """Render one entry as a linguistically tagged prompt block.

    Metadata layout: one ENTITY line per entity plus one DISCOURSE line,
    capped at ``budget_lines_per_entry`` lines. When everything fits, the
    DEPS line is appended after the mandatory UTTERANCE line; on overflow
    the last emitted entity line carries a "+N more" marker, overflowing
    metadata is dropped, and no DEPS line is emitted.
    """
    lines: list[str] = []
    budget = budget_lines_per_entry
    needed = len(entry.entities) + (1 if entry.discourse else 0)
    fits = needed <= budget
    if fits:
        lines.extend(_entity_line(e) for e in entry.entities)
        if entry.discourse:
            lines.append(f"[DISCOURSE: {', '.join(l.canonical for l in entry.discourse)}]")
    else:
        shown = min(len(entry.entities), budget)
        for i in range(shown):
            elided = len(entry.entities) - shown if i == shown - 1 else 0
            lines.append(_entity_line(entry.entities[i], elided))
        if entry.discourse and shown < budget:
            lines.append(f"[DISCOURSE: {', '.join(l.canonical for l in entry.discourse)}]")
    lines.append(
        f'[UTTERANCE @ {format_prompt_timestamp(entry.timestamp)}] "{entry.utterance}"'
    )
    if fits and entry.dep_triples:
        deps = ", ".join(f"({t.head}-{t.label}-{t.child})" for t in entry.dep_triples)
        lines.append(f"[DEPS: {deps}]")
    return "\n".join(lines)


def serialize_context(results: Sequence[RankedResult], store: MemoryStore,
                      budget_lines_per_entry: int = 2) -> str:
    """Prompt serialization of ranked results, blank-line separated."""
    blocks = []
    for res in results:
        entry = store.entries.get(res.entry_id)
        if entry is None:
            raise UnknownEntryError(f"entry id {res.entry_id} not in store")
        blocks.append(serialize_entry(entry, budget_lines_per_entry))
    return "\n\n".join(blocks)


# --- weight tuning ----------------------------------------------------------

@dataclass(frozen=True)
class TuneResult:
    weights: FusionWeights
    fr: float
    table: tuple[tuple[FusionWeights, float], ...]


def simplex_grid(grid_step: float = 0.05,
                 lambda_s_range: tuple[float, float] = (0.40, 0.90)
                 ) -> list[FusionWeights]:
    """All weight triples on the simplex at the given step, with lambda_s
    restricted to the sweep range. Points are enumerated lambda_s
    ascending, then lambda_e ascending."""
    n = round(1.0 / grid_step)
    if abs(n * grid_step - 1.0) > 1e-9:
        raise ValueError(f"grid_step {grid_step} does not divide 1")
    lo, hi = lambda_s_range
    i_min = math.ceil(lo / grid_step - 1e-9)
    i_max = math.floor(hi / grid_step + 1e-9)
    points = []
    for i in range(max(i_min, 0), min(i_max, n) + 1):
        for j in range(0, n - i + 1):
            points.append(FusionWeights(i * grid_step, j * grid_step,
                                        (n - i - j) * grid_step))
    if not points:
        raise ValueError(
            f"empty grid: no multiples of {grid_step} in lambda_s range {lambda_s_range}")
    return points


def tune_weights(
    store: MemoryStore,
    queries: Sequence[Query],
    config: Optional[RetrievalConfig] = None,
    grid_step: float = 0.05,
    lambda_s_range: tuple[float, float] = (0.40, 0.90),
) -> TuneResult:
    """Grid-search the fusion weights for the best factual recall.

    Every query needs gold info. Candidate pools and term values are
    weight-independent, so they are computed once per query and only the
    linear combination is re-evaluated per grid point; scores are combined
    through the same expression as ``fuse_score``, so the result is
    bit-identical to re-running retrieval at each point. Ties prefer the
    larger lambda_s, then the larger lambda_e.
    """
    config = config or RetrievalConfig()
    if not queries:
        raise ValueError("no validation queries")
    for i, query in enumerate(queries):
        if query.gold is None:
            raise ValueError(f"query {i} has no gold info")

    stats = store.symbolic.cluster_stats
    prepared = []
    for query in queries:
        ids = candidate_pool(store, query, config)
        terms = []
        for eid in ids:
            entry = store.entries[eid]
            sim = entry.embedding.dot(query.embedding)
            ent = entity_match(entry.entities, query.entities, stats,
                               weighting=config.entity_weighting,
                               use_coref=config.coref_matching)
            disc = discourse_match(entry.discourse, query.discourse,
                                   config.discourse_mode)
            terms.append((eid, sim, ent, disc, gold_hit(entry, query.gold)))
        prepared.append(terms)

    points = simplex_grid(grid_step, lambda_s_range)
    table = []
    best: Optional[tuple[float, float, float, FusionWeights]] = None
    for weights in points:
        recalled = 0
        for terms in prepared:
            scored = [
                RankedResult(eid, combine_terms(weights, sim, ent, disc),
                             sim, ent, disc)
                for eid, sim, ent, disc, _hit in terms
            ]
            top = rank_results(scored, store, config.k)
            hits = {eid for eid, _, _, _, hit in terms if hit}
            if any(r.entry_id in hits for r in top):
                recalled += 1
        fr = recalled / len(prepared)
        table.append((weights, fr))
        key = (fr, weights.lambda_s, weights.lambda_e)
        if best is None or key > (best[0], best[1], best[2]):
            best = (fr, weights.lambda_s, weights.lambda_e, weights)
    assert best is not None
    return TuneResult(weights=best[3], fr=best[0], table=tuple(table))
