"""Evaluation harness: factual recall, retrieval-level discourse coherence,
ablation runs, and the latency benchmark.

Factual recall (FR): a query is recalled when any top-k retrieved entry is
listed in its gold supporting ids or contains the gold answer span after
lowercase/whitespace normalization.

Discourse coherence (DC) here is a retrieval-level analogue: agreement of
the coref ids of retrieved entity mentions with the gold assignments. The
original metric runs coreference over generated responses; without a
generator we measure the same entity-reference consistency at the
retrieval boundary instead.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .engine import (
    RetrievalConfig,
    fuse_score,
    gold_hit,
    rank_results,
    retrieve,
)
from .ingest import canonical_json
from .model import FusionWeights, Query, RankedResult
from .store import MemoryStore


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class QueryOutcome:
    query_index: int
    recalled: bool
    hit_rank: Optional[int] = None          # 1-based rank of the first gold hit
    matched_entry_id: Optional[int] = None
    hit_type: Optional[str] = None          # "id" | "span"
    breakdown: Optional[RankedResult] = None
    query_class: Optional[str] = None


@dataclass(frozen=True)
class FrResult:
    fr: float
    per_query: tuple[QueryOutcome, ...]

    def for_class(self, query_class: str) -> float:
        subset = [o for o in self.per_query if o.query_class == query_class]
        if not subset:
            raise EvalError(f"no queries of class {query_class!r}")
        return sum(o.recalled for o in subset) / len(subset)


def eval_fr(store: MemoryStore, queries: Sequence[Query],
            config: Optional[RetrievalConfig] = None) -> FrResult:
    """Fraction of gold queries whose evidence appears in the top-k."""
    config = config or RetrievalConfig()
    if not queries:
        raise EvalError("no queries")
    outcomes = []
    for qi, query in enumerate(queries):
        if query.gold is None:
            raise EvalError(f"query {qi} has no gold info")
        results = retrieve(store, query, config)
        outcome = QueryOutcome(qi, False, query_class=query.query_class)
        for rank, res in enumerate(results, start=1):
            entry = store.entries[res.entry_id]
            if gold_hit(entry, query.gold):
                hit_type = "id" if entry.id in query.gold.supporting_entry_ids else "span"
                outcome = QueryOutcome(qi, True, rank, entry.id, hit_type, res,
                                       query.query_class)
                break
        outcomes.append(outcome)
    fr = sum(o.recalled for o in outcomes) / len(outcomes)
    return FrResult(fr, tuple(outcomes))


@dataclass(frozen=True)
class DcQueryOutcome:
    query_index: int
    comparable: int
    correct: int

    @property
    def score(self) -> float:
        return self.correct / self.comparable if self.comparable else 0.0


@dataclass(frozen=True)
class DcResult:
    dc: float
    per_query: tuple[DcQueryOutcome, ...]
    excluded: int  # queries with no comparable entity


def eval_dc(store: MemoryStore, queries: Sequence[Query],
            config: Optional[RetrievalConfig] = None) -> DcResult:
    """Coref-cluster agreement of retrieved entity mentions with gold.

    Only mentions whose surface name appears in the query's gold
    coref_assignments are comparable; queries without any comparable
    mention are excluded from the mean and counted in the report.
    """
    config = config or RetrievalConfig()
    if not queries:
        raise EvalError("no queries")
    outcomes = []
    for qi, query in enumerate(queries):
        if query.gold is None or query.gold.coref_assignments is None:
            raise EvalError(f"query {qi} has no gold coref assignments")
        gold_map = {name.lower(): cid for name, cid in query.gold.coref_assignments.items()}
        results = retrieve(store, query, config)
        comparable = correct = 0
        for res in results:
            for mention in store.entries[res.entry_id].entities:
                expected = gold_map.get(mention.name.lower())
                if expected is None:
                    continue
                comparable += 1
                if mention.coref_id == expected:
                    correct += 1
        outcomes.append(DcQueryOutcome(qi, comparable, correct))
    scored = [o for o in outcomes if o.comparable > 0]
    if not scored:
        raise EvalError("no query has comparable entities")
    dc = sum(o.score for o in scored) / len(scored)
    return DcResult(dc, tuple(outcomes), excluded=len(outcomes) - len(scored))


@dataclass(frozen=True)
class EvalReport:
    fr: float
    dc: Optional[float]
    runs: int
    fr_std: Optional[float]
    dc_std: Optional[float]
    per_query: tuple[QueryOutcome, ...]
    config: dict
    dc_excluded: int = 0

    def to_record(self) -> dict:
        rec = {
            "fr": self.fr,
            "dc": self.dc,
            "runs": self.runs,
            "config": self.config,
            "dc_excluded": self.dc_excluded,
            "per_query": [
                {
                    "query": o.query_index,
                    "recalled": o.recalled,
                    "hit_rank": o.hit_rank,
                    "matched_entry_id": o.matched_entry_id,
                    "hit_type": o.hit_type,
                    "query_class": o.query_class,
                    "terms": None if o.breakdown is None else {
                        "score": o.breakdown.score,
                        "sim": o.breakdown.sim_term,
                        "entity": o.breakdown.entity_term,
                        "discourse": o.breakdown.discourse_term,
                    },
                }
                for o in self.per_query
            ],
        }
        if self.runs > 1:
            rec["fr_std"] = self.fr_std
            rec["dc_std"] = self.dc_std
        return rec

    def to_json(self) -> str:
        return canonical_json(self.to_record())


def config_snapshot(config: RetrievalConfig) -> dict:
    return {
        "weights": list(config.weights.as_tuple()),
        "dense_n": config.dense_n,
        "symbolic_cap": config.symbolic_cap,
        "k": config.k,
        "discourse_mode": config.discourse_mode,
        "exact_dense": config.exact_dense,
        "entity_weighting": config.entity_weighting,
        "coref_matching": config.coref_matching,
        "dep_postings": config.dep_postings,
    }


def evaluate(store: MemoryStore, queries: Sequence[Query],
             config: Optional[RetrievalConfig] = None, runs: int = 1) -> EvalReport:
    """FR (and DC where gold coref assignments exist) over ``runs`` repeats.

    The pipeline is deterministic, so the stdev fields exist to prove it:
    they are exactly 0 for runs > 1.
    """
    config = config or RetrievalConfig()
    if runs < 1:
        raise EvalError("runs must be >= 1")
    dc_queries = [q for q in queries if q.gold is not None
                  and q.gold.coref_assignments is not None]
    frs, dcs = [], []
    fr_result = None
    dc_result = None
    for _ in range(runs):
        fr_result = eval_fr(store, queries, config)
        frs.append(fr_result.fr)
        if dc_queries:
            dc_result = eval_dc(store, dc_queries, config)
            dcs.append(dc_result.dc)
    assert fr_result is not None
    return EvalReport(
        fr=fr_result.fr,
        dc=dc_result.dc if dc_result else None,
        runs=runs,
        fr_std=statistics.stdev(frs) if runs > 1 else None,
        dc_std=(statistics.stdev(dcs) if runs > 1 and dcs else None),
        per_query=fr_result.per_query,
        config=config_snapshot(config),
        dc_excluded=dc_result.excluded if dc_result else 0,
    )


# --- ablations ---------------------------------------------------------------

ABLATION_VARIANTS = ("full", "no-discourse", "no-coref", "no-dep", "dense-only")


def ablation_config(variant: str, base: RetrievalConfig) -> RetrievalConfig:
    w = base.weights
    if variant == "full":
        return base
    if variant == "no-discourse":
        # discourse weight folded into the semantic term
        return replace(base, weights=FusionWeights(w.lambda_s + w.lambda_c,
                                                   w.lambda_e, 0.0))
    if variant == "no-coref":
        return replace(base, coref_matching=False)
    if variant == "no-dep":
        # dep posting lists disabled; candidate lookup never consults them,
        # so this variant documents that dependency keys are index-only
        return replace(base, dep_postings=False)
    if variant == "dense-only":
        return replace(base, weights=FusionWeights(1.0, 0.0, 0.0), symbolic_cap=0)
    raise EvalError(f"unknown ablation variant {variant!r}")


@dataclass(frozen=True)
class AblationRow:
    variant: str
    fr: float
    dc: Optional[float]
    per_query: tuple[QueryOutcome, ...]


def run_ablation(store: MemoryStore, queries: Sequence[Query],
                 base_config: Optional[RetrievalConfig] = None) -> list[AblationRow]:
    base_config = base_config or RetrievalConfig()
    rows = []
    dc_queries = [q for q in queries if q.gold is not None
                  and q.gold.coref_assignments is not None]
    for variant in ABLATION_VARIANTS:
        config = ablation_config(variant, base_config)
        fr_result = eval_fr(store, queries, config)
        dc = None
        if dc_queries:
            try:
                dc = eval_dc(store, dc_queries, config).dc
            except EvalError:
                dc = None
        rows.append(AblationRow(variant, fr_result.fr, dc, fr_result.per_query))
    return rows


def ablation_table(rows: list[AblationRow]) -> str:
    full = next(r for r in rows if r.variant == "full")
    lines = [f"{'variant':<14} {'FR':>7} {'dFR':>7} {'DC':>7}"]
    for row in rows:
        dc = f"{row.dc:.3f}" if row.dc is not None else "-"
        lines.append(
            f"{row.variant:<14} {row.fr:>7.3f} {row.fr - full.fr:>+7.3f} {dc:>7}")
    return "\n".join(lines)


# --- latency -----------------------------------------------------------------

@dataclass(frozen=True)
class StageStats:
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float


@dataclass(frozen=True)
class LatencyReport:
    n: int
    warmup: int
    store_size: int
    stages: dict  # stage name -> StageStats
    total: StageStats

    def to_record(self) -> dict:
        def stage(s: StageStats) -> dict:
            return {"mean_ms": s.mean_ms, "p50_ms": s.p50_ms,
                    "p95_ms": s.p95_ms, "p99_ms": s.p99_ms}
        return {
            "n": self.n,
            "warmup": self.warmup,
            "store_size": self.store_size,
            "stages": {name: stage(s) for name, s in self.stages.items()},
            "total": stage(self.total),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_record())


def _percentile(sorted_values: list[float], q: float) -> float:
    """Nearest-rank percentile on a pre-sorted list."""
    if not sorted_values:
        raise EvalError("no samples")
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def _stage_stats(samples: list[float]) -> StageStats:
    ordered = sorted(samples)
    return StageStats(
        mean_ms=sum(ordered) / len(ordered),
        p50_ms=_percentile(ordered, 0.50),
        p95_ms=_percentile(ordered, 0.95),
        p99_ms=_percentile(ordered, 0.99),
    )


def latency_bench(store: MemoryStore, queries: Sequence[Query],
                  config: Optional[RetrievalConfig] = None,
                  warmup: int = 50, n: int = 1000) -> LatencyReport:
    """Per-stage retrieval latency over n measured queries, index warmed.

    Stages run strictly sequentially on one thread so each measurement is
    honest: dense lookup, symbolic lookup, then fusion (scoring + ranking).
    Timing excludes I/O; warmup executions are excluded from statistics.
    The query list is cycled if shorter than warmup + n.
    """
    config = config or RetrievalConfig()
    if n < 1:
        raise EvalError("n must be >= 1")
    if not queries:
        raise EvalError("no queries")
    if len(store) == 0:
        raise EvalError("store is empty")
    dense_lookup = store.dense.search_exact if config.exact_dense else store.dense.search
    stats = store.symbolic.cluster_stats
    dense_ms: list[float] = []
    symbolic_ms: list[float] = []
    fusion_ms: list[float] = []
    total_ms: list[float] = []
    total_runs = warmup + n
    for i in range(total_runs):
        query = queries[i % len(queries)]
        t0 = time.perf_counter()
        dense_ids = {eid for eid, _ in dense_lookup(query.embedding, config.dense_n)}
        t1 = time.perf_counter()
        symbolic_ids = store.symbolic.candidates(query, config.symbolic_cap,
                                                 include_coref=config.coref_matching)
        t2 = time.perf_counter()
        scored = [
            fuse_score(store.entries[eid], query, config.weights, stats,
                       mode=config.discourse_mode,
                       entity_weighting=config.entity_weighting,
                       coref_matching=config.coref_matching)
            for eid in sorted(dense_ids | symbolic_ids)
        ]
        rank_results(scored, store, config.k)
        t3 = time.perf_counter()
        if i >= warmup:
            dense_ms.append((t1 - t0) * 1000)
            symbolic_ms.append((t2 - t1) * 1000)
            fusion_ms.append((t3 - t2) * 1000)
            total_ms.append((t3 - t0) * 1000)
    return LatencyReport(
        n=n,
        warmup=warmup,
        store_size=len(store),
        stages={
            "dense": _stage_stats(dense_ms),
            "symbolic": _stage_stats(symbolic_ms),
            "fusion": _stage_stats(fusion_ms),
        },
        total=_stage_stats(total_ms),
    )
