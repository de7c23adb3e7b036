"""Command-line surface: ingest, query, tune, eval, sessionize, synth,
bench, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 store corruption.
A JSON config file (--config) supplies defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .corpus import (
    LongRangeConfig,
    SessionizerConfig,
    SyntheticSpec,
    audit,
    extend_long_range,
    make_synthetic,
    sessionize,
)
from .dense import HnswParams
from .engine import (
    RetrievalConfig,
    retrieve,
    serialize_context,
    tune_weights,
)
from .evaluate import (
    ablation_table,
    evaluate,
    latency_bench,
    run_ablation,
)
from .ingest import (
    IngestError,
    canonical_json,
    read_annotated,
    turn_to_query,
    write_annotated,
)
from .model import DEFAULT_DIM, FusionWeights, Query
from .store import (
    MemoryStore,
    StoreCorruptionError,
    StoreError,
    ingest_corpus,
    open_store,
    read_manifest,
    save_store,
)
from .toynlp import toy_embed, toy_query_features

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CORRUPT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        cfg = json.load(handle)
    if not isinstance(cfg, dict):
        raise IngestError("config file must hold a JSON object")
    return cfg


def _get(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _parse_weights(text) -> FusionWeights:
    if isinstance(text, (list, tuple)):
        parts = [float(x) for x in text]
    else:
        parts = [float(x) for x in str(text).split(",")]
    if len(parts) != 3:
        raise ValueError("weights must be three comma-separated numbers")
    return FusionWeights(*parts)


def _retrieval_config(args, config: dict) -> RetrievalConfig:
    weights = _get(args, config, "weights", None)
    return RetrievalConfig(
        weights=_parse_weights(weights) if weights is not None else FusionWeights.default(),
        dense_n=int(_get(args, config, "dense_n", 50)),
        symbolic_cap=int(_get(args, config, "symbolic_cap", 200)),
        k=int(_get(args, config, "k", 5)),
        discourse_mode=_get(args, config, "discourse_mode", "graded"),
        exact_dense=bool(_get(args, config, "exact", False)),
        entity_weighting=_get(args, config, "entity_weighting", "log"),
    )


def _load_queries(args, config, store) -> list[Query]:
    path = _get(args, config, "queries", None)
    if path:
        dim = store.dim if store is not None else None
        embedder = (lambda text: toy_embed(text, dim)) if getattr(args, "toy_embed", False) else None
        dialogues = read_annotated(path, embedder=embedder, expected_dim=dim)
        queries = [turn_to_query(turn) for d in dialogues
                   for _s, turn in d.turns() if turn.is_query]
    elif store is not None:
        queries = store.stored_queries()
    else:
        queries = []
    if not queries:
        raise IngestError("no gold-bearing query turns found")
    return queries


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


# --- commands ----------------------------------------------------------------

def cmd_ingest(args) -> int:
    config = _load_config(args.config)
    dim = int(_get(args, config, "dim", DEFAULT_DIM))
    params = HnswParams(
        m=int(_get(args, config, "hnsw_m", 32)),
        ef_construction=int(_get(args, config, "ef_construction", 200)),
        ef_search=int(_get(args, config, "ef_search", 128)),
        seed=int(_get(args, config, "seed", 0)),
    )
    embedder = (lambda text: toy_embed(text, dim)) if args.toy_embed else None
    if os.path.exists(os.path.join(args.store, "manifest.json")):
        store = open_store(args.store)
        if store.dim != dim and args.dim is not None:
            raise IngestError(f"store dim {store.dim} != requested {dim}")
    else:
        store = MemoryStore(dim, params, index_queries=args.include_query_turns)
    total = {"indexed": 0, "query_turns": 0, "total": 0, "files": 0}
    for path in args.inputs:
        dialogues = read_annotated(path, embedder=embedder, expected_dim=store.dim)
        summary = ingest_corpus(store, dialogues)
        for key in ("indexed", "query_turns", "total"):
            total[key] += summary[key]
        total["files"] += 1
    manifest = save_store(store, args.store)
    print(f"ingested {total['total']} turns from {total['files']} file(s): "
          f"{total['indexed']} indexed, {total['query_turns']} query turns logged")
    print(f"store: {args.store} (entries={manifest['entry_count']}, dim={store.dim})")
    return EXIT_OK


def cmd_query(args) -> int:
    config = _load_config(args.config)
    store = open_store(args.store)
    rconfig = _retrieval_config(args, config)
    if args.text is not None:
        history = []
        for entry in store.entries.values():
            history.extend(entry.entities)
        entities, discourse = toy_query_features(args.text, history)
        query = Query(text=args.text, embedding=toy_embed(args.text, store.dim),
                      entities=tuple(entities), discourse=tuple(discourse))
        print("# toy-mode query: entities/discourse/embedding are heuristic")
    else:
        queries = _load_queries(args, config, store)
        index = args.query_index or 0
        if index >= len(queries):
            raise IngestError(f"query index {index} out of range ({len(queries)} queries)")
        query = queries[index]
    results = retrieve(store, query, rconfig)
    for rank, res in enumerate(results, start=1):
        entry = store.entries[res.entry_id]
        print(f"{rank:>2}. id={res.entry_id} score={res.score:.6f} "
              f"(sim={res.sim_term:.4f} ent={res.entity_term:.4f} "
              f"disc={res.discourse_term:.4f}) "
              f"[{entry.dialogue_id} s{entry.session_id} t{entry.turn_id}] "
              f"{entry.utterance!r}")
    if args.serialize:
        print()
        print(serialize_context(results, store, args.budget))
    return EXIT_OK


def cmd_tune(args) -> int:
    config = _load_config(args.config)
    store = open_store(args.store)
    queries = _load_queries(args, config, store)
    rconfig = _retrieval_config(args, config)
    result = tune_weights(store, queries, rconfig,
                          grid_step=float(_get(args, config, "grid_step", 0.05)))
    print(f"{'lambda_s':>9} {'lambda_e':>9} {'lambda_c':>9} {'FR':>7}")
    for weights, fr in result.table:
        print(f"{weights.lambda_s:>9.2f} {weights.lambda_e:>9.2f} "
              f"{weights.lambda_c:>9.2f} {fr:>7.3f}")
    best = result.weights
    print(f"best: lambda_s={best.lambda_s:.2f} lambda_e={best.lambda_e:.2f} "
          f"lambda_c={best.lambda_c:.2f} (FR={result.fr:.3f})")
    if args.out:
        rows = [{"lambda_s": w.lambda_s, "lambda_e": w.lambda_e,
                 "lambda_c": w.lambda_c, "fr": fr} for w, fr in result.table]
        _emit(canonical_json({"best": rows and {
            "lambda_s": best.lambda_s, "lambda_e": best.lambda_e,
            "lambda_c": best.lambda_c, "fr": result.fr}, "grid": rows}), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    store = open_store(args.store)
    queries = _load_queries(args, config, store)
    rconfig = _retrieval_config(args, config)
    if args.ablation:
        rows = run_ablation(store, queries, rconfig)
        print(ablation_table(rows))
        if args.out:
            _emit("\n".join(canonical_json(
                {"variant": r.variant, "fr": r.fr, "dc": r.dc}) for r in rows),
                args.out)
        return EXIT_OK
    report = evaluate(store, queries, rconfig, runs=int(_get(args, config, "runs", 1)))
    dc = f"{report.dc:.4f}" if report.dc is not None else "n/a"
    print(f"FR={report.fr:.4f} DC={dc} over {len(queries)} queries "
          f"(runs={report.runs})")
    if report.runs > 1:
        dc_std = "n/a" if report.dc_std is None else f"{report.dc_std:.6f}"
        print(f"fr_std={report.fr_std:.6f} dc_std={dc_std}")
    if args.out:
        _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_sessionize(args) -> int:
    config = _load_config(args.config)
    embedder = ((lambda text: toy_embed(text, args.dim or DEFAULT_DIM))
                if args.toy_embed else None)
    dialogues = read_annotated(args.input, embedder=embedder)
    seed = int(_get(args, config, "seed", 0))
    if args.long_range:
        cfg = LongRangeConfig(
            boundary_min=int(_get(args, config, "boundary_min", 6)),
            boundary_max=int(_get(args, config, "boundary_max", 10)),
            rng_seed=seed,
        )
        out, base = [], 0
        for dialogue in dialogues:
            out.append(extend_long_range(dialogue, cfg, id_base=base))
            base += dialogue.turn_count()
    else:
        cfg = SessionizerConfig(
            turn_budget_min=int(_get(args, config, "budget_min", 8)),
            turn_budget_max=int(_get(args, config, "budget_max", 12)),
            rng_seed=seed,
            audit_fraction=float(_get(args, config, "audit_fraction", 0.05)),
        )
        out = [sessionize(d, cfg) for d in dialogues]
    if args.out:
        write_annotated(args.out, out)
        print(f"wrote {len(out)} dialogue(s) to {args.out}")
    if args.audit:
        scfg = SessionizerConfig(rng_seed=seed,
                                 audit_fraction=float(_get(args, config, "audit_fraction", 0.05)))
        report = audit(out, scfg)
        for rec in report.to_records():
            print(canonical_json(rec))
        print(f"audit: {report.audited}/{report.total} sampled, "
              f"pass fraction {report.pass_fraction:.2f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    spec = SyntheticSpec(
        n_dialogues=int(_get(args, config, "dialogues", 10)),
        lexical_per_dialogue=int(_get(args, config, "lexical", 2)),
        entity_per_dialogue=int(_get(args, config, "entity", 2)),
        discourse_per_dialogue=int(_get(args, config, "discourse", 1)),
        distractors_per_query=int(_get(args, config, "distractors", 5)),
        sessions_per_dialogue=int(_get(args, config, "sessions", 3)),
        session_distance=args.session_distance,
        dim=int(_get(args, config, "dim", 256)),
        seed=int(_get(args, config, "seed", 0)),
    )
    corpus = make_synthetic(spec)
    write_annotated(args.out, corpus)
    turns = sum(d.turn_count() for d in corpus)
    queries = sum(1 for d in corpus for _s, t in d.turns() if t.is_query)
    print(f"wrote {len(corpus)} dialogues / {turns} turns / {queries} queries to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config(args.config)
    store = open_store(args.store)
    queries = _load_queries(args, config, store)
    rconfig = _retrieval_config(args, config)
    report = latency_bench(store, queries, rconfig,
                           warmup=int(_get(args, config, "warmup", 50)),
                           n=int(_get(args, config, "n", 1000)))
    print(f"store={report.store_size} entries, n={report.n}, warmup={report.warmup}")
    for name in ("dense", "symbolic", "fusion"):
        s = report.stages[name]
        print(f"{name:>9}: mean={s.mean_ms:.3f} ms p50={s.p50_ms:.3f} "
              f"p95={s.p95_ms:.3f} p99={s.p99_ms:.3f}")
    t = report.total
    print(f"{'total':>9}: mean={t.mean_ms:.3f} ms p50={t.p50_ms:.3f} "
          f"p95={t.p95_ms:.3f} p99={t.p99_ms:.3f}")
    if args.out:
        _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_inspect(args) -> int:
    manifest = read_manifest(args.store)
    print(canonical_json(manifest))
    store = open_store(args.store)
    counts = store.symbolic.key_counts()
    print(f"entries={len(store)} query_turns={store.query_count} "
          f"posting_keys={sum(counts.values())}")
    for prefix in sorted(counts):
        print(f"  {prefix}: {counts[prefix]} keys")
    stats = store.symbolic.cluster_stats
    top = sorted(stats.as_dict().items(), key=lambda kv: (-kv[1], kv[0]))[:10]
    print("largest coreference clusters:")
    for coref_id, count in top:
        print(f"  {coref_id}: {count} mentions")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="convmem",
                     description="hybrid dense+symbolic dialogue memory engine")
    parser.add_argument("--version", action="version", version=f"convmem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="read annotated records into a store")
    p.add_argument("inputs", nargs="+", help="annotated record files (JSONL)")
    p.add_argument("--store", required=True)
    p.add_argument("--config")
    p.add_argument("--dim", type=int)
    p.add_argument("--hnsw-m", dest="hnsw_m", type=int)
    p.add_argument("--ef-construction", dest="ef_construction", type=int)
    p.add_argument("--ef-search", dest="ef_search", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--toy-embed", action="store_true",
                   help="synthesize missing embeddings with the toy embedder")
    p.add_argument("--include-query-turns", action="store_true",
                   help="index gold-bearing turns instead of logging them")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="retrieve memory entries")
    p.add_argument("--store", required=True)
    p.add_argument("--config")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="raw query text (toy-mode annotation)")
    group.add_argument("--queries", help="annotated record file with gold turns")
    p.add_argument("--query-index", type=int, default=0)
    p.add_argument("--toy-embed", action="store_true")
    p.add_argument("--k", type=int)
    p.add_argument("--weights", help="lambda_s,lambda_e,lambda_c (simplex)")
    p.add_argument("--dense-n", dest="dense_n", type=int)
    p.add_argument("--symbolic-cap", dest="symbolic_cap", type=int)
    p.add_argument("--discourse-mode", dest="discourse_mode",
                   choices=("graded", "binary"))
    p.add_argument("--exact", action="store_true", default=None,
                   help="exhaustive dense search instead of the graph")
    p.add_argument("--serialize", action="store_true",
                   help="emit the tagged context prompt for the results")
    p.add_argument("--budget", type=int, default=2,
                   help="metadata lines per serialized entry")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("tune", help="grid-search fusion weights for best FR")
    p.add_argument("--store", required=True)
    p.add_argument("--config")
    p.add_argument("--queries")
    p.add_argument("--toy-embed", action="store_true")
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--dense-n", dest="dense_n", type=int)
    p.add_argument("--symbolic-cap", dest="symbolic_cap", type=int)
    p.add_argument("--exact", action="store_true", default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="factual recall / discourse coherence")
    p.add_argument("--store", required=True)
    p.add_argument("--config")
    p.add_argument("--queries")
    p.add_argument("--toy-embed", action="store_true")
    p.add_argument("--k", type=int)
    p.add_argument("--weights")
    p.add_argument("--dense-n", dest="dense_n", type=int)
    p.add_argument("--symbolic-cap", dest="symbolic_cap", type=int)
    p.add_argument("--exact", action="store_true", default=None)
    p.add_argument("--runs", type=int)
    p.add_argument("--ablation", action="store_true",
                   help="run the five-variant ablation table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sessionize", help="split dialogues into sessions")
    p.add_argument("input", help="annotated record file")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--toy-embed", action="store_true")
    p.add_argument("--budget-min", dest="budget_min", type=int)
    p.add_argument("--budget-max", dest="budget_max", type=int)
    p.add_argument("--long-range", action="store_true",
                   help="boundary insertion + pronoun rewrites instead of "
                        "goal/budget sessionization")
    p.add_argument("--boundary-min", dest="boundary_min", type=int)
    p.add_argument("--boundary-max", dest="boundary_max", type=int)
    p.add_argument("--audit", action="store_true")
    p.add_argument("--audit-fraction", dest="audit_fraction", type=float)
    p.set_defaults(func=cmd_sessionize)

    p = sub.add_parser("synth", help="generate a synthetic evaluation corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--dialogues", type=int)
    p.add_argument("--lexical", type=int)
    p.add_argument("--entity", type=int)
    p.add_argument("--discourse", type=int)
    p.add_argument("--distractors", type=int)
    p.add_argument("--sessions", type=int)
    p.add_argument("--session-distance", dest="session_distance", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="latency benchmark (warmed index)")
    p.add_argument("--store", required=True)
    p.add_argument("--config")
    p.add_argument("--queries")
    p.add_argument("--toy-embed", action="store_true")
    p.add_argument("--n", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--weights")
    p.add_argument("--dense-n", dest="dense_n", type=int)
    p.add_argument("--symbolic-cap", dest="symbolic_cap", type=int)
    p.add_argument("--exact", action="store_true", default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="dump manifest and posting statistics")
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StoreCorruptionError as exc:
        print(f"error: store corruption: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (IngestError, StoreError, ValueError, LookupError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
