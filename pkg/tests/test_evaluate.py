from dataclasses import replace

import pytest

from convmem.engine import RetrievalConfig, retrieve
from convmem.evaluate import (
    ABLATION_VARIANTS,
    EvalError,
    ablation_config,
    ablation_table,
    eval_dc,
    eval_fr,
    evaluate,
    latency_bench,
    run_ablation,
)
from convmem.corpus import SyntheticSpec, make_synthetic
from convmem.model import (
    EntityMention,
    FusionWeights,
    GoldInfo,
    Query,
)
from convmem.store import build_store

from conftest import make_entry, small_store


def gold_query(store, entry_id, span="", assignments=None, k_embedding=None):
    return Query(
        text=f"asking about {entry_id}",
        embedding=k_embedding or store.entries[entry_id].embedding,
        gold=GoldInfo((entry_id,), span, assignments),
    )


@pytest.fixture(scope="module")
def synth_env():
    spec = SyntheticSpec(n_dialogues=8, seed=13)
    corpus = make_synthetic(spec)
    store = build_store(corpus, dim=spec.dim)
    return store, store.stored_queries()


class TestEvalFr:
    def test_exhaustive_retrieval_perfect_recall(self):
        store = small_store(6)
        queries = [gold_query(store, i) for i in range(6)]
        config = RetrievalConfig(dense_n=6, k=6, exact_dense=True)
        assert eval_fr(store, queries, config).fr == 1.0

    def test_absent_gold_zero(self):
        store = small_store(6)
        queries = [Query(text="q", embedding=store.entries[0].embedding,
                         gold=GoldInfo((999,), "no such span anywhere"))]
        assert eval_fr(store, queries, RetrievalConfig(dense_n=6, k=6)).fr == 0.0

    def test_span_hit_counts(self):
        store = small_store(6)
        queries = [Query(text="q", embedding=store.entries[3].embedding,
                         gold=GoldInfo((999,), "utterance number 3"))]
        result = eval_fr(store, queries, RetrievalConfig(dense_n=6, k=2,
                                                         exact_dense=True))
        assert result.fr == 1.0
        assert result.per_query[0].hit_type == "span"

    def test_missing_gold_rejected(self):
        store = small_store(3)
        with pytest.raises(EvalError, match="gold"):
            eval_fr(store, [Query(text="q", embedding=store.entries[0].embedding)],
                    RetrievalConfig(dense_n=3, k=3))

    def test_monotone_in_k(self, synth_env):
        store, queries = synth_env
        config = RetrievalConfig(exact_dense=True)
        last = 0.0
        for k in (1, 2, 5, 10):
            fr = eval_fr(store, queries, replace(config, k=k, dense_n=max(50, k))).fr
            assert fr >= last - 1e-12
            last = fr

    def test_matches_membership_oracle(self, synth_env):
        # id-only criterion equals a set computation over retrieve() output
        store, queries = synth_env
        config = RetrievalConfig(exact_dense=True)
        id_only = [replace_gold_span(q) for q in queries]
        result = eval_fr(store, id_only, config)
        expected = 0
        for q in id_only:
            top = {r.entry_id for r in retrieve(store, q, config)}
            expected += bool(top & set(q.gold.supporting_entry_ids))
        assert result.fr == expected / len(id_only)


def replace_gold_span(q):
    return Query(text=q.text, embedding=q.embedding, entities=q.entities,
                 discourse=q.discourse,
                 gold=GoldInfo(q.gold.supporting_entry_ids, "", q.gold.coref_assignments),
                 query_class=q.query_class)


class TestEvalDc:
    def _store(self):
        store = small_store(0)
        ann = EntityMention("Ann", "E1", "PERSON")
        bob_good = EntityMention("Bob", "E2", "PERSON")
        bob_bad = EntityMention("Bob", "E9", "PERSON")
        store.add_entry(make_entry(0, text="Ann spoke first", entities=(ann,)))
        store.add_entry(make_entry(1, text="Bob answered", entities=(bob_good,)))
        store.add_entry(make_entry(2, text="Bob again", entities=(bob_bad,)))
        return store

    def test_all_correct_dc_one(self):
        store = self._store()
        q = gold_query(store, 0, assignments={"Ann": "E1"})
        config = RetrievalConfig(dense_n=3, k=1, exact_dense=True)
        assert eval_dc(store, [q], config).dc == 1.0

    def test_single_mismatch_zero(self):
        store = self._store()
        q = Query(text="q", embedding=store.entries[2].embedding,
                  gold=GoldInfo((2,), "", {"Bob": "E2"}))
        config = RetrievalConfig(dense_n=3, k=1, exact_dense=True)
        assert eval_dc(store, [q], config).dc == 0.0

    def test_mean_over_queries(self):
        # query 1 sees only correct mentions (1.0); query 2 sees one correct
        # and one wrong Bob (0.5): dc = 0.75
        store = self._store()
        q1 = Query(text="q", embedding=store.entries[0].embedding,
                   gold=GoldInfo((0,), "", {"Ann": "E1"}))
        q2 = Query(text="q", embedding=store.entries[1].embedding,
                   gold=GoldInfo((1,), "", {"Bob": "E2"}))
        config = RetrievalConfig(dense_n=3, k=3, exact_dense=True)
        result = eval_dc(store, [q1, q2], config)
        per = {o.query_index: o.score for o in result.per_query}
        assert per[0] == 1.0 and per[1] == 0.5
        assert result.dc == pytest.approx(0.75)

    def test_no_comparable_entities_rejected(self):
        store = self._store()
        q = gold_query(store, 0, assignments={"Nobody": "E1"})
        with pytest.raises(EvalError, match="comparable"):
            eval_dc(store, [q], RetrievalConfig(dense_n=3, k=1))

    def test_queries_without_comparables_excluded(self):
        store = self._store()
        q1 = gold_query(store, 0, assignments={"Ann": "E1"})
        q2 = gold_query(store, 0, assignments={"Nobody": "E1"})
        result = eval_dc(store, [q1, q2], RetrievalConfig(dense_n=3, k=1,
                                                          exact_dense=True))
        assert result.excluded == 1
        assert result.dc == 1.0


class TestAblation:
    def test_dense_only_equals_manual_config(self, synth_env):
        store, queries = synth_env
        base = RetrievalConfig(exact_dense=True)
        rows = run_ablation(store, queries, base)
        dense_row = next(r for r in rows if r.variant == "dense-only")
        manual = eval_fr(store, queries,
                         replace(base, weights=FusionWeights(1, 0, 0), symbolic_cap=0))
        assert [o.recalled for o in dense_row.per_query] == \
            [o.recalled for o in manual.per_query]

    def test_expected_orderings(self, synth_env):
        store, queries = synth_env
        rows = {r.variant: r for r in run_ablation(store, queries,
                                                   RetrievalConfig(exact_dense=True))}
        assert set(rows) == set(ABLATION_VARIANTS)
        assert rows["full"].fr >= rows["no-dep"].fr >= rows["dense-only"].fr
        assert rows["full"].fr - rows["dense-only"].fr >= 0.10

    def test_no_coref_drops_pronoun_queries_strictly(self, synth_env):
        store, queries = synth_env
        pronoun_queries = [q for q in queries if q.query_class == "entity"]
        base = RetrievalConfig(exact_dense=True)
        full = eval_fr(store, pronoun_queries, base).fr
        nocoref = eval_fr(store, pronoun_queries,
                          ablation_config("no-coref", base)).fr
        assert nocoref < full

    def test_no_discourse_drops_discourse_queries_strictly(self, synth_env):
        store, queries = synth_env
        disc_queries = [q for q in queries if q.query_class == "discourse"]
        base = RetrievalConfig(exact_dense=True)
        full = eval_fr(store, disc_queries, base).fr
        nodisc = eval_fr(store, disc_queries,
                         ablation_config("no-discourse", base)).fr
        assert nodisc < full

    def test_no_discourse_moves_mass_to_sim(self):
        cfg = ablation_config("no-discourse", RetrievalConfig())
        w = cfg.weights
        assert w.lambda_c == 0.0
        assert w.lambda_s == pytest.approx(0.75)
        assert w.lambda_e == pytest.approx(0.25)

    def test_table_renders(self, synth_env):
        store, queries = synth_env
        rows = run_ablation(store, queries, RetrievalConfig(exact_dense=True))
        text = ablation_table(rows)
        assert "dense-only" in text and "dFR" in text


class TestEvaluateReport:
    def test_std_zero_over_three_runs(self, synth_env):
        store, queries = synth_env
        report = evaluate(store, queries, RetrievalConfig(exact_dense=True), runs=3)
        assert report.runs == 3
        assert report.fr_std == 0.0
        assert report.dc_std == 0.0

    def test_report_bytes_deterministic(self, synth_env):
        store, queries = synth_env
        config = RetrievalConfig(exact_dense=True)
        a = evaluate(store, queries, config).to_json()
        b = evaluate(store, queries, config).to_json()
        assert a == b

    def test_std_absent_for_single_run(self, synth_env):
        store, queries = synth_env
        report = evaluate(store, queries, RetrievalConfig(exact_dense=True))
        assert report.fr_std is None
        assert "fr_std" not in report.to_record()


class TestLatencyBench:
    def test_single_measurement_stats(self):
        store = small_store(10)
        q = Query(text="q", embedding=store.entries[0].embedding)
        report = latency_bench(store, [q], RetrievalConfig(dense_n=5), warmup=1, n=1)
        for stage in report.stages.values():
            assert stage.mean_ms == stage.p50_ms == stage.p95_ms == stage.p99_ms

    def test_stage_accounting_bounds(self):
        store = small_store(32)
        queries = [Query(text=f"q{i}", embedding=store.entries[i].embedding)
                   for i in range(8)]
        report = latency_bench(store, queries, RetrievalConfig(dense_n=10),
                               warmup=4, n=40)
        stage_sum = sum(s.mean_ms for s in report.stages.values())
        assert stage_sum >= max(s.mean_ms for s in report.stages.values())
        assert stage_sum <= report.total.mean_ms + 1e-6

    def test_empty_queries_rejected(self):
        store = small_store(4)
        with pytest.raises(EvalError):
            latency_bench(store, [], warmup=0, n=5)

    def test_report_serializes(self):
        store = small_store(8)
        q = Query(text="q", embedding=store.entries[0].embedding)
        report = latency_bench(store, [q], warmup=0, n=3)
        record = report.to_record()
        assert record["n"] == 3
        assert set(record["stages"]) == {"dense", "symbolic", "fusion"}
        assert report.to_json().startswith("{")
