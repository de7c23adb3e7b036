import pytest

from convmem_bridge.config import (
    BridgeConfig,
    BridgeModelError,
    load_coref,
    load_discourse,
    load_embedder,
    load_parser,
)
from convmem_bridge.coref import ChainResolver
from convmem_bridge.discourse import ConnectiveClassifier, load_sense_map, map_sense
from convmem_bridge.embedder import HashGramEmbedder
from convmem_bridge.parsers import SvoParser, verb_lemma


class TestConfig:
    def test_defaults_resolve(self):
        config = BridgeConfig()
        assert load_parser(config).name == "builtin-svo"
        assert load_coref(config).name == "builtin-chains"
        assert load_discourse(config).name == "builtin-connectives"
        assert load_embedder(config).name == "hashgram"

    def test_empty_identifier_rejected(self):
        with pytest.raises(ValueError):
            BridgeConfig(parser="")

    def test_batch_size_bound(self):
        with pytest.raises(ValueError):
            BridgeConfig(batch_size=0)

    def test_unknown_backend_is_model_error(self):
        with pytest.raises(BridgeModelError, match="unknown parser"):
            load_parser(BridgeConfig(parser="mystery-model"))

    def test_spacy_adapter_reports_load_failure_when_unavailable(self):
        # uniform error whether the runtime or just the model is missing
        with pytest.raises(BridgeModelError, match="model load failure"):
            load_parser(BridgeConfig(parser="spacy:none_such_model"))


class TestSvoParser:
    def test_glioma_sentence_patterns(self):
        triples = SvoParser().parse("MRI results show early-stage glioma.")
        labels = {(h, l) for h, l, _ in triples}
        assert ("show", "nsubj") in labels
        assert ("show", "dobj") in labels
        nsubj_child = next(c for h, l, c in triples if l == "nsubj")
        dobj_child = next(c for h, l, c in triples if l == "dobj")
        assert nsubj_child == "results"
        assert dobj_child == "glioma"

    def test_inflected_verb_lemmatized(self):
        triples = SvoParser().parse("Alice confirmed the taxi booking.")
        assert any(h == "confirm" and l == "nsubj" and c == "alice"
                   for h, l, c in triples)
        assert any(h == "confirm" and l == "dobj" for h, l, c in triples)

    def test_prepositional_edge(self):
        triples = SvoParser().parse("Alice booked a table for nine.")
        assert ("book", "prep_for", "nine") in triples

    def test_determiner_blocks_verb_reading(self):
        # "the show" is a noun phrase, not the main verb
        triples = SvoParser().parse("The show started late.")
        assert any(h == "start" and l == "nsubj" and c == "show"
                   for h, l, c in triples)

    def test_no_verb_no_triples(self):
        assert SvoParser().parse("A quiet gray morning.") == []
        assert SvoParser().parse("") == []

    def test_verb_lemma_forms(self):
        assert verb_lemma("shows") == "show"
        assert verb_lemma("showing") == "show"
        assert verb_lemma("showed") == "show"
        assert verb_lemma("confirmed") == "confirm"
        assert verb_lemma("scheduling") == "schedule"
        assert verb_lemma("banana") is None

    def test_triples_colon_free(self):
        for h, l, c in SvoParser().parse("Alice booked ta:xi seats."):
            assert ":" not in h and ":" not in c


class TestChainResolver:
    def test_same_name_same_cluster(self):
        r = ChainResolver()
        a = r.resolve_turn("sys", "John booked a taxi.")
        b = r.resolve_turn("sys", "John confirmed it later.")
        assert a[0].coref_id == b[0].coref_id

    def test_title_and_surname_link(self):
        r = ChainResolver()
        a = r.resolve_turn("sys", "Dr. Morales called this morning.")
        b = r.resolve_turn("sys", "Morales confirmed the visit.")
        assert a[0].coref_id == b[0].coref_id

    def test_pronoun_gender_compatibility(self):
        r = ChainResolver()
        r.resolve_turn("sys", "Alice met Bob at the station.")
        mentions = r.resolve_turn("sys", "She thanked him warmly.")
        by_name = {m.name.lower(): m for m in mentions}
        assert by_name["she"].cluster.canonical == "Alice"
        assert by_name["him"].cluster.canonical == "Bob"

    def test_it_skips_people(self):
        r = ChainResolver()
        r.resolve_turn("sys", "Alice liked the Parkview Hotel.")
        mentions = r.resolve_turn("sys", "It was lovely.")
        assert mentions[0].cluster.canonical == "Parkview Hotel"

    def test_first_and_second_person(self):
        r = ChainResolver()
        first = r.resolve_turn("Alice", "I need a taxi.")
        second = r.resolve_turn("Agent", "You asked me about that yesterday.")
        assert first[0].cluster.canonical == "Alice"
        by_name = {m.name.lower(): m for m in second}
        assert by_name["you"].cluster.canonical == "Alice"
        assert by_name["me"].cluster.canonical == "Agent"

    def test_cluster_ids_stable_within_dialogue(self):
        r = ChainResolver()
        seen = {}
        for text in ("Alice arrived.", "Bob waved at Alice.", "She waved back."):
            for m in r.resolve_turn("sys", text):
                seen.setdefault(m.cluster.canonical, set()).add(m.coref_id)
        assert all(len(ids) == 1 for ids in seen.values())

    def test_start_dialogue_resets(self):
        r = ChainResolver()
        a = r.resolve_turn("sys", "Alice arrived.")
        r.start_dialogue()
        b = r.resolve_turn("sys", "Bob arrived.")
        # ids restart per dialogue: different names land on the same id
        assert b[0].coref_id == a[0].coref_id

    def test_spans_slice_text(self):
        r = ChainResolver()
        text = "Maybe Dr. Morales and the Parkview Hotel can wait."
        for m in r.resolve_turn("sys", text):
            assert text[m.start:m.end] == m.name


class TestDiscourse:
    def test_connective_senses(self):
        c = ConnectiveClassifier()
        assert c.classify("Because we were late, we missed it.") == "Contingency.Cause"
        assert c.classify("But the hotel was full.") == "Comparison.Contrast"
        assert c.classify("If it rains, cancel.") == "Contingency.Condition"
        assert c.classify("After lunch we left.") == "Temporal.Asynchronous"
        assert c.classify("For example the metro works.") == "Expansion.Instantiation"
        assert c.classify("Plain statement here.") == "Expansion.Default"

    def test_mid_sentence_connective(self):
        sense = ConnectiveClassifier().classify("We waited because the taxi was late.")
        assert sense == "Contingency.Cause"

    def test_packaged_map_covers_builtin_senses(self):
        sense_map = load_sense_map()
        c = ConnectiveClassifier()
        from convmem_bridge.discourse import CONNECTIVE_SENSES, DEFAULT_SENSE
        for sense in set(CONNECTIVE_SENSES.values()) | {DEFAULT_SENSE}:
            assert sense in sense_map

    def test_unmappable_sense_preserved_as_other(self):
        assert map_sense("Weird.Sense", {}) == "OTHER(WEIRD.SENSE)"
        assert map_sense("Contingency.Cause", {"Contingency.Cause": "CAUSE"}) == "CAUSE"

    def test_custom_map_file(self, tmp_path):
        path = tmp_path / "map.json"
        path.write_text('{"Contingency.Cause": "CAUSE"}', encoding="utf-8")
        assert load_sense_map(path) == {"Contingency.Cause": "CAUSE"}


class TestHashGramEmbedder:
    def test_unit_norm_and_deterministic(self):
        emb = HashGramEmbedder(64)
        a = emb.embed_batch(["book a taxi", "weather tomorrow"])
        b = emb.embed_batch(["book a taxi", "weather tomorrow"])
        assert a == b
        for vec in a:
            norm = sum(v * v for v in vec) ** 0.5
            assert norm == pytest.approx(1.0, abs=1e-9)

    def test_dimension(self):
        assert len(HashGramEmbedder(32).embed_batch(["hello"])[0]) == 32
        with pytest.raises(ValueError):
            HashGramEmbedder(4)

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            HashGramEmbedder(16).embed_batch(["..."])
