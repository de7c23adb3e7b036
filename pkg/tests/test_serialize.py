import pytest

from convmem.engine import (
    RetrievalConfig,
    UnknownEntryError,
    format_prompt_timestamp,
    retrieve,
    serialize_context,
    serialize_entry,
)
from convmem.model import (
    DependencyTriple,
    DiscourseLabel,
    EntityMention,
    RankedResult,
)

from conftest import make_entry, small_store

TEMPLATE_ENTRY = dict(
    text="MRI results show early-stage glioma.",
    timestamp="2024-03-14T09:10:00",
    entities=(EntityMention("Dr. Morales", "E42", "PERSON"),),
    dep_triples=(DependencyTriple("show", "nsubj", "results"),
                 DependencyTriple("show", "dobj", "glioma")),
    discourse=(DiscourseLabel("ELABORATION"),),
)

TEMPLATE_BLOCK = (
    "[ENTITY: Dr. Morales | CorefID=E42 | NER=PERSON]\n"
    "[DISCOURSE: ELABORATION]\n"
    '[UTTERANCE @ 2024-03-14 09:10] "MRI results show early-stage glioma."\n'
    "[DEPS: (show-nsubj-results), (show-dobj-glioma)]"
)


class TestTemplate:
    def test_reference_block_byte_exact(self):
        entry = make_entry(42, **TEMPLATE_ENTRY)
        assert serialize_entry(entry, 2) == TEMPLATE_BLOCK

    def test_timestamp_rendering(self):
        assert format_prompt_timestamp("2024-03-14T09:10:00") == "2024-03-14 09:10"
        assert format_prompt_timestamp("2024-03-14 09:10") == "2024-03-14 09:10"


class TestBudget:
    def test_bare_entry_single_utterance_line(self):
        entry = make_entry(0, text="Just words.", timestamp="2024-01-01T10:00:00")
        assert serialize_entry(entry, 2) == \
            '[UTTERANCE @ 2024-01-01 10:00] "Just words."'

    def test_overflow_elides_and_drops_deps(self):
        entry = make_entry(
            0, text="Crowded.",
            entities=tuple(EntityMention(f"P{i}", f"E{i}", "PERSON") for i in range(5)),
            dep_triples=(DependencyTriple("a", "next", "b"),),
            timestamp="2024-01-01T10:00:00",
        )
        block = serialize_entry(entry, 2)
        lines = block.split("\n")
        assert len(lines) == 3  # 2 metadata lines + utterance, no DEPS
        assert lines[0] == "[ENTITY: P0 | CorefID=E0 | NER=PERSON]"
        assert lines[1] == "[ENTITY: P1 | CorefID=E1 | NER=PERSON | +3 more]"
        assert lines[2].startswith("[UTTERANCE @ ")
        assert "+3 more" in block
        assert "[DEPS" not in block

    def test_discourse_counts_against_budget(self):
        entry = make_entry(
            0, text="Two names.",
            entities=(EntityMention("A", "E1", "PERSON"),
                      EntityMention("B", "E2", "PERSON")),
            discourse=(DiscourseLabel("CAUSE"),),
            dep_triples=(DependencyTriple("a", "next", "b"),),
            timestamp="2024-01-01T10:00:00",
        )
        block = serialize_entry(entry, 2)
        # entities fill the budget: discourse and DEPS both dropped
        assert "[DISCOURSE" not in block
        assert "[DEPS" not in block
        assert block.count("[ENTITY") == 2

    def test_larger_budget_keeps_everything(self):
        entry = make_entry(
            0, text="Two names.",
            entities=(EntityMention("A", "E1", "PERSON"),
                      EntityMention("B", "E2", "PERSON")),
            discourse=(DiscourseLabel("CAUSE"),),
            dep_triples=(DependencyTriple("a", "next", "b"),),
            timestamp="2024-01-01T10:00:00",
        )
        block = serialize_entry(entry, 3)
        assert block.count("[ENTITY") == 2
        assert "[DISCOURSE: CAUSE]" in block
        assert "[DEPS: (a-next-b)]" in block

    def test_zero_budget_utterance_only(self):
        entry = make_entry(0, **TEMPLATE_ENTRY)
        block = serialize_entry(entry, 0)
        assert block == '[UTTERANCE @ 2024-03-14 09:10] "MRI results show early-stage glioma."'


class TestContext:
    def test_entries_separated_by_blank_lines(self):
        store = small_store(3)
        query_emb = store.entries[0].embedding
        from convmem.model import Query
        results = retrieve(store, Query(text="q", embedding=query_emb),
                           RetrievalConfig(dense_n=3, k=2))
        text = serialize_context(results, store)
        assert text.count("\n\n") == 1
        assert text.count("[UTTERANCE") == 2

    def test_unknown_entry_rejected(self):
        store = small_store(2)
        fake = RankedResult(entry_id=99, score=0.0, sim_term=0.0,
                            entity_term=0.0, discourse_term=0.0)
        with pytest.raises(UnknownEntryError):
            serialize_context([fake], store)

    def test_serialization_deterministic(self):
        entry = make_entry(7, **TEMPLATE_ENTRY)
        assert serialize_entry(entry, 2) == serialize_entry(entry, 2)
