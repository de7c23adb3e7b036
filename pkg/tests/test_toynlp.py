import hashlib
from collections import Counter

import math
import pytest
from hypothesis import given, settings, strategies as st

from convmem.model import EntityMention
from convmem.toynlp import classify_ner, tokenize, toy_annotate, toy_embed


class TestToyAnnotate:
    def test_single_capitalized_token_becomes_entity(self):
        entities, _, _ = toy_annotate("John booked a taxi.")
        assert len(entities) == 1
        assert entities[0].name == "John"
        assert entities[0].ner_type == "PERSON"
        assert entities[0].coref_id

    def test_pronoun_links_to_most_recent_compatible(self):
        history = [EntityMention("John", "T1", "PERSON")]
        entities, _, _ = toy_annotate("He confirmed it.", history)
        assert any(e.name == "He" and e.coref_id == "T1" for e in entities)

    def test_unresolvable_pronoun_skipped(self):
        entities, _, _ = toy_annotate("He confirmed it.")
        assert entities == []

    def test_it_requires_non_person(self):
        history = [
            EntityMention("John", "T1", "PERSON"),
            EntityMention("Parkview Hotel", "T2", "ORG"),
        ]
        entities, _, _ = toy_annotate("It was lovely.", history)
        assert entities[0].coref_id == "T2"

    def test_multiword_entity_single_mention(self):
        entities, _, _ = toy_annotate("We liked the Parkview Hotel greatly.")
        assert [e.name for e in entities] == ["Parkview Hotel"]
        assert entities[0].ner_type == "ORG"

    def test_name_reuse_keeps_coref_id(self):
        first, _, _ = toy_annotate("John arrived.")
        second, _, _ = toy_annotate("Later John left.", first)
        assert second[0].coref_id == first[0].coref_id

    def test_discourse_cues(self):
        for text, label in [
            ("But the hotel was full.", "CONTRAST"),
            ("However it rained.", "CONTRAST"),
            ("And another thing happened.", "ELABORATION"),
            ("Also worth noting.", "ELABORATION"),
            ("Because we were late.", "CAUSE"),
            ("So we left early.", "CAUSE"),
            ("The rest was quiet.", "EXPANSION"),
        ]:
            _, _, discourse = toy_annotate(text)
            assert [d.canonical for d in discourse] == [label], text

    def test_dep_triples_adjacent_nonstopword(self):
        _, triples, _ = toy_annotate("John booked a taxi.")
        assert [(t.head, t.label, t.child) for t in triples] == [
            ("john", "next", "booked"),
            ("booked", "next", "taxi"),
        ]

    def test_spans_index_into_text(self):
        text = "Maybe Dr Morales can help."
        entities, _, _ = toy_annotate(text)
        assert len(entities) == 1
        start, end = entities[0].span
        assert text[start:end] == entities[0].name == "Dr Morales"

    def test_deterministic(self):
        history = [EntityMention("Anna", "T1", "PERSON")]
        a = toy_annotate("She met Bob because of Anna.", history)
        b = toy_annotate("She met Bob because of Anna.", history)
        assert a == b


class TestClassifyNer:
    def test_buckets(self):
        assert classify_ner("Parkview Hotel") == "ORG"
        assert classify_ner("Elm Street") == "LOC"
        assert classify_ner("Dr Morales") == "PERSON"
        assert classify_ner("Alice") == "PERSON"
        assert classify_ner("Zorblax") == "MISC"


def oracle_embed(text, dim):
    """Independent n-gram hash embedding used to pin toy_embed outputs."""
    words = [m.lower() for m, _, _ in tokenize(text)]
    grams = Counter(words)
    grams.update(" ".join(p) for p in zip(words, words[1:]))
    vec = [0.0] * dim
    for gram, count in grams.items():
        bucket = int.from_bytes(
            hashlib.md5(gram.encode("utf-8")).digest()[:8], "little") % dim
        vec[bucket] += count
    norm = math.sqrt(sum(v * v for v in vec))
    return [v / norm for v in vec]


class TestToyEmbed:
    def test_identical_strings_cosine_one(self):
        a = toy_embed("book a taxi", 32)
        b = toy_embed("book a taxi", 32)
        assert a.dot(b) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_vocabulary_near_orthogonal(self):
        a = toy_embed("alpha bravo charlie", 4096)
        b = toy_embed("delta echo foxtrot", 4096)
        assert abs(a.dot(b)) < 1e-9

    def test_shared_ngrams_rank_above_unrelated(self):
        base = toy_embed("book a taxi", 256)
        near = toy_embed("book a taxi now", 256)
        far = toy_embed("weather tomorrow", 256)
        # expected relation computed with the independent oracle
        import numpy as np
        o_base = np.array(oracle_embed("book a taxi", 256))
        o_near = np.array(oracle_embed("book a taxi now", 256))
        o_far = np.array(oracle_embed("weather tomorrow", 256))
        assert float(o_base @ o_near) > float(o_base @ o_far)
        assert base.dot(near) > base.dot(far)

    def test_matches_oracle_exactly(self):
        for text in ("book a taxi", "John booked the taxi for nine", "one two one"):
            got = toy_embed(text, 64).tolist()
            want = oracle_embed(text, 64)
            assert got == pytest.approx(want, abs=1e-12)

    def test_min_dim_enforced(self):
        with pytest.raises(ValueError):
            toy_embed("hello", 4)

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            toy_embed("  ...  ", 16)

    @given(st.text(alphabet="abc xyz", min_size=1, max_size=40)
           .filter(lambda t: any(c.isalnum() for c in t)))
    @settings(max_examples=50)
    def test_pure_function(self, text):
        assert toy_embed(text, 16).tolist() == toy_embed(text, 16).tolist()

    def test_unit_norm(self):
        assert toy_embed("some words here", 32).norm() == pytest.approx(1.0, abs=1e-9)

    def test_nonnegative_components(self):
        assert all(v >= 0 for v in toy_embed("counts only", 32).tolist())
