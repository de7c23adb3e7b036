import numpy as np
import pytest

from convmem.dense import HnswParams
from convmem.model import (
    DiscourseLabel,
    EntityMention,
    MemoryEntry,
    normalize_embedding,
)
from convmem.store import MemoryStore


def unit_vec(values):
    return normalize_embedding(np.asarray(values, dtype=float))


def make_entry(entry_id, text="hello world", dim=16, seed=None, **overrides):
    """A valid entry with a deterministic pseudo-random unit embedding."""
    rng = np.random.default_rng(entry_id if seed is None else seed)
    fields = dict(
        id=entry_id,
        utterance=text,
        speaker="user",
        timestamp=f"2024-01-01T{entry_id % 24:02d}:{entry_id % 60:02d}:00",
        dialogue_id="dlg",
        session_id=1,
        turn_id=entry_id + 1,
        entities=(),
        dep_triples=(),
        discourse=(),
        embedding=normalize_embedding(rng.standard_normal(dim)),
    )
    fields.update(overrides)
    return MemoryEntry(**fields)


def small_store(n=8, dim=16, **store_kwargs):
    store = MemoryStore(dim, HnswParams(m=4, ef_construction=8, ef_search=64, seed=0),
                        **store_kwargs)
    for i in range(n):
        store.add_entry(make_entry(i, text=f"utterance number {i}", dim=dim))
    return store


@pytest.fixture
def entry_factory():
    return make_entry


@pytest.fixture
def taxi_fixture():
    """Store reproducing the pronoun-vs-lexical failure mode: many turns
    mention "taxi", only one entry carries the queried coreference chain."""
    dim = 32
    store = MemoryStore(dim, HnswParams(m=4, ef_construction=8, ef_search=64, seed=3))
    john = EntityMention("John Smith", "E17", "PERSON")

    def entry(i, text, entities=(), discourse=("EXPANSION",)):
        return make_entry(
            i, text=text, dim=dim,
            entities=entities,
            discourse=tuple(DiscourseLabel.parse(d) for d in discourse),
            dep_triples=(),
        )

    store.add_entry(entry(0, "John Smith confirmed the taxi is booked for 9 AM.",
                          entities=(john,)))
    for i in range(1, 7):
        store.add_entry(entry(i, f"There are taxi options near stand {i} with taxi fares."))
    return store, john
