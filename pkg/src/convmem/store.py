"""Memory store: entries plus both indexes, with an on-disk lifecycle.

Store directory layout::

    manifest.json    format version, dim, HNSW params, counts, checksums
    entries.jsonl    entry log: every turn with its assigned id (canonical form)
    dense.seg        HNSW graph segment (self-checksummed binary)
    symbolic.seg     posting lists + cluster stats (self-checksummed binary)
    .lock            present while a writer owns the directory

Turns carrying gold info are evaluation queries: they consume entry ids but
are not indexed (so retrieval never surfaces the question as its own
evidence); they are logged and can be replayed for evaluation. Pass
``index_queries=True`` to index them anyway.

Writers stage segment files beside the store and rename them into place,
writing the manifest last; a corrupted or half-written store is refused at
open time via checksums.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from . import dense as dense_mod
from . import symbolic as symbolic_mod
from .dense import DenseIndex, HnswParams
from .ingest import (
    AnnotatedDialogue,
    canonical_json,
    exact_json,
    entity_to_dict,
    iter_turns_with_ids,
    turn_to_entry,
    turn_to_query,
    turn_to_record,
    _parse_turn,
)
from .model import MemoryEntry, Query, validate_entry
from .symbolic import SymbolicIndex

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
ENTRY_LOG_NAME = "entries.jsonl"
DENSE_SEG_NAME = "dense.seg"
SYMBOLIC_SEG_NAME = "symbolic.seg"
LOCK_NAME = ".lock"


class StoreError(RuntimeError):
    pass


class StoreCorruptionError(StoreError):
    """Checksum or structure mismatch: the store is refused, never served."""


class StoreLockError(StoreError):
    pass


class DuplicateTurnKeyError(ValueError):
    pass


class MemoryStore:
    """Entries, the dense index, and the symbolic index, kept in step."""

    def __init__(self, dim: int, params: Optional[HnswParams] = None,
                 index_queries: bool = False):
        self.dim = int(dim)
        self.params = params or HnswParams()
        self.index_queries = index_queries
        self.entries: dict[int, MemoryEntry] = {}
        self.dense = DenseIndex(self.dim, self.params)
        self.symbolic = SymbolicIndex()
        self.records: list[dict] = []  # entry log: every turn, with its id
        self._turn_keys: set[tuple[str, int, int]] = set()
        self._query_ids: list[int] = []

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def query_count(self) -> int:
        return len(self._query_ids)

    def add_entry(self, entry: MemoryEntry, record: Optional[dict] = None) -> None:
        violations = validate_entry(entry, expected_dim=self.dim)
        if violations:
            raise ValueError(f"invalid entry {entry.id}: {'; '.join(violations)}")
        key = (entry.dialogue_id, entry.session_id, entry.turn_id)
        if entry.id in self.entries:
            raise DuplicateTurnKeyError(f"entry id {entry.id} already stored")
        if key in self._turn_keys:
            raise DuplicateTurnKeyError(f"duplicate turn key {key}")
        self.dense.insert(entry.id, entry.embedding)
        self.symbolic.insert(entry)
        self.entries[entry.id] = entry
        self._turn_keys.add(key)
        self.records.append(record if record is not None else self._record_for(entry))

    def add_query_turn(self, entry_id: int, record: dict) -> None:
        """Log a gold-bearing turn under its id without indexing it."""
        key = (record["dialogue_id"], record["session_id"], record["turn_id"])
        if key in self._turn_keys:
            raise DuplicateTurnKeyError(f"duplicate turn key {key}")
        self._turn_keys.add(key)
        rec = dict(record)
        rec["id"] = entry_id
        self.records.append(rec)
        self._query_ids.append(entry_id)

    def _record_for(self, entry: MemoryEntry) -> dict:
        rec = {
            "id": entry.id,
            "dialogue_id": entry.dialogue_id,
            "session_id": entry.session_id,
            "turn_id": entry.turn_id,
            "speaker": entry.speaker,
            "timestamp": entry.timestamp,
            "text": entry.utterance,
            "entities": [entity_to_dict(e) for e in entry.entities],
            "dep_triples": [
                {"head": t.head, "label": t.label, "child": t.child}
                for t in entry.dep_triples
            ],
            "discourse": [l.canonical for l in entry.discourse],
            "embedding": entry.embedding.tolist(),
        }
        return rec

    def stored_queries(self) -> list[Query]:
        """Queries replayed from the entry log (gold turns)."""
        out = []
        for rec in self.records:
            if rec.get("gold") is not None:
                turn = _parse_turn(rec, 0)
                out.append(turn_to_query(turn))
        return out

    def get(self, entry_id: int) -> MemoryEntry:
        return self.entries[entry_id]


def build_store(
    dialogues: list[AnnotatedDialogue],
    dim: int,
    params: Optional[HnswParams] = None,
    index_queries: bool = False,
    start_id: int = 0,
) -> MemoryStore:
    """Index a corpus: ids assigned sequentially over every turn in order."""
    store = MemoryStore(dim, params, index_queries=index_queries)
    ingest_corpus(store, dialogues, start_id=start_id)
    return store


def ingest_corpus(store: MemoryStore, dialogues: list[AnnotatedDialogue],
                  start_id: Optional[int] = None) -> dict:
    """Add a corpus to an existing store; returns an ingest summary."""
    if start_id is None:
        start_id = len(store.records)
    indexed = skipped_queries = 0
    for entry_id, dialogue, session, turn in iter_turns_with_ids(dialogues, start=start_id):
        record = turn_to_record(dialogue.dialogue_id, session, turn,
                                session.turns[0] is turn)
        record["id"] = entry_id
        if turn.is_query and not store.index_queries:
            store.add_query_turn(entry_id, record)
            skipped_queries += 1
            continue
        entry = turn_to_entry(entry_id, dialogue.dialogue_id, session.session_id, turn)
        store.add_entry(entry, record=record)
        indexed += 1
    return {"indexed": indexed, "query_turns": skipped_queries,
            "total": indexed + skipped_queries}


# --- on-disk lifecycle -----------------------------------------------------

def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class StoreLock:
    """One writer per store directory, via an O_EXCL lock file."""

    def __init__(self, store_dir):
        self.path = os.path.join(store_dir, LOCK_NAME)
        self._fd = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StoreLockError(
                f"store is locked by another writer ({self.path} exists)") from None
        os.write(self._fd, str(os.getpid()).encode("ascii"))
        return self

    def __exit__(self, *exc):
        if self._fd is not None:
            os.close(self._fd)
            os.unlink(self.path)
            self._fd = None
        return False


def save_store(store: MemoryStore, store_dir) -> dict:
    """Persist the store; returns the manifest."""
    os.makedirs(store_dir, exist_ok=True)
    with StoreLock(store_dir):
        staged = {}
        for name, writer in (
            (ENTRY_LOG_NAME, lambda p: _write_entry_log(store, p)),
            (DENSE_SEG_NAME, store.dense.save),
            (SYMBOLIC_SEG_NAME, store.symbolic.save),
        ):
            tmp = os.path.join(store_dir, name + ".tmp")
            writer(tmp)
            staged[name] = tmp
        for name, tmp in staged.items():
            os.replace(tmp, os.path.join(store_dir, name))
        manifest = {
            "format_version": FORMAT_VERSION,
            "dim": store.dim,
            "hnsw": {
                "m": store.params.m,
                "ef_construction": store.params.ef_construction,
                "ef_search": store.params.ef_search,
                "seed": store.params.seed,
            },
            "entry_count": len(store),
            "query_count": store.query_count,
            "index_queries": store.index_queries,
            "created_at": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "segments": {
                name: _sha256_file(os.path.join(store_dir, name))
                for name in (ENTRY_LOG_NAME, DENSE_SEG_NAME, SYMBOLIC_SEG_NAME)
            },
        }
        manifest["config_fingerprint"] = hashlib.sha256(
            canonical_json(
                {"dim": manifest["dim"], "hnsw": manifest["hnsw"],
                 "index_queries": store.index_queries}
            ).encode("utf-8")
        ).hexdigest()
        tmp = os.path.join(store_dir, MANIFEST_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            handle.write(canonical_json(manifest) + "\n")
        os.replace(tmp, os.path.join(store_dir, MANIFEST_NAME))
    return manifest


def _write_entry_log(store: MemoryStore, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for rec in store.records:
            handle.write(exact_json(rec) + "\n")


def read_manifest(store_dir) -> dict:
    path = os.path.join(store_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise StoreError(f"no manifest at {path}")
    with open(path, "r", encoding="utf-8") as handle:
        try:
            manifest = json.load(handle)
        except json.JSONDecodeError as exc:
            raise StoreCorruptionError(f"manifest unreadable: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise StoreCorruptionError(
            f"unrecognized store format version {manifest.get('format_version')!r}")
    return manifest


def open_store(store_dir, verify: bool = True) -> MemoryStore:
    """Load a store; checksum failures refuse the store outright."""
    manifest = read_manifest(store_dir)
    if verify:
        for name, expected in manifest["segments"].items():
            actual = _sha256_file(os.path.join(store_dir, name))
            if actual != expected:
                raise StoreCorruptionError(
                    f"segment {name} checksum mismatch: {actual} != {expected}")
    params = HnswParams(**manifest["hnsw"])
    store = MemoryStore(manifest["dim"], params,
                        index_queries=manifest.get("index_queries", False))
    try:
        store.dense = DenseIndex.load(os.path.join(store_dir, DENSE_SEG_NAME))
        store.symbolic = SymbolicIndex.load(os.path.join(store_dir, SYMBOLIC_SEG_NAME))
    except (dense_mod.SegmentCorruptionError,
            symbolic_mod.SegmentCorruptionError) as exc:
        raise StoreCorruptionError(str(exc)) from exc

    with open(os.path.join(store_dir, ENTRY_LOG_NAME), "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entry_id = rec["id"]
            turn = _parse_turn(rec, line_no)
            store.records.append(rec)
            key = (rec["dialogue_id"], rec["session_id"], rec["turn_id"])
            store._turn_keys.add(key)
            if turn.is_query and not store.index_queries:
                store._query_ids.append(entry_id)
                continue
            if turn.embedding is None:
                raise StoreCorruptionError(f"entry log line {line_no}: missing embedding")
            entry = turn_to_entry(entry_id, rec["dialogue_id"], rec["session_id"], turn)
            store.entries[entry_id] = entry
            if entry_id not in store.dense or entry_id not in store.symbolic:
                raise StoreCorruptionError(
                    f"entry {entry_id} present in log but missing from an index")
    if len(store) != manifest["entry_count"]:
        raise StoreCorruptionError(
            f"entry count mismatch: log has {len(store)}, manifest says "
            f"{manifest['entry_count']}")
    return store
