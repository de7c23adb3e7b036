"""Inverted index over coreference ids, surface names, dependency triples,
and discourse labels, plus the coreference cluster-size statistics used by
entity matching.

Posting keys::

    coref:<coref_id>
    name:<lowercased surface name>
    dep:<head>:<label>:<child>
    disc:<LABEL>

Posting lists are sorted, duplicate-free id lists; scoring happens in the
retrieval engine, membership only here.
"""

from __future__ import annotations

import hashlib
import struct
from bisect import bisect_left
from typing import Iterator, Optional

from ._rwlock import RWLock
from .model import MemoryEntry, Query

_MAGIC = b"CVSM"
_VERSION = 1


class SymbolicIndexError(ValueError):
    pass


class DuplicateEntryError(SymbolicIndexError):
    pass


class SegmentCorruptionError(RuntimeError):
    pass


class ClusterStats:
    """coref_id -> number of stored entity mentions carrying that id."""

    def __init__(self, counts: Optional[dict[str, int]] = None):
        self._counts: dict[str, int] = dict(counts or {})

    def cluster_size(self, coref_id: str) -> int:
        return self._counts.get(coref_id, 0)

    def add_mention(self, coref_id: str) -> None:
        self._counts[coref_id] = self._counts.get(coref_id, 0) + 1

    @property
    def total_mentions(self) -> int:
        return sum(self._counts.values())

    def as_dict(self) -> dict[str, int]:
        return dict(self._counts)

    def __len__(self) -> int:
        return len(self._counts)


def entry_keys(entry: MemoryEntry) -> Iterator[str]:
    """Every posting key carried by an entry (may repeat)."""
    for ent in entry.entities:
        yield f"coref:{ent.coref_id}"
        yield f"name:{ent.name.lower()}"
    for triple in entry.dep_triples:
        yield f"dep:{triple.key()}"
    for label in entry.discourse:
        yield f"disc:{label.canonical}"


def query_keys(query: Query, include_coref: bool = True) -> Iterator[str]:
    """Candidate-lookup keys for a query: entities and discourse only.

    Dependency triples are entry-side features; queries carry none, so dep
    posting lists never drive candidate generation.
    """
    for ent in query.entities:
        if include_coref:
            yield f"coref:{ent.coref_id}"
        yield f"name:{ent.name.lower()}"
    for label in query.discourse:
        yield f"disc:{label.canonical}"


class SymbolicIndex:
    def __init__(self):
        self._postings: dict[str, list[int]] = {}
        self._stats = ClusterStats()
        self._entry_ids: set[int] = set()
        self._lock = RWLock()

    def __len__(self) -> int:
        return len(self._entry_ids)

    def __contains__(self, entry_id: int) -> bool:
        return entry_id in self._entry_ids

    @property
    def cluster_stats(self) -> ClusterStats:
        return self._stats

    def cluster_size(self, coref_id: str) -> int:
        return self._stats.cluster_size(coref_id)

    def insert(self, entry: MemoryEntry) -> None:
        entry_id = int(entry.id)
        if entry_id in self._entry_ids:
            raise DuplicateEntryError(f"entry id {entry_id} already indexed")
        with self._lock.write():
            self._entry_ids.add(entry_id)
            for key in set(entry_keys(entry)):
                posting = self._postings.setdefault(key, [])
                # ids normally arrive in ascending order; insort keeps the
                # sorted/unique invariant for the rest
                if not posting or posting[-1] < entry_id:
                    posting.append(entry_id)
                else:
                    pos = bisect_left(posting, entry_id)
                    if pos >= len(posting) or posting[pos] != entry_id:
                        posting.insert(pos, entry_id)
            for ent in entry.entities:
                self._stats.add_mention(ent.coref_id)

    def lookup(self, key: str) -> tuple[int, ...]:
        with self._lock.read():
            return tuple(self._postings.get(key, ()))

    def candidates(self, query: Query, cap: int, include_coref: bool = True) -> set[int]:
        """Union of posting lists for the query's entity and discourse keys.

        When the union exceeds ``cap``, keys are consumed rarest-first
        (shortest posting list, then key string) and each list contributes
        its ids in ascending order until the cap is reached, so rare,
        discriminative features survive truncation.
        """
        if cap < 0:
            raise ValueError("cap must be >= 0")
        if cap == 0:
            return set()
        with self._lock.read():
            matched: list[tuple[int, str]] = []
            for key in set(query_keys(query, include_coref)):
                posting = self._postings.get(key)
                if posting:
                    matched.append((len(posting), key))
            matched.sort()
            out: set[int] = set()
            for _, key in matched:
                for entry_id in self._postings[key]:
                    if entry_id not in out:
                        out.add(entry_id)
                        if len(out) >= cap:
                            return out
            return out

    def key_counts(self) -> dict[str, int]:
        """Posting-list sizes grouped by key prefix (for inspection)."""
        groups: dict[str, int] = {}
        with self._lock.read():
            for key in self._postings:
                prefix = key.split(":", 1)[0]
                groups[prefix] = groups.get(prefix, 0) + 1
        return groups

    def postings_items(self) -> list[tuple[str, tuple[int, ...]]]:
        with self._lock.read():
            return [(k, tuple(v)) for k, v in sorted(self._postings.items())]

    # -- persistence --

    def save(self, path) -> None:
        chunks = [_MAGIC, struct.pack("<HH", _VERSION, 0)]
        ids = sorted(self._entry_ids)
        chunks.append(struct.pack("<Q", len(ids)))
        chunks.append(struct.pack(f"<{len(ids)}q", *ids))
        items = sorted(self._postings.items())
        chunks.append(struct.pack("<Q", len(items)))
        for key, posting in items:
            raw = key.encode("utf-8")
            chunks.append(struct.pack("<I", len(raw)))
            chunks.append(raw)
            chunks.append(struct.pack("<Q", len(posting)))
            chunks.append(struct.pack(f"<{len(posting)}q", *posting))
        counts = sorted(self._stats.as_dict().items())
        chunks.append(struct.pack("<Q", len(counts)))
        for coref_id, count in counts:
            raw = coref_id.encode("utf-8")
            chunks.append(struct.pack("<I", len(raw)))
            chunks.append(raw)
            chunks.append(struct.pack("<Q", count))
        payload = b"".join(chunks)
        with open(path, "wb") as handle:
            handle.write(payload)
            handle.write(hashlib.sha256(payload).digest())

    @classmethod
    def load(cls, path) -> "SymbolicIndex":
        with open(path, "rb") as handle:
            blob = handle.read()
        if len(blob) < 32 + len(_MAGIC):
            raise SegmentCorruptionError("symbolic segment truncated")
        payload, digest = blob[:-32], blob[-32:]
        if hashlib.sha256(payload).digest() != digest:
            raise SegmentCorruptionError("symbolic segment checksum mismatch")
        if payload[:4] != _MAGIC:
            raise SegmentCorruptionError("symbolic segment bad magic")
        off = 4
        version, _ = struct.unpack_from("<HH", payload, off)
        off += 4
        if version != _VERSION:
            raise SegmentCorruptionError(f"unsupported symbolic segment version {version}")
        index = cls()
        (n_ids,) = struct.unpack_from("<Q", payload, off)
        off += 8
        index._entry_ids = set(struct.unpack_from(f"<{n_ids}q", payload, off))
        off += 8 * n_ids
        (n_keys,) = struct.unpack_from("<Q", payload, off)
        off += 8
        for _i in range(n_keys):
            (klen,) = struct.unpack_from("<I", payload, off)
            off += 4
            key = payload[off : off + klen].decode("utf-8")
            off += klen
            (plen,) = struct.unpack_from("<Q", payload, off)
            off += 8
            index._postings[key] = list(struct.unpack_from(f"<{plen}q", payload, off))
            off += 8 * plen
        (n_counts,) = struct.unpack_from("<Q", payload, off)
        off += 8
        counts: dict[str, int] = {}
        for _i in range(n_counts):
            (klen,) = struct.unpack_from("<I", payload, off)
            off += 4
            coref_id = payload[off : off + klen].decode("utf-8")
            off += klen
            (count,) = struct.unpack_from("<Q", payload, off)
            off += 8
            counts[coref_id] = count
        index._stats = ClusterStats(counts)
        if off != len(payload):
            raise SegmentCorruptionError("symbolic segment has trailing bytes")
        return index
