"""Approximate nearest-neighbor index over unit-norm embeddings.

Hierarchical navigable small-world graph with cosine similarity, built from
scratch so level assignment, tie-breaking, and persistence are fully
deterministic. An exhaustive-scan mode doubles as the testing oracle.

Internally the graph works with distance 1 - dot(u, v); reported values
are cosines. Ties are always broken by ascending entry id, so results are
a total order and bit-stable across runs for a fixed seed and insertion
order.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import Optional

import numpy as np

from ._rwlock import RWLock
from .model import Embedding, UNIT_NORM_TOL

_MAGIC = b"CVDM"
_VERSION = 1
_MAX_LEVEL_CAP = 64


class DenseIndexError(ValueError):
    pass


class DuplicateEntryError(DenseIndexError):
    pass


class DimensionMismatchError(DenseIndexError):
    pass


class EmptyIndexError(LookupError):
    pass


class SegmentCorruptionError(RuntimeError):
    """Persisted segment failed its self-check (magic/version/checksum)."""


@dataclass(frozen=True)
class HnswParams:
    m: int = 32
    ef_construction: int = 200
    ef_search: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")


class DenseIndex:
    """HNSW graph plus an exact-scan oracle over the same vectors."""

    def __init__(self, dim: int, params: Optional[HnswParams] = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.params = params or HnswParams()
        self._lock = RWLock()
        self._capacity = 256
        self._vectors = np.zeros((self._capacity, self.dim), dtype=np.float64)
        self._ids: list[int] = []                 # slot -> entry id
        self._slot_of: dict[int, int] = {}        # entry id -> slot
        self._levels: list[int] = []
        self._neighbors: list[list[list[int]]] = []   # slot -> level -> slots
        self._deleted: set[int] = set()
        self._entry_point: int = -1
        self._max_level: int = -1
        # 1 / ln(m): expected layer occupancy halves (base m) per level up.
        self._ml = 1.0 / math.log(self.params.m)

    # -- basic facts --

    def __len__(self) -> int:
        return len(self._ids) - len(self._deleted)

    def __contains__(self, entry_id: int) -> bool:
        slot = self._slot_of.get(entry_id)
        return slot is not None and slot not in self._deleted

    # -- construction --

    def _assign_level(self, entry_id: int) -> int:
        u = random.Random(f"{self.params.seed}:{entry_id}").random()
        if u <= 0.0:
            return _MAX_LEVEL_CAP
        return min(int(-math.log(u) * self._ml), _MAX_LEVEL_CAP)

    def _grow(self, needed: int) -> None:
        if needed <= self._capacity:
            return
        new_cap = max(self._capacity * 2, needed)
        grown = np.zeros((new_cap, self.dim), dtype=np.float64)
        grown[: len(self._ids)] = self._vectors[: len(self._ids)]
        self._vectors = grown
        self._capacity = new_cap

    def insert(self, entry_id: int, embedding: Embedding) -> None:
        """Add one unit-norm vector under ``entry_id``."""
        entry_id = int(entry_id)
        vec = embedding.values
        if vec.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"expected dim {self.dim}, got {vec.shape[0]}")
        if entry_id in self._slot_of:
            raise DuplicateEntryError(f"entry id {entry_id} already indexed")
        norm = float(np.dot(vec, vec))
        if abs(norm - 1.0) > 10 * UNIT_NORM_TOL:
            raise DenseIndexError(f"embedding for {entry_id} is not unit-norm")

        with self._lock.write():
            slot = len(self._ids)
            self._grow(slot + 1)
            self._vectors[slot] = vec
            self._ids.append(entry_id)
            self._slot_of[entry_id] = slot
            level = self._assign_level(entry_id)
            self._levels.append(level)
            self._neighbors.append([[] for _ in range(level + 1)])

            if self._entry_point < 0:
                self._entry_point = slot
                self._max_level = level
                return

            eps = [self._entry_point]
            for layer in range(self._max_level, level, -1):
                nearest, _ = self._search_layer(vec, eps, layer, 1)
                eps = [s for _, s in nearest]
            for layer in range(min(level, self._max_level), -1, -1):
                candidates, _ = self._search_layer(
                    vec, eps, layer, self.params.ef_construction)
                cap = self._degree_cap(layer)
                selected = self._select_neighbors(vec, candidates, cap)
                self._neighbors[slot][layer] = list(selected)
                for nb in selected:
                    nb_links = self._neighbors[nb][layer]
                    nb_links.append(slot)
                    if len(nb_links) > cap:
                        self._evict_farthest(nb, layer)
                eps = [s for _, s in candidates]

            if level > self._max_level:
                self._entry_point = slot
                self._max_level = level

    def _degree_cap(self, layer: int) -> int:
        return self.params.m * 2 if layer == 0 else self.params.m

    def _evict_farthest(self, slot: int, layer: int) -> None:
        """Drop the single farthest link (largest distance, then largest id)
        when a node's list overflows. Cheap compared to re-running the
        diversity heuristic on every backlink."""
        links = self._neighbors[slot][layer]
        dists = 1.0 - self._vectors[links] @ self._vectors[slot]
        worst, worst_i = -np.inf, 0
        ids = self._ids
        for i, d in enumerate(dists):
            if d > worst or (d == worst and ids[links[i]] > ids[links[worst_i]]):
                worst, worst_i = d, i
        links.pop(worst_i)

    def _select_neighbors(self, base: np.ndarray, candidates: list[tuple[float, int]],
                          cap: int) -> list[int]:
        """Diversity-aware selection: keep candidates closer to the base
        point than to anything already selected; backfill from the pruned
        list so we never return fewer than cap when enough exist."""
        if len(candidates) <= cap:
            return [slot for _, slot in candidates]
        slots = [slot for _, slot in candidates]
        base_dists = [dist for dist, _ in candidates]
        cand_vecs = self._vectors[slots]
        n = len(slots)
        min_to_selected = np.full(n, np.inf)
        chosen: list[int] = []
        for i in range(n):
            if len(chosen) >= cap:
                break
            if base_dists[i] < min_to_selected[i]:
                chosen.append(i)
                if len(chosen) < cap:
                    np.minimum(min_to_selected, 1.0 - cand_vecs @ cand_vecs[i],
                               out=min_to_selected)
        if len(chosen) < cap:
            picked = set(chosen)
            for i in range(n):
                if len(chosen) >= cap:
                    break
                if i not in picked:
                    chosen.append(i)
        return [slots[i] for i in chosen]

    def _search_layer(self, query: np.ndarray, entry_points: list[int], layer: int,
                      ef: int) -> tuple[list[tuple[float, int]], int]:
        """Beam search on one layer.

        Returns (sorted [(dist, slot)] of up to ef nodes, visited count).
        Heap keys carry the public entry id so equal distances resolve the
        same way regardless of slot numbering.
        """
        vectors = self._vectors
        neighbors = self._neighbors
        ids = self._ids
        visited = set(entry_points)
        candidates: list[tuple[float, int, int]] = []
        best: list[tuple[float, int, int]] = []  # max-heap: (-dist, -id, slot)
        for slot in entry_points:
            dist = float(1.0 - np.dot(vectors[slot], query))
            heappush(candidates, (dist, ids[slot], slot))
            heappush(best, (-dist, -ids[slot], slot))
        visited_count = len(visited)

        while candidates:
            dist, _, slot = heappop(candidates)
            if len(best) >= ef and dist > -best[0][0]:
                break
            fresh = [nb for nb in neighbors[slot][layer] if nb not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            visited_count += len(fresh)
            dists = 1.0 - vectors[fresh] @ query
            if len(best) >= ef:
                # batch-reject everything worse than the current frontier
                survivors = np.nonzero(dists <= -best[0][0])[0]
            else:
                survivors = range(len(fresh))
            for j in survivors:
                nb = fresh[j]
                nd = float(dists[j])
                if len(best) < ef:
                    heappush(candidates, (nd, ids[nb], nb))
                    heappush(best, (-nd, -ids[nb], nb))
                elif nd < -best[0][0] or (nd == -best[0][0] and ids[nb] < -best[0][1]):
                    heappush(candidates, (nd, ids[nb], nb))
                    heappush(best, (-nd, -ids[nb], nb))
                    heappop(best)

        out = sorted((-neg_dist, -neg_id, slot) for neg_dist, neg_id, slot in best)
        return [(dist, slot) for dist, _, slot in out], visited_count

    # -- queries --

    def search(self, embedding: Embedding, n: int,
               ef: Optional[int] = None) -> list[tuple[int, float]]:
        """Approximate top-n by cosine, descending; ties by ascending id."""
        results, _ = self.search_with_stats(embedding, n, ef)
        return results

    def search_with_stats(self, embedding: Embedding, n: int,
                          ef: Optional[int] = None) -> tuple[list[tuple[int, float]], int]:
        if n < 1:
            raise ValueError("n must be >= 1")
        vec = self._check_query(embedding)
        with self._lock.read():
            ef = max(ef if ef is not None else self.params.ef_search, n)
            if ef >= len(self):
                # A beam covering the whole index costs at least a full scan,
                # so answer exactly; this also pins the documented guarantee
                # that wide-beam search equals exhaustive search.
                return self._exact_scan(vec, n), len(self)
            eps = [self._entry_point]
            visited_total = 1
            for layer in range(self._max_level, 0, -1):
                nearest, visited = self._search_layer(vec, eps, layer, 1)
                visited_total += visited
                eps = [s for _, s in nearest]
            found, visited = self._search_layer(vec, eps, 0, ef)
            visited_total += visited
            results = [
                (self._ids[slot], 1.0 - dist)
                for dist, slot in found
                if slot not in self._deleted
            ]
            return results[:n], visited_total

    def search_exact(self, embedding: Embedding, n: int) -> list[tuple[int, float]]:
        """Exhaustive top-n by cosine; the oracle for the graph search."""
        if n < 1:
            raise ValueError("n must be >= 1")
        vec = self._check_query(embedding)
        with self._lock.read():
            return self._exact_scan(vec, n)

    def _exact_scan(self, vec: np.ndarray, n: int) -> list[tuple[int, float]]:
        count = len(self._ids)
        if self._deleted:
            live = [s for s in range(count) if s not in self._deleted]
            sims = self._vectors[live] @ vec
            ids = np.array([self._ids[s] for s in live], dtype=np.int64)
        else:
            sims = self._vectors[:count] @ vec
            ids = np.asarray(self._ids, dtype=np.int64)
        order = np.lexsort((ids, -sims))[:n]
        return [(int(ids[i]), float(sims[i])) for i in order]

    def _check_query(self, embedding: Embedding) -> np.ndarray:
        vec = embedding.values
        if vec.shape[0] != self.dim:
            raise DimensionMismatchError(f"expected dim {self.dim}, got {vec.shape[0]}")
        if len(self) == 0:
            raise EmptyIndexError("index is empty")
        return vec

    def cosine(self, entry_id: int, embedding: Embedding) -> float:
        slot = self._slot_of[entry_id]
        return float(np.dot(self._vectors[slot], embedding.values))

    # -- deletion --

    def delete(self, entry_id: int) -> None:
        """Tombstone an entry; the graph keeps routing through it until
        ``rebuild`` compacts the index."""
        slot = self._slot_of.get(entry_id)
        if slot is None or slot in self._deleted:
            raise KeyError(f"entry id {entry_id} not present")
        with self._lock.write():
            self._deleted.add(slot)

    def rebuild(self) -> "DenseIndex":
        """Fresh index over live entries only (compaction)."""
        fresh = DenseIndex(self.dim, self.params)
        for slot, entry_id in enumerate(self._ids):
            if slot not in self._deleted:
                fresh.insert(entry_id, Embedding(self._vectors[slot]))
        return fresh

    # -- persistence --

    def save(self, path) -> None:
        chunks = [
            _MAGIC,
            struct.pack("<HHIIIIq", _VERSION, 0, self.dim, self.params.m,
                        self.params.ef_construction, self.params.ef_search,
                        self.params.seed),
            struct.pack("<Qqi", len(self._ids), self._entry_point, self._max_level),
        ]
        for slot, entry_id in enumerate(self._ids):
            level = self._levels[slot]
            chunks.append(struct.pack("<qHB", entry_id, level,
                                      1 if slot in self._deleted else 0))
            chunks.append(self._vectors[slot].astype("<f8").tobytes())
            for layer in range(level + 1):
                links = self._neighbors[slot][layer]
                chunks.append(struct.pack("<I", len(links)))
                chunks.append(struct.pack(f"<{len(links)}I", *links))
        payload = b"".join(chunks)
        digest = hashlib.sha256(payload).digest()
        with open(path, "wb") as handle:
            handle.write(payload)
            handle.write(digest)

    @classmethod
    def load(cls, path) -> "DenseIndex":
        with open(path, "rb") as handle:
            blob = handle.read()
        if len(blob) < 32 + len(_MAGIC):
            raise SegmentCorruptionError("dense segment truncated")
        payload, digest = blob[:-32], blob[-32:]
        if hashlib.sha256(payload).digest() != digest:
            raise SegmentCorruptionError("dense segment checksum mismatch")
        if payload[:4] != _MAGIC:
            raise SegmentCorruptionError("dense segment bad magic")
        off = 4
        version, _, dim, m, efc, efs, seed = struct.unpack_from("<HHIIIIq", payload, off)
        off += struct.calcsize("<HHIIIIq")
        if version != _VERSION:
            raise SegmentCorruptionError(f"unsupported dense segment version {version}")
        count, entry_point, max_level = struct.unpack_from("<Qqi", payload, off)
        off += struct.calcsize("<Qqi")
        index = cls(dim, HnswParams(m=m, ef_construction=efc, ef_search=efs, seed=seed))
        index._grow(count)
        for slot in range(count):
            entry_id, level, deleted = struct.unpack_from("<qHB", payload, off)
            off += struct.calcsize("<qHB")
            vec = np.frombuffer(payload, dtype="<f8", count=dim, offset=off).copy()
            off += dim * 8
            levels = []
            for _layer in range(level + 1):
                (n_links,) = struct.unpack_from("<I", payload, off)
                off += 4
                levels.append(list(struct.unpack_from(f"<{n_links}I", payload, off)))
                off += 4 * n_links
            index._vectors[slot] = vec
            index._ids.append(entry_id)
            index._slot_of[entry_id] = slot
            index._levels.append(level)
            index._neighbors.append(levels)
            if deleted:
                index._deleted.add(slot)
        index._entry_point = entry_point
        index._max_level = max_level
        if off != len(payload):
            raise SegmentCorruptionError("dense segment has trailing bytes")
        return index
