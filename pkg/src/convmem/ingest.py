"""Annotated-record file contract: line-delimited JSON, one utterance per line.

Record schema (keys sorted in the canonical form)::

    {dialogue_id, session_id, turn_id, speaker, timestamp, text,
     gap_tag?, entities: [{name, coref_id, ner_type, span?}],
     dep_triples: [{head, label, child}], discourse: [str],
     embedding?: [float], gold?: {supporting_entry_ids, answer_span,
     coref_assignments?}, meta?: {...}}

This schema is the sole boundary with external annotation producers.
``meta`` is an optional free key/value object used by the corpus tools
(goal flags, relation-evidence flags, query difficulty class); indexing
ignores it.

Entry ids are not stored in corpus files: they are assigned sequentially,
starting at 0, over every turn in file order (query turns included, so the
numbering does not depend on whether gold turns get indexed).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from .model import (
    DependencyTriple,
    DiscourseLabel,
    Embedding,
    EntityMention,
    GoldInfo,
    MemoryEntry,
    Query,
    _validate_components,
)

GAP_TAG_RE = re.compile(r"^<GAP=hours:\d+>$")

REQUIRED_KEYS = (
    "dialogue_id",
    "session_id",
    "turn_id",
    "speaker",
    "timestamp",
    "text",
)


class IngestError(ValueError):
    """Base class for record-file problems."""


class RecordFormatError(IngestError):
    """A line is structurally malformed; parsing stops immediately."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateTurnError(IngestError):
    def __init__(self, line_no: int, key):
        super().__init__(f"line {line_no}: duplicate turn {key}")
        self.line_no = line_no
        self.key = key


class SchemaViolationError(IngestError):
    """One or more records violate data invariants; all are listed."""

    def __init__(self, violations: list[tuple[int, str]]):
        self.violations = violations
        lines = "; ".join(f"line {n}: {msg}" for n, msg in violations)
        super().__init__(f"{len(violations)} schema violation(s): {lines}")


@dataclass
class Turn:
    """A MemoryEntry-shaped record before an entry id is assigned."""

    turn_id: int
    speaker: str
    timestamp: str
    text: str
    entities: list[EntityMention] = field(default_factory=list)
    dep_triples: list[DependencyTriple] = field(default_factory=list)
    discourse: list[DiscourseLabel] = field(default_factory=list)
    embedding: Optional[Embedding] = None
    gold: Optional[GoldInfo] = None
    meta: dict = field(default_factory=dict)

    @property
    def is_query(self) -> bool:
        return self.gold is not None


@dataclass
class Session:
    session_id: int
    turns: list[Turn] = field(default_factory=list)
    gap_tag: Optional[str] = None


@dataclass
class AnnotatedDialogue:
    dialogue_id: str
    sessions: list[Session] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def turns(self) -> Iterator[tuple[Session, Turn]]:
        for session in self.sessions:
            for turn in session.turns:
                yield session, turn

    def turn_count(self) -> int:
        return sum(len(s.turns) for s in self.sessions)


# --- canonical JSON -------------------------------------------------------

def _canon_value(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite float {value!r} in record")
        return float(format(value, ".9g"))
    if isinstance(value, dict):
        return {k: _canon_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canon_value(v) for v in value]
    return value


def canonical_json(obj) -> str:
    """Canonical single-line form: sorted keys, <= 9 significant digits."""
    return json.dumps(_canon_value(obj), sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def exact_json(obj) -> str:
    """Sorted-key single-line JSON with exact (round-trippable) floats.

    Used for store-internal segments where reload must be lossless; corpus
    interchange files use :func:`canonical_json` instead.
    """
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


# --- record <-> object mapping -------------------------------------------

def entity_to_dict(ent: EntityMention) -> dict:
    d = {"name": ent.name, "coref_id": ent.coref_id, "ner_type": ent.ner_type}
    if ent.span is not None:
        d["span"] = [ent.span[0], ent.span[1]]
    return d


def entity_from_dict(d: dict) -> EntityMention:
    span = tuple(d["span"]) if d.get("span") is not None else None
    return EntityMention(d["name"], d["coref_id"], d.get("ner_type", "MISC"), span)


def gold_to_dict(gold: GoldInfo) -> dict:
    d = {
        "supporting_entry_ids": list(gold.supporting_entry_ids),
        "answer_span": gold.answer_span,
    }
    if gold.coref_assignments is not None:
        d["coref_assignments"] = dict(gold.coref_assignments)
    return d


def gold_from_dict(d: dict) -> GoldInfo:
    return GoldInfo(
        tuple(d.get("supporting_entry_ids", ())),
        d.get("answer_span", ""),
        d.get("coref_assignments"),
    )


def turn_to_record(dialogue_id: str, session: Session, turn: Turn,
                   first_in_session: bool) -> dict:
    rec = {
        "dialogue_id": dialogue_id,
        "session_id": session.session_id,
        "turn_id": turn.turn_id,
        "speaker": turn.speaker,
        "timestamp": turn.timestamp,
        "text": turn.text,
        "entities": [entity_to_dict(e) for e in turn.entities],
        "dep_triples": [
            {"head": t.head, "label": t.label, "child": t.child} for t in turn.dep_triples
        ],
        "discourse": [l.canonical for l in turn.discourse],
    }
    if first_in_session and session.gap_tag:
        rec["gap_tag"] = session.gap_tag
    if turn.embedding is not None:
        rec["embedding"] = turn.embedding.tolist()
    if turn.gold is not None:
        rec["gold"] = gold_to_dict(turn.gold)
    if turn.meta:
        rec["meta"] = turn.meta
    return rec


def _parse_turn(rec: dict, line_no: int) -> Turn:
    for key in REQUIRED_KEYS:
        if key not in rec:
            raise RecordFormatError(line_no, f"missing required key {key!r}")
    if not isinstance(rec["session_id"], int) or not isinstance(rec["turn_id"], int):
        raise RecordFormatError(line_no, "session_id and turn_id must be integers")
    try:
        entities = [entity_from_dict(e) for e in rec.get("entities", [])]
        triples = [
            DependencyTriple(t["head"], t["label"], t["child"])
            for t in rec.get("dep_triples", [])
        ]
        discourse = [DiscourseLabel.parse(s) for s in rec.get("discourse", [])]
    except (KeyError, TypeError, AttributeError) as exc:
        raise RecordFormatError(line_no, f"bad annotation structure: {exc}") from exc
    embedding = None
    if rec.get("embedding") is not None:
        try:
            embedding = Embedding(rec["embedding"])
        except Exception as exc:
            raise RecordFormatError(line_no, f"bad embedding: {exc}") from exc
    gold = gold_from_dict(rec["gold"]) if rec.get("gold") is not None else None
    return Turn(
        turn_id=rec["turn_id"],
        speaker=rec["speaker"],
        timestamp=rec["timestamp"],
        text=rec["text"],
        entities=entities,
        dep_triples=triples,
        discourse=discourse,
        embedding=embedding,
        gold=gold,
        meta=dict(rec.get("meta", {})),
    )


def read_annotated(
    path,
    embedder: Optional[Callable[[str], Embedding]] = None,
    expected_dim: Optional[int] = None,
) -> list[AnnotatedDialogue]:
    """Parse an annotated-record file into dialogues.

    Malformed lines and duplicate (dialogue, session, turn) keys fail fast
    with the offending line number. Invariant violations are collected
    across the whole file and raised together as SchemaViolationError.

    A missing embedding is a violation unless ``embedder`` is given, in
    which case the vector is synthesized from the text. Synthesis is
    opt-in so upstream pipeline failures stay visible.
    """
    dialogues: dict[str, AnnotatedDialogue] = {}
    seen_keys: set[tuple[str, int, int]] = set()
    violations: list[tuple[int, str]] = []

    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise RecordFormatError(line_no, "record is not an object")
            turn = _parse_turn(rec, line_no)
            did = rec["dialogue_id"]
            sid = rec["session_id"]
            key = (did, sid, turn.turn_id)
            if key in seen_keys:
                raise DuplicateTurnError(line_no, key)
            seen_keys.add(key)

            if turn.embedding is None and embedder is not None:
                turn.embedding = embedder(turn.text)

            dialogue = dialogues.get(did)
            if dialogue is None:
                dialogue = AnnotatedDialogue(did)
                dialogues[did] = dialogue

            if dialogue.sessions and dialogue.sessions[-1].session_id == sid:
                session = dialogue.sessions[-1]
                if turn.turn_id <= session.turns[-1].turn_id:
                    violations.append(
                        (line_no, f"turn_id {turn.turn_id} not strictly increasing in session {sid}")
                    )
            else:
                if dialogue.sessions and sid <= dialogue.sessions[-1].session_id:
                    violations.append(
                        (line_no, f"session_id {sid} not strictly increasing in dialogue {did!r}")
                    )
                session = Session(session_id=sid)
                dialogue.sessions.append(session)

            gap = rec.get("gap_tag")
            if gap is not None:
                if not GAP_TAG_RE.match(gap):
                    violations.append((line_no, f"bad gap_tag {gap!r}"))
                elif session.turns:
                    violations.append((line_no, "gap_tag not on first turn of its session"))
                else:
                    session.gap_tag = gap

            violations.extend(
                (line_no, msg)
                for msg in _validate_components(
                    turn.text, turn.entities, turn.dep_triples, turn.discourse,
                    turn.embedding, expected_dim,
                )
            )
            if turn.gold is not None and not turn.gold.supporting_entry_ids:
                violations.append((line_no, "gold present but supporting_entry_ids empty"))
            session.turns.append(turn)

    if violations:
        raise SchemaViolationError(violations)
    return list(dialogues.values())


def write_annotated(path, dialogues: list[AnnotatedDialogue]) -> None:
    """Write dialogues in canonical record form (stable bytes)."""
    with open(path, "w", encoding="utf-8") as handle:
        for line in iter_record_lines(dialogues):
            handle.write(line + "\n")


def iter_record_lines(dialogues: list[AnnotatedDialogue]) -> Iterator[str]:
    for dialogue in dialogues:
        for session in dialogue.sessions:
            for i, turn in enumerate(session.turns):
                rec = turn_to_record(dialogue.dialogue_id, session, turn, i == 0)
                yield canonical_json(rec)


def iter_turns_with_ids(
    dialogues: list[AnnotatedDialogue], start: int = 0
) -> Iterator[tuple[int, AnnotatedDialogue, Session, Turn]]:
    """Sequential entry-id assignment over every turn, in corpus order."""
    next_id = start
    for dialogue in dialogues:
        for session in dialogue.sessions:
            for turn in session.turns:
                yield next_id, dialogue, session, turn
                next_id += 1


def turn_to_entry(entry_id: int, dialogue_id: str, session_id: int, turn: Turn) -> MemoryEntry:
    if turn.embedding is None:
        raise IngestError(f"turn {(dialogue_id, session_id, turn.turn_id)} has no embedding")
    return MemoryEntry(
        id=entry_id,
        utterance=turn.text,
        speaker=turn.speaker,
        timestamp=turn.timestamp,
        dialogue_id=dialogue_id,
        session_id=session_id,
        turn_id=turn.turn_id,
        entities=tuple(turn.entities),
        dep_triples=tuple(turn.dep_triples),
        discourse=tuple(turn.discourse),
        embedding=turn.embedding,
    )


def turn_to_query(turn: Turn) -> Query:
    if turn.embedding is None:
        raise IngestError(f"query turn {turn.turn_id} has no embedding")
    return Query(
        text=turn.text,
        embedding=turn.embedding,
        entities=tuple(turn.entities),
        discourse=tuple(turn.discourse),
        gold=turn.gold,
        query_class=turn.meta.get("query_class"),
    )
