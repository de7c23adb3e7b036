"""Corpus construction: sessionization, long-range extension, audits, and a
fully synthetic dialogue generator for controlled evaluation corpora.

Everything here is deterministic under a fixed seed; per-dialogue RNG
streams are derived from (seed, dialogue id), so processing order and
parallelism cannot change output.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional, Sequence

from .ingest import AnnotatedDialogue, Session, Turn, iter_turns_with_ids
from .model import EntityMention, GoldInfo
from .toynlp import toy_annotate, toy_embed


class CorpusError(ValueError):
    pass


# --- sessionization (goal / turn-budget splitting) ---------------------------

@dataclass(frozen=True)
class SessionizerConfig:
    turn_budget_min: int = 8
    turn_budget_max: int = 12
    gap_hours_choices: tuple[int, ...] = (12, 36, 72)
    rng_seed: int = 0
    audit_fraction: float = 0.05

    def __post_init__(self):
        if not (1 <= self.turn_budget_min <= self.turn_budget_max):
            raise ValueError("need 1 <= turn_budget_min <= turn_budget_max")
        if not (0.0 <= self.audit_fraction <= 1.0):
            raise ValueError("audit_fraction must be in [0, 1]")
        if not self.gap_hours_choices:
            raise ValueError("gap_hours_choices must be non-empty")


def _turn_features(turn: Turn) -> set[tuple[str, str]]:
    feats = set()
    for ent in turn.entities:
        feats.add(("coref", ent.coref_id))
        feats.add(("name", ent.name.lower()))
    return feats


def _flatten(dialogue: AnnotatedDialogue) -> list[Turn]:
    return [turn for _, turn in dialogue.turns()]


def _add_warning(dialogue: AnnotatedDialogue, message: str) -> None:
    dialogue.metadata.setdefault("warnings", []).append(message)


def sessionize(dialogue: AnnotatedDialogue, cfg: SessionizerConfig) -> AnnotatedDialogue:
    """Split a dialogue into sessions after goal-closing turns or when a
    seeded turn budget is exceeded, committing a boundary only when an
    entity from the closing segment recurs after it.

    Goal closure is an explicit per-turn flag (``meta.goal_complete``); the
    turn order and texts are preserved exactly. Each committed boundary
    gets a ``<GAP=hours:H>`` tag on the following session.
    """
    turns = _flatten(dialogue)
    out = AnnotatedDialogue(dialogue.dialogue_id, metadata=dict(dialogue.metadata))
    if len(turns) < 2:
        out.sessions = [Session(1, list(turns))]
        _add_warning(out, "too short to sessionize")
        return out

    rng = random.Random(f"{cfg.rng_seed}:sessionize:{dialogue.dialogue_id}")
    later_feats: list[set] = [set()] * len(turns)
    running: set = set()
    for i in range(len(turns) - 1, -1, -1):
        later_feats[i] = set(running)
        running |= _turn_features(turns[i])

    boundaries: list[int] = []  # boundary after turn index i
    gaps: list[int] = []
    seg_start = 0
    budget = rng.randint(cfg.turn_budget_min, cfg.turn_budget_max)
    failed_commit = False
    for i, turn in enumerate(turns):
        if i == len(turns) - 1:
            break
        triggered = bool(turn.meta.get("goal_complete")) or (i - seg_start + 1 >= budget)
        if not triggered:
            continue
        segment_feats = set()
        for t in turns[seg_start : i + 1]:
            segment_feats |= _turn_features(t)
        if segment_feats & later_feats[i]:
            boundaries.append(i)
            gaps.append(rng.choice(cfg.gap_hours_choices))
            seg_start = i + 1
            budget = rng.randint(cfg.turn_budget_min, cfg.turn_budget_max)
        else:
            failed_commit = True

    if not boundaries:
        out.sessions = [Session(1, list(turns))]
        if failed_commit:
            _add_warning(out, "no committable boundary: no entity recurs across any split")
        return out

    starts = [0] + [b + 1 for b in boundaries]
    ends = [b + 1 for b in boundaries] + [len(turns)]
    for si, (lo, hi) in enumerate(zip(starts, ends), start=1):
        gap_tag = f"<GAP=hours:{gaps[si - 2]}>" if si > 1 else None
        out.sessions.append(Session(si, list(turns[lo:hi]), gap_tag=gap_tag))
    return out


@dataclass(frozen=True)
class AuditRecord:
    dialogue_id: str
    passed: bool
    reason: str


@dataclass(frozen=True)
class AuditReport:
    records: tuple[AuditRecord, ...]
    audited: int
    total: int

    @property
    def pass_fraction(self) -> float:
        return sum(r.passed for r in self.records) / self.audited if self.audited else 0.0

    def to_records(self) -> list[dict]:
        return [
            {"dialogue_id": r.dialogue_id, "pass": r.passed, "reason": r.reason}
            for r in self.records
        ]


def audit(corpus: Sequence[AnnotatedDialogue], cfg: SessionizerConfig) -> AuditReport:
    """Sample ceil(fraction * N) dialogues and confirm cross-session recall:
    some gold query must be supported by an entry from an earlier session."""
    n_audit = min(len(corpus), math.ceil(cfg.audit_fraction * len(corpus)))
    rng = random.Random(f"{cfg.rng_seed}:audit")
    chosen = sorted(rng.sample(range(len(corpus)), n_audit)) if n_audit else []

    id_session: dict[int, tuple[str, int]] = {}
    for entry_id, dialogue, session, _turn in iter_turns_with_ids(list(corpus)):
        id_session[entry_id] = (dialogue.dialogue_id, session.session_id)

    records = []
    for di in chosen:
        dialogue = corpus[di]
        gold_turns = [
            (session.session_id, turn)
            for session, turn in dialogue.turns()
            if turn.gold is not None
        ]
        if not gold_turns:
            records.append(AuditRecord(dialogue.dialogue_id, False, "no gold queries"))
            continue
        passed = False
        for query_session, turn in gold_turns:
            for sid in turn.gold.supporting_entry_ids:
                where = id_session.get(sid)
                if where and where[0] == dialogue.dialogue_id and where[1] < query_session:
                    passed = True
                    break
            if passed:
                break
        reason = ("earlier-session support found" if passed
                  else "no gold query supported from an earlier session")
        records.append(AuditRecord(dialogue.dialogue_id, passed, reason))
    return AuditReport(tuple(records), audited=len(chosen), total=len(corpus))


# --- long-range extension (boundary insertion + pronoun rewrites) ------------

DEFAULT_PRONOUN_MAP: dict[str, tuple[str, ...]] = {
    "PERSON": ("he", "she", "they"),
    "ORG": ("it",),
    "LOC": ("it",),
    "MISC": ("it",),
}


@dataclass(frozen=True)
class LongRangeConfig:
    boundary_min: int = 6
    boundary_max: int = 10
    pronoun_map: dict = field(default_factory=lambda: dict(DEFAULT_PRONOUN_MAP))
    rng_seed: int = 0
    retry_limit: int = 16

    def __post_init__(self):
        if not (1 <= self.boundary_min <= self.boundary_max):
            raise ValueError("need 1 <= boundary_min <= boundary_max")
        if self.retry_limit < 1:
            raise ValueError("retry_limit must be >= 1")


def _draw_boundaries(n_turns: int, cfg: LongRangeConfig, rng: random.Random,
                     evidence: list[bool]) -> list[int]:
    """Boundary positions as turn counts (boundary after turn b-1, 0-based).

    Each inter-boundary gap is a seeded draw in [min, max]; within the
    drawable band we prefer cuts not adjacent to relation-evidence turns,
    picking the qualifying position closest to the draw (ties go low)."""
    boundaries: list[int] = []
    prev = 0
    while True:
        lo = prev + cfg.boundary_min
        hi = min(prev + cfg.boundary_max, n_turns - 1)
        if lo > hi:
            break
        drawn = min(prev + rng.randint(cfg.boundary_min, cfg.boundary_max), hi)
        band = range(lo, hi + 1)
        preferred = [p for p in band if not (evidence[p - 1] or evidence[p])]
        pick = min(preferred, key=lambda p: (abs(p - drawn), p)) if preferred else drawn
        boundaries.append(pick)
        prev = pick
    return boundaries


def _split_by_boundaries(turns: list[Turn], boundaries: list[int]) -> list[list[Turn]]:
    starts = [0] + list(boundaries)
    ends = list(boundaries) + [len(turns)]
    return [turns[lo:hi] for lo, hi in zip(starts, ends)]


def _rewrite_mention(turn: Turn, mention: EntityMention, pronoun: str) -> None:
    start, end = mention.span
    surface = pronoun.capitalize() if start == 0 else pronoun
    turn.text = turn.text[:start] + surface + turn.text[end:]
    delta = len(surface) - (end - start)
    new_entities = []
    for ent in turn.entities:
        if ent is mention:
            new_entities.append(
                EntityMention(surface, ent.coref_id, ent.ner_type,
                              span=(start, start + len(surface))))
        elif ent.span is not None and ent.span[0] >= end:
            new_entities.append(
                EntityMention(ent.name, ent.coref_id, ent.ner_type,
                              span=(ent.span[0] + delta, ent.span[1] + delta)))
        else:
            new_entities.append(ent)
    turn.entities = new_entities


def _copy_turn(turn: Turn) -> Turn:
    return Turn(
        turn_id=turn.turn_id,
        speaker=turn.speaker,
        timestamp=turn.timestamp,
        text=turn.text,
        entities=list(turn.entities),
        dep_triples=list(turn.dep_triples),
        discourse=list(turn.discourse),
        embedding=turn.embedding,
        gold=turn.gold,
        meta=dict(turn.meta),
    )


def extend_long_range(dialogue: AnnotatedDialogue, cfg: LongRangeConfig,
                      id_base: int = 0) -> AnnotatedDialogue:
    """Insert session boundaries every few turns and force cross-session
    coreference by rewriting the first later-session repeat of a proper
    name to a pronoun (the mention keeps its coref id, so the chain spans
    the boundary by construction).

    When the dialogue carries gold queries, at least one must end up
    supported from an earlier session; boundaries are redrawn up to the
    retry limit, after which the dialogue is returned unmodified with a
    warning. ``id_base`` is the entry id of this dialogue's first turn in
    its corpus. Dependency triples and embeddings are not recomputed for
    rewritten turns; rewrites are logged in the dialogue metadata.
    """
    original = _flatten(dialogue)
    n = len(original)
    if n <= cfg.boundary_min:
        out = AnnotatedDialogue(dialogue.dialogue_id, [Session(1, list(original))],
                                dict(dialogue.metadata))
        _add_warning(out, "too short for long-range boundaries")
        return out

    has_gold = any(t.gold is not None for t in original)
    evidence = [bool(t.meta.get("relation_evidence")) for t in original]

    for attempt in range(cfg.retry_limit):
        rng = random.Random(
            f"{cfg.rng_seed}:longrange:{dialogue.dialogue_id}:{attempt}")
        boundaries = _draw_boundaries(n, cfg, rng, evidence)
        turns = [_copy_turn(t) for t in original]
        segments = _split_by_boundaries(turns, boundaries)

        # session index per turn position
        session_of: list[int] = []
        for si, seg in enumerate(segments, start=1):
            session_of.extend([si] * len(seg))

        rewrites = []
        first_session_of_name: dict[str, int] = {}
        rewritten_names: set[str] = set()
        for pos, turn in enumerate(turns):
            for mention in list(turn.entities):
                if mention.span is None or not mention.name or not mention.name[0].isupper():
                    continue
                name_key = mention.name.lower()
                seen_in = first_session_of_name.get(name_key)
                if seen_in is None:
                    first_session_of_name[name_key] = session_of[pos]
                elif session_of[pos] > seen_in and name_key not in rewritten_names:
                    pronouns = cfg.pronoun_map.get(mention.ner_type) or ("it",)
                    pronoun = rng.choice(list(pronouns))
                    old_surface = mention.name
                    _rewrite_mention(turn, mention, pronoun)
                    rewrites.append(
                        {"turn_id": turn.turn_id, "from": old_surface, "to": pronoun})
                    rewritten_names.add(name_key)

        if has_gold:
            supported = False
            for pos, turn in enumerate(turns):
                if turn.gold is None:
                    continue
                for sid in turn.gold.supporting_entry_ids:
                    local = sid - id_base
                    if 0 <= local < n and session_of[local] < session_of[pos]:
                        supported = True
                        break
                if supported:
                    break
            if not supported:
                continue

        out = AnnotatedDialogue(dialogue.dialogue_id, metadata=dict(dialogue.metadata))
        for si, seg in enumerate(segments, start=1):
            out.sessions.append(Session(si, seg))
        if rewrites:
            out.metadata = dict(out.metadata)
            out.metadata["pronoun_rewrites"] = rewrites
        return out

    out = AnnotatedDialogue(dialogue.dialogue_id,
                            [Session(s.session_id, list(s.turns), s.gap_tag)
                             for s in dialogue.sessions],
                            dict(dialogue.metadata))
    _add_warning(out, f"long-range boundary retries exhausted ({cfg.retry_limit})")
    return out


# --- synthetic corpus generator ----------------------------------------------

_ADJ_TOPICS = (
    "amber", "cobalt", "crimson", "ivory", "jade", "maroon", "obsidian",
    "pearl", "russet", "sable", "teal", "umber", "violet", "ochre", "indigo",
    "saffron", "coral", "slate", "bronze", "copper",
)
_NOUN_TOPICS = (
    "workshop", "festival", "seminar", "recital", "regatta", "exhibit",
    "auction", "banquet", "parade", "symposium", "masterclass", "retreat",
    "tasting", "tournament", "lecture", "fair", "gala", "showcase", "picnic",
    "cruise",
)
_PERSON_BANK = (
    "Alice", "Bob", "Carol", "David", "Elena", "Frank", "Grace", "Henry",
    "Irene", "Jack", "Karen", "Liam", "Maria", "Noah", "Olivia", "Peter",
    "Quinn", "Rosa", "Sam", "Tara", "Uma", "Victor", "Wendy", "Brenda",
    "Marco", "Lucia", "Ravi", "Asha", "Omar", "Nadia", "Felix", "Ingrid",
)
_ORG_FIRST = (
    "Parkview", "Sunset", "Harborview", "Maplewood", "Cedarwood",
    "Willowbrook", "Lakeside", "Stonebridge", "Rosewood", "Foxglove",
    "Brightwater", "Oakhurst",
)
_ORG_SECOND = ("Hotel", "Bistro", "Museum", "Bakery", "Theater", "Inn")
_FILLER_WORDS = (
    "breeze", "lantern", "pebble", "meadow", "drizzle", "ember", "willow",
    "thicket", "harvest", "orchard", "quilt", "saddle", "marble", "canyon",
    "prairie", "tundra", "glacier", "lagoon", "mosaic", "fountain",
)

QUERY_CLASSES = ("lexical", "entity", "discourse")


class GeneratorError(CorpusError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated corpus. Query counts are per dialogue; the
    entity class alternates a person anchor (pronoun "he") and a venue
    anchor (pronoun "it") and is capped at 2 per dialogue because the toy
    annotator resolves pronouns by recency in exactly those two channels."""

    n_dialogues: int = 10
    lexical_per_dialogue: int = 2
    entity_per_dialogue: int = 2
    discourse_per_dialogue: int = 1
    distractors_per_query: int = 5
    sessions_per_dialogue: int = 3
    fillers_per_session: int = 3
    session_distance: Optional[int] = None
    dim: int = 256
    seed: int = 0
    # verify the planted cosine windows per query (needed for the difficulty
    # classes to mean anything; turn off for bulk corpora where only gold
    # bookkeeping matters and collision noise would burn topic variants)
    plant_difficulty: bool = True

    def __post_init__(self):
        if not (0 <= self.entity_per_dialogue <= 2):
            raise ValueError("entity_per_dialogue must be 0, 1 or 2")
        if self.session_distance is not None and self.session_distance < 1:
            raise ValueError("session_distance must be >= 1")
        if self.sessions_per_dialogue < 2 and self.session_distance is None:
            raise ValueError("need at least 2 sessions")
        if self.distractors_per_query < 1:
            raise ValueError("need at least 1 distractor per query")


class _TopicPool:
    """Deterministic, globally unique (adjective, noun) topic tuples."""

    def __init__(self):
        self._i = 0

    def take(self) -> tuple[str, str]:
        if self._i >= len(_ADJ_TOPICS) * len(_NOUN_TOPICS):
            raise GeneratorError("topic bank exhausted; extend the word banks")
        adj = _ADJ_TOPICS[self._i % len(_ADJ_TOPICS)]
        noun = _NOUN_TOPICS[(self._i // len(_ADJ_TOPICS)) % len(_NOUN_TOPICS)]
        self._i += 1
        return adj, noun


def _cos(a, b) -> float:
    return a.dot(b)


@dataclass
class _PlannedQuery:
    cls: str
    query_text: str
    gold_text: str
    answer_span: str
    distractor_texts: list[str]
    anchor_name: Optional[str] = None   # entity class only
    pronoun: Optional[str] = None


_ENTITY_DISTRACTORS_PERSON = (
    "We must confirm the {adj} {noun} booking time soon please.",
    "Can we confirm the {adj} {noun} booking time later today?",
    "Please confirm the {adj} {noun} booking time before lunch.",
    "Did anyone confirm the {adj} {noun} booking time yet?",
    "We should confirm the {adj} {noun} booking time this week.",
    "The plan was to confirm the {adj} {noun} booking time first.",
)
_ENTITY_DISTRACTORS_ORG = (
    "We tried to fit the {adj} {noun} schedule around other plans.",
    "Can anything move to fit the {adj} {noun} schedule this month?",
    "Please try to fit the {adj} {noun} schedule somewhere sensible.",
    "We hoped to fit the {adj} {noun} schedule without more fuss.",
    "The aim was to fit that {adj} {noun} schedule neatly enough.",
    "Did we manage to fit the {adj} {noun} schedule properly?",
)
_DISCOURSE_DISTRACTORS = (
    "Did the {adj} {noun} plan quietly change for anyone today?",
    "Did one {adj} {noun} plan simply change without much notice?",
    "Did some {adj} {noun} plan really change during the week?",
    "Did every {adj} {noun} plan somehow change before the meeting?",
    "Did any {adj} {noun} plan actually change since we spoke?",
    "Did a {adj} {noun} plan possibly change behind the scenes?",
)


def _plan_lexical(adj: str, noun: str) -> _PlannedQuery:
    return _PlannedQuery(
        cls="lexical",
        query_text=f"When does the {adj} {noun} start exactly?",
        gold_text=f"The {adj} {noun} starts at noon with a short welcome.",
        answer_span=f"{adj} {noun} starts at noon",
        distractor_texts=[],
    )


def _plan_entity_person(adj: str, noun: str, name: str, k: int) -> _PlannedQuery:
    return _PlannedQuery(
        cls="entity",
        query_text=f"Did he confirm the {adj} {noun} booking time?",
        gold_text=f"{name} confirmed the {adj} {noun} booking for nine in the morning.",
        answer_span=f"{name} confirmed the",
        distractor_texts=[t.format(adj=adj, noun=noun)
                          for t in _ENTITY_DISTRACTORS_PERSON[:k]],
        anchor_name=name,
        pronoun="he",
    )


def _plan_entity_org(adj: str, noun: str, name: str, k: int) -> _PlannedQuery:
    return _PlannedQuery(
        cls="entity",
        query_text=f"Was it moved to fit the {adj} {noun} schedule?",
        gold_text=f"The {name} got shifted around for that {adj} {noun} schedule instead.",
        answer_span=f"{name} got shifted",
        distractor_texts=[t.format(adj=adj, noun=noun)
                          for t in _ENTITY_DISTRACTORS_ORG[:k]],
        anchor_name=name,
        pronoun="it",
    )


def _plan_discourse(adj: str, noun: str, k: int) -> _PlannedQuery:
    return _PlannedQuery(
        cls="discourse",
        query_text=f"So did that {adj} {noun} plan change after all delays?",
        gold_text=f"Because the schedule slipped the {adj} {noun} plan now needs rework.",
        answer_span=f"{adj} {noun} plan now needs rework",
        distractor_texts=[t.format(adj=adj, noun=noun)
                          for t in _DISCOURSE_DISTRACTORS[:k]],
    )


# gap = cos(query, distractor) - cos(query, gold); windows keep the planted
# ranking valid under default weights with room for hash-collision noise
_ENTITY_GAP_WINDOW = (0.05, 0.36)
_DISCOURSE_GAP_WINDOW = (0.03, 0.20)
_TOPIC_TRIES = 12


def _verify_windows(plan: _PlannedQuery, dim: int) -> bool:
    qv = toy_embed(plan.query_text, dim)
    gv = toy_embed(plan.gold_text, dim)
    cos_g = _cos(qv, gv)
    if plan.cls == "lexical":
        return cos_g >= 0.30
    gaps = [_cos(qv, toy_embed(t, dim)) - cos_g for t in plan.distractor_texts]
    lo, hi = _ENTITY_GAP_WINDOW if plan.cls == "entity" else _DISCOURSE_GAP_WINDOW
    return all(lo < g < hi for g in gaps)


def _planned_query(cls: str, variant: int, topics: _TopicPool, spec: SyntheticSpec,
                   person: str, org: str) -> _PlannedQuery:
    for _try in range(_TOPIC_TRIES):
        adj, noun = topics.take()
        if cls == "lexical":
            plan = _plan_lexical(adj, noun)
        elif cls == "entity" and variant == 0:
            plan = _plan_entity_person(adj, noun, person, spec.distractors_per_query)
        elif cls == "entity":
            plan = _plan_entity_org(adj, noun, org, spec.distractors_per_query)
        else:
            plan = _plan_discourse(adj, noun, spec.distractors_per_query)
        if not spec.plant_difficulty or _verify_windows(plan, spec.dim):
            return plan
    raise GeneratorError(
        f"could not satisfy cosine windows for class {cls!r} after "
        f"{_TOPIC_TRIES} topic variants (dim={spec.dim})")


_BASE_TIME = datetime(2024, 1, 1, 9, 0, 0)
_GAP_ROTATION = (12, 36, 72)


def _fmt(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%S")


def make_synthetic(spec: SyntheticSpec) -> list[AnnotatedDialogue]:
    """Generate a corpus with planted cross-session facts, paraphrase
    distractors, and pronoun-only queries.

    Gold facts live in session 1 and their queries in the final session
    (``session_distance`` sessions later when set). Query turns carry
    ``meta.query_class`` in {lexical, entity, discourse} and gold info whose
    supporting ids follow the standard file-order id assignment. Difficulty
    is planted against the toy embedder and verified at build time:

    - lexical: the gold fact is the cosine nearest neighbor of its query;
    - entity: distractors outrank gold on cosine but share no entity, and
      the query is pronoun-only (coref id reachable only via the chain);
    - discourse: distractors outrank gold on cosine but only the gold
      shares the query's discourse label, within the margin the default
      discourse weight can pay.
    """
    topics = _TopicPool()
    dialogues = []
    gold_patches = []  # (query_turn, gold_turn, span, assignments)
    sessions_n = (spec.session_distance + 1 if spec.session_distance is not None
                  else spec.sessions_per_dialogue)

    for d in range(spec.n_dialogues):
        rng = random.Random(f"{spec.seed}:synth:{d}")
        did = f"dlg-{spec.seed}-{d:04d}"
        person = _PERSON_BANK[(d * 2) % len(_PERSON_BANK)]
        org = (f"{_ORG_FIRST[d % len(_ORG_FIRST)]} "
               f"{_ORG_SECOND[d % len(_ORG_SECOND)]}")

        plans: list[_PlannedQuery] = []
        for _i in range(spec.lexical_per_dialogue):
            plans.append(_planned_query("lexical", 0, topics, spec, person, org))
        for _i in range(spec.discourse_per_dialogue):
            plans.append(_planned_query("discourse", 0, topics, spec, person, org))
        for i in range(spec.entity_per_dialogue):
            plans.append(_planned_query("entity", i, topics, spec, person, org))

        # session text plans: session 1 carries the facts, the last session
        # carries distractors then queries, everything else is filler
        def filler_text() -> str:
            w1 = rng.choice(_FILLER_WORDS)
            w2 = rng.choice(_FILLER_WORDS)
            return f"That afternoon felt calm and the {w1} near the {w2} seemed pleasant."

        session_texts: list[list[tuple[str, str]]] = []  # (kind, text)
        first = [("intro", "Hello there, we should sort out a few plans this month.")]
        first += [("gold", p.gold_text) for p in plans]
        first += [("filler", filler_text()) for _ in range(spec.fillers_per_session)]
        session_texts.append(first)
        for _s in range(sessions_n - 2):
            session_texts.append(
                [("filler", filler_text()) for _ in range(spec.fillers_per_session)])
        last = []
        for p in plans:
            last += [("distractor", t) for t in p.distractor_texts]
        last += [("query", p.query_text) for p in plans]
        session_texts.append(last)

        dialogue = AnnotatedDialogue(did)
        history: list[EntityMention] = []
        clock = _BASE_TIME + timedelta(days=d)
        turn_id = 0
        gold_turns: dict[int, Turn] = {}   # plan index -> gold turn
        query_turns: dict[int, Turn] = {}
        gold_seen = query_seen = 0
        for si, texts in enumerate(session_texts, start=1):
            gap_tag = None
            if si > 1:
                hours = _GAP_ROTATION[(si - 2) % len(_GAP_ROTATION)]
                clock += timedelta(hours=hours)
                gap_tag = f"<GAP=hours:{hours}>"
            session = Session(si, gap_tag=gap_tag)
            for kind, text in texts:
                turn_id += 1
                clock += timedelta(minutes=2)
                entities, triples, discourse = toy_annotate(text, history)
                history.extend(entities)
                turn = Turn(
                    turn_id=turn_id,
                    speaker="user" if turn_id % 2 else "assistant",
                    timestamp=_fmt(clock),
                    text=text,
                    entities=entities,
                    dep_triples=triples,
                    discourse=discourse,
                    embedding=toy_embed(text, spec.dim),
                )
                if kind == "gold":
                    gold_turns[gold_seen] = turn
                    gold_seen += 1
                elif kind == "query":
                    plan = plans[query_seen]
                    turn.meta["query_class"] = plan.cls
                    query_turns[query_seen] = turn
                    query_seen += 1
                elif entities:
                    raise GeneratorError(
                        f"{kind} turn unexpectedly has entities: {text!r}")
                session.turns.append(turn)
            dialogue.sessions.append(session)

        for i, plan in enumerate(plans):
            query_turn = query_turns[i]
            gold_turn = gold_turns[i]
            assignments = None
            if plan.cls == "entity":
                anchor = next(
                    (m for m in gold_turn.entities
                     if plan.anchor_name.lower() in m.name.lower()), None)
                if anchor is None:
                    raise GeneratorError(
                        f"anchor {plan.anchor_name!r} not annotated in gold turn")
                linked = [m for m in query_turn.entities if m.coref_id == anchor.coref_id]
                if not linked:
                    raise GeneratorError(
                        f"query pronoun did not link to anchor {plan.anchor_name!r}")
                assignments = {anchor.name: anchor.coref_id}
            gold_patches.append((query_turn, gold_turn, plan.answer_span, assignments))
        dialogues.append(dialogue)

    id_of_turn: dict[int, int] = {}
    for entry_id, _d, _s, turn in iter_turns_with_ids(dialogues):
        id_of_turn[id(turn)] = entry_id
    for query_turn, gold_turn, span, assignments in gold_patches:
        query_turn.gold = GoldInfo((id_of_turn[id(gold_turn)],), span, assignments)
    return dialogues


def make_tuning_corpus(seed: int = 0, n_queries: int = 4,
                       dim: int = 512) -> list[AnnotatedDialogue]:
    """Corpus planted so grid-searched weights must favor the entity term.

    Each query names a frequently mentioned anchor (cluster size tuned per
    query) plus a singleton, the lone distractor echoes the query wording
    and carries only the singleton, and discourse is uniform. Recall of
    gold then requires lambda_e/lambda_s above a planted ratio that only
    the lambda_s = 0.40 edge of the sweep can reach, and among those points
    the tie-break lands on the lambda_e grid maximum. Evaluate with k=1.
    """
    topics = _TopicPool()
    rng = random.Random(f"{seed}:tuning")
    dialogue = AnnotatedDialogue(f"tune-{seed}-0000")
    plans = []
    for q in range(n_queries):
        anchor = _PERSON_BANK[q * 2]
        single = _PERSON_BANK[q * 2 + 1]
        for _try in range(_TOPIC_TRIES):
            adj, noun = topics.take()
            query_text = (f"Did {anchor} ever join the {adj} {noun} gathering "
                          f"with {single}?")
            gold_text = f"{anchor} did join that gathering quietly weeks ago."
            distractor_text = (f"{single} did ever join the {adj} {noun} gathering "
                               f"with friends maybe.")
            qv = toy_embed(query_text, dim)
            cos_g = _cos(qv, toy_embed(gold_text, dim))
            cos_d = _cos(qv, toy_embed(distractor_text, dim))
            gap = cos_d - cos_g
            if gap <= 0.2:
                continue
            # pick the anchor cluster size whose weight ratio centers the
            # planted recall threshold between the 0.40 and 0.45 sweep edges
            target_delta = gap / 1.36
            best_c, best_err = None, None
            for c in range(2, 16):
                w = math.log(1 + c)
                delta = (w - math.log(2)) / (w + math.log(2))
                err = abs(delta - target_delta)
                if best_err is None or err < best_err:
                    best_c, best_err = c, err
            w = math.log(1 + best_c)
            delta = (w - math.log(2)) / (w + math.log(2))
            ratio = gap / delta
            filler_texts = [
                f"{anchor} greeted some neighbors near the "
                f"{rng.choice(_FILLER_WORDS)} fence yesterday."
                for _ in range(best_c - 1)
            ]
            cos_f = max(_cos(qv, toy_embed(t, dim)) for t in filler_texts)
            if 1.26 <= ratio <= 1.46 and cos_f + 0.04 < cos_g:
                plans.append((query_text, gold_text, distractor_text, filler_texts))
                break
        else:
            raise GeneratorError(
                f"could not plant tuning query {q} (dim={dim})")

    history: list[EntityMention] = []
    clock = _BASE_TIME
    turn_id = 0
    gold_refs = []

    def add_turn(session: Session, text: str) -> Turn:
        nonlocal turn_id, clock
        turn_id += 1
        clock += timedelta(minutes=2)
        entities, triples, discourse = toy_annotate(text, history)
        history.extend(entities)
        turn = Turn(
            turn_id=turn_id,
            speaker="user" if turn_id % 2 else "assistant",
            timestamp=_fmt(clock),
            text=text,
            entities=entities,
            dep_triples=triples,
            discourse=discourse,
            embedding=toy_embed(text, dim),
        )
        session.turns.append(turn)
        return turn

    s1 = Session(1)
    add_turn(s1, "Hello there, we should plan the month a little.")
    gold_turn_of = {}
    for qi, (_q, gold_text, _d, fillers) in enumerate(plans):
        for text in fillers:
            add_turn(s1, text)
        gold_turn_of[qi] = add_turn(s1, gold_text)
    dialogue.sessions.append(s1)

    clock += timedelta(hours=36)
    s2 = Session(2, gap_tag="<GAP=hours:36>")
    query_turn_of = {}
    for qi, (query_text, _g, distractor_text, _f) in enumerate(plans):
        add_turn(s2, distractor_text)
        turn = add_turn(s2, query_text)
        turn.meta["query_class"] = "entity"
        query_turn_of[qi] = turn
    dialogue.sessions.append(s2)

    dialogues = [dialogue]
    id_of_turn = {}
    for entry_id, _d, _s, turn in iter_turns_with_ids(dialogues):
        id_of_turn[id(turn)] = entry_id
    for qi in range(len(plans)):
        query_turn_of[qi].gold = GoldInfo((id_of_turn[id(gold_turn_of[qi])],), "")
    return dialogues
