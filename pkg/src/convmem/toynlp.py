"""Deterministic stand-in annotator and embedder.

These exist so the whole pipeline is testable without any neural models:
the contract is determinism and controllability, not linguistic accuracy.
Real annotations arrive through the record schema (see ``ingest``); a
separate bridge package can produce them from raw transcripts.
"""

from __future__ import annotations

import hashlib
import re
from typing import Sequence

from .model import (
    DependencyTriple,
    DiscourseLabel,
    Embedding,
    EntityMention,
    normalize_embedding,
    normalize_lemma,
)

MIN_EMBED_DIM = 8

_TOKEN_RE = re.compile(r"\w+(?:'\w+)*")

# Function words: never entities, excluded from dependency lemmas.
STOPWORDS = frozenset(
    """
    a an the and or but however because so if then than as of in on at to for
    with from by about into over after before between during against up down
    out off again once here there when where why how all any both each few
    more most other some such no nor not only own same too very just also
    i me my we us our you your he him his she her it its they them their
    this that these those am is are was were be been being have has had do
    does did doing will would shall should may might must can could what
    which who whom whose yes okay ok please thanks thank hello hi maybe
    perhaps someone anyone everyone something anything everything nothing
    apparently later earlier soon today tomorrow yesterday meanwhile
    finally anyway well oh ah um
    """.split()
)

PRONOUNS = ("he", "she", "it", "they")

# PERSON pronouns need a PERSON antecedent; "it" wants a non-person; "they"
# accepts anything.
_PRONOUN_COMPAT = {
    "he": lambda ner: ner == "PERSON",
    "she": lambda ner: ner == "PERSON",
    "it": lambda ner: ner != "PERSON",
    "they": lambda ner: True,
}

_PERSON_TITLES = frozenset({"dr", "mr", "ms", "mrs", "prof", "miss", "sir"})
_PERSON_NAMES = frozenset(
    """
    alice bob carol david elena frank grace henry irene jack karen liam
    maria noah olivia peter quinn rosa sam tara uma victor wendy asha khan
    morales smith jones lee chen patel garcia john james sarah alex priya
    omar nadia felix ingrid tomas yara hugo amira brenda marco lucia ravi
    """.split()
)
_ORG_WORDS = frozenset(
    """
    hotel restaurant cafe deli clinic inn museum bistro bar pharmacy office
    agency bank library theater gym bakery
    """.split()
)
_LOC_WORDS = frozenset(
    """
    street avenue road park square station city bridge plaza harbor lane
    market garden
    """.split()
)

DISCOURSE_CUES = {
    "and": "ELABORATION",
    "also": "ELABORATION",
    "but": "CONTRAST",
    "however": "CONTRAST",
    "because": "CAUSE",
    "so": "CAUSE",
}


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Word tokens with character spans."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def classify_ner(name: str) -> str:
    tokens = [t.lower() for t in name.split()]
    if any(t in _ORG_WORDS for t in tokens):
        return "ORG"
    if any(t in _LOC_WORDS for t in tokens):
        return "LOC"
    if tokens and (tokens[0] in _PERSON_TITLES or any(t in _PERSON_NAMES for t in tokens)):
        return "PERSON"
    return "MISC"


def _next_coref_id(known_ids: set[str]) -> str:
    n = 1
    while f"T{n}" in known_ids:
        n += 1
    return f"T{n}"


def toy_annotate(
    text: str,
    history: Sequence[EntityMention] = (),
) -> tuple[list[EntityMention], list[DependencyTriple], list[DiscourseLabel]]:
    """Rule-based annotation of one turn.

    ``history`` is the flat, chronological list of entity mentions from all
    prior turns of the same dialogue; it drives pronoun linking (most recent
    compatible antecedent) and coref-id reuse for repeated names.

    Rules: capitalized token runs become entities; he/she/it/they link to
    the most recent prior entity with a compatible NER type (unresolvable
    pronouns produce no mention); dependency triples are adjacent
    (lemma, "next", lemma) pairs over non-stopword tokens; the discourse
    label comes from the turn-initial cue word, defaulting to EXPANSION.
    """
    tokens = tokenize(text)
    known_ids = {m.coref_id for m in history}
    name_to_id: dict[str, str] = {}
    for m in history:  # later mentions win: most recent binding for a name
        name_to_id[m.name.lower()] = m.coref_id

    entities: list[EntityMention] = []
    run: list[tuple[str, int, int]] = []

    def flush_run():
        if not run:
            return
        start, end = run[0][1], run[-1][2]
        name = text[start:end]
        key = name.lower()
        if key in name_to_id:
            coref_id = name_to_id[key]
            ner = next(
                (m.ner_type for m in reversed(history) if m.coref_id == coref_id),
                classify_ner(name),
            )
        else:
            coref_id = _next_coref_id(known_ids)
            known_ids.add(coref_id)
            ner = classify_ner(name)
        name_to_id[key] = coref_id
        entities.append(EntityMention(name, coref_id, ner, span=(start, end)))
        run.clear()

    for tok, start, end in tokens:
        low = tok.lower()
        if low in PRONOUNS:
            flush_run()
            compat = _PRONOUN_COMPAT[low]
            antecedent = None
            for m in reversed(entities):
                if compat(m.ner_type):
                    antecedent = m
                    break
            if antecedent is None:
                for m in reversed(history):
                    if compat(m.ner_type):
                        antecedent = m
                        break
            if antecedent is not None:
                entities.append(
                    EntityMention(tok, antecedent.coref_id, antecedent.ner_type, span=(start, end))
                )
            continue
        if tok[0].isupper() and low not in STOPWORDS and not tok.isdigit():
            run.append((tok, start, end))
        else:
            flush_run()
    flush_run()

    lemmas = [normalize_lemma(tok) for tok, _, _ in tokens if tok.lower() not in STOPWORDS]
    triples = [
        DependencyTriple(lemmas[i], "next", lemmas[i + 1]) for i in range(len(lemmas) - 1)
    ]

    first = tokens[0][0].lower() if tokens else ""
    label = DISCOURSE_CUES.get(first, "EXPANSION")
    return entities, triples, [DiscourseLabel(label)]


def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.md5(gram.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % dim


def toy_embed(text: str, dim: int) -> Embedding:
    """Hash-bucket n-gram embedding (n = 1, 2), unit-normalized.

    Deterministic across processes (md5, not the builtin hash). Counts are
    non-negative, so cosines between toy embeddings are always in [0, 1].
    """
    if dim < MIN_EMBED_DIM:
        raise ValueError(f"dim must be >= {MIN_EMBED_DIM}, got {dim}")
    words = [tok.lower() for tok, _, _ in tokenize(text)]
    if not words:
        raise ValueError("no tokens to embed")
    grams = list(words)
    grams.extend(f"{a} {b}" for a, b in zip(words, words[1:]))
    counts = [0.0] * dim
    for gram in grams:
        counts[_bucket(gram, dim)] += 1.0
    return normalize_embedding(counts, dim=dim)


def toy_query_features(
    text: str, history: Sequence[EntityMention] = ()
) -> tuple[list[EntityMention], list[DiscourseLabel]]:
    """Entity set and discourse tags for a raw-text query (toy mode)."""
    entities, _, discourse = toy_annotate(text, history)
    return entities, discourse
