"""Dependency parsing backends.

The builtin backend is a subject-verb-object heuristic: find the main
verb, take the noun-group heads on either side, and emit labeled triples
(nsubj, dobj, plus prep edges and in-chunk amod/compound modifiers).
Verb lemmas are stripped to a small lexicon; everything else is
lowercased as-is so proper names survive.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z']*|\d+")

VERB_LEXICON = frozenset(
    """
    show confirm book schedule move meet say tell ask want need go come
    make take give get see know think plan join visit call check reserve
    cancel arrive leave start end agree discuss review finish open close
    pay send receive bring find help work stay change slip shift talk
    remember forget decide prefer like love hate try keep look wait hear
    happen seem feel run walk drive fly order suggest recommend update
    reschedule delay prepare
    """.split()
)

AUXILIARIES = frozenset(
    """
    is are was were be been being am has have had do does did will would
    shall should can could may might must
    """.split()
)

DETERMINERS = frozenset("the a an this that these those my your his her its our their some any each every no".split())

PREPOSITIONS = frozenset("of in at for with on to by from about near after before during between into over under".split())

_ADJ_SUFFIXES = ("ive", "ous", "ful", "able", "ible", "al", "ic", "ish", "ary")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def verb_lemma(token: str) -> str | None:
    """Lemma of ``token`` if it inflects to a known verb, else None."""
    low = token.lower()
    if low in VERB_LEXICON:
        return low
    if low.endswith("ies") and low[:-3] + "y" in VERB_LEXICON:
        return low[:-3] + "y"
    if low.endswith("es") and low[:-2] in VERB_LEXICON:
        return low[:-2]
    if low.endswith("s") and low[:-1] in VERB_LEXICON:
        return low[:-1]
    if low.endswith("ed"):
        stem = low[:-2]
        if stem in VERB_LEXICON:
            return stem
        if stem + "e" in VERB_LEXICON:
            return stem + "e"
        if stem and stem[-1] == stem[:-1][-1:] and stem[:-1] in VERB_LEXICON:
            return stem[:-1]
    if low.endswith("ing"):
        stem = low[:-3]
        if stem in VERB_LEXICON:
            return stem
        if stem + "e" in VERB_LEXICON:
            return stem + "e"
        if stem and stem[-1] == stem[:-1][-1:] and stem[:-1] in VERB_LEXICON:
            return stem[:-1]
    return None


def word_lemma(token: str) -> str:
    """Conservative lemma: lowercase, reserve ':' for key separators."""
    return token.lower().replace(":", "_")


def _looks_adjectival(token: str) -> bool:
    low = token.lower()
    return low.endswith(_ADJ_SUFFIXES) or low.endswith("y")


class SvoParser:
    """Heuristic clause parser emitting (head, label, child) lemma triples."""

    name = "builtin-svo"

    def parse(self, text: str) -> list[tuple[str, str, str]]:
        tokens = tokenize(text)
        if not tokens:
            return []
        lowers = [t.lower() for t in tokens]

        verb_idx = None
        verb = None
        for i, token in enumerate(tokens):
            if lowers[i] in AUXILIARIES:
                continue
            if i > 0 and lowers[i - 1] in DETERMINERS:
                continue  # "the show" is a noun use
            lemma = verb_lemma(token)
            if lemma is not None:
                verb_idx, verb = i, lemma
                break
        if verb_idx is None:
            return []

        triples: list[tuple[str, str, str]] = []

        def chunk_head(span):
            content = [j for j in span
                       if lowers[j] not in DETERMINERS
                       and lowers[j] not in AUXILIARIES
                       and lowers[j] not in PREPOSITIONS]
            if not content:
                return None, []
            head = content[-1]
            return head, content[:-1]

        subj_head, subj_mods = chunk_head(range(0, verb_idx))
        if subj_head is not None:
            triples.append((verb, "nsubj", word_lemma(tokens[subj_head])))
            for j in subj_mods:
                label = "amod" if _looks_adjectival(tokens[j]) else "compound"
                triples.append((word_lemma(tokens[subj_head]), label,
                                word_lemma(tokens[j])))

        obj_span = []
        prep_spans: list[tuple[str, list[int]]] = []
        current = obj_span
        for j in range(verb_idx + 1, len(tokens)):
            if lowers[j] in AUXILIARIES:
                continue
            if lowers[j] in PREPOSITIONS:
                prep_spans.append((lowers[j], []))
                current = prep_spans[-1][1]
                continue
            current.append(j)
        obj_head, obj_mods = chunk_head(obj_span)
        if obj_head is not None:
            triples.append((verb, "dobj", word_lemma(tokens[obj_head])))
            for j in obj_mods:
                label = "amod" if _looks_adjectival(tokens[j]) else "compound"
                triples.append((word_lemma(tokens[obj_head]), label,
                                word_lemma(tokens[j])))
        for prep, span in prep_spans:
            head, _mods = chunk_head(span)
            if head is not None:
                triples.append((verb, f"prep_{prep}", word_lemma(tokens[head])))
        return triples


class SpacyParser:
    """Adapter for a spaCy dependency model; requires spaCy plus the model
    weights to be installed."""

    def __init__(self, model: str):
        from .config import BridgeModelError

        try:
            import spacy  # type: ignore
        except ImportError as exc:
            raise BridgeModelError(
                f"model load failure: spaCy is not installed ({exc})") from exc
        try:
            self._nlp = spacy.load(model)
        except Exception as exc:
            raise BridgeModelError(
                f"model load failure: could not load {model!r}: {exc}") from exc
        self.name = f"spacy:{model}"

    def parse(self, text: str) -> list[tuple[str, str, str]]:
        doc = self._nlp(text)
        triples = []
        for token in doc:
            if token.dep_ in ("ROOT", "punct"):
                continue
            triples.append((word_lemma(token.head.lemma_), token.dep_.lower(),
                            word_lemma(token.lemma_)))
        return triples
