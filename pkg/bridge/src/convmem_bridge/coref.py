"""Coreference backend: deterministic mention chains.

Mentions are capitalized token runs plus personal pronouns. Chains form
by exact name match, by shared surname for titled person names
("Dr. Morales" ~ "Morales"), and by recency for pronouns with a
gender/type compatibility check. First-person pronouns resolve to the
turn's speaker, second-person to the other party of a two-speaker
dialogue. Cluster ids are C0, C1, ... in first-mention order and stay
stable for the whole dialogue.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z'.]*")

TITLES = frozenset({"dr", "mr", "ms", "mrs", "prof", "miss", "sir", "dame"})

MALE_NAMES = frozenset(
    "bob david frank henry jack liam noah peter sam victor john james "
    "alex omar felix tomas hugo marco ravi".split())
FEMALE_NAMES = frozenset(
    "alice carol elena grace irene karen maria olivia quinn rosa tara uma "
    "wendy sarah priya nadia ingrid yara amira lucia asha brenda".split())

ORG_WORDS = frozenset(
    "hotel restaurant cafe deli clinic inn museum bistro bar pharmacy "
    "office agency bank library theater gym bakery company".split())
LOC_WORDS = frozenset(
    "street avenue road park square station city bridge plaza harbor "
    "lane market".split())

STOP_CAPS = frozenset(
    """
    the a an and or but so because however also if then i you he she it
    they we my your his her its their our what when where who why how did
    do does is are was were can could will would should may might must
    please thanks hello hi okay ok yes no that this there here
    """.split()
)

PRONOUNS = {
    "he": "male", "him": "male", "his": "male",
    "she": "female", "her": "female", "hers": "female",
    "it": "thing", "its": "thing",
    "they": "any", "them": "any", "their": "any",
}
FIRST_PERSON = frozenset({"i", "me", "my", "mine"})
SECOND_PERSON = frozenset({"you", "your", "yours"})


@dataclass
class Mention:
    name: str
    start: int
    end: int
    cluster: "Cluster"

    @property
    def coref_id(self) -> str:
        return self.cluster.coref_id

    @property
    def ner_type(self) -> str:
        return self.cluster.ner_type


@dataclass
class Cluster:
    coref_id: str
    canonical: str
    ner_type: str
    gender: str = "unknown"  # male | female | thing | unknown


def classify(name: str) -> tuple[str, str]:
    """(ner_type, gender) for a surface name."""
    tokens = [t.lower().strip(".") for t in name.split()]
    if any(t in ORG_WORDS for t in tokens):
        return "ORG", "thing"
    if any(t in LOC_WORDS for t in tokens):
        return "LOC", "thing"
    content = [t for t in tokens if t not in TITLES]
    if tokens and tokens[0] in TITLES:
        gender = "unknown"
        for t in content:
            if t in MALE_NAMES:
                gender = "male"
            elif t in FEMALE_NAMES:
                gender = "female"
        return "PERSON", gender
    for t in content:
        if t in MALE_NAMES:
            return "PERSON", "male"
        if t in FEMALE_NAMES:
            return "PERSON", "female"
    return "MISC", "thing"


def _pronoun_compatible(kind: str, cluster: Cluster) -> bool:
    if kind == "any":
        return True
    if kind == "thing":
        return cluster.ner_type != "PERSON"
    # he/she: a PERSON whose gender matches or is unknown
    return cluster.ner_type == "PERSON" and cluster.gender in (kind, "unknown")


class ChainResolver:
    """Per-dialogue state machine; call ``start_dialogue`` between dialogues."""

    name = "builtin-chains"

    def __init__(self):
        self.start_dialogue()

    def start_dialogue(self) -> None:
        self._clusters: list[Cluster] = []
        self._by_name: dict[str, Cluster] = {}
        self._by_surname: dict[str, Cluster] = {}
        self._recent: list[Cluster] = []
        self._speakers: list[str] = []

    def _new_cluster(self, name: str) -> Cluster:
        ner, gender = classify(name)
        cluster = Cluster(f"C{len(self._clusters)}", name, ner, gender)
        self._clusters.append(cluster)
        return cluster

    def _register(self, name: str) -> Cluster:
        key = name.lower()
        cluster = self._by_name.get(key)
        if cluster is None:
            tokens = [t.lower().strip(".") for t in name.split()]
            content = [t for t in tokens if t not in TITLES]
            surname = content[-1] if content else None
            if surname and surname in self._by_surname \
                    and self._by_surname[surname].ner_type == "PERSON":
                cluster = self._by_surname[surname]
            else:
                cluster = self._new_cluster(name)
            self._by_name[key] = cluster
            if surname and cluster.ner_type == "PERSON":
                self._by_surname.setdefault(surname, cluster)
        return cluster

    def _speaker_cluster(self, speaker: str) -> Cluster:
        return self._register(speaker)

    def _touch(self, cluster: Cluster) -> None:
        if cluster in self._recent:
            self._recent.remove(cluster)
        self._recent.append(cluster)

    def resolve_turn(self, speaker: str, text: str) -> list[Mention]:
        """Mentions for one turn, in span order."""
        if speaker not in self._speakers:
            self._speakers.append(speaker)
        speaker_cluster = self._speaker_cluster(speaker)
        other_cluster: Optional[Cluster] = None
        others = [s for s in self._speakers if s != speaker]
        if len(others) == 1:
            other_cluster = self._speaker_cluster(others[0])

        mentions: list[Mention] = []
        run: list[tuple[str, int, int]] = []

        def flush_run():
            if not run:
                return
            start, end = run[0][1], run[-1][2]
            name = text[start:end]
            cluster = self._register(name)
            self._touch(cluster)
            mentions.append(Mention(name, start, end, cluster))
            run.clear()

        for match in _TOKEN_RE.finditer(text):
            token = match.group(0)
            low = token.lower().strip(".")
            if low in PRONOUNS or low in FIRST_PERSON or low in SECOND_PERSON:
                flush_run()
                cluster = None
                if low in FIRST_PERSON:
                    cluster = speaker_cluster
                elif low in SECOND_PERSON:
                    cluster = other_cluster
                else:
                    kind = PRONOUNS[low]
                    for cand in reversed(self._recent):
                        if _pronoun_compatible(kind, cand):
                            cluster = cand
                            break
                if cluster is not None:
                    self._touch(cluster)
                    mentions.append(Mention(token, match.start(), match.end(), cluster))
                continue
            bare = token.rstrip(".")
            if bare and bare[0].isupper() and bare.lower() not in STOP_CAPS:
                # keep the dot of abbreviated titles ("Dr."), drop sentence dots
                end = match.start() + len(bare)
                if bare.lower().strip(".") in TITLES and token.endswith("."):
                    end = match.end()
                    bare = token
                run.append((bare, match.start(), end))
            else:
                flush_run()
        flush_run()
        return mentions
