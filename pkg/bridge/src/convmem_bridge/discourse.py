"""Discourse classification backend.

The builtin classifier keys on the connective opening the utterance (or
the first mid-sentence connective) and emits a second-level sense string
(e.g. "Contingency.Cause"). The mapping from senses to the coarse label
inventory ships as a data file, not code, so it can be swapped without
touching the classifier; senses missing from the map surface as
OTHER(<sense>) rather than being dropped.
"""

from __future__ import annotations

import json
import re
from importlib import resources

_WORD_RE = re.compile(r"[a-z']+")

# connective -> sense; two-word connectives are checked first
CONNECTIVE_SENSES = {
    "for example": "Expansion.Instantiation",
    "for instance": "Expansion.Instantiation",
    "in fact": "Expansion.Restatement",
    "even though": "Comparison.Concession",
    "as if": "Comparison.Similarity",
    "so that": "Contingency.Purpose",
    "because": "Contingency.Cause",
    "since": "Contingency.Cause",
    "therefore": "Contingency.Cause",
    "thus": "Contingency.Cause",
    "hence": "Contingency.Cause",
    "so": "Contingency.Cause",
    "if": "Contingency.Condition",
    "unless": "Contingency.Condition",
    "but": "Comparison.Contrast",
    "however": "Comparison.Contrast",
    "yet": "Comparison.Contrast",
    "although": "Comparison.Concession",
    "though": "Comparison.Concession",
    "instead": "Comparison.Contrast",
    "when": "Temporal.Synchronous",
    "while": "Temporal.Synchronous",
    "meanwhile": "Temporal.Synchronous",
    "after": "Temporal.Asynchronous",
    "before": "Temporal.Asynchronous",
    "then": "Temporal.Asynchronous",
    "until": "Temporal.Asynchronous",
    "once": "Temporal.Asynchronous",
    "also": "Expansion.Conjunction",
    "and": "Expansion.Conjunction",
    "moreover": "Expansion.Conjunction",
    "furthermore": "Expansion.Conjunction",
    "besides": "Expansion.Conjunction",
    "additionally": "Expansion.Conjunction",
}

DEFAULT_SENSE = "Expansion.Default"


def load_sense_map(path=None) -> dict[str, str]:
    if path is not None:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    data = resources.files("convmem_bridge").joinpath("data/discourse_map.json")
    return json.loads(data.read_text(encoding="utf-8"))


class ConnectiveClassifier:
    name = "builtin-connectives"

    def classify(self, text: str) -> str:
        """Second-level sense string for one utterance."""
        words = _WORD_RE.findall(text.lower())
        if not words:
            return DEFAULT_SENSE
        if len(words) >= 2:
            sense = CONNECTIVE_SENSES.get(f"{words[0]} {words[1]}")
            if sense:
                return sense
        sense = CONNECTIVE_SENSES.get(words[0])
        if sense:
            return sense
        # first mid-sentence single-word connective, if any
        for word in words[1:]:
            sense = CONNECTIVE_SENSES.get(word)
            if sense and not sense.startswith("Expansion.Conjunction"):
                return sense
        return DEFAULT_SENSE


def map_sense(sense: str, sense_map: dict[str, str]) -> str:
    """Coarse label for a sense; unmapped senses keep their tag as OTHER."""
    label = sense_map.get(sense)
    if label is None:
        return f"OTHER({sense.upper()})"
    return label
