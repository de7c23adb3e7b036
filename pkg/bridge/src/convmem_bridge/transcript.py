"""Raw transcript format.

One turn per line with a speaker prefix, per-dialogue headers, blank
lines as session breaks, ``#`` comments ignored::

    == dialogue: booking-042 ==
    Alice: Hello, I need a taxi for tomorrow.
    Agent: Sure. What time works?

    Alice: The same time as last week please.

Headers may omit the ``dialogue:`` keyword (``== booking-042 ==``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_HEADER_RE = re.compile(r"^==\s*(?:dialogue:\s*)?(?P<id>.+?)\s*==$")


class TranscriptError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class RawTurn:
    speaker: str
    text: str
    line_no: int


@dataclass
class RawDialogue:
    dialogue_id: str
    sessions: list[list[RawTurn]] = field(default_factory=list)


def parse_transcript(path) -> list[RawDialogue]:
    dialogues: list[RawDialogue] = []
    current: RawDialogue | None = None
    pending_break = False
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            stripped = line.strip()
            if stripped.startswith("#"):
                continue
            if not stripped:
                pending_break = True
                continue
            header = _HEADER_RE.match(stripped)
            if header:
                dialogue_id = header.group("id")
                if dialogue_id in seen_ids:
                    raise TranscriptError(line_no, f"duplicate dialogue id {dialogue_id!r}")
                seen_ids.add(dialogue_id)
                current = RawDialogue(dialogue_id, [[]])
                dialogues.append(current)
                pending_break = False
                continue
            if current is None:
                raise TranscriptError(line_no, "turn before any dialogue header")
            if ":" not in stripped:
                raise TranscriptError(line_no, "turn line needs a 'Speaker: text' prefix")
            speaker, text = stripped.split(":", 1)
            speaker = speaker.strip()
            text = text.strip()
            if not speaker:
                raise TranscriptError(line_no, "empty speaker")
            if not text:
                raise TranscriptError(line_no, "empty turn text")
            if pending_break and current.sessions[-1]:
                current.sessions.append([])
            pending_break = False
            current.sessions[-1].append(RawTurn(speaker, text, line_no))
    out = []
    for dialogue in dialogues:
        dialogue.sessions = [s for s in dialogue.sessions if s]
        if not dialogue.sessions:
            raise TranscriptError(0, f"dialogue {dialogue.dialogue_id!r} has no turns")
        out.append(dialogue)
    return out
