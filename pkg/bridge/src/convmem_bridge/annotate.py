"""Transcript -> annotated-record pipeline.

Records follow the engine's line-delimited schema (canonical form: sorted
keys, UTF-8, floats at up to 9 significant digits):

    {dialogue_id, session_id, turn_id, speaker, timestamp, text, gap_tag?,
     entities: [{name, coref_id, ner_type, span}], dep_triples:
     [{head, label, child}], discourse: [label], embedding: [float]}

The output file is written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import math
import os
from datetime import datetime, timedelta

from .config import (
    BridgeConfig,
    load_coref,
    load_discourse,
    load_embedder,
    load_parser,
)
from .discourse import load_sense_map, map_sense
from .transcript import RawDialogue, parse_transcript

_BASE_TIME = datetime(2024, 1, 1, 9, 0, 0)


def _canon(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("non-finite float in record")
        return float(format(value, ".9g"))
    if isinstance(value, dict):
        return {k: _canon(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canon(v) for v in value]
    return value


def record_line(record: dict) -> str:
    return json.dumps(_canon(record), sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def annotate_dialogue(dialogue: RawDialogue, config: BridgeConfig,
                      dialogue_index: int = 0) -> list[dict]:
    parser = load_parser(config)
    resolver = load_coref(config)
    classifier = load_discourse(config)
    embedder = load_embedder(config)
    sense_map = load_sense_map(config.discourse_map_path)

    resolver.start_dialogue()
    records: list[dict] = []
    clock = _BASE_TIME + timedelta(days=dialogue_index)
    turn_id = 0
    texts: list[str] = []
    for session in dialogue.sessions:
        texts.extend(turn.text for turn in session)
    embeddings: list[list[float]] = []
    for lo in range(0, len(texts), config.batch_size):
        embeddings.extend(embedder.embed_batch(texts[lo : lo + config.batch_size]))

    flat_index = 0
    for session_id, session in enumerate(dialogue.sessions, start=1):
        gap_tag = None
        if session_id > 1:
            clock += timedelta(hours=config.gap_hours)
            gap_tag = f"<GAP=hours:{config.gap_hours}>"
        for i, turn in enumerate(session):
            turn_id += 1
            clock += timedelta(minutes=1)
            mentions = resolver.resolve_turn(turn.speaker, turn.text)
            triples = parser.parse(turn.text)
            sense = classifier.classify(turn.text)
            record = {
                "dialogue_id": dialogue.dialogue_id,
                "session_id": session_id,
                "turn_id": turn_id,
                "speaker": turn.speaker,
                "timestamp": clock.strftime("%Y-%m-%dT%H:%M:%S"),
                "text": turn.text,
                "entities": [
                    {"name": m.name, "coref_id": m.coref_id,
                     "ner_type": m.ner_type, "span": [m.start, m.end]}
                    for m in mentions
                ],
                "dep_triples": [
                    {"head": h, "label": l, "child": c} for h, l, c in triples
                ],
                "discourse": [map_sense(sense, sense_map)],
                "embedding": embeddings[flat_index],
            }
            if i == 0 and gap_tag:
                record["gap_tag"] = gap_tag
            records.append(record)
            flat_index += 1
    return records


def annotate_transcript(transcript_path, config: BridgeConfig | None = None) -> list[dict]:
    config = config or BridgeConfig()
    dialogues = parse_transcript(transcript_path)
    records: list[dict] = []
    for index, dialogue in enumerate(dialogues):
        records.extend(annotate_dialogue(dialogue, config, index))
    return records


def bridge_annotate(transcript_path, out_path, config: BridgeConfig | None = None) -> int:
    """Annotate a transcript file into a record file; returns record count."""
    records = annotate_transcript(transcript_path, config)
    tmp_path = f"{out_path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record_line(record) + "\n")
    os.replace(tmp_path, out_path)
    return len(records)
