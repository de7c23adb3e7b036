"""Annotation bridge: turns raw dialogue transcripts into the structured
record files the memory engine ingests.

The bridge runs dependency parsing, coreference resolution, discourse
classification, and sentence embedding over transcripts and writes
line-delimited JSON records. It never imports the engine: the record
schema is the whole contract, so either side can be replaced.

Backends are pluggable via BridgeConfig identifiers. The default
"builtin" backends are deterministic rule-based models that need no
downloads; adapters for heavier models raise a clean model-load error
when the runtime or weights are unavailable.
"""

__version__ = "0.1.0"

from .annotate import annotate_transcript, bridge_annotate
from .config import BridgeConfig, BridgeModelError
from .transcript import TranscriptError, parse_transcript

__all__ = [
    "BridgeConfig",
    "BridgeModelError",
    "TranscriptError",
    "annotate_transcript",
    "bridge_annotate",
    "parse_transcript",
]
