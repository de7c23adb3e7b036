"""Bridge configuration and backend registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


class BridgeModelError(RuntimeError):
    """A configured backend could not be resolved or loaded."""


@dataclass(frozen=True)
class BridgeConfig:
    parser: str = "builtin-svo"
    coref: str = "builtin-chains"
    discourse: str = "builtin-connectives"
    embedder: str = "hashgram"
    dim: int = 768
    batch_size: int = 32
    device: str = "cpu"
    # mapping from classifier senses to the coarse label set; None loads
    # the packaged table
    discourse_map_path: Optional[str] = None
    gap_hours: int = 36

    def __post_init__(self):
        for field in ("parser", "coref", "discourse", "embedder"):
            if not getattr(self, field):
                raise ValueError(f"{field} identifier must be non-empty")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.dim < 8:
            raise ValueError("dim must be >= 8")


def load_parser(config: BridgeConfig):
    from . import parsers

    if config.parser == "builtin-svo":
        return parsers.SvoParser()
    if config.parser.startswith("spacy:"):
        return parsers.SpacyParser(config.parser.split(":", 1)[1])
    raise BridgeModelError(f"unknown parser backend {config.parser!r}")


def load_coref(config: BridgeConfig):
    from . import coref

    if config.coref == "builtin-chains":
        return coref.ChainResolver()
    raise BridgeModelError(f"unknown coref backend {config.coref!r}")


def load_discourse(config: BridgeConfig):
    from . import discourse

    if config.discourse == "builtin-connectives":
        return discourse.ConnectiveClassifier()
    raise BridgeModelError(f"unknown discourse backend {config.discourse!r}")


def load_embedder(config: BridgeConfig):
    from . import embedder

    if config.embedder == "hashgram":
        return embedder.HashGramEmbedder(config.dim)
    if config.embedder.startswith("sentence-transformers:"):
        return embedder.SentenceTransformerEmbedder(
            config.embedder.split(":", 1)[1], config.dim)
    raise BridgeModelError(f"unknown embedder backend {config.embedder!r}")
