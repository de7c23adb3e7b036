"""Sentence embedding backends.

The default produces unit-norm hash n-gram count vectors (deterministic,
dependency-free). The sentence-transformers adapter is available when
that runtime and the model weights are installed; otherwise it raises a
model-load error at construction time.
"""

from __future__ import annotations

import hashlib
import math
import re

_TOKEN_RE = re.compile(r"\w+(?:'\w+)*")


class HashGramEmbedder:
    name = "hashgram"

    def __init__(self, dim: int):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        return [self._embed(text) for text in texts]

    def _embed(self, text: str) -> list[float]:
        words = [t.lower() for t in _TOKEN_RE.findall(text)]
        if not words:
            raise ValueError(f"no tokens to embed in {text!r}")
        grams = list(words)
        grams.extend(f"{a} {b}" for a, b in zip(words, words[1:]))
        vec = [0.0] * self.dim
        for gram in grams:
            digest = hashlib.md5(gram.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:8], "little") % self.dim] += 1.0
        norm = math.sqrt(sum(v * v for v in vec))
        return [v / norm for v in vec]


class SentenceTransformerEmbedder:
    def __init__(self, model: str, dim: int):
        from .config import BridgeModelError

        try:
            from sentence_transformers import SentenceTransformer  # type: ignore
        except ImportError as exc:
            raise BridgeModelError(
                f"model load failure: sentence-transformers not installed ({exc})"
            ) from exc
        try:
            self._model = SentenceTransformer(model)
        except Exception as exc:
            raise BridgeModelError(
                f"model load failure: could not load {model!r}: {exc}") from exc
        self.name = f"sentence-transformers:{model}"
        self.dim = dim
        produced = self._model.get_sentence_embedding_dimension()
        if produced != dim:
            raise BridgeModelError(
                f"model {model!r} produces {produced}-d vectors, configured dim is {dim}")

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        vectors = self._model.encode(texts, normalize_embeddings=True)
        return [list(map(float, row)) for row in vectors]
