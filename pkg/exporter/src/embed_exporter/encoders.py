"""Sentence encoders behind a single interface: encode(list[str]) -> (n, dim) float32."""
from __future__ import annotations

import zlib

import numpy as np

DEFAULT_ENCODER = "paraphrase-MiniLM-L6-v2"

_HASH_PREFIX = "hashed-trigram-"
_HASH_BUCKETS = 4096


class EncoderLoadError(RuntimeError):
    pass


class TransformerEncoder:
    """Frozen pretrained sentence-transformer encoder (eval mode)."""

    def __init__(self, name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderLoadError("sentence-transformers is not installed; "
                                   "install embed-exporter[encoder]") from exc
        try:
            self._model = SentenceTransformer(name)
        except Exception as exc:  # model download / cache failure
            raise EncoderLoadError(f"could not load encoder {name!r}: {exc}") from exc
        self.name = name
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, sentences: list[str]) -> np.ndarray:
        out = self._model.encode(sentences, convert_to_numpy=True,
                                 show_progress_bar=False, batch_size=len(sentences))
        return np.ascontiguousarray(out, dtype=np.float32)


class HashedTrigramEncoder:
    """Deterministic offline stand-in: hashed character trigrams projected
    through a fixed random matrix, L2-normalized. Used by tests and air-gapped
    environments; select it as ``hashed-trigram-<dim>``."""

    def __init__(self, dim: int, seed: int = 0):
        if dim < 8:
            raise EncoderLoadError("hashed-trigram encoder needs dim >= 8")
        self.name = f"{_HASH_PREFIX}{dim}"
        self.dim = dim
        self._proj = np.random.default_rng(seed).standard_normal((_HASH_BUCKETS, dim))

    def encode(self, sentences: list[str]) -> np.ndarray:
        rows = np.empty((len(sentences), self.dim), dtype=np.float64)
        for i, s in enumerate(sentences):
            padded = "\x02" + s + "\x03"
            grams = [padded] if len(padded) < 3 else \
                [padded[j:j + 3] for j in range(len(padded) - 2)]
            buckets = [zlib.crc32(g.encode("utf-8")) % _HASH_BUCKETS for g in grams]
            v = self._proj[buckets].sum(axis=0)
            rows[i] = v / np.linalg.norm(v)
        return rows.astype(np.float32)


def load_encoder(name: str):
    if name.startswith(_HASH_PREFIX):
        return HashedTrigramEncoder(int(name.removeprefix(_HASH_PREFIX)))
    return TransformerEncoder(name)
