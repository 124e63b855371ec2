"""Frozen 512-d text/image embeddings and question token embeddings.

In production the embeddings come from precomputed JSONL files (a sidecar
script can produce them with a real image-text model); tests and the
synthetic pipeline use a deterministic stub. The provider never learns:
vectors are immutable after load.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

EMBED_DIM = 512
MAX_TOKENS = 77
START_TOKEN = "<start>"
EOT_TOKEN = "<eot>"

MODALITIES = ("text", "image")

_WORD_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def _words(text: str):
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class ModalEmbedding:
    scene_id: str
    modality: str
    vector: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        vec = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vec)):
            raise ValueError("embedding vector must be finite")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class QuestionTokens:
    """Word-level question embeddings, L x 512, with the EOT position."""

    embeddings: np.ndarray
    eot_index: int
    token_strings: tuple

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        L = emb.shape[0]
        if not (1 <= self.eot_index < L <= MAX_TOKENS):
            raise ValueError(f"need 1 <= eot_index < L <= {MAX_TOKENS}")
        object.__setattr__(self, "embeddings", emb)


class EmbeddingStore:
    """Immutable (scene_id, modality) -> vector map."""

    def __init__(self, entries):
        self._store = {}
        for e in entries:
            key = (e.scene_id, e.modality)
            if key in self._store:
                raise ValueError(f"duplicate embedding key {key}")
            self._store[key] = e.vector

    def __len__(self):
        return len(self._store)

    def __contains__(self, key):
        return key in self._store

    def get(self, scene_id, modality):
        return self._store[(scene_id, modality)]

    def keys(self):
        return self._store.keys()

    def checksum(self):
        """Stable digest over all vectors; used to assert the store is frozen."""
        h = hashlib.sha256()
        for key in sorted(self._store):
            h.update(repr(key).encode())
            h.update(np.ascontiguousarray(self._store[key]).tobytes())
        return h.hexdigest()


def load_embeddings(path) -> EmbeddingStore:
    """Load the JSONL embedding file: one {scene_id, modality, vector} per line."""
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for key in ("scene_id", "modality", "vector"):
                if key not in rec:
                    raise ValueError(f"{path}:{lineno}: missing field {key!r}")
            vec = rec["vector"]
            if len(vec) != EMBED_DIM:
                raise ValueError(
                    f"{path}:{lineno}: vector length {len(vec)} != {EMBED_DIM}")
            try:
                entry = ModalEmbedding(rec["scene_id"], rec["modality"], vec)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            entries.append(entry)
    return EmbeddingStore(entries)


def write_embeddings(path, entries):
    """Write JSONL embeddings; floats use shortest-repr decimals so a
    write/read round-trip is bit-exact."""
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            rec = {"scene_id": e.scene_id, "modality": e.modality,
                   "vector": [float(v) for v in e.vector]}
            f.write(json.dumps(rec) + "\n")


def _stable_seed(*parts) -> int:
    h = hashlib.sha256("\x00".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


def stub_embed(text: str, modality: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Deterministic unit-norm pseudo-embedding.

    Seeds a PCG64 generator from sha256(modality, text), draws a Gaussian
    vector, L2-normalizes. Identical inputs give identical vectors on any
    platform.
    """
    if not text:
        raise ValueError("text must be nonempty")
    rng = np.random.default_rng(_stable_seed(modality, text))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def stub_scene_embedding(text: str, modality: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Compositional scene-level stub: normalized sum of per-word stub vectors
    over the distinct alphanumeric words of the text.

    Word vectors come from one shared table regardless of ``modality`` (the
    argument only participates in the zero-word fallback): a real contrastive
    image-text model maps both modalities into one space, so the text and
    image stubs of the same scene must correlate through their shared content
    words for the alignment loss to be meaningful.
    """
    words = sorted({w for w in _words(text) if w[0].isalnum()})
    if not words:
        raise ValueError("text must contain at least one word")
    vec = np.zeros(dim)
    for w in words:
        vec += stub_embed(w, "scene-word", dim)
    return vec / np.linalg.norm(vec)


def tokenize_question(text: str) -> QuestionTokens:
    """Lowercase word/punctuation tokenization with start and EOT markers.

    Token sequence is <start>, words..., <eot>, truncated to 77 positions
    (the EOT token always survives as the last position). Each token is
    embedded with the deterministic stub table under the "word" modality.
    """
    if not text:
        raise ValueError("question text must be nonempty")
    tokens = [START_TOKEN] + _words(text)
    tokens = tokens[: MAX_TOKENS - 1] + [EOT_TOKEN]
    emb = np.stack([stub_embed(t, "word") for t in tokens])
    return QuestionTokens(embeddings=emb, eot_index=len(tokens) - 1,
                          token_strings=tuple(tokens))
