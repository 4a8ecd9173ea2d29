"""Dataset formats, loaders, synthetic corpora, and the fallback embedder.

On-disk layout of a dataset directory:

* ``manifest.json`` -- UTF-8 JSON with fields {name, mode, num_classes,
  class_names, embedding_dim, docs: [{doc_id, split, label |
  sentence_labels, offset, n}], payload}.
* payload file -- little-endian binary: magic ``AGEM``, u32 version=1,
  u32 d, then concatenated float32 rows; document i's sentences start at
  its manifest-declared offset, counted in rows.

The same byte format is produced by the standalone embedding exporter,
so the reader validates it strictly and reports corruption by doc_id and
byte offset.
"""
from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics_stats import rouge_f1

PAYLOAD_MAGIC = b"AGEM"
PAYLOAD_VERSION = 1
_HEADER = struct.Struct("<4sII")
_F32 = np.dtype("<f4")
_HASH_BUCKETS = 4096

SPLITS = ("train", "val", "test")
MODES = ("classification", "summarization")


class DatasetFormatError(ValueError):
    """Raised when a manifest or payload violates the dataset contract."""

    def __init__(self, message: str, doc_id: str | None = None, byte_offset: int | None = None):
        super().__init__(message)
        self.doc_id = doc_id
        self.byte_offset = byte_offset


@dataclass
class EmbeddedDocument:
    """An ordered list of sentence embeddings plus labels for one document."""

    doc_id: str
    sentences: np.ndarray  # (n, d) float32
    doc_label: int | None = None
    sentence_labels: np.ndarray | None = None  # (n,) int64 in {0, 1}

    def __post_init__(self):
        self.sentences = np.ascontiguousarray(self.sentences, dtype=_F32)
        if self.sentences.ndim != 2 or self.sentences.shape[0] < 1 or self.sentences.shape[1] < 1:
            raise DatasetFormatError(f"doc {self.doc_id!r}: sentences must be a non-empty n x d matrix",
                                     doc_id=self.doc_id)
        if self.sentence_labels is not None:
            self.sentence_labels = np.asarray(self.sentence_labels, dtype=np.int64)
            if self.sentence_labels.shape != (self.n,):
                raise DatasetFormatError(f"doc {self.doc_id!r}: sentence_labels length != n", doc_id=self.doc_id)
            if not np.isin(self.sentence_labels, (0, 1)).all():
                raise DatasetFormatError(f"doc {self.doc_id!r}: sentence_labels must be 0/1",
                                         doc_id=self.doc_id)

    @property
    def n(self) -> int:
        return self.sentences.shape[0]

    @property
    def dim(self) -> int:
        return self.sentences.shape[1]


@dataclass
class DatasetManifest:
    name: str
    mode: str
    num_classes: int
    class_names: list[str]
    embedding_dim: int
    split_assignment: dict[str, str]  # doc_id -> train | val | test
    payload: str = "payload.agem"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DatasetFormatError(f"unknown mode {self.mode!r}")
        if self.mode == "classification" and self.num_classes < 2:
            raise DatasetFormatError("classification mode needs num_classes >= 2")
        if self.mode == "summarization" and self.num_classes != 2:
            raise DatasetFormatError("summarization mode needs num_classes == 2")
        for doc_id, split in self.split_assignment.items():
            if split not in SPLITS:
                raise DatasetFormatError(f"doc {doc_id!r}: unknown split {split!r}", doc_id=doc_id)


@dataclass
class Dataset:
    manifest: DatasetManifest
    docs: list[EmbeddedDocument]

    def split(self, name: str) -> list[EmbeddedDocument]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        assign = self.manifest.split_assignment
        return [d for d in self.docs if assign[d.doc_id] == name]

    def content_hash(self) -> str:
        """Stable hash of the dataset content (used as a cache key)."""
        h = hashlib.sha256()
        m = self.manifest
        h.update(json.dumps([m.name, m.mode, m.num_classes, m.class_names, m.embedding_dim],
                            sort_keys=True).encode())
        for d in self.docs:
            h.update(d.doc_id.encode())
            h.update(m.split_assignment[d.doc_id].encode())
            if d.doc_label is not None:
                h.update(struct.pack("<q", d.doc_label))
            if d.sentence_labels is not None:
                h.update(d.sentence_labels.tobytes())
            h.update(d.sentences.tobytes())
        return h.hexdigest()


def _check_labels(mode: str, doc: EmbeddedDocument, num_classes: int | None = None) -> None:
    if mode == "classification":
        if doc.doc_label is None:
            raise DatasetFormatError(f"doc {doc.doc_id!r}: doc_label required in classification mode",
                                     doc_id=doc.doc_id)
        if num_classes is not None and not 0 <= doc.doc_label < num_classes:
            raise DatasetFormatError(
                f"doc {doc.doc_id!r}: label {doc.doc_label} outside [0, {num_classes})",
                doc_id=doc.doc_id)
        if doc.sentence_labels is not None:
            raise DatasetFormatError(f"doc {doc.doc_id!r}: sentence_labels not allowed in classification mode",
                                     doc_id=doc.doc_id)
    else:
        if doc.sentence_labels is None:
            raise DatasetFormatError(f"doc {doc.doc_id!r}: sentence_labels required in summarization mode",
                                     doc_id=doc.doc_id)
        if doc.doc_label is not None:
            raise DatasetFormatError(f"doc {doc.doc_id!r}: doc_label not allowed in summarization mode",
                                     doc_id=doc.doc_id)


def save_dataset(manifest: DatasetManifest, docs: list[EmbeddedDocument], out_dir: str | Path) -> Path:
    """Write manifest.json plus the binary payload; returns the dataset directory.

    Documents are packed consecutively in list order and must be consistent
    with the manifest (dims, labels, splits).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    seen = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise DatasetFormatError(f"doc_id {doc.doc_id!r} duplicated", doc_id=doc.doc_id)
        seen.add(doc.doc_id)
        if doc.doc_id not in manifest.split_assignment:
            raise DatasetFormatError(f"doc {doc.doc_id!r} missing from split assignment", doc_id=doc.doc_id)
        if doc.dim != manifest.embedding_dim:
            raise DatasetFormatError(
                f"doc {doc.doc_id!r}: dimension {doc.dim} != manifest embedding_dim {manifest.embedding_dim}",
                doc_id=doc.doc_id)
        if not np.isfinite(doc.sentences).all():
            raise DatasetFormatError(f"doc {doc.doc_id!r}: non-finite embedding value", doc_id=doc.doc_id)
        _check_labels(manifest.mode, doc, manifest.num_classes)
        entry = {"doc_id": doc.doc_id, "split": manifest.split_assignment[doc.doc_id],
                 "offset": offset, "n": doc.n}
        if manifest.mode == "classification":
            entry["label"] = int(doc.doc_label)
        else:
            entry["sentence_labels"] = [int(v) for v in doc.sentence_labels]
        entries.append(entry)
        offset += doc.n

    payload_path = out / manifest.payload
    with open(payload_path, "wb") as f:
        f.write(_HEADER.pack(PAYLOAD_MAGIC, PAYLOAD_VERSION, manifest.embedding_dim))
        for doc in docs:
            f.write(doc.sentences.astype(_F32, copy=False).tobytes())

    body = {"name": manifest.name, "mode": manifest.mode, "num_classes": manifest.num_classes,
            "class_names": manifest.class_names, "embedding_dim": manifest.embedding_dim,
            "docs": entries, "payload": manifest.payload}
    (out / "manifest.json").write_text(json.dumps(body, indent=1), encoding="utf-8")
    return out


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load a dataset directory via its manifest.json path (or the directory itself)."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise DatasetFormatError(f"manifest not found: {path}")
    body = json.loads(path.read_text(encoding="utf-8"))
    for key in ("name", "mode", "num_classes", "class_names", "embedding_dim", "docs", "payload"):
        if key not in body:
            raise DatasetFormatError(f"manifest missing field {key!r}")

    payload_path = path.parent / body["payload"]
    if not payload_path.is_file():
        raise DatasetFormatError(f"payload not found: {payload_path}")
    raw = payload_path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError("payload truncated before header")
    magic, version, d = _HEADER.unpack_from(raw, 0)
    if magic != PAYLOAD_MAGIC:
        raise DatasetFormatError(f"bad payload magic {magic!r}")
    if version != PAYLOAD_VERSION:
        raise DatasetFormatError(f"unsupported payload version {version}")
    if d != body["embedding_dim"]:
        raise DatasetFormatError(
            f"dimension mismatch: payload d={d}, manifest embedding_dim={body['embedding_dim']}")
    rows = np.frombuffer(raw, dtype=_F32, offset=_HEADER.size)
    if len(rows) % d != 0:
        raise DatasetFormatError(f"payload body is not a whole number of {d}-float rows")
    rows = rows.reshape(-1, d)

    mode = body["mode"]
    split_assignment: dict[str, str] = {}
    docs = []
    for entry in body["docs"]:
        doc_id = entry["doc_id"]
        if doc_id in split_assignment:
            raise DatasetFormatError(f"doc_id {doc_id!r} duplicated in manifest", doc_id=doc_id)
        split_assignment[doc_id] = entry["split"]
        off, n = int(entry["offset"]), int(entry["n"])
        if off < 0 or n < 1 or off + n > len(rows):
            raise DatasetFormatError(
                f"doc {doc_id!r}: rows [{off}, {off + n}) out of payload range ({len(rows)} rows)",
                doc_id=doc_id)
        sents = rows[off:off + n]
        bad = np.argwhere(~np.isfinite(sents))
        if len(bad):
            i, j = map(int, bad[0])
            byte_off = _HEADER.size + ((off + i) * d + j) * 4
            raise DatasetFormatError(
                f"doc {doc_id!r}: non-finite embedding value at byte offset {byte_off}",
                doc_id=doc_id, byte_offset=byte_off)
        doc = EmbeddedDocument(
            doc_id=doc_id, sentences=sents,
            doc_label=int(entry["label"]) if mode == "classification" else None,
            sentence_labels=entry.get("sentence_labels") if mode == "summarization" else None)
        docs.append(doc)

    manifest = DatasetManifest(name=body["name"], mode=mode, num_classes=int(body["num_classes"]),
                               class_names=list(body["class_names"]), embedding_dim=int(d),
                               split_assignment=split_assignment, payload=body["payload"])
    for doc in docs:
        _check_labels(mode, doc, manifest.num_classes)
    return Dataset(manifest, docs)


@dataclass
class SyntheticSpec:
    """Gaussian-mixture corpus: class-c sentences are drawn from a class
    center of norm `separation` plus isotropic noise of scale `noise`.

    Class centers are mutually orthogonal, so documents are linearly
    separable by their mean embedding once separation/noise >= 4 (the
    nearest-centroid error rate is then far below 1%).
    """

    num_docs: int
    num_classes: int
    min_sentences: int
    max_sentences: int
    embedding_dim: int
    separation: float = 4.0
    noise: float = 1.0
    seed: int = 0
    mode: str = "classification"
    positive_fraction: float = 0.15  # summarization mode: P(sentence is summary-worthy)
    name: str = "synthetic"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "summarization" and self.num_classes != 2:
            raise ValueError("summarization mode needs num_classes == 2")
        if self.max_sentences < self.min_sentences or self.min_sentences < 1:
            raise ValueError("need 1 <= min_sentences <= max_sentences")
        if self.separation <= 0:
            raise ValueError("separation must be > 0")
        if self.embedding_dim < self.num_classes:
            raise ValueError("embedding_dim must be >= num_classes for orthogonal class centers")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministic synthetic dataset; a pure function of its spec."""
    rng = np.random.default_rng(spec.seed)
    basis, _ = np.linalg.qr(rng.standard_normal((spec.embedding_dim, spec.num_classes)))
    centers = spec.separation * basis.T  # (K, d), mutually orthogonal

    docs = []
    labels = []
    for i in range(spec.num_docs):
        n = int(rng.integers(spec.min_sentences, spec.max_sentences + 1))
        if spec.mode == "classification":
            label = i % spec.num_classes
            sents = centers[label] + spec.noise * rng.standard_normal((n, spec.embedding_dim))
            doc = EmbeddedDocument(doc_id=f"{spec.name}-{i:05d}", sentences=sents, doc_label=label)
            labels.append(label)
        else:
            sent_labels = (rng.random(n) < spec.positive_fraction).astype(np.int64)
            sents = centers[sent_labels] + spec.noise * rng.standard_normal((n, spec.embedding_dim))
            doc = EmbeddedDocument(doc_id=f"{spec.name}-{i:05d}", sentences=sents,
                                   sentence_labels=sent_labels)
            labels.append(0)
        docs.append(doc)

    # Stratified 70/15/15 split, deterministic in document order.
    split_assignment = {}
    by_label: dict[int, list[str]] = {}
    for doc, lab in zip(docs, labels):
        by_label.setdefault(lab, []).append(doc.doc_id)
    for ids in by_label.values():
        n_train = max(1, round(0.7 * len(ids)))
        n_val = max(1, round(0.15 * len(ids)))
        for pos, doc_id in enumerate(ids):
            if pos < n_train:
                split_assignment[doc_id] = "train"
            elif pos < n_train + n_val:
                split_assignment[doc_id] = "val"
            else:
                split_assignment[doc_id] = "test"

    if spec.mode == "classification":
        class_names = [f"class_{k}" for k in range(spec.num_classes)]
    else:
        class_names = ["non_summary", "summary"]
    manifest = DatasetManifest(name=spec.name, mode=spec.mode, num_classes=spec.num_classes,
                               class_names=class_names, embedding_dim=spec.embedding_dim,
                               split_assignment=split_assignment)
    return Dataset(manifest, docs)


_projection_cache: dict[tuple[int, int], np.ndarray] = {}


def _projection(seed: int, d: int) -> np.ndarray:
    key = (seed, d)
    if key not in _projection_cache:
        _projection_cache[key] = np.random.default_rng(seed).standard_normal((_HASH_BUCKETS, d))
    return _projection_cache[key]


def _trigram_buckets(sentence: str) -> np.ndarray:
    padded = "\x02" + sentence + "\x03"
    if len(padded) < 3:
        grams = [padded]
    else:
        grams = [padded[i:i + 3] for i in range(len(padded) - 2)]
    return np.array([zlib.crc32(g.encode("utf-8")) % _HASH_BUCKETS for g in grams], dtype=np.int64)


def fallback_embed(sentences: list[str], d: int, seed: int, doc_id: str = "doc",
                   doc_label: int | None = None,
                   sentence_labels=None) -> EmbeddedDocument:
    """Deterministic text embedder: hashed character-trigram counts projected
    through a seeded random matrix, then L2-normalized.

    Byte-identical sentences map to identical vectors, which is what the
    duplicate-node merging step in graph construction relies on.
    """
    if d < 8:
        raise ValueError(f"embedding dim must be >= 8, got {d}")
    if not sentences:
        raise ValueError("sentence list must be non-empty")
    proj = _projection(seed, d)
    rows = np.empty((len(sentences), d), dtype=np.float64)
    for i, s in enumerate(sentences):
        v = proj[_trigram_buckets(s)].sum(axis=0)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise RuntimeError(f"degenerate zero embedding for sentence {i}")
        rows[i] = v / norm
    return EmbeddedDocument(doc_id=doc_id, sentences=rows.astype(_F32),
                            doc_label=doc_label, sentence_labels=sentence_labels)


def build_oracle_labels(doc_sentences: list[str], gold_summary: str, max_sentences: int) -> np.ndarray:
    """Greedy extractive oracle: repeatedly add the sentence that most
    increases ROUGE-1 F1 of the selected set against the gold summary;
    stop when nothing increases it or `max_sentences` is reached.

    Ties break toward the lowest sentence index. Returns 0/1 labels.
    """
    if not doc_sentences:
        raise ValueError("document must contain at least one sentence")
    if not gold_summary.strip():
        raise ValueError("gold summary must be non-empty")
    selected: list[int] = []
    best = 0.0
    while len(selected) < max_sentences:
        gain_idx = -1
        gain_f1 = best
        for i, _ in enumerate(doc_sentences):
            if i in selected:
                continue
            cand = " ".join(doc_sentences[j] for j in sorted(selected + [i]))
            f1 = rouge_f1(cand, gold_summary, "r1")
            if f1 > gain_f1:
                gain_f1 = f1
                gain_idx = i
        if gain_idx < 0:
            break
        selected.append(gain_idx)
        best = gain_f1
    labels = np.zeros(len(doc_sentences), dtype=np.int64)
    labels[selected] = 1
    return labels


def load_corpus_jsonl(path: str | Path) -> list[dict]:
    """Read a pre-sentence-split text corpus: one JSON object per line with
    fields {doc_id, sentences, split, label | sentence_labels[, summary]}.
    """
    records = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            for key in ("doc_id", "sentences", "split"):
                if key not in rec:
                    raise DatasetFormatError(f"line {lineno}: corpus record missing {key!r}")
            if rec["doc_id"] in seen:
                raise DatasetFormatError(f"line {lineno}: doc_id {rec['doc_id']!r} duplicated",
                                         doc_id=rec["doc_id"])
            if not rec["sentences"]:
                raise DatasetFormatError(f"line {lineno}: empty sentence list", doc_id=rec["doc_id"])
            seen.add(rec["doc_id"])
            records.append(rec)
    if not records:
        raise DatasetFormatError(f"corpus {path} contains no records")
    return records


def embed_corpus_fallback(records: list[dict], d: int, seed: int, name: str,
                          oracle_max_sentences: int | None = None) -> Dataset:
    """Embed a JSONL corpus with the fallback embedder.

    In summarization mode, records lacking sentence_labels but carrying a
    gold ``summary`` get oracle labels when `oracle_max_sentences` is set.
    """
    has_label = all("label" in r for r in records)
    mode = "classification" if has_label else "summarization"
    docs = []
    split_assignment = {}
    for rec in records:
        sent_labels = None
        doc_label = None
        if mode == "classification":
            doc_label = int(rec["label"])
        elif "sentence_labels" in rec:
            sent_labels = rec["sentence_labels"]
        elif oracle_max_sentences is not None and "summary" in rec:
            sent_labels = build_oracle_labels(rec["sentences"], rec["summary"], oracle_max_sentences)
        else:
            raise DatasetFormatError(
                f"doc {rec['doc_id']!r}: needs sentence_labels, or a summary plus oracle_max_sentences",
                doc_id=rec["doc_id"])
        docs.append(fallback_embed(rec["sentences"], d, seed, doc_id=rec["doc_id"],
                                   doc_label=doc_label, sentence_labels=sent_labels))
        split_assignment[rec["doc_id"]] = rec["split"]

    if mode == "classification":
        num_classes = max(d.doc_label for d in docs) + 1
        class_names = [f"class_{k}" for k in range(num_classes)]
    else:
        num_classes = 2
        class_names = ["non_summary", "summary"]
    manifest = DatasetManifest(name=name, mode=mode, num_classes=num_classes,
                               class_names=class_names, embedding_dim=d,
                               split_assignment=split_assignment)
    return Dataset(manifest, docs)
