"""Encode a pre-sentence-split JSONL corpus and write the dataset format
consumed by the graph pipeline.

Output contract (kept byte-compatible with the consumer's reader and pinned
by shared fixture files): ``manifest.json`` plus a little-endian binary
payload ``AGEM`` / u32 version=1 / u32 dim / concatenated float32 rows, each
document's sentences starting at its manifest-declared row offset.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import DEFAULT_ENCODER, load_encoder

PAYLOAD_MAGIC = b"AGEM"
PAYLOAD_VERSION = 1
_HEADER = struct.Struct("<4sII")


class CorpusError(ValueError):
    pass


@dataclass
class ExportJob:
    corpus: Path
    out_dir: Path
    encoder: str = DEFAULT_ENCODER
    batch_size: int = 32
    name: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def read_corpus(path: Path) -> list[dict]:
    """Parse and validate the JSONL corpus: one object per line with
    {doc_id, sentences, split, label | sentence_labels}."""
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
                    raise CorpusError(f"line {lineno}: missing field {key!r}")
            if rec["split"] not in ("train", "val", "test"):
                raise CorpusError(f"line {lineno}: unknown split {rec['split']!r}")
            if not rec["sentences"] or not all(isinstance(s, str) for s in rec["sentences"]):
                raise CorpusError(f"line {lineno}: sentences must be a non-empty string list")
            if ("label" in rec) == ("sentence_labels" in rec):
                raise CorpusError(f"line {lineno}: need exactly one of label / sentence_labels")
            if "label" in rec and (not isinstance(rec["label"], int) or rec["label"] < 0):
                raise CorpusError(f"line {lineno}: label must be a non-negative integer")
            if "sentence_labels" in rec:
                if len(rec["sentence_labels"]) != len(rec["sentences"]):
                    raise CorpusError(f"line {lineno}: sentence_labels length mismatch")
                if not all(v in (0, 1) for v in rec["sentence_labels"]):
                    raise CorpusError(f"line {lineno}: sentence_labels must be 0/1")
            if rec["doc_id"] in seen:
                raise CorpusError(f"line {lineno}: duplicate doc_id {rec['doc_id']!r}")
            seen.add(rec["doc_id"])
            records.append(rec)
    if not records:
        raise CorpusError(f"{path}: empty corpus")
    return records


def write_payload(path: Path, row_blocks: list[np.ndarray], dim: int) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(PAYLOAD_MAGIC, PAYLOAD_VERSION, dim))
        for block in row_blocks:
            f.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def export(job: ExportJob) -> dict:
    """Encode every sentence in corpus order and write manifest + payload.

    Returns the manifest body. Embedding dimension always comes from the
    encoder; documents are packed consecutively in corpus order.
    """
    records = read_corpus(Path(job.corpus))
    encoder = load_encoder(job.encoder)

    blocks = []
    entries = []
    offset = 0
    mode = "classification" if "label" in records[0] else "summarization"
    for rec in records:
        if ("label" in rec) != (mode == "classification"):
            raise CorpusError(f"doc {rec['doc_id']!r}: mixed label kinds in one corpus")
        sentences = rec["sentences"]
        rows = []
        for start in range(0, len(sentences), job.batch_size):
            rows.append(encoder.encode(sentences[start:start + job.batch_size]))
        block = np.concatenate(rows, axis=0)
        if block.shape != (len(sentences), encoder.dim):
            raise CorpusError(f"doc {rec['doc_id']!r}: encoder returned shape {block.shape}")
        blocks.append(block)
        entry = {"doc_id": rec["doc_id"], "split": rec["split"],
                 "offset": offset, "n": len(sentences)}
        if mode == "classification":
            entry["label"] = int(rec["label"])
        else:
            entry["sentence_labels"] = [int(v) for v in rec["sentence_labels"]]
        entries.append(entry)
        offset += len(sentences)

    if mode == "classification":
        num_classes = max(e["label"] for e in entries) + 1
        class_names = [f"class_{k}" for k in range(num_classes)]
    else:
        num_classes = 2
        class_names = ["non_summary", "summary"]

    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_payload(out / "payload.agem", blocks, encoder.dim)
    manifest = {"name": job.name or Path(job.corpus).stem, "mode": mode,
                "num_classes": num_classes, "class_names": class_names,
                "embedding_dim": encoder.dim, "docs": entries, "payload": "payload.agem"}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return manifest
