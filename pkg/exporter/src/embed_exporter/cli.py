"""CLI: export a JSONL corpus as an embedded dataset."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoders import DEFAULT_ENCODER
from .export import ExportJob, export


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="embed-exporter", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode a corpus and write manifest + payload")
    p.add_argument("--corpus", type=Path, required=True,
                   help="JSONL: {doc_id, sentences, split, label | sentence_labels}")
    p.add_argument("--encoder", default=DEFAULT_ENCODER,
                   help="encoder name; 'hashed-trigram-<dim>' selects the offline stub")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--name", default=None)
    args = ap.parse_args(argv)

    manifest = export(ExportJob(corpus=args.corpus, out_dir=args.out,
                                encoder=args.encoder, batch_size=args.batch,
                                name=args.name))
    total = sum(e["n"] for e in manifest["docs"])
    print(f"exported {len(manifest['docs'])} documents ({total} sentences, "
          f"d={manifest['embedding_dim']}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
