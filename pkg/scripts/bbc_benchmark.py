#!/usr/bin/env python3
"""Benchmark harness for user-supplied BBC News embeddings.

Expects a dataset directory in the shared binary format (for example one
produced by the embedding exporter from the 5-class BBC corpus with the
default pretrained encoder). Runs the unfiltered Softmax 2-layer/128 cell
with 5 runs and compares mean accuracy to the reference value for that
configuration (0.968, tolerance 1.5 points by default)."""
import argparse
from pathlib import Path

from attngraph.data_io import load_dataset
from attngraph.runner import ExperimentSpec, run_pipeline


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", type=Path, required=True,
                    help="dataset directory (manifest.json + payload)")
    ap.add_argument("--out-dir", type=Path, default=Path("out/bbc_benchmark"))
    ap.add_argument("--expected", type=float, default=0.968)
    ap.add_argument("--tolerance", type=float, default=0.015)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    dataset = load_dataset(args.data)
    spec = ExperimentSpec(activations=["softmax"], filters=["unfiltered"],
                          window_fractions=[0.3], gat_layers=[2], gat_hidden=[128],
                          runs=args.runs, seed=args.seed)
    result = run_pipeline(dataset, spec, args.out_dir, jobs=args.jobs)
    if result.num_errors:
        for row in result.rows:
            if row["error"]:
                print(f"ERROR: {row['error']}")
        return 1
    row = result.rows[0]
    delta = row["acc"] - args.expected
    within = abs(delta) <= args.tolerance
    print(f"Softmax-2-128 unfiltered: accuracy {row['acc']:.4f} "
          f"(std {row['acc_std']:.4f}), macro-F1 {row['f1']:.4f}")
    print(f"reference {args.expected:.3f} ± {args.tolerance:.3f}: "
          f"delta {delta:+.4f} -> {'WITHIN' if within else 'OUTSIDE'} tolerance")
    return 0 if within else 1


if __name__ == "__main__":
    raise SystemExit(main())
