"""Command-line interface for the document-graph pipeline."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import gat, graph_build, runner, swa
from .checkpoint import GAT_MAGIC, SWA_MAGIC, save_checkpoint
from .data_io import (SyntheticSpec, embed_corpus_fallback, generate_synthetic,
                      load_corpus_jsonl, load_dataset, save_dataset)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=Path, default=Path("out"))
    parser.add_argument("--jobs", type=int, default=1)


def _spec_from_args(args) -> runner.ExperimentSpec:
    if args.config:
        spec = runner.ExperimentSpec.from_json(args.config)
        if args.seed:
            spec = replace(spec, seed=args.seed)
        return spec
    return runner.ExperimentSpec(
        activations=args.activations.split(","),
        filters=args.filters.split(","),
        window_fractions=[float(w) for w in args.windows.split(",")],
        gat_layers=[int(v) for v in args.layers.split(",")],
        gat_hidden=[int(v) for v in args.hidden.split(",")],
        deltas={"mean_bound": args.mean_delta, "max_bound": args.max_delta},
        runs=args.runs, seed=args.seed)


def _add_grid_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="experiment spec as a JSON file")
    parser.add_argument("--activations", default="softmax")
    parser.add_argument("--filters", default="unfiltered,mean_bound,max_bound")
    parser.add_argument("--windows", default="0.30")
    parser.add_argument("--layers", default="2")
    parser.add_argument("--hidden", default="64")
    parser.add_argument("--mean-delta", type=float, default=0.5)
    parser.add_argument("--max-delta", type=float, default=0.5)
    parser.add_argument("--runs", type=int, default=5)


def cmd_gen_synth(args) -> int:
    spec = SyntheticSpec(num_docs=args.docs, num_classes=args.classes,
                         min_sentences=args.min_sentences, max_sentences=args.max_sentences,
                         embedding_dim=args.dim, separation=args.separation,
                         noise=args.noise, seed=args.seed, mode=args.mode, name=args.name)
    ds = generate_synthetic(spec)
    save_dataset(ds.manifest, ds.docs, args.out_dir)
    print(f"wrote {len(ds.docs)} documents to {args.out_dir}")
    return 0


def cmd_embed_fallback(args) -> int:
    records = load_corpus_jsonl(args.corpus)
    ds = embed_corpus_fallback(records, args.dim, args.seed, args.name,
                               oracle_max_sentences=args.oracle_max_sentences)
    save_dataset(ds.manifest, ds.docs, args.out_dir)
    print(f"embedded {len(ds.docs)} documents (d={args.dim}) to {args.out_dir}")
    return 0


def _swa_config_from_args(args) -> swa.SwaConfig:
    return swa.SwaConfig(activation=args.activation, window_fraction=args.window_fraction,
                         max_epochs=args.epochs, seed=args.seed)


def cmd_train_swa(args) -> int:
    ds = load_dataset(args.data)
    model = swa.train_swa(ds, _swa_config_from_args(args))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "model.agsw"
    save_checkpoint(path, SWA_MAGIC,
                    {"config": asdict(model.config), "mode": model.mode,
                     "num_outputs": model.num_outputs,
                     "final_temperature": model.final_temperature}, model.params)
    print(f"val macro-F1 {model.val_macro_f1:.4f} after {len(model.history)} epochs -> {path}")
    return 0


def cmd_extract_attn(args) -> int:
    ds = load_dataset(args.data)
    spec = runner.ExperimentSpec(activations=[args.activation],
                                 window_fractions=[args.window_fraction],
                                 runs=args.runs, seed=args.seed,
                                 swa_overrides={"max_epochs": args.epochs})
    matrices, meta = runner.ensure_attention(ds, ds.content_hash(), spec, args.activation,
                                             args.window_fraction, args.out_dir)
    print(f"extracted {len(matrices)} attention matrices "
          f"(best run {meta['best_run']}, val F1 {meta['swa_val_f1']:.4f})")
    return 0


def cmd_build_graphs(args) -> int:
    ds = load_dataset(args.data)
    spec = runner.ExperimentSpec(activations=[args.activation],
                                 window_fractions=[args.window_fraction],
                                 deltas={"mean_bound": args.delta, "max_bound": args.delta},
                                 runs=args.runs, seed=args.seed,
                                 swa_overrides={"max_epochs": args.epochs})
    if args.scheme:
        source = ("heuristic", args.scheme, args.heuristic_window)
    else:
        source = ("swa", args.activation, args.filter)
    path, meta = runner.ensure_graphs(ds, ds.content_hash(), spec, source,
                                      args.window_fraction, args.out_dir)
    print(f"graphs at {path}")
    print(json.dumps(meta, indent=1, sort_keys=True))
    return 0


def cmd_train_gat(args) -> int:
    graphs = runner.load_graphs(args.graphs)
    ds = load_dataset(args.data)
    mode = ("graph_classification" if ds.manifest.mode == "classification"
            else "node_classification")
    gds = gat.GraphDataset(graphs, ds.manifest.split_assignment, ds.manifest.num_classes)
    config = gat.GatConfig(num_layers=args.layers, hidden=args.hidden, mode=mode, seed=args.seed)
    model = gat.train_gat(gds, config)
    metrics = gat.evaluate_gat(model, gds.split("test"))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "model.aggt"
    save_checkpoint(path, GAT_MAGIC,
                    {"config": asdict(model.config), "num_classes": model.num_classes},
                    model.params)
    print(f"test accuracy {metrics.accuracy:.4f}, macro-F1 {metrics.macro_f1:.4f} -> {path}")
    return 0


def cmd_run_pipeline(args) -> int:
    ds = load_dataset(args.data)
    result = runner.run_pipeline(ds, _spec_from_args(args), args.out_dir, jobs=args.jobs)
    print(f"wrote {len(result.rows)} rows to {result.csv_path} "
          f"({result.num_errors} errors)")
    return 0 if result.num_errors == 0 else 1


def cmd_ablate_window(args) -> int:
    ds = load_dataset(args.data)
    spec = _spec_from_args(args)
    report = runner.ablate_window(ds, spec, args.out_dir, jobs=args.jobs)
    for row in report["table"]:
        print(json.dumps(row, sort_keys=True))
    return 0 if report["num_errors"] == 0 else 1


def cmd_run_summ(args) -> int:
    ds = load_dataset(args.data)
    corpus = load_corpus_jsonl(args.corpus) if args.corpus else None
    report = runner.run_summarization(ds, _spec_from_args(args), args.out_dir,
                                      corpus=corpus, jobs=args.jobs)
    print(f"oracle selection ratio {report['oracle_ratio']:.4f}; "
          f"{len(report['rows'])} rows ({report['num_errors']} errors)")
    return 0 if report["num_errors"] == 0 else 1


def cmd_stats(args) -> int:
    for path in args.graphs:
        stats = graph_build.graph_stats(runner.load_graphs(path))
        print(f"{path}: |V|={stats.num_nodes:.1f} |E|={stats.num_edges:.1f} "
              f"degree={stats.mean_degree:.2f} disk={stats.serialized_bytes}B")
    return 0


def cmd_export_graphml(args) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for graph in runner.load_graphs(args.graphs):
        (args.out_dir / f"{graph.doc_id}.graphml").write_text(
            graph_build.to_graphml(graph), encoding="utf-8")
        count += 1
    print(f"exported {count} GraphML files to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attngraph",
                                     description="attention-induced document graph pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic embedded corpus")
    _common(p)
    p.add_argument("--docs", type=int, default=300)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--min-sentences", type=int, default=4)
    p.add_argument("--max-sentences", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--mode", choices=["classification", "summarization"],
                   default="classification")
    p.add_argument("--name", default="synthetic")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("embed-fallback", help="embed a JSONL corpus with the fallback embedder")
    _common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--name", default="corpus")
    p.add_argument("--oracle-max-sentences", type=int, default=None)
    p.set_defaults(func=cmd_embed_fallback)

    p = sub.add_parser("train-swa", help="train one sliding-window attention model")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--activation", choices=swa.ACTIVATIONS, default="softmax")
    p.add_argument("--window-fraction", type=float, default=0.30)
    p.add_argument("--epochs", type=int, default=20)
    p.set_defaults(func=cmd_train_swa)

    p = sub.add_parser("extract-attn", help="train runs models, keep the best, extract attention")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--activation", choices=swa.ACTIVATIONS, default="softmax")
    p.add_argument("--window-fraction", type=float, default=0.30)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--runs", type=int, default=5)
    p.set_defaults(func=cmd_extract_attn)

    p = sub.add_parser("build-graphs", help="build attention or heuristic graphs")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--activation", choices=swa.ACTIVATIONS, default="softmax")
    p.add_argument("--filter", choices=graph_build.FILTER_KINDS, default="unfiltered")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--window-fraction", type=float, default=0.30)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--scheme", choices=["order", "fixed_window"], default=None,
                   help="build a heuristic baseline graph instead")
    p.add_argument("--heuristic-window", type=int, default=2)
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("train-gat", help="train one GAT on a persisted graph set")
    _common(p)
    p.add_argument("--graphs", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True,
                   help="dataset directory providing splits and label space")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=64)
    p.set_defaults(func=cmd_train_gat)

    p = sub.add_parser("run-pipeline", help="run the full experiment grid")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_run_pipeline)

    p = sub.add_parser("ablate-window", help="window-size ablation with pairwise t-tests")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_ablate_window)

    p = sub.add_parser("run-summ", help="summarization track: node-classification GATs")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--corpus", type=Path, default=None,
                   help="raw JSONL corpus with sentences+summary for ROUGE reports")
    _add_grid_flags(p)
    p.set_defaults(func=cmd_run_summ)

    p = sub.add_parser("stats", help="structural statistics of persisted graph sets")
    p.add_argument("graphs", nargs="+", type=Path)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-graphml", help="export a graph set as GraphML files")
    _common(p)
    p.add_argument("--graphs", type=Path, required=True)
    p.set_defaults(func=cmd_export_graphml)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
