"""Experiment orchestration: dataset -> SWA training -> attention extraction
-> graph construction -> GAT grid -> metrics, statistics, and CSV tables.

Every stage persists its artifact under the output directory and is keyed
by a content hash of (dataset hash, stage configuration, seeds), so reruns
skip completed work and produce byte-identical tables (wall-clock columns
aside). Later stages always consume the *persisted* artifact of earlier
stages, never in-memory state, which keeps fresh and resumed runs
bit-for-bit equal.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from . import gat, graph_build, swa
from .checkpoint import SWA_MAGIC, save_checkpoint
from .data_io import Dataset
from .metrics_stats import classification_metrics, rouge, welch_t_test
from .swa import AttentionMatrix

VARIANT_NAMES = {"softmax": "Softmax", "softmax_annealed": "Anneal",
                 "relu": "ReLU", "sigmoid": "Sigmoid"}

CSV_COLUMNS = ["window_fraction", "activation", "filter", "delta", "layers", "hidden",
               "runs", "swa_val_f1", "swa_test_acc", "acc", "acc_std", "f1", "f1_std",
               "num_nodes", "num_edges", "mean_degree", "disk_bytes", "variant",
               "error", "wall_clock_s"]

SUMM_CSV_COLUMNS = ["source", "activation", "filter", "layers", "hidden", "runs",
                    "acc", "acc_std", "f1", "f1_std", "f1_non_summary", "f1_summary",
                    "selection_ratio", "oracle_ratio", "rouge1", "rouge2", "rougeL",
                    "num_nodes", "num_edges", "mean_degree", "disk_bytes", "variant",
                    "error", "wall_clock_s"]


@dataclass
class ExperimentSpec:
    """Declarative grid: activations x filters x GAT (layers x hidden), with
    `runs` independent seeds per cell."""

    activations: list[str] = field(default_factory=lambda: ["softmax"])
    filters: list[str] = field(default_factory=lambda: ["unfiltered", "mean_bound", "max_bound"])
    deltas: dict[str, float] = field(default_factory=lambda: {"mean_bound": 0.5, "max_bound": 0.5})
    window_fractions: list[float] = field(default_factory=lambda: [0.30])
    gat_layers: list[int] = field(default_factory=lambda: [2])
    gat_hidden: list[int] = field(default_factory=lambda: [64])
    runs: int = 5
    seed: int = 0
    swa_overrides: dict = field(default_factory=dict)
    gat_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.activations and self.filters and self.gat_layers
                and self.gat_hidden and self.window_fractions):
            raise ValueError("experiment grid must be non-empty")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        for a in self.activations:
            if a not in swa.ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        for f in self.filters:
            if f not in graph_build.FILTER_KINDS:
                raise ValueError(f"unknown filter {f!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentSpec":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def _key(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()[:24]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _swa_config(spec: ExperimentSpec, activation: str, window_fraction: float) -> swa.SwaConfig:
    return swa.SwaConfig(activation=activation, window_fraction=window_fraction,
                         seed=spec.seed, **spec.swa_overrides)


def _gat_config(spec: ExperimentSpec, layers: int, hidden: int, mode: str) -> gat.GatConfig:
    return gat.GatConfig(num_layers=layers, hidden=hidden, mode=mode, seed=spec.seed,
                         **spec.gat_overrides)


# ---------------------------------------------------------------------------
# Stage 1: attention extraction (cached per activation x window)

def _attention_key(ds_hash: str, spec: ExperimentSpec, activation: str, w: float) -> str:
    cfg = asdict(_swa_config(spec, activation, w))
    return _key("attn", ds_hash, cfg, spec.runs)


def ensure_attention(dataset: Dataset, ds_hash: str, spec: ExperimentSpec, activation: str,
                     window_fraction: float, out_dir: Path) -> tuple[dict[str, AttentionMatrix], dict]:
    """Train-and-extract (or reload) the attention matrices for one
    activation/window setting; returns ({doc_id: AttentionMatrix}, meta)."""
    adir = out_dir / "attn" / _attention_key(ds_hash, spec, activation, window_fraction)
    meta_path = adir / "meta.json"
    npz_path = adir / "attention.npz"
    if not meta_path.exists():
        adir.mkdir(parents=True, exist_ok=True)
        config = _swa_config(spec, activation, window_fraction)
        t0 = time.perf_counter()
        ext = swa.extract_attention(dataset, config, runs=spec.runs)
        test_docs = dataset.split("test")
        y_true, y_pred = [], []
        test_predictions = {}
        for doc in test_docs:
            logits, _ = ext.trained.predict(doc)
            if dataset.manifest.mode == "classification":
                y_true.append(doc.doc_label)
                y_pred.append(int(np.argmax(logits)))
                test_predictions[doc.doc_id] = y_pred[-1]
            else:
                y_true.extend(int(v) for v in doc.sentence_labels[:min(doc.n, config.max_cutoff)])
                preds = [int(v) for v in np.argmax(logits, axis=1)]
                y_pred.extend(preds)
                test_predictions[doc.doc_id] = preds
        m = classification_metrics(y_true, y_pred, ext.trained.num_outputs)
        np.savez(npz_path, **{doc_id: a.weights for doc_id, a in ext.matrices.items()})
        save_checkpoint(adir / "model.agsw", SWA_MAGIC,
                        {"config": asdict(ext.trained.config), "mode": ext.trained.mode,
                         "num_outputs": ext.trained.num_outputs,
                         "final_temperature": ext.trained.final_temperature},
                        ext.trained.params)
        meta = {"activation": activation, "window_fraction": window_fraction,
                "half_widths": {d: a.half_width for d, a in ext.matrices.items()},
                "run_val_f1s": ext.run_val_f1s, "best_run": ext.best_run,
                "swa_val_f1": ext.trained.val_macro_f1,
                "swa_test_acc": m.accuracy, "swa_test_f1": m.macro_f1,
                "test_predictions": test_predictions,
                "wall_clock_s": time.perf_counter() - t0}
        meta_path.write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    matrices = {}
    with np.load(npz_path) as data:
        for doc_id in data.files:
            matrices[doc_id] = AttentionMatrix(
                doc_id=doc_id, weights=data[doc_id],
                half_width=int(meta["half_widths"][doc_id]), activation=activation)
    return matrices, meta


# ---------------------------------------------------------------------------
# Stage 2: graph construction (cached per source)

def _graphs_key(ds_hash: str, spec: ExperimentSpec, source: tuple, w: float) -> str:
    if source[0] == "swa":
        _, activation, filt = source
        return _key("graphs", _attention_key(ds_hash, spec, activation, w),
                    filt, spec.deltas.get(filt, 0.5))
    return _key("graphs", ds_hash, source)


def ensure_graphs(dataset: Dataset, ds_hash: str, spec: ExperimentSpec, source: tuple,
                  window_fraction: float, out_dir: Path) -> tuple[Path, dict]:
    """Build (or reuse) one graph set. `source` is ("swa", activation, filter)
    or ("heuristic", scheme, window). Returns (jsonl path, stats meta)."""
    gkey = _graphs_key(ds_hash, spec, source, window_fraction)
    gdir = out_dir / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    path = gdir / f"{gkey}.jsonl"
    meta_path = gdir / f"{gkey}.meta.json"
    if not meta_path.exists():
        if source[0] == "swa":
            _, activation, filt = source
            matrices, _ = ensure_attention(dataset, ds_hash, spec, activation,
                                           window_fraction, out_dir)
            fspec = graph_build.FilterSpec(filt, spec.deltas.get(filt, 0.5))
            graphs = [graph_build.build_document_graph(matrices[d.doc_id], d, fspec)
                      for d in dataset.docs]
        else:
            _, scheme, hwin = source
            graphs = [graph_build.build_heuristic_graph(d, scheme, hwin) for d in dataset.docs]
        with open(path, "w", encoding="utf-8") as f:
            for g in graphs:
                f.write(graph_build.to_json(g) + "\n")
        stats = graph_build.graph_stats(graphs)
        meta_path.write_text(json.dumps({"source": list(source), "num_nodes": stats.num_nodes,
                                         "num_edges": stats.num_edges,
                                         "mean_degree": stats.mean_degree,
                                         "disk_bytes": stats.serialized_bytes},
                                        sort_keys=True), encoding="utf-8")
    return path, json.loads(meta_path.read_text(encoding="utf-8"))


def load_graphs(path: str | Path) -> list[graph_build.DocumentGraph]:
    with open(path, encoding="utf-8") as f:
        return [graph_build.from_json(line) for line in f if line.strip()]


# ---------------------------------------------------------------------------
# Stage 3: GAT cells (cached per cell; parallelizable)

def _run_gat_cell(graphs_path: str, split_assignment: dict, num_classes: int,
                  gat_fields: dict, runs: int, seed: int) -> dict:
    """Worker: train `runs` GAT models on a persisted graph set and dump
    per-run metrics and test predictions."""
    graphs = load_graphs(graphs_path)
    gds = gat.GraphDataset(graphs, split_assignment, num_classes)
    config = gat.GatConfig(**gat_fields)
    test_graphs = gds.split("test")
    t0 = time.perf_counter()
    run_dumps = []
    for r in range(runs):
        model = gat.train_gat(gds, replace(config, seed=seed + r))
        m = gat.evaluate_gat(model, test_graphs)
        preds = {}
        for g in test_graphs:
            p = model.predict(g)
            preds[g.doc_id] = int(p) if config.mode == "graph_classification" \
                else [int(v) for v in p]
        run_dumps.append({"seed": seed + r, "val_f1": model.val_macro_f1,
                          "epochs": len(model.history),
                          "metrics": {"accuracy": m.accuracy, "macro_f1": m.macro_f1,
                                      "per_class_f1": m.per_class_f1},
                          "test_predictions": preds})
    accs = np.array([r["metrics"]["accuracy"] for r in run_dumps])
    f1s = np.array([r["metrics"]["macro_f1"] for r in run_dumps])
    per_class = np.array([r["metrics"]["per_class_f1"] for r in run_dumps]).mean(axis=0)
    return {"acc": float(accs.mean()), "acc_std": float(accs.std(ddof=1)) if runs > 1 else None,
            "f1": float(f1s.mean()), "f1_std": float(f1s.std(ddof=1)) if runs > 1 else None,
            "per_class_f1": [float(v) for v in per_class],
            "runs": run_dumps, "wall_clock_s": time.perf_counter() - t0}


@dataclass
class PipelineResult:
    rows: list[dict]
    csv_path: Path
    num_errors: int


def _cells(spec: ExperimentSpec):
    for w in spec.window_fractions:
        for a in spec.activations:
            for f in spec.filters:
                for layers in spec.gat_layers:
                    for hidden in spec.gat_hidden:
                        yield w, a, f, layers, hidden


def run_pipeline(dataset: Dataset, spec: ExperimentSpec, out_dir: str | Path,
                 jobs: int = 1) -> PipelineResult:
    """Execute the full grid; persists artifacts and the results CSV under
    `out_dir`. Cells that fail get an error row; the rest proceed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds_hash = dataset.content_hash()
    mode = "graph_classification" if dataset.manifest.mode == "classification" \
        else "node_classification"

    # Stage 1+2 sequentially (SWA training shares work across cells).
    prepared: dict[tuple, tuple[Path, dict] | Exception] = {}
    attn_meta: dict[tuple, dict] = {}
    for w in spec.window_fractions:
        for a in spec.activations:
            try:
                _, meta = ensure_attention(dataset, ds_hash, spec, a, w, out)
                attn_meta[(w, a)] = meta
            except Exception as exc:  # noqa: BLE001 - stage failure recorded per cell
                for f in spec.filters:
                    prepared[(w, a, f)] = exc
                continue
            for f in spec.filters:
                try:
                    prepared[(w, a, f)] = ensure_graphs(dataset, ds_hash, spec,
                                                        ("swa", a, f), w, out)
                except Exception as exc:  # noqa: BLE001
                    prepared[(w, a, f)] = exc

    cell_dir = out / "cells"
    cell_dir.mkdir(exist_ok=True)
    rows = []
    pending = []  # (row, cell_path, worker args)
    for w, a, f, layers, hidden in _cells(spec):
        row = {"window_fraction": w, "activation": a, "filter": f,
               "delta": spec.deltas.get(f), "layers": layers, "hidden": hidden,
               "runs": spec.runs, "variant": f"{VARIANT_NAMES[a]}-{layers}-{hidden}",
               "error": None}
        meta = attn_meta.get((w, a))
        if meta:
            row["swa_val_f1"] = meta["swa_val_f1"]
            row["swa_test_acc"] = meta["swa_test_acc"]
        prep = prepared[(w, a, f)]
        if isinstance(prep, Exception):
            row["error"] = f"stage failure: {prep}"
            rows.append(row)
            continue
        try:
            gcfg = _gat_config(spec, layers, hidden, mode)
        except Exception as exc:  # noqa: BLE001 - bad cell config recorded, others proceed
            row["error"] = str(exc)
            rows.append(row)
            continue
        graphs_path, gmeta = prep
        row.update({k: gmeta[k] for k in ("num_nodes", "num_edges", "mean_degree", "disk_bytes")})
        cell_key = _key("cell", _graphs_key(ds_hash, spec, ("swa", a, f), w),
                        asdict(gcfg), spec.runs)
        cell_path = cell_dir / f"{cell_key}.json"
        if cell_path.exists():
            _finish_row(row, json.loads(cell_path.read_text(encoding="utf-8")))
            rows.append(row)
        else:
            args = (str(graphs_path), dataset.manifest.split_assignment,
                    dataset.manifest.num_classes, asdict(gcfg), spec.runs, spec.seed)
            pending.append((row, cell_path, args))
            rows.append(row)

    _execute_cells(pending, jobs)
    rows.sort(key=lambda r: (r["window_fraction"], r["activation"], r["filter"],
                             r["layers"], r["hidden"]))
    csv_path = out / "results.csv"
    write_csv(csv_path, CSV_COLUMNS, rows)
    num_errors = sum(1 for r in rows if r["error"])
    return PipelineResult(rows=rows, csv_path=csv_path, num_errors=num_errors)


def _finish_row(row: dict, cell: dict) -> None:
    for k in ("acc", "acc_std", "f1", "f1_std", "wall_clock_s"):
        row[k] = cell[k]


def _execute_cells(pending, jobs: int) -> None:
    if not pending:
        return
    if jobs <= 1:
        for row, cell_path, args in pending:
            _finish_pending(row, cell_path, args, None)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_gat_cell, *args) for _, _, args in pending]
            for (row, cell_path, args), fut in zip(pending, futures):
                _finish_pending(row, cell_path, args, fut)


def _finish_pending(row, cell_path, args, future) -> None:
    try:
        cell = future.result() if future is not None else _run_gat_cell(*args)
        cell_path.write_text(json.dumps(cell, sort_keys=True), encoding="utf-8")
        _finish_row(row, cell)
    except Exception as exc:  # noqa: BLE001 - cell failure recorded, others proceed
        row["error"] = str(exc)


# ---------------------------------------------------------------------------
# Window ablation

def ablate_window(dataset: Dataset, spec: ExperimentSpec, out_dir: str | Path,
                  jobs: int = 1) -> dict:
    """Standalone-SWA vs GAT accuracy per window fraction, plus pairwise
    Welch t-tests between window sizes over the pooled per-run accuracies."""
    if dataset.manifest.mode != "classification":
        raise ValueError("window ablation needs a classification dataset")
    out = Path(out_dir)
    result = run_pipeline(dataset, spec, out, jobs=jobs)
    ds_hash = dataset.content_hash()

    table_rows = []
    run_accs: dict[float, list[float]] = {w: [] for w in spec.window_fractions}
    for w in spec.window_fractions:
        row = {"window_fraction": w}
        for a in spec.activations:
            meta = json.loads((out / "attn" / _attention_key(ds_hash, spec, a, w) /
                               "meta.json").read_text(encoding="utf-8"))
            row[f"swa_acc_{a}"] = meta["swa_test_acc"]
        for f in spec.filters:
            cells = [r for r in result.rows
                     if r["window_fraction"] == w and r["filter"] == f and not r["error"]]
            row[f"gat_acc_{f}"] = float(np.mean([c["acc"] for c in cells])) if cells else None
        table_rows.append(row)
        for r in result.rows:
            if r["window_fraction"] == w and not r["error"]:
                cell_key = _key("cell", _graphs_key(ds_hash, spec,
                                                    ("swa", r["activation"], r["filter"]), w),
                                asdict(_gat_config(spec, r["layers"], r["hidden"],
                                                   "graph_classification")), spec.runs)
                cell = json.loads((out / "cells" / f"{cell_key}.json").read_text(encoding="utf-8"))
                run_accs[w].extend(rr["metrics"]["accuracy"] for rr in cell["runs"])

    t_tests = []
    ws = spec.window_fractions
    for i in range(len(ws)):
        for j in range(i, len(ws)):
            if len(run_accs[ws[i]]) >= 2 and len(run_accs[ws[j]]) >= 2:
                t, p = welch_t_test(run_accs[ws[i]], run_accs[ws[j]])
            else:
                t, p = None, None  # a t-test needs at least two runs per window
            t_tests.append({"window_a": ws[i], "window_b": ws[j], "t": t, "p": p})

    columns = (["window_fraction"] + [f"swa_acc_{a}" for a in spec.activations]
               + [f"gat_acc_{f}" for f in spec.filters])
    write_csv(out / "ablation.csv", columns, table_rows)
    write_csv(out / "ablation_ttests.csv", ["window_a", "window_b", "t", "p"], t_tests)
    report = {"table": table_rows, "t_tests": t_tests, "num_errors": result.num_errors}
    (out / "ablation.json").write_text(json.dumps(report, sort_keys=True), encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# Summarization track

def _summ_sources(spec: ExperimentSpec) -> list[tuple]:
    sources: list[tuple] = [("heuristic", "order", 0), ("heuristic", "fixed_window", 2)]
    for a in spec.activations:
        for f in spec.filters:
            if f in ("mean_bound", "max_bound"):
                sources.append(("swa", a, f))
    return sources


def run_summarization(dataset: Dataset, spec: ExperimentSpec, out_dir: str | Path,
                      corpus: list[dict] | None = None, jobs: int = 1) -> dict:
    """Sentence-classification GATs over mean/max-bound attention graphs plus
    order and fixed-window(2) baselines.

    Reports accuracy, macro-F1, per-class F1, the predicted-vs-oracle
    selection ratio, and (when `corpus` provides raw sentences and gold
    summaries) ROUGE-1/2/L of the predicted extractive summaries.
    """
    if dataset.manifest.mode != "summarization":
        raise ValueError("summarization track needs a summarization-mode dataset")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds_hash = dataset.content_hash()
    texts = {r["doc_id"]: r for r in corpus} if corpus else {}

    test_docs = dataset.split("test")
    oracle_pos = sum(int(d.sentence_labels.sum()) for d in test_docs)
    oracle_total = sum(d.n for d in test_docs)
    oracle_ratio = oracle_pos / oracle_total

    w = spec.window_fractions[0]
    cell_dir = out / "cells"
    cell_dir.mkdir(exist_ok=True)
    rows = []
    pending = []
    enrich = []  # (row, cell_path) for rows whose cell can be (re)loaded
    for source in _summ_sources(spec):
        if source[0] == "swa":
            activation, filt = source[1], source[2]
        else:
            activation, filt = None, f"{source[1]}{source[2] or ''}"
        try:
            graphs_path, gmeta = ensure_graphs(dataset, ds_hash, spec, source, w, out)
        except Exception as exc:  # noqa: BLE001
            for layers in spec.gat_layers:
                for hidden in spec.gat_hidden:
                    rows.append({"source": source[0], "activation": activation,
                                 "filter": filt, "layers": layers, "hidden": hidden,
                                 "runs": spec.runs, "error": f"stage failure: {exc}"})
            continue
        for layers in spec.gat_layers:
            for hidden in spec.gat_hidden:
                gcfg = _gat_config(spec, layers, hidden, "node_classification")
                variant = (f"{VARIANT_NAMES[source[1]]}-{layers}-{hidden}"
                           if source[0] == "swa" else f"{layers}-{hidden}")
                row = {"source": source[0], "activation": activation, "filter": filt,
                       "layers": layers, "hidden": hidden, "runs": spec.runs,
                       "variant": variant, "error": None, "oracle_ratio": oracle_ratio}
                row.update({k: gmeta[k] for k in ("num_nodes", "num_edges",
                                                  "mean_degree", "disk_bytes")})
                cell_key = _key("cell", _graphs_key(ds_hash, spec, source, w),
                                asdict(gcfg), spec.runs)
                cell_path = cell_dir / f"{cell_key}.json"
                if not cell_path.exists():
                    args = (str(graphs_path), dataset.manifest.split_assignment, 2,
                            asdict(gcfg), spec.runs, spec.seed)
                    pending.append((row, cell_path, args))
                enrich.append((row, cell_path))
                rows.append(row)

    _execute_cells(pending, jobs)
    for row, cell_path in enrich:
        if row["error"] or not cell_path.exists():
            continue
        cell = json.loads(cell_path.read_text(encoding="utf-8"))
        _finish_row(row, cell)
        row["f1_non_summary"] = cell["per_class_f1"][0]
        row["f1_summary"] = cell["per_class_f1"][1]
        ratios = []
        rouges = {"r1": [], "r2": [], "rl": []}
        for run in cell["runs"]:
            preds = run["test_predictions"]
            pos = sum(sum(p) for p in preds.values())
            total = sum(len(p) for p in preds.values())
            ratios.append(pos / total if total else 0.0)
            if texts:
                for doc_id, p in preds.items():
                    rec = texts.get(doc_id)
                    if rec is None or "summary" not in rec:
                        continue
                    pred_text = " ".join(s for s, keep in zip(rec["sentences"], p) if keep)
                    for var in rouges:
                        rouges[var].append(rouge(pred_text, rec["summary"], var)[2])
        row["selection_ratio"] = float(np.mean(ratios))
        if texts and rouges["r1"]:
            row["rouge1"] = float(np.mean(rouges["r1"]))
            row["rouge2"] = float(np.mean(rouges["r2"]))
            row["rougeL"] = float(np.mean(rouges["rl"]))

    rows.sort(key=lambda r: (r["source"], str(r["activation"]), str(r["filter"]),
                             r["layers"], r["hidden"]))
    write_csv(out / "summarization.csv", SUMM_CSV_COLUMNS, rows)
    report = {"rows": rows, "oracle_ratio": oracle_ratio,
              "num_errors": sum(1 for r in rows if r.get("error"))}
    (out / "summarization.json").write_text(json.dumps(report, sort_keys=True), encoding="utf-8")
    return report
