"""Sliding-window attention classifiers, attention-induced document graphs,
and graph attention networks trained on them."""

from .data_io import (Dataset, DatasetFormatError, DatasetManifest, EmbeddedDocument,
                      SyntheticSpec, build_oracle_labels, fallback_embed,
                      generate_synthetic, load_dataset, save_dataset)
from .gat import GatConfig, GraphDataset, evaluate_gat, run_gat, train_gat
from .graph_build import (DocumentGraph, FilterSpec, GraphStats, build_document_graph,
                          build_heuristic_graph, graph_stats)
from .metrics_stats import (Metrics, SignificanceReport, classification_metrics,
                            one_way_anova, rouge, tukey_hsd, welch_t_test)
from .runner import ExperimentSpec, ablate_window, run_pipeline, run_summarization
from .swa import (AttentionMatrix, SwaConfig, anneal_temperature, apply_activation,
                  extract_attention, train_swa, window_half_width)

__version__ = "0.1.0"

__all__ = [
    "AttentionMatrix", "Dataset", "DatasetFormatError", "DatasetManifest",
    "DocumentGraph", "EmbeddedDocument", "ExperimentSpec", "FilterSpec", "GatConfig",
    "GraphDataset", "GraphStats", "Metrics", "SignificanceReport", "SwaConfig",
    "SyntheticSpec", "ablate_window", "anneal_temperature", "apply_activation",
    "build_document_graph", "build_heuristic_graph", "build_oracle_labels",
    "classification_metrics", "evaluate_gat", "extract_attention", "fallback_embed",
    "generate_synthetic", "graph_stats", "load_dataset", "one_way_anova",
    "rouge", "run_gat", "run_pipeline", "run_summarization", "save_dataset",
    "train_gat", "train_swa", "tukey_hsd", "welch_t_test", "window_half_width",
]
