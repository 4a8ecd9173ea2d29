"""Graph attention network layers and trainers for document graphs.

Single-head GAT layers with explicit forward/backward passes. Edge
weights enter the pre-softmax attention score as an additive log-weight
bias, so unit-weight graphs reproduce the standard unweighted layer
exactly. A self-edge of weight 1 is added to every node at every layer
for aggregation, whether or not the constructed graph carries a
self-loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .graph_build import DocumentGraph
from .metrics_stats import Metrics, aggregate_metrics, classification_metrics

GAT_MODES = ("graph_classification", "node_classification")
_LEAKY_SLOPE = 0.2


@dataclass
class GatConfig:
    num_layers: int = 2
    hidden: int = 64
    heads_per_layer: int = 1
    dropout: float = 0.2
    lr: float = 0.001
    batch_size: int = 32
    max_epochs: int = 50
    patience: int | None = 5
    min_delta: float = 0.001
    mode: str = "graph_classification"
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.heads_per_layer != 1:
            raise ValueError("only single-head GAT layers are supported")
        if self.mode not in GAT_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class GraphDataset:
    """Document graphs plus the split assignment and label space."""

    graphs: list[DocumentGraph]
    split_assignment: dict[str, str]
    num_classes: int

    def split(self, name: str) -> list[DocumentGraph]:
        return [g for g in self.graphs if self.split_assignment[g.doc_id] == name]


def node_label(graph: DocumentGraph, node_index: int) -> int:
    """Training label of a (possibly merged) node: the mean of its member
    sentence labels, rounded with ties toward the summary class."""
    members = graph.nodes[node_index].members
    vals = [int(graph.sentence_labels[m]) for m in members]
    return 1 if np.mean(vals) >= 0.5 else 0


@dataclass
class _GraphTensors:
    feats: np.ndarray       # (m, d) float64
    adj: np.ndarray         # (m, m) bool, diagonal always True
    log_bias: np.ndarray    # (m, m) float64, log edge weight; 0 on the diagonal
    label: int | None
    node_labels: np.ndarray | None


def _tensors(graph: DocumentGraph, mode: str) -> _GraphTensors:
    m = graph.num_nodes
    index = {n.node_id: i for i, n in enumerate(graph.nodes)}
    feats = np.stack([n.embedding.astype(np.float64) for n in graph.nodes])
    adj = np.eye(m, dtype=bool)
    log_bias = np.zeros((m, m))
    for (u, v), w in graph.edges.items():
        if u == v:
            continue  # aggregation self-edges always carry weight 1
        i, j = index[u], index[v]
        adj[i, j] = adj[j, i] = True
        log_bias[i, j] = log_bias[j, i] = math.log(w)
    if mode == "graph_classification":
        return _GraphTensors(feats, adj, log_bias, int(graph.doc_label), None)
    labels = np.array([node_label(graph, i) for i in range(m)], dtype=np.int64)
    return _GraphTensors(feats, adj, log_bias, None, labels)


def init_params(config: GatConfig, input_dim: int, num_outputs: int) -> nn.Params:
    rng = np.random.default_rng([config.seed, 0])
    p: nn.Params = {}
    in_dim = input_dim
    for layer in range(config.num_layers):
        p[f"w{layer}"] = nn.xavier_uniform(rng, in_dim, config.hidden)
        p[f"a{layer}"] = nn.xavier_uniform(rng, 2 * config.hidden, 1).ravel()
        in_dim = config.hidden
    p["out_w"] = nn.xavier_uniform(rng, config.hidden, num_outputs)
    p["out_b"] = np.zeros(num_outputs)
    return p


def gat_layer_forward(feats: np.ndarray, adj: np.ndarray, log_bias: np.ndarray,
                      w: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """One attention layer: returns (pre-nonlinearity output, coefficients, cache).

    Scores are LeakyReLU(a . [Wh_i || Wh_j]) + log(edge weight), softmaxed
    over each closed neighborhood N(i) + {i}.
    """
    hid = w.shape[1]
    g = feats @ w
    s = g @ a[:hid]
    t = g @ a[hid:]
    pre = s[:, None] + t[None, :]
    scores = nn.leaky_relu(pre, _LEAKY_SLOPE) + log_bias
    coeff = nn.masked_row_softmax(scores, adj)
    out = coeff @ g
    cache = {"feats": feats, "g": g, "pre": pre, "coeff": coeff}
    return out, coeff, cache


def _layer_backward(dout: np.ndarray, cache: dict, adj: np.ndarray, w: np.ndarray,
                    a: np.ndarray, grads_w: np.ndarray, grads_a: np.ndarray) -> np.ndarray:
    hid = w.shape[1]
    g = cache["g"]
    coeff = cache["coeff"]
    dcoeff = dout @ g.T
    dg = coeff.T @ dout
    de = coeff * (dcoeff - (dcoeff * coeff).sum(axis=1, keepdims=True))
    dpre = np.where(adj, de * nn.leaky_relu_grad(cache["pre"], _LEAKY_SLOPE), 0.0)
    ds = dpre.sum(axis=1)
    dt = dpre.sum(axis=0)
    dg += np.outer(ds, a[:hid]) + np.outer(dt, a[hid:])
    grads_a[:hid] += g.T @ ds
    grads_a[hid:] += g.T @ dt
    grads_w += cache["feats"].T @ dg
    return dg @ w.T


def _forward_graph(tensors: _GraphTensors, params: nn.Params, config: GatConfig,
                   training: bool, rng: np.random.Generator | None) -> dict:
    h = tensors.feats
    layers = []
    for layer in range(config.num_layers):
        drop = nn.dropout_mask(rng, h.shape, config.dropout) if training else 1.0
        h_in = h * drop
        out, _, cache = gat_layer_forward(h_in, tensors.adj, tensors.log_bias,
                                          params[f"w{layer}"], params[f"a{layer}"])
        cache["drop"] = drop
        last = layer == config.num_layers - 1
        h = out if last else nn.elu(out)
        cache["pre_act"] = out
        layers.append(cache)
    c = {"layers": layers, "node_out": h}
    if config.mode == "graph_classification":
        c["pooled"] = h.mean(axis=0)
        c["logits"] = c["pooled"] @ params["out_w"] + params["out_b"]
    else:
        c["logits"] = h @ params["out_w"] + params["out_b"]
    return c


def _backward_graph(c: dict, dlogits: np.ndarray, tensors: _GraphTensors, params: nn.Params,
                    config: GatConfig, grads: nn.Params) -> None:
    h = c["node_out"]
    m = h.shape[0]
    if config.mode == "graph_classification":
        grads["out_w"] += np.outer(c["pooled"], dlogits)
        grads["out_b"] += dlogits
        dh = np.tile((dlogits @ params["out_w"].T) / m, (m, 1))
    else:
        grads["out_w"] += h.T @ dlogits
        grads["out_b"] += dlogits.sum(axis=0)
        dh = dlogits @ params["out_w"].T
    for layer in range(config.num_layers - 1, -1, -1):
        cache = c["layers"][layer]
        if layer != config.num_layers - 1:
            dh = dh * nn.elu_grad(cache["pre_act"])
        dh = _layer_backward(dh, cache, tensors.adj, params[f"w{layer}"], params[f"a{layer}"],
                             grads[f"w{layer}"], grads[f"a{layer}"])
        dh = dh * cache["drop"]


def forward(graph: DocumentGraph, params: nn.Params, config: GatConfig) -> np.ndarray:
    """Eval-mode logits: (K,) for graph classification, (m, 2) per node otherwise."""
    return _forward_graph(_tensors(graph, config.mode), params, config, False, None)["logits"]


def loss_and_grads(graphs: list[DocumentGraph], params: nn.Params, config: GatConfig,
                   weights: np.ndarray, training: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[float, nn.Params]:
    caches = []
    tensor_list = []
    logit_rows = []
    labels: list[int] = []
    for graph in graphs:
        tensors = _tensors(graph, config.mode)
        c = _forward_graph(tensors, params, config, training, rng)
        caches.append(c)
        tensor_list.append(tensors)
        if config.mode == "graph_classification":
            logit_rows.append(c["logits"][None, :])
            labels.append(tensors.label)
        else:
            logit_rows.append(c["logits"])
            labels.extend(int(v) for v in tensors.node_labels)
    logits = np.concatenate(logit_rows, axis=0)
    loss, dlogits = nn.weighted_cross_entropy(logits, np.asarray(labels), weights)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    row = 0
    for c, tensors in zip(caches, tensor_list):
        take = 1 if config.mode == "graph_classification" else len(tensors.feats)
        d = dlogits[row] if config.mode == "graph_classification" else dlogits[row:row + take]
        _backward_graph(c, d, tensors, params, config, grads)
        row += take
    return loss, grads


@dataclass
class TrainedGat:
    params: nn.Params
    config: GatConfig
    num_classes: int
    val_macro_f1: float
    history: list[dict] = field(default_factory=list)

    def predict(self, graph: DocumentGraph) -> np.ndarray:
        """Predicted class per graph (int) or per sentence (array, via node membership)."""
        logits = forward(graph, self.params, self.config)
        if self.config.mode == "graph_classification":
            return int(np.argmax(logits))
        node_pred = np.argmax(logits, axis=1)
        out = np.zeros(graph.n_sentences, dtype=np.int64)
        for i, node in enumerate(graph.nodes):
            out[node.members] = node_pred[i]
        return out


def evaluate_gat(trained: TrainedGat, graphs: list[DocumentGraph]) -> Metrics:
    """Graph-level metrics in classification; sentence-level (node predictions
    broadcast to member sentences) in node classification."""
    y_true: list[int] = []
    y_pred: list[int] = []
    for graph in graphs:
        pred = trained.predict(graph)
        if trained.config.mode == "graph_classification":
            y_true.append(int(graph.doc_label))
            y_pred.append(pred)
        else:
            y_true.extend(int(v) for v in graph.sentence_labels)
            y_pred.extend(int(v) for v in pred)
    return classification_metrics(y_true, y_pred, trained.num_classes)


def train_gat(dataset: GraphDataset, config: GatConfig) -> TrainedGat:
    """Adam + class-weighted cross entropy with early stopping on validation
    macro-F1; returns the best-validation-epoch parameters."""
    train_graphs = dataset.split("train")
    val_graphs = dataset.split("val")
    if not train_graphs or not val_graphs:
        raise ValueError("dataset needs non-empty train and val splits")
    num_outputs = dataset.num_classes if config.mode == "graph_classification" else 2
    if config.mode == "graph_classification":
        train_labels = np.array([g.doc_label for g in train_graphs])
    else:
        train_labels = np.concatenate(
            [[node_label(g, i) for i in range(g.num_nodes)] for g in train_graphs])
    weights = nn.class_weights(train_labels, num_outputs)

    input_dim = train_graphs[0].nodes[0].embedding.shape[0]
    params = init_params(config, input_dim, num_outputs)
    opt = nn.Adam(params, lr=config.lr)

    best = None
    best_raw = -np.inf
    gate = -np.inf
    wait = 0
    history = []
    for epoch in range(config.max_epochs):
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(len(train_graphs))
        drop_rng = np.random.default_rng([config.seed, 2, epoch])
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_graphs[i] for i in order[start:start + config.batch_size]]
            loss, grads = loss_and_grads(batch, params, config, weights, training=True, rng=drop_rng)
            opt.step(grads)
            losses.append(loss)
        probe = TrainedGat(params=params, config=config, num_classes=num_outputs, val_macro_f1=0.0)
        val = evaluate_gat(probe, val_graphs)
        train_acc = evaluate_gat(probe, train_graphs).accuracy
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "train_accuracy": train_acc,
                        "val_macro_f1": val.macro_f1, "val_accuracy": val.accuracy})
        if val.macro_f1 > best_raw:
            best_raw = val.macro_f1
            best = {k: v.copy() for k, v in params.items()}
        if val.macro_f1 >= gate + config.min_delta:
            gate = val.macro_f1
            wait = 0
        else:
            wait += 1
            if config.patience is not None and wait >= config.patience:
                break

    return TrainedGat(params=best, config=config, num_classes=num_outputs,
                      val_macro_f1=float(best_raw), history=history)


@dataclass
class GatRunSet:
    """Aggregate over independent seeds of the same configuration."""

    mean: Metrics
    runs: list[Metrics]
    val_f1s: list[float]


def run_gat(dataset: GraphDataset, config: GatConfig, runs: int = 5,
            eval_split: str = "test") -> GatRunSet:
    """Train `runs` models with seeds seed+0..runs-1 and average their
    evaluation metrics (std populated when runs > 1)."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    eval_graphs = dataset.split(eval_split)
    per_run = []
    val_f1s = []
    for r in range(runs):
        model = train_gat(dataset, replace(config, seed=config.seed + r))
        per_run.append(evaluate_gat(model, eval_graphs))
        val_f1s.append(model.val_macro_f1)
    return GatRunSet(mean=aggregate_metrics(per_run), runs=per_run, val_f1s=val_f1s)
