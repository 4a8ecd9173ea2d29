"""Multi-head sliding-window attention classifier over sentence embeddings.

The model is a stack of two dense layers, per-head scaled dot-product
attention masked to a local window, an output projection, and a task
head (mean-pooled document classifier or per-sentence classifier).
Attention weights pass through one of four activations:

* ``softmax``          row softmax at temperature 1
* ``softmax_annealed`` row softmax with exponentially annealed temperature
* ``relu``             max(scores, 0) / n
* ``sigmoid``          sigmoid(scores - log n)

where n is the document length in sentences. Forward and backward passes
are written out explicitly in float64 so gradients can be validated
against finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .data_io import Dataset, EmbeddedDocument
from .metrics_stats import classification_metrics

ACTIVATIONS = ("softmax", "softmax_annealed", "relu", "sigmoid")


@dataclass
class SwaConfig:
    heads: int = 4
    fc_hidden: int = 128
    window_fraction: float = 0.30
    max_cutoff: int = 1000
    activation: str = "softmax"
    anneal_rate: float = 0.0004
    temp_floor: float = 0.1
    dropout: float = 0.2
    lr: float = 0.001
    batch_size: int = 32
    max_epochs: int = 20
    patience: int | None = 5
    min_delta: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.window_fraction <= 1.0:
            raise ValueError("window_fraction must be in (0, 1]")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.fc_hidden % self.heads != 0:
            raise ValueError("fc_hidden must be divisible by heads")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class AttentionMatrix:
    """Head-averaged post-activation attention weights for one document."""

    doc_id: str
    weights: np.ndarray  # (n, n), zero outside the window
    half_width: int
    activation: str

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def window_half_width(n: int, fraction: float) -> int:
    """Half-width h of the attention window: max(1, round(fraction * n / 2)).

    Sentence i attends to every j with |i - j| <= h (ties round up).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    return max(1, int(math.floor(fraction * n / 2.0 + 0.5)))


def window_mask(n: int, half_width: int) -> np.ndarray:
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) <= half_width


def anneal_temperature(iteration: int, rate: float, floor: float) -> float:
    """Exponentially annealed softmax temperature max(floor, e^(-rate * i))."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if floor <= 0:
        raise ValueError("floor must be > 0")
    return max(floor, math.exp(-rate * iteration))


def apply_activation(scores: np.ndarray, mask: np.ndarray, kind: str,
                     temperature: float, doc_len: int) -> np.ndarray:
    """Turn masked attention scores into weights; out-of-window entries are exactly 0.

    `scores` may carry leading batch/head dimensions; the window mask applies
    to the trailing (n, n) axes and softmax normalizes over in-window entries
    of each row.
    """
    if not np.isfinite(scores[..., mask]).all():
        raise ValueError("non-finite attention logits")
    if kind in ("softmax", "softmax_annealed"):
        return nn.masked_row_softmax(scores, mask, temperature)
    if kind == "relu":
        return np.where(mask, np.maximum(scores, 0.0) / doc_len, 0.0)
    if kind == "sigmoid":
        return np.where(mask, nn.sigmoid(scores - math.log(doc_len)), 0.0)
    raise ValueError(f"unknown activation {kind!r}")


def init_params(config: SwaConfig, input_dim: int, num_outputs: int) -> nn.Params:
    """Xavier-uniform parameters; biases start at zero.

    `num_outputs` is K for classification and 2 for per-sentence labels.
    """
    rng = np.random.default_rng([config.seed, 0])
    f = config.fc_hidden
    p: nn.Params = {}
    p["fc1_w"] = nn.xavier_uniform(rng, input_dim, f)
    p["fc1_b"] = np.zeros(f)
    p["fc2_w"] = nn.xavier_uniform(rng, f, f)
    p["fc2_b"] = np.zeros(f)
    for name in ("q", "k", "v"):
        p[f"w{name}"] = nn.xavier_uniform(rng, f, f)
        p[f"b{name}"] = np.zeros(f)
    p["wo"] = nn.xavier_uniform(rng, f, f)
    p["bo"] = np.zeros(f)
    p["head_w"] = nn.xavier_uniform(rng, f, num_outputs)
    p["head_b"] = np.zeros(num_outputs)
    return p


def _truncate(doc: EmbeddedDocument, max_cutoff: int) -> EmbeddedDocument:
    if doc.n <= max_cutoff:
        return doc
    return EmbeddedDocument(doc_id=doc.doc_id, sentences=doc.sentences[:max_cutoff],
                            doc_label=doc.doc_label,
                            sentence_labels=None if doc.sentence_labels is None
                            else doc.sentence_labels[:max_cutoff])


def _forward_cached(x: np.ndarray, params: nn.Params, config: SwaConfig, mode: str,
                    temperature: float, training: bool, rng: np.random.Generator | None) -> dict:
    n = x.shape[0]
    if n == 0:
        raise ValueError("document has no sentences")
    heads = config.heads
    hd = config.fc_hidden // heads
    h = window_half_width(n, config.window_fraction)
    mask = window_mask(n, h)

    c: dict = {"x": x, "mask": mask, "half_width": h, "n": n}
    c["z1"] = x @ params["fc1_w"] + params["fc1_b"]
    a1 = nn.relu(c["z1"])
    c["d1"] = nn.dropout_mask(rng, a1.shape, config.dropout) if training else 1.0
    c["h1"] = a1 * c["d1"]
    c["z2"] = c["h1"] @ params["fc2_w"] + params["fc2_b"]
    a2 = nn.relu(c["z2"])
    c["d2"] = nn.dropout_mask(rng, a2.shape, config.dropout) if training else 1.0
    c["h2"] = a2 * c["d2"]

    def split_heads(m):  # (n, F) -> (heads, n, hd)
        return m.reshape(n, heads, hd).transpose(1, 0, 2)

    c["q"] = split_heads(c["h2"] @ params["wq"] + params["bq"])
    c["k"] = split_heads(c["h2"] @ params["wk"] + params["bk"])
    c["v"] = split_heads(c["h2"] @ params["wv"] + params["bv"])
    c["scores"] = c["q"] @ c["k"].transpose(0, 2, 1) / math.sqrt(hd)
    c["attn"] = apply_activation(c["scores"], mask, config.activation, temperature, n)
    c["temperature"] = temperature
    out = (c["attn"] @ c["v"]).transpose(1, 0, 2).reshape(n, config.fc_hidden)
    c["heads_out"] = out
    c["y"] = out @ params["wo"] + params["bo"]
    if mode == "classification":
        c["pooled"] = c["y"].mean(axis=0)
        c["logits"] = c["pooled"] @ params["head_w"] + params["head_b"]
    else:
        c["logits"] = c["y"] @ params["head_w"] + params["head_b"]
    return c


def _backward(c: dict, dlogits: np.ndarray, params: nn.Params, config: SwaConfig,
              mode: str, grads: nn.Params) -> None:
    n = c["n"]
    heads = config.heads
    hd = config.fc_hidden // heads
    mask = c["mask"]

    if mode == "classification":
        grads["head_w"] += np.outer(c["pooled"], dlogits)
        grads["head_b"] += dlogits
        dy = np.tile((dlogits @ params["head_w"].T) / n, (n, 1))
    else:
        grads["head_w"] += c["y"].T @ dlogits
        grads["head_b"] += dlogits.sum(axis=0)
        dy = dlogits @ params["head_w"].T

    grads["wo"] += c["heads_out"].T @ dy
    grads["bo"] += dy.sum(axis=0)
    dout = (dy @ params["wo"].T).reshape(n, heads, hd).transpose(1, 0, 2)

    dattn = dout @ c["v"].transpose(0, 2, 1)
    dv = c["attn"].transpose(0, 2, 1) @ dout

    attn = c["attn"]
    if config.activation in ("softmax", "softmax_annealed"):
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) / c["temperature"]
    elif config.activation == "relu":
        dscores = np.where(mask & (c["scores"] > 0.0), dattn / n, 0.0)
    else:  # sigmoid
        dscores = np.where(mask, dattn * attn * (1.0 - attn), 0.0)

    dq = dscores @ c["k"] / math.sqrt(hd)
    dk = dscores.transpose(0, 2, 1) @ c["q"] / math.sqrt(hd)

    def merge_heads(m):  # (heads, n, hd) -> (n, F)
        return m.transpose(1, 0, 2).reshape(n, config.fc_hidden)

    dh2 = np.zeros_like(c["h2"])
    for name, dproj in (("q", merge_heads(dq)), ("k", merge_heads(dk)), ("v", merge_heads(dv))):
        grads[f"w{name}"] += c["h2"].T @ dproj
        grads[f"b{name}"] += dproj.sum(axis=0)
        dh2 += dproj @ params[f"w{name}"].T

    dz2 = dh2 * c["d2"] * (c["z2"] > 0.0)
    grads["fc2_w"] += c["h1"].T @ dz2
    grads["fc2_b"] += dz2.sum(axis=0)
    dh1 = dz2 @ params["fc2_w"].T
    dz1 = dh1 * c["d1"] * (c["z1"] > 0.0)
    grads["fc1_w"] += c["x"].T @ dz1
    grads["fc1_b"] += dz1.sum(axis=0)


def forward(doc: EmbeddedDocument, params: nn.Params, config: SwaConfig, mode: str,
            training: bool = False, rng: np.random.Generator | None = None,
            temperature: float = 1.0) -> tuple[np.ndarray, AttentionMatrix]:
    """Run the model on one document; returns logits and the head-averaged
    attention matrix. Documents longer than `max_cutoff` are truncated to
    their first `max_cutoff` sentences.
    """
    doc = _truncate(doc, config.max_cutoff)
    x = doc.sentences.astype(np.float64)
    c = _forward_cached(x, params, config, mode, temperature, training, rng)
    attn = AttentionMatrix(doc_id=doc.doc_id, weights=c["attn"].mean(axis=0),
                           half_width=c["half_width"], activation=config.activation)
    return c["logits"], attn


def loss_and_grads(docs: list[EmbeddedDocument], params: nn.Params, config: SwaConfig,
                   mode: str, weights: np.ndarray, temperature: float = 1.0,
                   training: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[float, nn.Params]:
    """Class-weighted cross-entropy over a batch of documents plus parameter
    gradients. With training=False the loss is deterministic (no dropout), which
    is the configuration used for gradient checking.
    """
    caches = []
    logit_rows = []
    labels = []
    for doc in docs:
        doc = _truncate(doc, config.max_cutoff)
        c = _forward_cached(doc.sentences.astype(np.float64), params, config, mode,
                            temperature, training, rng)
        caches.append(c)
        if mode == "classification":
            logit_rows.append(c["logits"][None, :])
            labels.append(doc.doc_label)
        else:
            logit_rows.append(c["logits"])
            labels.extend(int(v) for v in doc.sentence_labels)
    logits = np.concatenate(logit_rows, axis=0)
    loss, dlogits = nn.weighted_cross_entropy(logits, np.asarray(labels), weights)

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    row = 0
    for c in caches:
        take = 1 if mode == "classification" else c["n"]
        d = dlogits[row] if mode == "classification" else dlogits[row:row + take]
        _backward(c, d, params, config, mode, grads)
        row += take
    return loss, grads


@dataclass
class TrainedSwa:
    """A trained model: parameters plus everything needed to rerun it."""

    params: nn.Params
    config: SwaConfig
    mode: str
    num_outputs: int
    val_macro_f1: float
    final_temperature: float
    history: list[dict] = field(default_factory=list)

    def predict(self, doc: EmbeddedDocument) -> tuple[np.ndarray, AttentionMatrix]:
        return forward(doc, self.params, self.config, self.mode,
                       training=False, temperature=self.final_temperature)


def _eval_macro_f1(docs, params, config, mode, num_outputs, temperature) -> tuple[float, float]:
    y_true = []
    y_pred = []
    for doc in docs:
        doc_t = _truncate(doc, config.max_cutoff)
        logits, _ = forward(doc_t, params, config, mode, training=False, temperature=temperature)
        if mode == "classification":
            y_true.append(doc_t.doc_label)
            y_pred.append(int(np.argmax(logits)))
        else:
            y_true.extend(int(v) for v in doc_t.sentence_labels)
            y_pred.extend(int(v) for v in np.argmax(logits, axis=1))
    m = classification_metrics(y_true, y_pred, num_outputs)
    return m.macro_f1, m.accuracy


def train_swa(dataset: Dataset, config: SwaConfig) -> TrainedSwa:
    """Adam training with class-weighted cross entropy and early stopping on
    validation macro-F1; returns the parameters of the best-validation epoch.

    Deterministic for a fixed config seed: init, per-epoch shuffles, and
    dropout all derive from it.
    """
    train_docs = dataset.split("train")
    val_docs = dataset.split("val")
    if not train_docs or not val_docs:
        raise ValueError("dataset needs non-empty train and val splits")
    mode = dataset.manifest.mode
    num_outputs = dataset.manifest.num_classes if mode == "classification" else 2
    if mode == "classification":
        train_labels = np.array([d.doc_label for d in train_docs])
    else:
        train_labels = np.concatenate([d.sentence_labels for d in train_docs])
    weights = nn.class_weights(train_labels, num_outputs)

    params = init_params(config, dataset.manifest.embedding_dim, num_outputs)
    opt = nn.Adam(params, lr=config.lr)
    annealed = config.activation == "softmax_annealed"
    global_iter = 0
    temperature = 1.0

    best = None
    best_raw = -np.inf
    gate = -np.inf
    wait = 0
    history = []
    for epoch in range(config.max_epochs):
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(len(train_docs))
        drop_rng = np.random.default_rng([config.seed, 2, epoch])
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_docs[i] for i in order[start:start + config.batch_size]]
            if annealed:
                temperature = anneal_temperature(global_iter, config.anneal_rate, config.temp_floor)
            loss, grads = loss_and_grads(batch, params, config, mode, weights,
                                         temperature=temperature, training=True, rng=drop_rng)
            opt.step(grads)
            global_iter += 1
            losses.append(loss)
        val_f1, val_acc = _eval_macro_f1(val_docs, params, config, mode, num_outputs, temperature)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_macro_f1": val_f1, "val_accuracy": val_acc,
                        "temperature": temperature})
        if val_f1 > best_raw:
            best_raw = val_f1
            best = ({k: v.copy() for k, v in params.items()}, temperature)
        if val_f1 >= gate + config.min_delta:
            gate = val_f1
            wait = 0
        else:
            wait += 1
            if config.patience is not None and wait >= config.patience:
                break

    best_params, best_temp = best
    return TrainedSwa(params=best_params, config=config, mode=mode, num_outputs=num_outputs,
                      val_macro_f1=float(best_raw), final_temperature=best_temp, history=history)


@dataclass
class AttentionExtraction:
    trained: TrainedSwa
    matrices: dict[str, AttentionMatrix]  # doc_id -> attention, all splits
    run_val_f1s: list[float]
    best_run: int


def extract_attention(dataset: Dataset, config: SwaConfig, runs: int = 5) -> AttentionExtraction:
    """Train `runs` models with seeds seed+0..runs-1, keep the one with the
    best validation macro-F1 (ties go to the lowest seed), and return its
    eval-mode attention matrices for every document in every split.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    best_model = None
    best_run = -1
    f1s = []
    for r in range(runs):
        model = train_swa(dataset, replace(config, seed=config.seed + r))
        f1s.append(model.val_macro_f1)
        if best_model is None or model.val_macro_f1 > best_model.val_macro_f1:
            best_model = model
            best_run = r
    matrices = {}
    for doc in dataset.docs:
        _, attn = best_model.predict(doc)
        matrices[doc.doc_id] = attn
    return AttentionExtraction(trained=best_model, matrices=matrices,
                               run_val_f1s=f1s, best_run=best_run)
