"""Attention matrices -> sparse undirected weighted document graphs.

Construction pipeline: row-wise statistical filtering (mean-bound or
max-bound, tolerance delta), symmetrization by averaging the two directed
weights, merging of nodes with bit-identical embeddings, and
redistribution of self-loop weight for nodes connected only to
themselves. Heuristic baseline graphs (sentence order / fixed window)
and structural statistics live here too, along with the canonical JSON
and GraphML exports.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .data_io import EmbeddedDocument
from .swa import AttentionMatrix, window_mask

FILTER_KINDS = ("unfiltered", "mean_bound", "max_bound")


@dataclass
class FilterSpec:
    kind: str
    tolerance: float = 0.5

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class GraphNode:
    node_id: int  # lowest member sentence index
    embedding: np.ndarray
    members: list[int]


@dataclass
class DocumentGraph:
    """Undirected weighted graph over (merged) sentence nodes.

    Edges are keyed (u, v) with u <= v; (u, u) is a self-loop. All weights
    are finite and > 0.
    """

    doc_id: str
    nodes: list[GraphNode]
    edges: dict[tuple[int, int], float]
    n_sentences: int
    doc_label: int | None = None
    sentence_labels: np.ndarray | None = None

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, node_id: int) -> int:
        """Incident edge count; a self-loop contributes 2."""
        deg = 0
        for u, v in self.edges:
            if u == node_id:
                deg += 1
            if v == node_id:
                deg += 1
        return deg

    def mean_degree(self) -> float:
        return 2.0 * self.num_edges / self.num_nodes if self.nodes else 0.0

    def validate(self) -> None:
        ids = [n.node_id for n in self.nodes]
        assert ids == sorted(ids) and len(set(ids)) == len(ids)
        members = sorted(m for n in self.nodes for m in n.members)
        assert members == list(range(self.n_sentences)), "members must partition sentence indices"
        for n in self.nodes:
            assert n.node_id == min(n.members)
        for (u, v), w in self.edges.items():
            assert u <= v and u in ids and v in ids
            assert np.isfinite(w) and w > 0.0
        if self.num_nodes > 1:
            for n in self.nodes:
                non_self = sum(1 for (u, v) in self.edges if u != v and n.node_id in (u, v))
                assert non_self >= 1, f"node {n.node_id} has no non-self edge"


@dataclass
class GraphStats:
    num_nodes: float
    num_edges: float
    mean_degree: float
    serialized_bytes: int


def row_thresholds(attn: AttentionMatrix, spec: FilterSpec) -> np.ndarray:
    """Per-row filter thresholds from in-window statistics.

    mean_bound: tau_i = mean_i + delta * sigma_i;
    max_bound:  tau_i = max_i - delta * sigma_i  (population sigma).
    """
    if spec.kind == "unfiltered":
        raise ValueError("row thresholds are undefined for the unfiltered kind")
    w = attn.weights
    mask = window_mask(attn.n, attn.half_width)
    taus = np.empty(attn.n)
    for i in range(attn.n):
        row = w[i, mask[i]]
        if spec.kind == "mean_bound":
            taus[i] = row.mean() + spec.tolerance * row.std()
        else:
            taus[i] = row.max() - spec.tolerance * row.std()
    return taus


def filter_edges(attn: AttentionMatrix, spec: FilterSpec) -> np.ndarray:
    """Directed keep-set as a boolean matrix.

    Unfiltered keeps every positive in-window weight. The bounded filters
    keep weights >= the row threshold; a row that would keep nothing
    force-keeps its argmax entry (ties toward the smallest column), so
    every sentence stays connected to at least one sentence.
    """
    w = attn.weights
    mask = window_mask(attn.n, attn.half_width)
    if spec.kind == "unfiltered":
        return mask & (w > 0.0)
    taus = row_thresholds(attn, spec)
    keep = mask & (w >= taus[:, None])
    empty_rows = ~keep.any(axis=1)
    if empty_rows.any():
        in_window = np.where(mask, w, -np.inf)
        argmax = in_window.argmax(axis=1)
        for i in np.where(empty_rows)[0]:
            keep[i, argmax[i]] = True
    return keep


def symmetrize(keep: np.ndarray, weights: np.ndarray) -> dict[tuple[int, int], float]:
    """Undirected edge set: {i, j} exists if either direction was kept;
    the weight is the mean of the two directed weights. Edges whose
    averaged weight is zero are dropped.
    """
    edges: dict[tuple[int, int], float] = {}
    kept = keep | keep.T
    for i, j in zip(*np.nonzero(np.triu(kept))):
        alpha = 0.5 * (weights[i, j] + weights[j, i])
        if alpha > 0.0:
            edges[(int(i), int(j))] = float(alpha)
    return edges


def merge_duplicate_nodes(graph: DocumentGraph) -> DocumentGraph:
    """Collapse nodes with bit-identical embeddings; the lowest sentence id
    survives as the node id. Parallel edges combine by weight summation and
    intra-group edges become self-loops.
    """
    groups: dict[bytes, list[GraphNode]] = {}
    for node in graph.nodes:
        groups.setdefault(np.ascontiguousarray(node.embedding).tobytes(), []).append(node)

    remap: dict[int, int] = {}
    new_nodes = []
    for nodes in groups.values():
        root = min(n.node_id for n in nodes)
        members = sorted(m for n in nodes for m in n.members)
        for n in nodes:
            remap[n.node_id] = root
        new_nodes.append(GraphNode(node_id=root, embedding=nodes[0].embedding, members=members))
    new_nodes.sort(key=lambda n: n.node_id)

    new_edges: dict[tuple[int, int], float] = {}
    for (u, v), w in graph.edges.items():
        ru, rv = remap[u], remap[v]
        key = (min(ru, rv), max(ru, rv))
        new_edges[key] = new_edges.get(key, 0.0) + w
    return DocumentGraph(doc_id=graph.doc_id, nodes=new_nodes, edges=new_edges,
                         n_sentences=graph.n_sentences, doc_label=graph.doc_label,
                         sentence_labels=graph.sentence_labels)


def redistribute_isolated_self_loops(graph: DocumentGraph) -> DocumentGraph:
    """Replace each isolated self-loop by edges to the sequentially adjacent
    nodes: interior nodes split the weight in half, boundary nodes send all
    of it to their single sequential neighbor. Total edge weight is conserved.

    Sequential neighbors are resolved through sentence indices, so the rule
    extends to merged nodes (the nearest sentence not owned by the node).
    A single-node graph keeps its self-loop and emits a warning.
    """
    owner: dict[int, int] = {}
    for node in graph.nodes:
        for m in node.members:
            owner[m] = node.node_id
    edges = dict(graph.edges)

    def incident(nid: int) -> list[tuple[int, int]]:
        return [e for e in edges if nid in e]

    isolated = [n for n in graph.nodes if incident(n.node_id) == [(n.node_id, n.node_id)]]
    for node in isolated:
        nid = node.node_id
        targets = []
        if nid > 0:
            targets.append(owner[nid - 1])
        nxt = next((owner[s] for s in range(nid + 1, graph.n_sentences) if owner[s] != nid), None)
        if nxt is not None:
            targets.append(nxt)
        if not targets:
            warnings.warn(f"graph {graph.doc_id!r}: single-node graph keeps its self-loop")
            continue
        w = edges.pop((nid, nid))
        share = w / len(targets)
        for t in targets:
            key = (min(nid, t), max(nid, t))
            edges[key] = edges.get(key, 0.0) + share
    return DocumentGraph(doc_id=graph.doc_id, nodes=graph.nodes, edges=edges,
                         n_sentences=graph.n_sentences, doc_label=graph.doc_label,
                         sentence_labels=graph.sentence_labels)


def _sentence_nodes(doc: EmbeddedDocument, n: int) -> list[GraphNode]:
    return [GraphNode(node_id=i, embedding=doc.sentences[i], members=[i]) for i in range(n)]


def build_document_graph(attn: AttentionMatrix, doc: EmbeddedDocument,
                         spec: FilterSpec) -> DocumentGraph:
    """Full construction for one document: filter, symmetrize, merge
    duplicates, redistribute isolated self-loops.

    `attn` may cover fewer sentences than `doc` when the model truncated
    the document; nodes then cover only the attended prefix.
    """
    n = attn.n
    keep = filter_edges(attn, spec)
    edges = symmetrize(keep, attn.weights)
    graph = DocumentGraph(
        doc_id=doc.doc_id, nodes=_sentence_nodes(doc, n), edges=edges, n_sentences=n,
        doc_label=doc.doc_label,
        sentence_labels=None if doc.sentence_labels is None else doc.sentence_labels[:n])
    return redistribute_isolated_self_loops(merge_duplicate_nodes(graph))


def build_heuristic_graph(doc: EmbeddedDocument, scheme: str, window: int = 2) -> DocumentGraph:
    """Baseline graphs: ``order`` chains consecutive sentences; ``fixed_window``
    connects all pairs within `window`. All weights are 1; duplicate merging
    is applied afterward.
    """
    n = doc.n
    edges: dict[tuple[int, int], float] = {}
    if scheme == "order":
        for i in range(n - 1):
            edges[(i, i + 1)] = 1.0
    elif scheme == "fixed_window":
        if window < 1:
            raise ValueError("window must be >= 1")
        for i in range(n):
            for j in range(i + 1, min(n, i + window + 1)):
                edges[(i, j)] = 1.0
    else:
        raise ValueError(f"unknown heuristic scheme {scheme!r}")
    graph = DocumentGraph(doc_id=doc.doc_id, nodes=_sentence_nodes(doc, n), edges=edges,
                          n_sentences=n, doc_label=doc.doc_label,
                          sentence_labels=doc.sentence_labels)
    return merge_duplicate_nodes(graph)


def to_json(graph: DocumentGraph) -> str:
    """Canonical JSON export: fixed key order, weights at 9 significant digits."""
    body: dict = {"doc_id": graph.doc_id}
    if graph.doc_label is not None:
        body["label"] = int(graph.doc_label)
    if graph.sentence_labels is not None:
        body["sentence_labels"] = [int(v) for v in graph.sentence_labels]
    body["nodes"] = [{"id": n.node_id, "members": list(n.members),
                      "feat": [float(x) for x in n.embedding]} for n in graph.nodes]
    body["edges"] = [{"u": u, "v": v, "w": float(f"{w:.9g}")}
                     for (u, v), w in sorted(graph.edges.items())]
    return json.dumps(body, separators=(",", ":"))


def from_json(text: str) -> DocumentGraph:
    body = json.loads(text)
    nodes = [GraphNode(node_id=int(n["id"]), embedding=np.asarray(n["feat"], dtype=np.float32),
                       members=list(n["members"])) for n in body["nodes"]]
    edges = {(int(e["u"]), int(e["v"])): float(e["w"]) for e in body["edges"]}
    n_sentences = sum(len(n.members) for n in nodes)
    labels = body.get("sentence_labels")
    return DocumentGraph(doc_id=body["doc_id"], nodes=nodes, edges=edges,
                         n_sentences=n_sentences, doc_label=body.get("label"),
                         sentence_labels=None if labels is None else np.asarray(labels, dtype=np.int64))


def to_graphml(graph: DocumentGraph) -> str:
    """GraphML export for external visualization: `members` node attribute
    (comma-separated sentence ids), `weight` edge attribute, no embeddings.
    """
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
        '  <key id="members" for="node" attr.name="members" attr.type="string"/>',
        '  <key id="weight" for="edge" attr.name="weight" attr.type="double"/>',
        f'  <graph id="{escape(graph.doc_id)}" edgedefault="undirected">',
    ]
    for n in graph.nodes:
        members = ",".join(str(m) for m in n.members)
        lines.append(f'    <node id="n{n.node_id}"><data key="members">{members}</data></node>')
    for (u, v), w in sorted(graph.edges.items()):
        lines.append(f'    <edge source="n{u}" target="n{v}"><data key="weight">{w:.9g}</data></edge>')
    lines.extend(["  </graph>", "</graphml>", ""])
    return "\n".join(lines)


def graph_stats(graphs: list[DocumentGraph]) -> GraphStats:
    """Dataset-level structure summary: mean |V|, |E|, mean degree, and the
    total byte size of the canonical JSON exports.
    """
    if not graphs:
        raise ValueError("no graphs")
    nodes = np.array([g.num_nodes for g in graphs], dtype=np.float64)
    edges = np.array([g.num_edges for g in graphs], dtype=np.float64)
    degrees = np.array([g.mean_degree() for g in graphs], dtype=np.float64)
    total_bytes = sum(len(to_json(g).encode("utf-8")) for g in graphs)
    return GraphStats(num_nodes=float(nodes.mean()), num_edges=float(edges.mean()),
                      mean_degree=float(degrees.mean()), serialized_bytes=total_bytes)
