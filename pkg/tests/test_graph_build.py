"""Graph construction: filtering, merging, redistribution, stats, exports."""
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attngraph.data_io import EmbeddedDocument, fallback_embed
from attngraph.graph_build import (DocumentGraph, FilterSpec, GraphNode,
                                   build_document_graph, build_heuristic_graph,
                                   filter_edges, from_json, graph_stats,
                                   merge_duplicate_nodes,
                                   redistribute_isolated_self_loops, row_thresholds,
                                   symmetrize, to_graphml, to_json)
from attngraph.swa import AttentionMatrix, window_mask

import oracles


def _attn(weights, half_width, doc_id="t"):
    return AttentionMatrix(doc_id=doc_id, weights=np.asarray(weights, dtype=np.float64),
                           half_width=half_width, activation="softmax")


def _doc(rng, n, d=6, doc_id="t", label=0):
    return EmbeddedDocument(doc_id=doc_id, sentences=rng.standard_normal((n, d)),
                            doc_label=label)


class TestRowThresholds:
    def test_mean_bound_matches_hand_computation(self):
        w = np.tile([0.1, 0.5, 0.4], (3, 1))
        taus = row_thresholds(_attn(w, 2), FilterSpec("mean_bound", 0.5))
        mean, _, sigma = oracles.row_stats([0.1, 0.5, 0.4])
        assert taus[0] == pytest.approx(mean + 0.5 * sigma, abs=1e-12)
        assert taus[0] == pytest.approx(0.4183, abs=1e-4)

    def test_max_bound_matches_hand_computation(self):
        w = np.tile([0.1, 0.5, 0.4], (3, 1))
        taus = row_thresholds(_attn(w, 2), FilterSpec("max_bound", 0.5))
        _, mx, sigma = oracles.row_stats([0.1, 0.5, 0.4])
        assert taus[0] == pytest.approx(mx - 0.5 * sigma, abs=1e-12)
        assert taus[0] == pytest.approx(0.4150, abs=1e-4)

    def test_constant_row_keeps_everything(self):
        w = np.full((4, 4), 0.25)
        for kind in ("mean_bound", "max_bound"):
            attn = _attn(w, 3)
            keep = filter_edges(attn, FilterSpec(kind, 0.5))
            assert keep.all()

    def test_stats_use_only_in_window_entries(self):
        w = np.array([[0.5, 0.1, 99.0],
                      [0.1, 0.5, 0.1],
                      [99.0, 0.1, 0.5]])
        taus = row_thresholds(_attn(w, 1), FilterSpec("mean_bound", 0.5))
        mean, _, sigma = oracles.row_stats([0.5, 0.1])
        assert taus[0] == pytest.approx(mean + 0.5 * sigma, abs=1e-12)

    def test_unfiltered_rejected(self):
        with pytest.raises(ValueError):
            row_thresholds(_attn(np.eye(2), 1), FilterSpec("unfiltered"))

    @given(st.integers(1, 25), st.sampled_from(["softmax", "sigmoid", "relu"]),
           st.sampled_from([0.5, 1.0]), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40)
    def test_thresholds_match_bruteforce_oracle(self, n, style, delta, seed):
        rng = np.random.default_rng(seed)
        w, h = oracles.random_attention_matrix(rng, n, style)
        attn = _attn(w, h)
        mask = window_mask(n, h)
        for kind in ("mean_bound", "max_bound"):
            taus = row_thresholds(attn, FilterSpec(kind, delta))
            for i in range(n):
                mean, mx, sigma = oracles.row_stats(w[i, mask[i]])
                want = mean + delta * sigma if kind == "mean_bound" else mx - delta * sigma
                assert taus[i] == pytest.approx(want, abs=1e-9)


class TestFilterEdges:
    def test_mean_bound_keeps_only_strong_entry(self):
        w = np.tile([0.1, 0.5, 0.4], (3, 1))
        keep = filter_edges(_attn(w, 2), FilterSpec("mean_bound", 0.5))
        assert keep[0].tolist() == [False, True, False]

    def test_row_below_threshold_force_keeps_argmax(self):
        row = np.array([0.5] * 9 + [0.05])
        w = np.tile(row, (10, 1))
        attn = _attn(w, 9)
        taus = row_thresholds(attn, FilterSpec("mean_bound", 0.5))
        assert taus[0] > row.max()  # nothing passes the threshold
        keep = filter_edges(attn, FilterSpec("mean_bound", 0.5))
        assert keep[0].tolist() == [True] + [False] * 9  # argmax tie -> smallest column

    def test_unfiltered_keeps_all_positive_in_window(self, rng):
        w, h = oracles.random_attention_matrix(rng, 12, "relu")
        keep = filter_edges(_attn(w, h), FilterSpec("unfiltered"))
        mask = window_mask(12, h)
        assert np.array_equal(keep, mask & (w > 0))

    @given(st.integers(1, 30), st.sampled_from(["softmax", "sigmoid", "relu"]),
           st.sampled_from([0.5, 1.0]), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40)
    def test_every_row_keeps_something_and_subset_of_unfiltered(self, n, style, delta, seed):
        rng = np.random.default_rng(seed)
        w, h = oracles.random_attention_matrix(rng, n, style)
        attn = _attn(w, h)
        unfiltered = filter_edges(attn, FilterSpec("unfiltered"))
        for kind in ("mean_bound", "max_bound"):
            keep = filter_edges(attn, FilterSpec(kind, delta))
            assert keep.any(axis=1).all()
            assert np.all(~keep | unfiltered)  # keep implies unfiltered membership


class TestSymmetrize:
    def test_one_direction_kept_averages_both(self):
        w = np.array([[0.0, 0.6], [0.2, 0.0]])
        keep = np.array([[False, True], [False, False]])
        edges = symmetrize(keep, w)
        assert edges == {(0, 1): pytest.approx(0.4)}

    def test_neither_direction_no_edge(self):
        w = np.array([[0.0, 0.6], [0.2, 0.0]])
        edges = symmetrize(np.zeros((2, 2), dtype=bool), w)
        assert edges == {}

    def test_symmetric_matrix_preserves_weight(self):
        w = np.array([[0.5, 0.3], [0.3, 0.1]])
        keep = np.ones((2, 2), dtype=bool)
        edges = symmetrize(keep, w)
        assert edges[(0, 1)] == pytest.approx(0.3)
        assert edges[(0, 0)] == pytest.approx(0.5)  # self-loop keeps its own weight


class TestMergeDuplicates:
    def _graph_with_duplicate(self):
        emb = np.ones(4, dtype=np.float32)
        other = np.arange(4, dtype=np.float32)
        nodes = [GraphNode(0, emb, [0]), GraphNode(1, other, [1]), GraphNode(2, emb.copy(), [2])]
        edges = {(0, 1): 0.2, (1, 2): 0.3}
        return DocumentGraph(doc_id="m", nodes=nodes, edges=edges, n_sentences=3, doc_label=0)

    def test_parallel_edges_sum(self):
        merged = merge_duplicate_nodes(self._graph_with_duplicate())
        assert merged.num_nodes == 2
        assert merged.edges == {(0, 1): pytest.approx(0.5)}
        byid = {n.node_id: n for n in merged.nodes}
        assert byid[0].members == [0, 2]

    def test_intra_group_edge_becomes_self_loop(self):
        emb = np.ones(3, dtype=np.float32)
        nodes = [GraphNode(0, emb, [0]), GraphNode(1, emb.copy(), [1])]
        merged = merge_duplicate_nodes(DocumentGraph(doc_id="s", nodes=nodes,
                                                     edges={(0, 1): 0.7}, n_sentences=2,
                                                     doc_label=0))
        assert merged.num_nodes == 1
        assert merged.edges == {(0, 0): pytest.approx(0.7)}

    def test_no_duplicates_identity(self, rng):
        doc = _doc(rng, 5)
        g = build_heuristic_graph(doc, "order")
        assert g.num_nodes == 5
        assert set(g.edges) == {(0, 1), (1, 2), (2, 3), (3, 4)}

    def test_vertex_count_matches_hash_group_oracle(self, rng):
        for trial in range(20):
            n = int(rng.integers(2, 12))
            base = [f"sentence {i} trial {trial}" for i in range(n)]
            # inject duplicates
            for _ in range(int(rng.integers(0, 4))):
                i, j = rng.integers(0, n, 2)
                base[i] = base[j]
            doc = fallback_embed(base, 16, seed=5, doc_id=f"t{trial}", doc_label=0)
            g = build_heuristic_graph(doc, "fixed_window", 2)
            expected = oracles.duplicate_group_count(list(doc.sentences))
            assert g.num_nodes == expected
            members = sorted(m for node in g.nodes for m in node.members)
            assert members == list(range(n))


class TestRedistribution:
    def _isolated(self, nid, n, weight, extra_edges=None):
        rng = np.random.default_rng(0)
        nodes = [GraphNode(i, rng.standard_normal(4).astype(np.float32), [i]) for i in range(n)]
        edges = {(nid, nid): weight}
        if extra_edges:
            edges.update(extra_edges)
        return DocumentGraph(doc_id="r", nodes=nodes, edges=edges, n_sentences=n, doc_label=0)

    def test_interior_node_splits_in_half(self):
        g = redistribute_isolated_self_loops(self._isolated(2, 5, 0.8))
        assert (2, 2) not in g.edges
        assert g.edges[(1, 2)] == pytest.approx(0.4)
        assert g.edges[(2, 3)] == pytest.approx(0.4)

    def test_first_node_sends_all_forward(self):
        g = redistribute_isolated_self_loops(self._isolated(0, 4, 0.6))
        assert g.edges[(0, 1)] == pytest.approx(0.6)

    def test_last_node_sends_all_backward(self):
        g = redistribute_isolated_self_loops(self._isolated(3, 4, 0.6))
        assert g.edges[(2, 3)] == pytest.approx(0.6)

    def test_adds_to_existing_edges(self):
        g = redistribute_isolated_self_loops(
            self._isolated(1, 3, 0.5, extra_edges={(0, 2): 1.0, (1, 2): 0.1}))
        # node 1 has (1,2) already, so it is not isolated; nothing changes
        assert g.edges[(1, 1)] == 0.5

    def test_coexisting_self_loop_retained(self):
        g = self._isolated(1, 3, 0.5, extra_edges={(0, 1): 0.2})
        out = redistribute_isolated_self_loops(g)
        assert out.edges[(1, 1)] == 0.5  # self-loop coexists with a real edge

    def test_single_node_graph_warns_and_keeps_loop(self):
        g = self._isolated(0, 1, 0.9)
        with pytest.warns(UserWarning, match="single-node"):
            out = redistribute_isolated_self_loops(g)
        assert out.edges == {(0, 0): 0.9}

    def test_conservation_over_random_graphs(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 15))
            nodes = [GraphNode(i, rng.standard_normal(4).astype(np.float32), [i])
                     for i in range(n)]
            edges = {}
            for i in range(n):
                if rng.random() < 0.5:
                    edges[(i, i)] = float(rng.uniform(0.1, 1.0))
            for _ in range(int(rng.integers(0, n))):
                u, v = sorted(rng.integers(0, n, 2))
                if u != v:
                    edges[(int(u), int(v))] = float(rng.uniform(0.1, 1.0))
            g = DocumentGraph(doc_id="c", nodes=nodes, edges=dict(edges), n_sentences=n,
                              doc_label=0)
            before = oracles.total_edge_weight(g.edges)
            out = redistribute_isolated_self_loops(g)
            after = oracles.total_edge_weight(out.edges)
            assert after == pytest.approx(before, abs=1e-9)


class TestHeuristicGraphs:
    def test_order_chain(self, rng):
        g = build_heuristic_graph(_doc(rng, 4), "order")
        assert set(g.edges) == {(0, 1), (1, 2), (2, 3)}
        assert all(w == 1.0 for w in g.edges.values())

    def test_fixed_window_two(self, rng):
        g = build_heuristic_graph(_doc(rng, 4), "fixed_window", 2)
        assert set(g.edges) == {(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)}

    def test_single_sentence(self, rng):
        g = build_heuristic_graph(_doc(rng, 1), "order")
        assert g.num_nodes == 1
        assert g.edges == {}

    def test_unknown_scheme(self, rng):
        with pytest.raises(ValueError):
            build_heuristic_graph(_doc(rng, 3), "ring")


class TestGraphStats:
    def test_chain_of_four(self, rng):
        g = build_heuristic_graph(_doc(rng, 4), "order")
        stats = graph_stats([g])
        assert stats.num_nodes == 4
        assert stats.num_edges == 3
        assert stats.mean_degree == pytest.approx(1.5)

    def test_self_loop_counts_two(self):
        emb = np.ones(3, dtype=np.float32)
        g = DocumentGraph(doc_id="l", nodes=[GraphNode(0, emb, [0])],
                          edges={(0, 0): 0.4}, n_sentences=1, doc_label=0)
        assert g.degree(0) == 2
        assert graph_stats([g]).mean_degree == pytest.approx(2.0)

    def test_recount_oracle_agrees(self, rng):
        graphs = []
        for seed in range(10):
            w, h = oracles.random_attention_matrix(np.random.default_rng(seed), 9, "softmax")
            attn = _attn(w, h, doc_id=f"g{seed}")
            graphs.append(build_document_graph(attn, _doc(rng, 9, doc_id=f"g{seed}"),
                                               FilterSpec("mean_bound", 0.5)))
        stats = graph_stats(graphs)
        counts = [oracles.recount_graph(g.edges) for g in graphs]
        assert stats.num_edges == pytest.approx(np.mean([c[0] for c in counts]))
        mean_deg = np.mean([sum(c[1].values()) / g.num_nodes for c, g in zip(counts, graphs)])
        assert stats.mean_degree == pytest.approx(mean_deg)


class TestFullConstruction:
    @pytest.mark.filterwarnings("ignore:.*single-node graph.*:UserWarning")
    @given(st.integers(1, 30), st.sampled_from(["softmax", "sigmoid", "relu"]),
           st.sampled_from([("mean_bound", 0.5), ("mean_bound", 1.0),
                            ("max_bound", 0.5), ("max_bound", 1.0), ("unfiltered", 0.5)]),
           st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_construction_invariants(self, n, style, filt, seed):
        rng = np.random.default_rng(seed)
        w, h = oracles.random_attention_matrix(rng, n, style)
        attn = _attn(w, h)
        doc = EmbeddedDocument(doc_id="t", sentences=rng.standard_normal((n, 4)), doc_label=0)
        g = build_document_graph(attn, doc, FilterSpec(*filt))
        g.validate()

    def test_pure_function_of_inputs(self, rng):
        w, h = oracles.random_attention_matrix(rng, 10, "softmax")
        attn = _attn(w, h)
        doc = _doc(np.random.default_rng(4), 10)
        a = to_json(build_document_graph(attn, doc, FilterSpec("mean_bound", 0.5)))
        b = to_json(build_document_graph(attn, doc, FilterSpec("mean_bound", 0.5)))
        assert a == b

    def test_filtered_edges_subset_of_unfiltered(self, rng):
        for style in ("softmax", "sigmoid", "relu"):
            w, h = oracles.random_attention_matrix(rng, 14, style)
            attn = _attn(w, h)
            doc = _doc(np.random.default_rng(7), 14)
            unf = set(build_document_graph(attn, doc, FilterSpec("unfiltered")).edges)
            for kind in ("mean_bound", "max_bound"):
                sub = set(build_document_graph(attn, doc, FilterSpec(kind, 0.5)).edges)
                # redistribution may move mass onto sequential-neighbor edges
                filtered_raw = symmetrize(filter_edges(attn, FilterSpec(kind, 0.5)), w)
                assert set(filtered_raw) <= set(symmetrize(
                    filter_edges(attn, FilterSpec("unfiltered")), w))
                assert sub  # construction never yields an empty edge set for n > 1


class TestSerialization:
    def test_json_round_trip(self, rng):
        w, h = oracles.random_attention_matrix(rng, 8, "softmax")
        g = build_document_graph(_attn(w, h), _doc(np.random.default_rng(2), 8),
                                 FilterSpec("mean_bound"))
        text = to_json(g)
        back = from_json(text)
        assert to_json(back) == text
        assert back.doc_id == g.doc_id
        assert set(back.edges) == set(g.edges)
        for key in g.edges:
            assert back.edges[key] == pytest.approx(g.edges[key], rel=1e-8)

    def test_weights_serialized_at_nine_significant_digits(self):
        emb = np.zeros(2, dtype=np.float32)
        g = DocumentGraph(doc_id="w", nodes=[GraphNode(0, emb, [0]), GraphNode(1, emb + 1, [1])],
                          edges={(0, 1): 0.123456789123456789}, n_sentences=2, doc_label=0)
        assert '"w":0.123456789' in to_json(g)

    def test_label_carried(self, rng):
        doc = EmbeddedDocument(doc_id="s", sentences=rng.standard_normal((3, 4)),
                               sentence_labels=np.array([1, 0, 1]))
        g = build_heuristic_graph(doc, "order")
        back = from_json(to_json(g))
        assert back.sentence_labels.tolist() == [1, 0, 1]

    def test_graphml_parses_and_carries_attributes(self, rng):
        g = build_heuristic_graph(_doc(rng, 3), "order")
        root = ET.fromstring(to_graphml(g))
        ns = "{http://graphml.graphdrawing.org/xmlns}"
        nodes = root.findall(f"{ns}graph/{ns}node")
        edges = root.findall(f"{ns}graph/{ns}edge")
        assert len(nodes) == 3
        assert len(edges) == 2
        assert edges[0].find(f"{ns}data").text == "1"
