"""Metrics, significance tests, and ROUGE.

Reference values for ANOVA / Tukey / Welch were computed once with an
independent high-precision statistics library and frozen here.
"""
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attngraph.metrics_stats import (aggregate_metrics, classification_metrics,
                                     one_way_anova, rouge, tukey_hsd, welch_t_test)

GROUPS_A = [
    [18.5, 24.0, 17.2, 19.9, 18.0],
    [26.3, 25.3, 24.8, 26.2, 27.0],
    [39.1, 35.9, 32.9, 40.8, 37.1],
]
GROUPS_B = [
    [6.9, 5.4, 5.8, 4.6, 4.0],
    [8.3, 6.8, 7.8, 9.2],
    [8.0, 10.5, 8.1, 6.9, 9.3, 6.8],
]


class TestClassificationMetrics:
    def test_perfect_prediction(self):
        m = classification_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert m.accuracy == 1.0
        assert m.macro_f1 == 1.0

    def test_hand_computed_confusion(self):
        m = classification_metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert m.accuracy == 0.75
        assert m.per_class_f1[0] == pytest.approx(2 / 3)
        assert m.per_class_f1[1] == pytest.approx(0.8)
        assert m.macro_f1 == pytest.approx((2 / 3 + 0.8) / 2)

    def test_absent_class_gets_zero_and_flag(self):
        m = classification_metrics([0, 0, 1], [0, 0, 1], 3)
        assert m.per_class_f1[2] == 0.0
        assert m.absent_classes == [2]

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            classification_metrics([0, 1], [0], 2)

    def test_out_of_range_label_rejected(self):
        with pytest.raises(ValueError):
            classification_metrics([0, 2], [0, 1], 2)

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40),
           st.randoms(use_true_random=False))
    def test_permutation_invariance(self, pairs, rand):
        y_true = [a for a, _ in pairs]
        y_pred = [b for _, b in pairs]
        m1 = classification_metrics(y_true, y_pred, 4)
        idx = list(range(len(pairs)))
        rand.shuffle(idx)
        m2 = classification_metrics([y_true[i] for i in idx], [y_pred[i] for i in idx], 4)
        assert m1.accuracy == pytest.approx(m2.accuracy)
        assert m1.per_class_f1 == pytest.approx(m2.per_class_f1)

    def test_canonical_json_serialization(self):
        m = classification_metrics([0, 1], [0, 1], 2)
        body = json.loads(m.to_json())
        assert body["accuracy"] == 1.0
        assert body["per_class_f1"] == [1.0, 1.0]
        rep = tukey_hsd(GROUPS_A)
        body = json.loads(rep.to_json())
        assert set(body) == {"f_statistic", "p_value", "pairwise",
                             "significant_05", "significant_01"}
        assert rep.to_json() == tukey_hsd(GROUPS_A).to_json()  # canonical: stable bytes

    def test_aggregate_std_only_for_multiple_runs(self):
        one = aggregate_metrics([classification_metrics([0, 1], [0, 1], 2)])
        assert one.accuracy_std is None
        runs = [classification_metrics([0, 1], [0, 1], 2),
                classification_metrics([0, 1], [1, 1], 2)]
        agg = aggregate_metrics(runs)
        assert agg.accuracy == pytest.approx(0.75)
        assert agg.accuracy_std == pytest.approx(np.std([1.0, 0.5], ddof=1))


class TestAnova:
    def test_identical_means_give_f_near_zero(self):
        f, p = one_way_anova([[1.0, 2.0, 3.0], [2.0, 1.0, 3.0], [3.0, 2.0, 1.0]])
        assert f == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_reference_dataset_a(self):
        f, p = one_way_anova(GROUPS_A)
        assert f == pytest.approx(69.6175066931, abs=1e-6)
        assert p == pytest.approx(2.49559083299e-07, abs=1e-12)

    def test_reference_dataset_b(self):
        f, p = one_way_anova(GROUPS_B)
        assert f == pytest.approx(8.86042352596, abs=1e-6)
        assert p == pytest.approx(0.00433231852403, abs=1e-6)

    def test_two_groups_f_equals_pooled_t_squared(self):
        a = [12.1, 14.2, 13.3, 11.9, 15.0]
        b = [10.2, 11.5, 12.8, 9.9, 10.1, 11.3]
        f, _ = one_way_anova([a, b])
        # pooled two-sample t computed from first principles
        na, nb = len(a), len(b)
        va = sum((x - np.mean(a)) ** 2 for x in a) / (na - 1)
        vb = sum((x - np.mean(b)) ** 2 for x in b) / (nb - 1)
        sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        t = (np.mean(a) - np.mean(b)) / math.sqrt(sp2 * (1 / na + 1 / nb))
        assert f == pytest.approx(t * t, abs=1e-9)
        assert f == pytest.approx(10.0227272727, abs=1e-6)

    def test_degenerate_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            one_way_anova([[1.0, 1.0], [1.0, 1.0]])

    def test_shift_invariance(self):
        f1, p1 = one_way_anova(GROUPS_A)
        f2, p2 = one_way_anova([[x + 100.0 for x in g] for g in GROUPS_A])
        assert f1 == pytest.approx(f2, rel=1e-9)
        assert p1 == pytest.approx(p2, rel=1e-6)

    def test_scale_invariance(self):
        f1, _ = one_way_anova(GROUPS_B)
        f2, _ = one_way_anova([[x * 7.5 for x in g] for g in GROUPS_B])
        assert f1 == pytest.approx(f2, rel=1e-9)

    def test_separation_monotonicity(self):
        # Growing the gap between group means (fixed spread) never raises p.
        base = [0.1, -0.2, 0.3, -0.1, 0.05]
        last_p = 1.1
        for gap in (0.0, 0.5, 1.0, 2.0, 4.0):
            _, p = one_way_anova([base, [x + gap for x in base]])
            assert p <= last_p + 1e-12
            last_p = p


class TestTukey:
    def test_reference_dataset_a(self):
        rep = tukey_hsd(GROUPS_A)
        got = {tuple(row["pair"]): row["p"] for row in rep.pairwise}
        assert got[(0, 1)] == pytest.approx(0.00310331532961, abs=1e-4)
        assert got[(0, 2)] == pytest.approx(1.87529743068e-07, abs=1e-4)
        assert got[(1, 2)] == pytest.approx(2.21007237697e-05, abs=1e-4)
        assert rep.significant_01 == [[0, 1], [0, 2], [1, 2]]

    def test_reference_dataset_b_unequal_sizes(self):
        rep = tukey_hsd(GROUPS_B)
        got = {tuple(row["pair"]): row["p"] for row in rep.pairwise}
        assert got[(0, 1)] == pytest.approx(0.0176228974187, abs=1e-4)
        assert got[(0, 2)] == pytest.approx(0.00526799023057, abs=1e-4)
        assert got[(1, 2)] == pytest.approx(0.950467367319, abs=1e-4)

    def test_covers_all_pairs(self):
        rep = tukey_hsd(GROUPS_A)
        assert sorted(tuple(r["pair"]) for r in rep.pairwise) == [(0, 1), (0, 2), (1, 2)]

    def test_shift_changes_only_involved_pairs(self):
        before = {tuple(r["pair"]): r["p"] for r in tukey_hsd(GROUPS_B).pairwise}
        shifted = [GROUPS_B[0], GROUPS_B[1], [x + 0.11 for x in GROUPS_B[2]]]
        after = {tuple(r["pair"]): r["p"] for r in tukey_hsd(shifted).pairwise}
        assert before[(0, 1)] == pytest.approx(after[(0, 1)], rel=1e-9)
        assert before[(0, 2)] != pytest.approx(after[(0, 2)])
        assert before[(1, 2)] != pytest.approx(after[(1, 2)])

    def test_all_p_values_in_unit_interval(self):
        for groups in (GROUPS_A, GROUPS_B):
            rep = tukey_hsd(groups)
            assert 0.0 <= rep.p_value <= 1.0
            assert all(0.0 <= r["p"] <= 1.0 for r in rep.pairwise)


class TestWelch:
    def test_identical_samples(self):
        t, p = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t == 0.0
        assert p == 1.0

    def test_reference_values(self):
        t, p = welch_t_test(GROUPS_A[0], GROUPS_A[1])
        assert t == pytest.approx(-5.0615426908, abs=1e-6)
        assert p == pytest.approx(0.00429710478259, abs=1e-6)
        t, p = welch_t_test(GROUPS_B[1], GROUPS_B[2])
        assert t == pytest.approx(-0.314693585798, abs=1e-6)
        assert p == pytest.approx(0.761129238885, abs=1e-6)

    def test_constant_groups_equal_means(self):
        t, p = welch_t_test([2.0, 2.0, 2.0], [2.0, 2.0])
        assert (t, p) == (0.0, 1.0)


class TestRouge:
    def test_identical_texts_score_one(self):
        for variant in ("r1", "r2", "rl"):
            assert rouge("a small brown fox", "a small brown fox", variant) == (1.0, 1.0, 1.0)

    def test_hand_computed_unigram_case(self):
        p, r, f1 = rouge("the cat sat", "the cat", "r1")
        assert p == pytest.approx(2 / 3)
        assert r == pytest.approx(1.0)
        assert f1 == pytest.approx(0.8)

    def test_empty_candidate(self):
        for variant in ("r1", "r2", "rl"):
            assert rouge("", "some reference", variant) == (0.0, 0.0, 0.0)

    def test_bigram_counts_clipped(self):
        # candidate repeats a bigram that occurs once in the reference
        p, r, f1 = rouge("a b a b", "a b c", "r2")
        assert p == pytest.approx(1 / 3)  # one clipped match of three candidate bigrams
        assert r == pytest.approx(1 / 2)

    def test_lcs_respects_order(self):
        _, _, f_ordered = rouge("one two three", "one two three four", "rl")
        _, _, f_scrambled = rouge("three two one", "one two three four", "rl")
        assert f_ordered > f_scrambled

    def test_case_insensitive(self):
        assert rouge("The Cat", "the cat", "r1")[2] == 1.0

    @given(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=8),
           st.lists(st.sampled_from("abcdef"), min_size=1, max_size=8))
    @settings(max_examples=60)
    def test_swap_exchanges_precision_and_recall(self, cand, ref):
        cand_s, ref_s = " ".join(cand), " ".join(ref)
        for variant in ("r1", "r2", "rl"):
            p1, r1, f1 = rouge(cand_s, ref_s, variant)
            p2, r2, f2 = rouge(ref_s, cand_s, variant)
            assert p1 == pytest.approx(r2)
            assert r1 == pytest.approx(p2)
            assert f1 == pytest.approx(f2)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError):
            rouge("a", "a", "r3")
