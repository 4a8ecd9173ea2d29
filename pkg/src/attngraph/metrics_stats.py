"""Classification metrics, significance tests, and ROUGE scores.

Significance testing covers one-way ANOVA, Tukey HSD post-hoc pairwise
comparisons (Tukey-Kramer for unequal group sizes), and Welch's t-test.
ROUGE-1/2/L use lowercased whitespace tokenization with no stemming so
that oracle label construction stays deterministic.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, asdict

import numpy as np

from .distributions import f_dist_sf, student_t_sf_two_sided, studentized_range_sf


@dataclass
class Metrics:
    """Accuracy and F1 summary for one evaluation (optionally aggregated over runs)."""

    accuracy: float
    macro_f1: float
    per_class_f1: list[float]
    support: list[int]
    absent_classes: list[int] = field(default_factory=list)
    accuracy_std: float | None = None
    macro_f1_std: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class SignificanceReport:
    """One-way ANOVA result plus the Tukey HSD pairwise table."""

    f_statistic: float
    p_value: float
    pairwise: list[dict]  # {"pair": [i, j], "mean_diff": float, "p": float}
    significant_05: list[list[int]]
    significant_01: list[list[int]]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def classification_metrics(y_true, y_pred, num_classes: int) -> Metrics:
    """Accuracy, per-class F1 (0/0 -> 0), and unweighted macro F1.

    Classes absent from both y_true and y_pred get F1 = 0 and are flagged
    in `absent_classes`.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or len(y_true) == 0:
        raise ValueError("y_true and y_pred must be equal-length non-empty 1-d arrays")
    if y_true.min() < 0 or y_true.max() >= num_classes or y_pred.min() < 0 or y_pred.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    acc = float((y_true == y_pred).mean())
    f1s = []
    support = []
    absent = []
    for k in range(num_classes):
        tp = int(((y_true == k) & (y_pred == k)).sum())
        fp = int(((y_true != k) & (y_pred == k)).sum())
        fn = int(((y_true == k) & (y_pred != k)).sum())
        support.append(tp + fn)
        if tp + fn == 0 and tp + fp == 0:
            absent.append(k)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom > 0 else 0.0)
    return Metrics(accuracy=acc, macro_f1=float(np.mean(f1s)), per_class_f1=f1s,
                   support=support, absent_classes=absent)


def aggregate_metrics(runs: list[Metrics]) -> Metrics:
    """Mean over independent runs, with std fields populated when len(runs) > 1."""
    if not runs:
        raise ValueError("no runs to aggregate")
    acc = np.array([m.accuracy for m in runs])
    f1 = np.array([m.macro_f1 for m in runs])
    per_class = np.array([m.per_class_f1 for m in runs]).mean(axis=0)
    out = Metrics(accuracy=float(acc.mean()), macro_f1=float(f1.mean()),
                  per_class_f1=[float(v) for v in per_class],
                  support=runs[0].support)
    if len(runs) > 1:
        out.accuracy_std = float(acc.std(ddof=1))
        out.macro_f1_std = float(f1.std(ddof=1))
    return out


def _group_arrays(groups) -> list[np.ndarray]:
    gs = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(gs) < 2:
        raise ValueError("need at least 2 groups")
    for g in gs:
        if g.ndim != 1 or len(g) < 2:
            raise ValueError("each group needs at least 2 samples")
    return gs


def one_way_anova(groups) -> tuple[float, float]:
    """One-way ANOVA F statistic and p value over >= 2 groups."""
    gs = _group_arrays(groups)
    all_vals = np.concatenate(gs)
    grand = all_vals.mean()
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in gs)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in gs)
    df_between = len(gs) - 1
    df_within = len(all_vals) - len(gs)
    if ss_within == 0.0 and ss_between == 0.0:
        raise ValueError("ANOVA F undefined: zero variance within and between groups")
    if ss_within == 0.0:
        return float("inf"), 0.0
    f = (ss_between / df_between) / (ss_within / df_within)
    return float(f), f_dist_sf(f, df_between, df_within)


def tukey_hsd(groups) -> SignificanceReport:
    """All-pairs Tukey HSD table using the studentized range distribution.

    Unequal group sizes use the Tukey-Kramer standard error. `mean_diff`
    is mean(group j) - mean(group i) for pair (i, j), i < j.
    """
    gs = _group_arrays(groups)
    k = len(gs)
    n_total = sum(len(g) for g in gs)
    df = n_total - k
    ms_within = sum(((g - g.mean()) ** 2).sum() for g in gs) / df
    if ms_within == 0.0:
        raise ValueError("Tukey HSD undefined: zero within-group variance")
    f_stat, p_val = one_way_anova(gs)
    pairwise = []
    sig05 = []
    sig01 = []
    for i in range(k):
        for j in range(i + 1, k):
            diff = gs[j].mean() - gs[i].mean()
            se = np.sqrt(ms_within / 2.0 * (1.0 / len(gs[i]) + 1.0 / len(gs[j])))
            q = abs(diff) / se
            p = studentized_range_sf(q, k, df)
            pairwise.append({"pair": [i, j], "mean_diff": float(diff), "p": float(p)})
            if p < 0.05:
                sig05.append([i, j])
            if p < 0.01:
                sig01.append([i, j])
    return SignificanceReport(f_statistic=f_stat, p_value=p_val, pairwise=pairwise,
                              significant_05=sig05, significant_01=sig01)


def welch_t_test(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t-test; returns (t, two-sided p)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    if va + vb == 0.0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        raise ValueError("Welch t undefined: zero variance with unequal means")
    t = (a.mean() - b.mean()) / np.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return float(t), student_t_sf_two_sided(float(t), df)


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _prf(match: float, cand_total: float, ref_total: float) -> tuple[float, float, float]:
    p = match / cand_total if cand_total > 0 else 0.0
    r = match / ref_total if ref_total > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def rouge(candidate: str, reference: str, variant: str) -> tuple[float, float, float]:
    """ROUGE precision/recall/F1. `variant` is one of "r1", "r2", "rl"."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if variant in ("r1", "r2"):
        n = 1 if variant == "r1" else 2
        cg = _ngrams(cand, n)
        rg = _ngrams(ref, n)
        match = sum(min(cnt, rg[g]) for g, cnt in cg.items())
        return _prf(match, max(len(cand) - n + 1, 0), max(len(ref) - n + 1, 0))
    if variant == "rl":
        return _prf(_lcs_length(cand, ref), len(cand), len(ref))
    raise ValueError(f"unknown ROUGE variant: {variant!r}")


def rouge_f1(candidate: str, reference: str, variant: str = "r1") -> float:
    return rouge(candidate, reference, variant)[2]
