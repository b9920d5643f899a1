"""ROC construction, AUC, the DeLong test, and constrained operating points.

Conventions: label 1 is the anomalous class and larger scores mean more
anomalous; a case is called positive when its score is >= the threshold.
Ties contribute one half, so ``auc`` equals the Mann-Whitney statistic
P(score_pos > score_neg) + P(tie)/2.  The rank computation is arranged so
that the result is bit-identical to an exhaustive pairwise count: twice the
numerator is an integer (wins doubled plus ties), recovered exactly from
midranks, and divided by 2*m*n in one step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError


def _split_scores(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(f"scores {scores.shape} and labels {labels.shape} must be equal 1-D arrays")
    if not np.all((labels == 0) | (labels == 1)):
        raise ContractError("labels must be 0 or 1")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ContractError("both classes must be present")
    return pos, neg


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged; exact halves in float64."""
    order = np.argsort(x, kind="stable")
    z = x[order]
    n = x.size
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and z[j] == z[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1.0
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with half-weight ties."""
    pos, neg = _split_scores(scores, labels)
    m, n = pos.size, neg.size
    ranks = midranks(np.concatenate([pos, neg]))
    # midrank sums are multiples of 1/2, exact in float64, so doubling
    # recovers the integer 2*wins + ties with no rounding
    numerator_twice = 2.0 * (ranks[:m].sum() - m * (m + 1) / 2.0)
    return float(numerator_twice / (2.0 * m * n))


@dataclass
class RocCurve:
    """Operating points swept over every distinct score (plus +inf)."""

    thresholds: np.ndarray  # ascending; prediction is positive when score >= t
    sensitivity: np.ndarray
    specificity: np.ndarray
    n_pos: int
    n_neg: int

    def area(self) -> float:
        """Trapezoidal area in (FPR, TPR) space."""
        fpr = 1.0 - self.specificity
        tpr = self.sensitivity
        # ascending thresholds descend in FPR; integrate from (0,0) to (1,1)
        xs = fpr[::-1]
        ys = tpr[::-1]
        area = 0.0
        prev_x, prev_y = 0.0, 0.0
        for cx, cy in zip(xs, ys):
            area += (cx - prev_x) * (cy + prev_y) / 2.0
            prev_x, prev_y = cx, cy
        area += (1.0 - prev_x) * (1.0 + prev_y) / 2.0
        return area


def roc_curve(scores, labels) -> RocCurve:
    pos, neg = _split_scores(scores, labels)
    m, n = pos.size, neg.size
    scores = np.asarray(scores, dtype=np.float64)
    uniq = np.unique(scores)
    thresholds = np.concatenate([uniq, [np.inf]])
    sens = np.empty(thresholds.size)
    spec = np.empty(thresholds.size)
    for i, t in enumerate(thresholds):
        sens[i] = (pos >= t).sum() / m
        spec[i] = (neg < t).sum() / n
    return RocCurve(thresholds, sens, spec, m, n)


@dataclass
class DeLongResult:
    auc_a: float
    auc_b: float
    var_diff: float
    z: float
    p_value: float
    note: str = ""


def _placements(pos: np.ndarray, neg: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-case placement values (structural components) and the AUC."""
    m, n = pos.size, neg.size
    all_ranks = midranks(np.concatenate([pos, neg]))
    pos_ranks = midranks(pos)
    neg_ranks = midranks(neg)
    v_pos = (all_ranks[:m] - pos_ranks) / n  # P(neg < pos_i) with half ties
    v_neg = 1.0 - (all_ranks[m:] - neg_ranks) / m  # P(pos < neg_j) complement
    a = v_pos.mean()
    return v_pos, v_neg, a


def delong_test(scores_a, scores_b, labels) -> DeLongResult:
    """Paired comparison of two correlated AUCs over the same cases.

    Identical placements give variance exactly 0; that is reported as
    z = 0, p = 1 when the AUCs agree, and as an undefined p (NaN with a
    diagnostic note) when they do not.
    """
    scores_a = np.asarray(scores_a, dtype=np.float64)
    scores_b = np.asarray(scores_b, dtype=np.float64)
    if scores_a.shape != scores_b.shape:
        raise DimensionError(f"paired scores must align, got {scores_a.shape} and {scores_b.shape}")
    pos_a, neg_a = _split_scores(scores_a, labels)
    pos_b, neg_b = _split_scores(scores_b, labels)
    m, n = pos_a.size, neg_a.size
    if m < 2 or n < 2:
        raise ContractError("DeLong needs at least 2 cases per class")

    vp_a, vn_a, auc_a = _placements(pos_a, neg_a)
    vp_b, vn_b, auc_b = _placements(pos_b, neg_b)

    s_pos = np.cov(np.stack([vp_a, vp_b]), ddof=1)
    s_neg = np.cov(np.stack([vn_a, vn_b]), ddof=1)
    cov = s_pos / m + s_neg / n
    var_diff = float(cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1])
    diff = auc_a - auc_b

    if var_diff <= 0.0:
        if diff == 0.0:
            return DeLongResult(auc_a, auc_b, var_diff, 0.0, 1.0, note="identical placements")
        return DeLongResult(
            auc_a, auc_b, var_diff, math.inf if diff > 0 else -math.inf, float("nan"),
            note="degenerate variance: p undefined",
        )
    z = diff / math.sqrt(var_diff)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return DeLongResult(float(auc_a), float(auc_b), var_diff, float(z), float(p))


def delong_test_unpaired(scores_a, labels_a, scores_b, labels_b) -> DeLongResult:
    """Unpaired variant (no covariance term); experimental."""
    pos_a, neg_a = _split_scores(scores_a, labels_a)
    pos_b, neg_b = _split_scores(scores_b, labels_b)
    vp_a, vn_a, auc_a = _placements(pos_a, neg_a)
    vp_b, vn_b, auc_b = _placements(pos_b, neg_b)
    var_a = vp_a.var(ddof=1) / pos_a.size + vn_a.var(ddof=1) / neg_a.size
    var_b = vp_b.var(ddof=1) / pos_b.size + vn_b.var(ddof=1) / neg_b.size
    var_diff = float(var_a + var_b)
    diff = auc_a - auc_b
    if var_diff <= 0.0:
        if diff == 0.0:
            return DeLongResult(auc_a, auc_b, var_diff, 0.0, 1.0, note="unpaired (experimental)")
        return DeLongResult(auc_a, auc_b, var_diff, math.inf if diff > 0 else -math.inf,
                            float("nan"), note="unpaired (experimental); degenerate variance")
    z = diff / math.sqrt(var_diff)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return DeLongResult(float(auc_a), float(auc_b), var_diff, float(z), float(p), note="unpaired (experimental)")


@dataclass
class OperatingPoint:
    threshold: float
    sensitivity: float
    specificity: float
    accuracy: float
    feasible: bool


def operating_point(scores, labels, min_sens: float = 0.80, min_spec: float = 0.80) -> OperatingPoint:
    """Best (sensitivity + specificity) threshold subject to both minima.

    Ties break toward higher accuracy, then the lower threshold.  When no
    threshold satisfies the constraints the unconstrained optimum is
    returned flagged infeasible.
    """
    curve = roc_curve(scores, labels)
    m, n = curve.n_pos, curve.n_neg
    total = m + n

    def accuracy(i: int) -> float:
        tp = curve.sensitivity[i] * m
        tn = curve.specificity[i] * n
        return (tp + tn) / total

    feasible_idx = [
        i
        for i in range(curve.thresholds.size)
        if curve.sensitivity[i] >= min_sens and curve.specificity[i] >= min_spec
    ]
    feasible = bool(feasible_idx)
    candidates = feasible_idx if feasible else list(range(curve.thresholds.size))

    def key(i: int):
        # ascending thresholds: max sum, then max accuracy, then low threshold
        return (
            curve.sensitivity[i] + curve.specificity[i],
            accuracy(i),
            -curve.thresholds[i] if math.isfinite(curve.thresholds[i]) else -math.inf,
        )

    best = max(candidates, key=key)
    return OperatingPoint(
        threshold=float(curve.thresholds[best]),
        sensitivity=float(curve.sensitivity[best]),
        specificity=float(curve.specificity[best]),
        accuracy=float(accuracy(best)),
        feasible=feasible,
    )


def write_metrics_csv(path, rows: list[dict]) -> None:
    """metrics.csv: experiment,auc,p_vs_baseline,sens,spec,acc,threshold."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "auc", "p_vs_baseline", "sens", "spec", "acc", "threshold"])
        for r in rows:
            w.writerow(
                [
                    r["experiment"],
                    repr(float(r["auc"])),
                    "" if r.get("p_vs_baseline") is None else repr(float(r["p_vs_baseline"])),
                    repr(float(r["sens"])),
                    repr(float(r["spec"])),
                    repr(float(r["acc"])),
                    repr(float(r["threshold"])),
                ]
            )
