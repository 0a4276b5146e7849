"""Confusion-matrix metrics, classification reports, and ROC curves.

Every scalar is computed as a single float division of exact integer
counts (or an expression over such ratios), so independent implementations
that count the same label pairs agree bit-for-bit in 64-bit arithmetic.

Zero-denominator metrics surface as explicit None ("undefined") by default;
pass zero_division="zero" to coerce them to 0.0 for report aggregation.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClass, LabelError, UndefinedMetric

ROW_SUM_TOLERANCE = 1e-6


@dataclass
class ConfusionMatrix:
    """K x K count grid: rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple

    @property
    def k(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def row_totals(self):
        return self.counts.sum(axis=1)

    def col_totals(self):
        return self.counts.sum(axis=0)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\predicted"] + list(self.class_names))
            for name, row in zip(self.class_names, self.counts):
                writer.writerow([name] + [int(v) for v in row])
        return path


def confusion(true_labels, predicted_labels, k, class_names=None):
    """Count (true, predicted) pairs into a K x K grid."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise LabelError(f"label vectors differ in length: {t.shape} vs {p.shape}")
    for name, v in (("true", t), ("predicted", p)):
        if v.size and (v.min() < 0 or v.max() >= k):
            raise LabelError(f"{name} labels must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(k))
    return ConfusionMatrix(counts=counts, class_names=tuple(class_names))


def basic_rates(cm, class_index):
    """One-vs-rest (TP, FP, TN, FN) for one class."""
    if not 0 <= class_index < cm.k:
        raise LabelError(f"class index {class_index} outside [0, {cm.k})")
    tp = int(cm.counts[class_index, class_index])
    fp = int(cm.counts[:, class_index].sum()) - tp
    fn = int(cm.counts[class_index, :].sum()) - tp
    tn = cm.total - tp - fp - fn
    return tp, fp, tn, fn


def _ratio(num, den):
    return num / den if den else None


def _class_values(cm):
    """Per-class one-vs-rest metric dict; zero-denominator entries are None."""
    values = []
    for i in range(cm.k):
        tp, fp, tn, fn = basic_rates(cm, i)
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        if precision is None or recall is None or precision + recall == 0:
            f1 = None if (precision is None or recall is None) else 0.0
        else:
            f1 = 2 * precision * recall / (precision + recall)
        values.append({
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "sensitivity": recall,  # same computation, second name
            "specificity": _ratio(tn, tn + fp),
            "ppv": precision,  # same computation, second name
            "npv": _ratio(tn, tn + fn),
            "support": tp + fn,
        })
    return values


_AGG_FIELDS = ("precision", "recall", "f1", "sensitivity", "specificity",
               "ppv", "npv")


def _resolve(value, zero_division, what):
    if value is not None:
        return value
    if zero_division == "zero":
        return 0.0
    raise UndefinedMetric(
        f"{what} has a zero denominator; pass zero_division='zero' to coerce")


def scalar_metrics(cm, zero_division="undefined"):
    """The full metric set over a confusion matrix.

    Returns accuracy, Cohen's kappa, per-class one-vs-rest values, and
    macro / weighted / micro aggregates of precision, recall, f1,
    sensitivity, specificity, ppv, and npv.
    """
    if cm.total == 0:
        raise UndefinedMetric("empty confusion matrix")
    total = cm.total
    trace = int(np.trace(cm.counts))
    accuracy = trace / total

    per_class = _class_values(cm)
    supports = [v["support"] for v in per_class]

    macro = {}
    weighted = {}
    for field in _AGG_FIELDS:
        vals = [_resolve(v[field], zero_division, f"{field} of class {name}")
                for v, name in zip(per_class, cm.class_names)]
        macro[field] = sum(vals) / cm.k
        weighted[field] = sum(v * s for v, s in zip(vals, supports)) / total
    if zero_division == "zero":
        for v in per_class:
            for field in _AGG_FIELDS:
                if v[field] is None:
                    v[field] = 0.0

    micro = {}
    tps = fps = tns = fns = 0
    for i in range(cm.k):
        tp, fp, tn, fn = basic_rates(cm, i)
        tps += tp
        fps += fp
        tns += tn
        fns += fn
    micro["precision"] = _resolve(_ratio(tps, tps + fps), zero_division,
                                  "micro precision")
    micro["recall"] = _resolve(_ratio(tps, tps + fns), zero_division,
                               "micro recall")
    pr, rc = micro["precision"], micro["recall"]
    micro["f1"] = 2 * pr * rc / (pr + rc) if pr + rc else 0.0
    micro["sensitivity"] = micro["recall"]
    micro["specificity"] = _resolve(_ratio(tns, tns + fps), zero_division,
                                    "micro specificity")
    micro["ppv"] = micro["precision"]
    micro["npv"] = _resolve(_ratio(tns, tns + fns), zero_division, "micro npv")

    # Chance agreement from the row/column marginals; the numerator stays an
    # exact integer so the division happens once.
    pe_num = sum(int(r) * int(c)
                 for r, c in zip(cm.row_totals(), cm.col_totals()))
    p_e = pe_num / (total * total)
    if p_e == 1.0:
        kappa = _resolve(None, zero_division, "kappa (chance agreement is 1)")
    else:
        kappa = (accuracy - p_e) / (1 - p_e)

    return {
        "accuracy": accuracy,
        "kappa": kappa,
        "per_class": {name: vals for name, vals
                      in zip(cm.class_names, per_class)},
        "macro": macro,
        "weighted": weighted,
        "micro": micro,
    }


@dataclass
class ClassReport:
    """Tabular per-class precision/recall/f1/support plus aggregates."""

    rows: list  # (name, precision, recall, f1, support)
    accuracy: float
    macro: tuple  # (precision, recall, f1)
    weighted: tuple
    total: int

    def to_text(self):
        """Plain-text layout: class rows, then accuracy, macro avg, and
        weighted avg lines, all at two decimals."""
        width = max([len("weighted avg")] + [len(str(r[0])) for r in self.rows])
        header = f"{'':>{width}}  precision    recall  f1-score   support"
        lines = [header, ""]
        for name, p, r, f1, support in self.rows:
            lines.append(
                f"{name:>{width}}  {_fmt(p)}  {_fmt(r)}  {_fmt(f1)}  {support:>8d}")
        lines.append("")
        lines.append(f"{'accuracy':>{width}}  {'':9s}  {'':8s}  "
                     f"{_fmt(self.accuracy)}  {self.total:>8d}")
        lines.append(f"{'macro avg':>{width}}  {_fmt(self.macro[0])}  "
                     f"{_fmt(self.macro[1])}  {_fmt(self.macro[2])}  {self.total:>8d}")
        lines.append(f"{'weighted avg':>{width}}  {_fmt(self.weighted[0])}  "
                     f"{_fmt(self.weighted[1])}  {_fmt(self.weighted[2])}  "
                     f"{self.total:>8d}")
        return "\n".join(lines) + "\n"


def _fmt(value):
    return f"{value:>9.2f}" if value is not None else f"{'n/a':>9s}"


def class_report(cm, zero_division="undefined"):
    """Per-class precision/recall/f1/support with macro and weighted
    averages, in that column order."""
    m = scalar_metrics(cm, zero_division=zero_division)
    rows = [
        (name,
         m["per_class"][name]["precision"],
         m["per_class"][name]["recall"],
         m["per_class"][name]["f1"],
         m["per_class"][name]["support"])
        for name in cm.class_names
    ]
    return ClassReport(
        rows=rows,
        accuracy=m["accuracy"],
        macro=(m["macro"]["precision"], m["macro"]["recall"], m["macro"]["f1"]),
        weighted=(m["weighted"]["precision"], m["weighted"]["recall"],
                  m["weighted"]["f1"]),
        total=cm.total,
    )


def binary_roc(positive_mask, scores):
    """ROC sweep for a binary task: predicted positive means score >= t.

    Thresholds are the distinct scores in descending order, preceded by an
    all-negative point at +inf, so the curve runs (0,0) -> (1,1). Returns
    (points, auc) with points as (fpr, tpr, threshold) triples and the AUC
    by the trapezoidal rule.
    """
    y = np.asarray(positive_mask, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClass(
            f"binary task needs both sides, got {n_pos} positives and "
            f"{n_neg} negatives")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tps = np.cumsum(y_sorted)
    fps = np.cumsum(~y_sorted)
    last_of_group = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    points = [(0.0, 0.0, float("inf"))]
    for i in last_of_group:
        points.append((int(fps[i]) / n_neg, int(tps[i]) / n_pos,
                       float(s_sorted[i])))
    auc = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2
    return points, auc


def _check_prob_rows(probabilities):
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 2:
        raise LabelError(f"probabilities must be 2-D, got shape {p.shape}")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
        raise LabelError("probability rows must sum to 1")
    return p


def roc_curve(true_labels, probabilities, class_index):
    """One-vs-rest ROC for one class of a probability matrix."""
    p = _check_prob_rows(probabilities)
    t = np.asarray(true_labels, dtype=np.int64)
    if not 0 <= class_index < p.shape[1]:
        raise LabelError(f"class index {class_index} outside [0, {p.shape[1]})")
    return binary_roc(t == class_index, p[:, class_index])


def micro_roc_curve(true_labels, probabilities):
    """Micro-average ROC: pool every (sample, class) indicator/score pair."""
    p = _check_prob_rows(probabilities)
    t = np.asarray(true_labels, dtype=np.int64)
    k = p.shape[1]
    onehot = np.zeros_like(p, dtype=bool)
    onehot[np.arange(t.size), t] = True
    return binary_roc(onehot.reshape(-1), p.reshape(-1))


def roc_points_to_csv(points, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, threshold in points:
            writer.writerow([repr(fpr), repr(tpr), repr(threshold)])
    return path
