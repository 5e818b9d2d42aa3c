"""Confusion-matrix metrics, Cohen's kappa, and ROC / precision-recall curves.

Rows of a confusion matrix are true classes, columns predicted classes.
Rates whose denominator is zero are reported as 0 and flagged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.ndim != 2 or self.counts.shape != (k, k) or k == 0:
            raise ValueError(f"confusion matrix must be square and non-empty, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        if not self.class_names:
            self.class_names = [str(i) for i in range(k)]

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(true_labels, pred_labels, k: int, class_names=None) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"label arrays differ in length: {t.shape} vs {p.shape}")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, list(class_names or []))


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    ok = den != 0
    np.divide(num, den, out=out, where=ok)
    return out, ~ok


@dataclass
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro: dict
    weighted: dict
    zero_division: dict  # metric name -> list of class indices where 0/0 occurred


def class_metrics(m: ConfusionMatrix) -> ClassMetrics:
    """Per-class one-vs-rest precision/recall/F1 plus macro and weighted means."""
    c = m.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(c)
    predicted = c.sum(axis=0)
    support = c.sum(axis=1)
    precision, p_flag = _safe_div(tp, predicted)
    recall, r_flag = _safe_div(tp, support)
    f1, f_flag = _safe_div(2 * precision * recall, precision + recall)
    weights = support / total
    macro = {"precision": float(precision.mean()), "recall": float(recall.mean()),
             "f1": float(f1.mean())}
    weighted = {"precision": float(weights @ precision), "recall": float(weights @ recall),
                "f1": float(weights @ f1)}
    flags = {name: np.flatnonzero(flag).tolist()
             for name, flag in (("precision", p_flag), ("recall", r_flag), ("f1", f_flag))}
    return ClassMetrics(precision, recall, f1, m.counts.sum(axis=1), float(tp.sum() / total),
                        macro, weighted, flags)


def cohen_kappa(m: ConfusionMatrix) -> tuple[float, float, float]:
    """Return (kappa, p_o, p_e)."""
    c = m.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise ValueError("confusion matrix is empty")
    p_o = np.trace(c) / total
    p_e = float(c.sum(axis=1) @ c.sum(axis=0)) / total ** 2
    if p_e >= 1.0:
        raise ValueError("kappa undefined: chance agreement p_e == 1 (single-class data)")
    return (p_o - p_e) / (1 - p_e), float(p_o), p_e


# ---------------------------------------------------------------------------
# threshold curves
# ---------------------------------------------------------------------------


def _binary_counts(scores, positives):
    """Cumulative (tp, fp) at each distinct score, thresholds descending."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    pos = positives[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(pos)[ends]
    fp = np.cumsum(~pos)[ends]
    return s[ends], tp, fp


def _binarize(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ValueError(f"scores must be (n, K) matching {labels.shape[0]} labels")
    onehot = np.zeros(scores.shape, dtype=bool)
    onehot[np.arange(labels.size), labels] = True
    return scores, onehot


def binary_roc(scores, positives):
    """Return (thresholds, fpr, tpr, auc) for a single one-vs-rest problem."""
    thr, tp, fp = _binary_counts(scores, positives)
    P, N = tp[-1], fp[-1]
    if P == 0 or N == 0:
        raise ValueError("ROC needs at least one positive and one negative sample")
    tpr = np.r_[0.0, tp / P]
    fpr = np.r_[0.0, fp / N]
    thr = np.r_[np.inf, thr]
    return thr, fpr, tpr, float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def binary_pr(scores, positives):
    """Return (thresholds, precision, recall, ap) with step-wise AP."""
    thr, tp, fp = _binary_counts(scores, positives)
    P = tp[-1]
    if P == 0:
        raise ValueError("precision-recall needs at least one positive sample")
    precision = tp / (tp + fp)
    recall = tp / P
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return thr, precision, recall, ap


def roc_curve(scores, labels, averaging: str = "micro"):
    """One-vs-rest ROC. Returns ({"threshold","fpr","tpr"}, auc).

    ``micro`` pools every (sample, class) pair; ``macro`` averages per-class
    AUCs and interpolates the mean TPR on the union of per-class FPR points
    (thresholds are then not meaningful and reported as NaN).
    """
    scores, onehot = _binarize(scores, labels)
    if averaging == "micro":
        thr, fpr, tpr, auc = binary_roc(scores.ravel(), onehot.ravel())
        return {"threshold": thr, "fpr": fpr, "tpr": tpr}, auc
    if averaging != "macro":
        raise ValueError(f"unknown averaging {averaging!r}")
    curves = [binary_roc(scores[:, k], onehot[:, k]) for k in range(scores.shape[1])]
    grid = np.unique(np.concatenate([c[1] for c in curves]))
    mean_tpr = np.mean([np.interp(grid, c[1], c[2]) for c in curves], axis=0)
    points = {"threshold": np.full(grid.shape, np.nan), "fpr": grid, "tpr": mean_tpr}
    return points, float(np.mean([c[3] for c in curves]))


def pr_curve(scores, labels, averaging: str = "micro"):
    """One-vs-rest precision-recall. Returns ({"threshold","precision","recall"}, ap)."""
    scores, onehot = _binarize(scores, labels)
    if averaging == "micro":
        thr, prec, rec, ap = binary_pr(scores.ravel(), onehot.ravel())
        return {"threshold": thr, "precision": prec, "recall": rec}, ap
    if averaging != "macro":
        raise ValueError(f"unknown averaging {averaging!r}")
    curves = [binary_pr(scores[:, k], onehot[:, k]) for k in range(scores.shape[1])]
    grid = np.unique(np.concatenate([c[2] for c in curves]))
    # step interpolation: best precision achievable at recall >= r
    mean_prec = np.mean([[c[1][c[2] >= r].max() for r in grid] for c in curves], axis=0)
    points = {"threshold": np.full(grid.shape, np.nan), "precision": mean_prec, "recall": grid}
    return points, float(np.mean([c[3] for c in curves]))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    metrics: ClassMetrics
    kappa: float
    p_o: float
    p_e: float
    roc: dict | None = None
    auc: float | None = None
    pr: dict | None = None
    ap: float | None = None
    averaging: str = "micro"

    def to_dict(self) -> dict:
        m = self.metrics
        names = self.confusion.class_names
        return {
            "class_names": names,
            "confusion": self.confusion.counts.tolist(),
            "per_class": {
                name: {"precision": float(m.precision[i]), "recall": float(m.recall[i]),
                       "f1": float(m.f1[i]), "support": int(m.support[i])}
                for i, name in enumerate(names)
            },
            "accuracy": m.accuracy,
            "macro": m.macro,
            "weighted": m.weighted,
            "zero_division": m.zero_division,
            "kappa": self.kappa,
            "p_o": self.p_o,
            "p_e": self.p_e,
            "averaging": self.averaging,
            "auc": self.auc,
            "average_precision": self.ap,
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def save_curves(self, roc_path, pr_path) -> None:
        if self.roc is not None:
            _write_csv(roc_path, ["threshold", "fpr", "tpr"], self.roc)
        if self.pr is not None:
            _write_csv(pr_path, ["threshold", "precision", "recall"], self.pr)


def _write_csv(path, columns, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in zip(*(points[c] for c in columns)):
            w.writerow([repr(float(v)) for v in row])


def evaluate(labels, scores, class_names=None, averaging: str = "micro") -> EvalReport:
    """Build a full report from true labels and per-class probabilities."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    k = scores.shape[1]
    cm = confusion(labels, scores.argmax(axis=1), k, class_names)
    cmets = class_metrics(cm)
    try:
        kappa, p_o, p_e = cohen_kappa(cm)
    except ValueError:
        kappa, p_o, p_e = float("nan"), cmets.accuracy, 1.0
    report = EvalReport(cm, cmets, kappa, p_o, p_e, averaging=averaging)
    try:
        report.roc, report.auc = roc_curve(scores, labels, averaging)
        report.pr, report.ap = pr_curve(scores, labels, averaging)
    except ValueError:
        pass  # degenerate label sets have no curves
    return report


def format_table(report: EvalReport) -> str:
    """Per-class precision/recall/F1 table with macro and weighted rows."""
    m = report.metrics
    names = report.confusion.class_names
    width = max(12, max(len(n) for n in names) + 2)
    lines = [f"{'class':<{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>9}"]
    for i, name in enumerate(names):
        lines.append(f"{name:<{width}}{m.precision[i]:>10.4f}{m.recall[i]:>10.4f}"
                     f"{m.f1[i]:>10.4f}{int(m.support[i]):>9d}")
    total = int(m.support.sum())
    for label, agg in (("macro avg", m.macro), ("weighted avg", m.weighted)):
        lines.append(f"{label:<{width}}{agg['precision']:>10.4f}{agg['recall']:>10.4f}"
                     f"{agg['f1']:>10.4f}{total:>9d}")
    lines.append(f"{'accuracy':<{width}}{m.accuracy:>30.4f}{total:>9d}")
    lines.append(f"Cohen's kappa = {report.kappa:.4f}")
    return "\n".join(lines) + "\n"
