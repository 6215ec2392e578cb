"""Classification metrics and report tables."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, ShapeError

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("Mel", "S1", "S2", "S1+S2", "Max Merge", "Hard Merge", "MLP Merge")
METRIC_ROWS = (("accuracy", "Accuracy"), ("weighted_f1", "Weighted F1"),
               ("macro_f1", "F1 (macro)"), ("auc_ovr_macro", "AUC (OvR macro)"))


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    weighted_f1: float
    macro_f1: float
    auc_ovr_macro: float
    confusion: np.ndarray  # [true, predicted]
    per_class: list[ClassScores] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.confusion.shape[0]


def confusion_matrix(labels, preds, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def binary_auc(scores, positive) -> float:
    """ROC AUC from the Mann-Whitney U statistic (average ranks for ties)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_ovr_macro(probs, labels) -> float:
    probs = np.asarray(probs)
    aucs = []
    for c in range(probs.shape[1]):
        a = binary_auc(probs[:, c], labels == c)
        if math.isnan(a):
            log.warning("class %d has no positive or no negative samples; AUC excluded", c)
        else:
            aucs.append(a)
    return float(np.mean(aucs)) if aucs else math.nan


def evaluate(labels, probs=None, preds=None, n_classes: int | None = None) -> EvalReport:
    """Score predictions against integer labels.

    ``probs`` ([N, C] scores) feeds the AUC and, when ``preds`` is omitted,
    the predictions via argmax.  With ``preds`` alone the AUC is NaN.
    """
    labels = np.asarray(labels)
    if probs is None and preds is None:
        raise InputError("evaluate needs probabilities or predictions")
    if probs is not None:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
            raise ShapeError(f"scores {probs.shape} do not match {labels.shape[0]} labels")
        n_classes = probs.shape[1] if n_classes is None else n_classes
    preds = probs.argmax(axis=1) if preds is None else np.asarray(preds)
    if preds.shape != labels.shape:
        raise ShapeError(f"{preds.shape[0]} predictions for {labels.shape[0]} labels")
    if n_classes is None:
        n_classes = int(max(labels.max(initial=-1), preds.max(initial=-1))) + 1
    if labels.size == 0:
        raise InputError("cannot evaluate an empty set")
    if labels.min() < 0 or labels.max() >= n_classes or preds.min() < 0 or preds.max() >= n_classes:
        raise InputError(f"labels and predictions must lie in [0, {n_classes})")

    cm = confusion_matrix(labels, preds, n_classes)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    per_class = [ClassScores(float(p), float(r), float(f), int(s))
                 for p, r, f, s in zip(precision, recall, f1, support)]
    return EvalReport(
        accuracy=float(tp.sum() / labels.size),
        weighted_f1=float(np.sum(f1 * support) / support.sum()),
        macro_f1=float(np.mean(f1)),
        auc_ovr_macro=auc_ovr_macro(probs, labels) if probs is not None else math.nan,
        confusion=cm,
        per_class=per_class,
    )


# --------------------------------------------------------------------------
# Report tables
# --------------------------------------------------------------------------


def _pct(v: float, digits: int = 2) -> str:
    return "nan" if math.isnan(v) else f"{100.0 * v:.{digits}f}"


def report_csv(reports: dict[str, EvalReport]) -> str:
    """One row per metric, one column per model (values in percent)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(reports)
    w.writerow(["metric", *cols])
    for key, _ in METRIC_ROWS:
        w.writerow([key, *(_pct(getattr(reports[c], key), 4) for c in cols)])
    return buf.getvalue()


def report_table(reports: dict[str, EvalReport], notes=()) -> str:
    cols = list(reports)
    width = max(10, *(len(c) + 2 for c in cols))
    head = f"{'':<16}" + "".join(f"{c:>{width}}" for c in cols)
    lines = [head, "-" * len(head)]
    for key, title in METRIC_ROWS:
        lines.append(f"{title:<16}" + "".join(f"{_pct(getattr(reports[c], key)):>{width}}" for c in cols))
    lines += [f"# {n}" for n in notes]
    return "\n".join(lines) + "\n"


def read_report_csv(path) -> dict[str, dict[str, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0][1:]
    out = {c: {} for c in cols}
    for row in rows[1:]:
        for c, v in zip(cols, row[1:]):
            out[c][row[0]] = float(v)
    return out
