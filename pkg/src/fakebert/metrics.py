"""Binary classification metrics with fake as the positive class."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import LABELS

POSITIVE = LABELS.index("fake")


class DegenerateMetricWarning(UserWarning):
    """A precision or recall denominator was zero; the value was set to 0."""


class UndefinedAUCError(ValueError):
    pass


def as_binary(values):
    """Labels as an int array with fake=1, real=0. Accepts label strings, bools or 0/1."""
    values = list(values)
    if values and isinstance(values[0], str):
        try:
            return np.array([LABELS.index(v.lower()) for v in values], dtype=np.int64)
        except ValueError as exc:
            raise ValueError(f"unknown label in {sorted(set(values))}") from exc
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("numeric labels must be 0 or 1")
    return arr


def _pair(predictions, labels):
    pred, true = as_binary(predictions), as_binary(labels)
    if len(pred) != len(true):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(true)} labels")
    return pred, true


def confusion(predictions, labels):
    """``(tp, fp, tn, fn)`` counts."""
    pred, true = _pair(predictions, labels)
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    tn = int(np.sum((pred == 0) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    return tp, fp, tn, fn


def accuracy(predictions, labels):
    pred, true = _pair(predictions, labels)
    if len(pred) == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.sum(pred == true)) / len(pred)


def _precision_recall(tp, fp, fn):
    degenerate = []
    if tp + fp == 0:
        degenerate.append("precision")
    if tp + fn == 0:
        degenerate.append("recall")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, degenerate


def precision_recall(predictions, labels):
    """Precision and recall for the fake class.

    A zero denominator yields 0.0 and emits :class:`DegenerateMetricWarning`.
    """
    tp, fp, _, fn = confusion(predictions, labels)
    precision, recall, degenerate = _precision_recall(tp, fp, fn)
    if degenerate:
        warnings.warn(f"zero denominator for {' and '.join(degenerate)}", DegenerateMetricWarning, stacklevel=2)
    return precision, recall


def f1(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def roc_curve(scores, labels):
    """False/true positive rates at every distinct threshold, highest score first."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    true = as_binary(labels)
    if len(scores) != len(true):
        raise ValueError(f"length mismatch: {len(scores)} scores vs {len(true)} labels")
    n_pos = int(true.sum())
    n_neg = len(true) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("ROC AUC needs both classes present in labels")

    order = np.argsort(-scores, kind="mergesort")
    scores, true = scores[order], true[order]
    # last index of every run of tied scores
    ends = np.r_[np.flatnonzero(np.diff(scores)), len(scores) - 1]
    tps = np.cumsum(true)[ends]
    fps = (ends + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    return fpr, tpr, scores[ends]


def roc_auc(scores, labels):
    """Area under the ROC curve by trapezoidal integration over a threshold sweep.

    Tied scores form a single diagonal step, so the result equals the
    Mann-Whitney pair statistic with ties counted as one half.
    """
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


@dataclass
class EvaluationReport:
    accuracy: float
    mean_train_loss: float | None
    roc_auc: float | None
    f1: float
    precision: float
    recall: float
    confusion: tuple
    degenerate: list = field(default_factory=list)

    @property
    def n(self):
        return sum(self.confusion)

    def to_dict(self):
        d = asdict(self)
        d["confusion"] = dict(zip(("tp", "fp", "tn", "fn"), self.confusion))
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        c = d["confusion"]
        d["confusion"] = tuple(c[k] for k in ("tp", "fp", "tn", "fn")) if isinstance(c, dict) else tuple(c)
        return cls(**d)

    def table_row(self):
        """Values in comparison-table column order: Test acc, Train loss, ROC AUC, F1 score."""
        return [self.accuracy, self.mean_train_loss, self.roc_auc, self.f1]

    def minus(self, other):
        """Field-wise ``self - other`` for the scalar metrics."""
        out = {}
        for name in ("accuracy", "roc_auc", "f1", "precision", "recall"):
            a, b = getattr(self, name), getattr(other, name)
            out[name] = None if a is None or b is None else a - b
        return out


def evaluation_report(predictions, labels, scores, mean_train_loss=None):
    """Assemble every metric for one set of predictions.

    ``roc_auc`` is ``None`` when the labels hold a single class.
    """
    tp, fp, tn, fn = confusion(predictions, labels)
    n = tp + fp + tn + fn
    if n == 0:
        raise ValueError("cannot evaluate an empty test set")
    precision, recall, degenerate = _precision_recall(tp, fp, fn)
    try:
        auc = roc_auc(scores, labels)
    except UndefinedAUCError:
        auc = None
        degenerate.append("roc_auc")
    return EvaluationReport(
        accuracy=(tp + tn) / n,
        mean_train_loss=mean_train_loss,
        roc_auc=auc,
        f1=f1(precision, recall),
        precision=precision,
        recall=recall,
        confusion=(tp, fp, tn, fn),
        degenerate=degenerate,
    )
