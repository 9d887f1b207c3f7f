"""Detection metrics: rank-statistic AUC, ROC points, F-1, accuracy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IoFailure, SingleClass


@dataclass
class EvalResult:
    auc: float
    f1: float
    acc: float
    threshold: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    roc_points: list = field(default_factory=list)  # (fpr, tpr), fpr ascending

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "f1": self.f1,
            "acc": self.acc,
            "threshold": self.threshold,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "roc_points": [[float(a), float(b)] for a, b in self.roc_points],
        }


def _split_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    if not (np.any(labels == 1) and np.any(labels == 0)):
        raise SingleClass("need both positive (1) and negative (0) labels")
    return scores, labels


def auc_score(scores, labels) -> float:
    """AUC via the Mann-Whitney rank statistic with average ranks for ties."""
    scores, labels = _split_labels(scores, labels)
    n = len(scores)
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(FPR, TPR) sweep over descending score thresholds, ties grouped."""
    scores, labels = _split_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        for idx in order[i : j + 1]:
            if labels[idx] == 1:
                tp += 1
            else:
                fp += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return points


def evaluate(scores, labels, threshold: float = 0.0) -> EvalResult:
    """AUC plus F-1/ACC/confusion at the operating threshold (score >= t -> 1)."""
    scores_arr, labels_arr = _split_labels(scores, labels)
    preds = scores_arr >= threshold
    tp = int(np.sum(preds & (labels_arr == 1)))
    fp = int(np.sum(preds & (labels_arr == 0)))
    tn = int(np.sum(~preds & (labels_arr == 0)))
    fn = int(np.sum(~preds & (labels_arr == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    acc = (tp + tn) / len(labels_arr)
    return EvalResult(
        auc=auc_score(scores_arr, labels_arr),
        f1=f1,
        acc=acc,
        threshold=threshold,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        roc_points=roc_points(scores_arr, labels_arr),
    )


def write_eval_result(result: EvalResult, json_path: str, roc_csv_path: str | None = None) -> None:
    try:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2)
        if roc_csv_path:
            with open(roc_csv_path, "w", encoding="utf-8") as fh:
                fh.write("fpr,tpr\n")
                for fpr, tpr in result.roc_points:
                    fh.write(f"{fpr},{tpr}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write evaluation outputs: {exc}")
