"""Confusion counts, acceptance accuracy and a small PCA helper."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class AccuracyReport:
    """Confusion counts; an abstention (prediction ``None``) is scored as wrong:
    it lands in FN for an accepted sequence and in FP for a rejected one."""
    tp: int
    tn: int
    fp: int
    fn: int
    abstained: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    def to_dict(self):
        return {**asdict(self), "accuracy": self.accuracy}


def compute_accuracy(predictions, labels) -> AccuracyReport:
    predictions = list(predictions)
    labels = [bool(y) for y in labels]
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    if not labels:
        raise ValueError("cannot score an empty test set")
    tp = tn = fp = fn = ab = 0
    for p, y in zip(predictions, labels):
        if p is None:
            ab += 1
            if y:
                fn += 1
            else:
                fp += 1
        elif bool(p) and y:
            tp += 1
        elif not bool(p) and not y:
            tn += 1
        elif bool(p):
            fp += 1
        else:
            fn += 1
    return AccuracyReport(tp, tn, fp, fn, ab)


def pca(X, k: int = 2):
    """Project rows of ``X`` onto the top-``k`` principal directions (via SVD).

    Returns ``(projected, components, mean, explained_variance_ratio)``.
    """
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    # deterministic signs: largest-magnitude loading positive
    signs = np.sign(Vt[np.arange(len(Vt)), np.argmax(np.abs(Vt), axis=1)])
    signs[signs == 0] = 1
    Vt = Vt * signs[:, None]
    var = s ** 2
    ratio = var / var.sum() if var.sum() > 0 else np.zeros_like(var)
    return Xc @ Vt[:k].T, Vt[:k], mean, ratio[:k]
