"""Evaluation primitives: AUC, F1, accuracy, confusion counts."""

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def auc(scores, labels) -> float:
    """Rank-based AUC: P(score+ > score-) + 0.5 P(tie), via midranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: need both classes present")
    ranks = rankdata(scores)  # midranks for ties
    pos_rank_sum = ranks[labels == 1].sum()
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def confusion_counts(predictions, truths, n_classes: int) -> np.ndarray:
    """Confusion matrix with rows = truth, columns = prediction."""
    predictions = np.asarray(predictions, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if len(predictions) != len(truths):
        raise MetricError("predictions and truths must align")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (truths, predictions), 1)
    return m


def f1(predictions, truths, n_classes: int) -> float:
    """Positive-class F1 for binary targets, macro F1 otherwise.

    Classes with an empty F1 denominator (no support and never predicted)
    contribute 0 to the macro mean.
    """
    if len(predictions) == 0:
        raise MetricError("empty input")
    m = confusion_counts(predictions, truths, n_classes)
    per_class = []
    for c in range(n_classes):
        tp = m[c, c]
        fp = m[:, c].sum() - tp
        fn = m[c, :].sum() - tp
        denom = 2 * tp + fp + fn
        per_class.append(2.0 * tp / denom if denom else 0.0)
    if n_classes == 2:
        return per_class[1]
    return float(np.mean(per_class))


def accuracy(predictions, truths) -> float:
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if len(predictions) == 0:
        raise MetricError("empty input")
    if len(predictions) != len(truths):
        raise MetricError("predictions and truths must align")
    return float(np.mean(predictions == truths))
