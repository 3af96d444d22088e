"""Evaluation metrics computed from predicted scores."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError
from .ranking import ap_loss, rank_from_scores, zero_one_loss


def average_precision(scores, labels) -> float:
    """Non-interpolated AP of the stable descending-score ranking.

    Defined as ``1 - ap_loss`` of the induced rank vector, so this is the
    same quantity the AP trainers optimize.
    """
    labels = np.asarray(labels)
    n_pos = int(np.count_nonzero(labels == 1))
    if n_pos == 0 or n_pos == labels.size:
        raise InvalidInputError("average precision needs both classes")
    pred = rank_from_scores(scores, labels)
    return 1.0 - ap_loss(labels, pred)


def predict_labels(scores, threshold: float = 0.0) -> np.ndarray:
    """1 where the score exceeds ``threshold``, else 0."""
    return (np.asarray(scores, dtype=np.float64) > threshold).astype(np.int8)


def zero_one_error(scores, labels, threshold: float = 0.0) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise InvalidInputError("need at least one sample")
    return zero_one_loss(labels, predict_labels(scores, threshold))
