"""Rankings, task losses and the pairwise ranking score.

A ranking of a labelled sample set is described either by a *rank vector*
(the relevance labels read off in ranked order) or, once the samples of each
class are sorted by score, by an :class:`Interleaving` of the two sorted
lists.  The pairwise score of an interleaving is

    F(y) = 1/(|P||N|) * sum_{i in P, j in N} y_ij * (phi_i - phi_j)

with ``y_ij = +1`` when positive ``i`` is ranked above negative ``j`` and
``-1`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError

POS = 1
NEG = 0


def _as_float_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _as_binary_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise InvalidInputError(f"{name} must contain only 0/1 entries")
    return arr.astype(np.int8)


def descending_order(scores) -> np.ndarray:
    """Indices sorting ``scores`` descending; ties keep ascending index order."""
    scores = np.asarray(scores, dtype=np.float64)
    # negation keeps the stable sort's tie order
    return np.argsort(-scores, kind="stable")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RankingInstance:
    """Per-class score lists, each sorted descending, with their sample ids.

    Build one with :meth:`from_scores`; the constructor trusts its input.
    """

    pos_scores: np.ndarray
    neg_scores: np.ndarray
    pos_ids: np.ndarray
    neg_ids: np.ndarray

    @classmethod
    def from_scores(cls, scores, labels) -> "RankingInstance":
        scores = _as_float_vector(scores, "scores")
        labels = _as_binary_vector(labels, "labels")
        if scores.shape != labels.shape:
            raise InvalidInputError(
                f"scores and labels differ in length: {scores.size} vs {labels.size}"
            )
        order = descending_order(scores)
        ordered_labels = labels[order]
        pos_ids = order[ordered_labels == 1]
        neg_ids = order[ordered_labels == 0]
        return cls(
            pos_scores=_frozen(scores[pos_ids]),
            neg_scores=_frozen(scores[neg_ids]),
            pos_ids=_frozen(pos_ids),
            neg_ids=_frozen(neg_ids),
        )

    @property
    def n_pos(self) -> int:
        return int(self.pos_scores.size)

    @property
    def n_neg(self) -> int:
        return int(self.neg_scores.size)

    @property
    def size(self) -> int:
        return self.n_pos + self.n_neg

    def require_both_classes(self) -> None:
        if self.n_pos == 0 or self.n_neg == 0:
            raise InvalidInputError(
                f"ranking instance needs both classes (|P|={self.n_pos}, |N|={self.n_neg})"
            )


@dataclass(frozen=True)
class Interleaving:
    """A merge of the sorted positive and negative lists.

    ``bits[t]`` is :data:`POS` or :data:`NEG` for rank position ``t``; the
    k-th ``POS`` entry stands for the k-th highest scoring positive.
    """

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or (bits.size and not np.all((bits == POS) | (bits == NEG))):
            raise InvalidInputError("interleaving bits must be a 1-d sequence over {POS, NEG}")
        object.__setattr__(self, "bits", _frozen(bits.astype(np.int8)))

    @classmethod
    def from_sequence(cls, seq) -> "Interleaving":
        return cls(np.asarray(list(seq), dtype=np.int8))

    @classmethod
    def positives_first(cls, n_pos: int, n_neg: int) -> "Interleaving":
        return cls(np.concatenate([np.ones(n_pos, np.int8), np.zeros(n_neg, np.int8)]))

    @classmethod
    def from_order(cls, order, labels) -> "Interleaving":
        """Interleaving induced by ranking samples in ``order``."""
        labels = _as_binary_vector(labels, "labels")
        return cls(labels[np.asarray(order)])

    @property
    def n_pos(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def n_neg(self) -> int:
        return int(self.bits.size - np.count_nonzero(self.bits))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Interleaving):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __repr__(self) -> str:
        return "Interleaving(" + "".join("P" if b else "N" for b in self.bits) + ")"

    def reversed(self) -> "Interleaving":
        return Interleaving(self.bits[::-1])

    def rank_vector(self) -> np.ndarray:
        return self.bits.copy()

    def pairwise(self) -> np.ndarray:
        """The |P| x |N| matrix of pairwise variables y_ij in {+1, -1}."""
        pos_at = np.flatnonzero(self.bits == POS)
        neg_at = np.flatnonzero(self.bits == NEG)
        return np.where(pos_at[:, None] < neg_at[None, :], 1, -1).astype(np.int8)

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample weights of phi in F.

        Returns ``(c_pos, c_neg)`` aligned with the sorted class lists, so
        that ``F = c_pos @ pos_scores + c_neg @ neg_scores``.  A sample's
        weight is (opposite-class samples below it minus those above it),
        signed by class and divided by |P||N|.
        """
        n_pos, n_neg = self.n_pos, self.n_neg
        norm = float(n_pos) * float(n_neg)
        pos_at = np.flatnonzero(self.bits == POS)
        neg_at = np.flatnonzero(self.bits == NEG)
        neg_above = pos_at - np.arange(n_pos)
        pos_above = neg_at - np.arange(n_neg)
        c_pos = (n_neg - 2.0 * neg_above) / norm
        c_neg = (n_pos - 2.0 * pos_above) / norm
        return c_pos, c_neg

    def sample_order(self, inst: RankingInstance) -> np.ndarray:
        """Sample ids of ``inst`` in the ranked order this interleaving encodes."""
        _check_counts(inst, self)
        out = np.empty(len(self), dtype=np.int64)
        out[self.bits == POS] = inst.pos_ids
        out[self.bits == NEG] = inst.neg_ids
        return out


def _check_counts(inst: RankingInstance, y: Interleaving) -> None:
    if y.n_pos != inst.n_pos or y.n_neg != inst.n_neg:
        raise InvalidInputError(
            f"interleaving has {y.n_pos}/{y.n_neg} pos/neg entries, "
            f"instance has {inst.n_pos}/{inst.n_neg}"
        )


def rank_from_scores(scores, labels) -> np.ndarray:
    """Relevance labels read off in descending score order (stable on ties).

    >>> rank_from_scores([0.5, 0.5, 0.2], [0, 1, 1]).tolist()
    [0, 1, 1]
    """
    scores = _as_float_vector(scores, "scores")
    labels = _as_binary_vector(labels, "labels")
    if scores.size != labels.size:
        raise InvalidInputError(
            f"scores and labels differ in length: {scores.size} vs {labels.size}"
        )
    if scores.size == 0:
        raise InvalidInputError("need at least one sample")
    return labels[descending_order(scores)]


def prec_at(pred, j: int) -> float:
    """Fraction of relevant entries among the top ``j`` positions (1-based)."""
    pred = _as_binary_vector(pred, "pred")
    if not 1 <= j <= pred.size:
        raise InvalidInputError(f"position {j} outside 1..{pred.size}")
    return float(np.count_nonzero(pred[:j])) / j


def _mean_precision(pred: np.ndarray) -> float:
    hits = np.flatnonzero(pred)
    # the k-th relevant entry (1-based) at 0-based position t has Prec = k/(t+1)
    precisions = np.arange(1, hits.size + 1) / (hits + 1.0)
    return float(precisions.sum()) / hits.size


def ap_loss(truth, pred) -> float:
    """AP loss ``1 - (1/|P|) sum_{j: pred_j = 1} Prec@j``.

    ``truth`` only fixes |P|; both vectors must hold the same number of
    relevant entries.
    """
    truth = _as_binary_vector(truth, "truth")
    pred = _as_binary_vector(pred, "pred")
    if truth.size != pred.size:
        raise InvalidInputError(f"length mismatch: {truth.size} vs {pred.size}")
    n_rel = int(np.count_nonzero(truth))
    if n_rel != np.count_nonzero(pred):
        raise InvalidInputError("truth and pred contain different numbers of relevant entries")
    if n_rel == 0:
        raise InvalidInputError("AP loss is undefined without relevant entries")
    return 1.0 - _mean_precision(pred)


def interleaving_ap_loss(y: Interleaving) -> float:
    if y.n_pos == 0:
        raise InvalidInputError("AP loss is undefined without relevant entries")
    return 1.0 - _mean_precision(y.bits)


def score_F(inst: RankingInstance, y: Interleaving) -> float:
    """Pairwise ranking score of interleaving ``y`` under the instance scores."""
    _check_counts(inst, y)
    inst.require_both_classes()
    c_pos, c_neg = y.coefficients()
    return float(c_pos @ inst.pos_scores + c_neg @ inst.neg_scores)


def zero_one_loss(truth_labels, pred_labels) -> float:
    """Fraction of positions where the two label vectors disagree."""
    truth = _as_binary_vector(truth_labels, "truth_labels")
    pred = _as_binary_vector(pred_labels, "pred_labels")
    if truth.size != pred.size:
        raise InvalidInputError(f"length mismatch: {truth.size} vs {pred.size}")
    if truth.size == 0:
        raise InvalidInputError("need at least one label")
    return float(np.count_nonzero(truth != pred)) / truth.size
