"""Synthetic ranking datasets and label noise.

Two generators are provided:

* :func:`gen_teacher` labels Gaussian inputs by thresholding the scores of a
  randomly initialized ReLU network (the top ``pos_frac`` become positive).
* :func:`gen_norm_threshold` labels Gaussian inputs by their squared norm,
  rejecting the band between the two thresholds.

Every function is a pure function of its arguments and seed.

Dataset CSV layout: header ``label,f0,...,f{d-1}``, then one row per sample
in dataset order with the 0/1 label and the features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidConfigError, InvalidInputError
from .neural import layer_dims_for, make_rng, mlp_init, scores as net_scores

# stream tags passed to make_rng next to the user seed
_INPUT_STREAM = 1
_FLIP_STREAM = 2
_SPLIT_STREAM = 3
_NORM_STREAM = 4


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with binary labels.

    ``ids`` are row numbers in the dataset the rows came from; generators
    and CSV reads produce ``0..n-1``.
    """

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels).astype(np.int8)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise InvalidInputError("features must be (n, d) with one label per row")
        if not np.all(np.isfinite(features)):
            raise InvalidInputError("features must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise InvalidInputError("labels must be 0 or 1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))

    @classmethod
    def from_arrays(cls, features, labels) -> "Dataset":
        return cls(features, labels, np.arange(len(labels)))

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_pos(self) -> int:
        return int(np.count_nonzero(self.labels))

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.ids[rows])

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.features, labels, self.ids)


def _require_two_classes(ds: Dataset, what: str) -> Dataset:
    if ds.n_pos == 0 or ds.n_neg == 0:
        raise InvalidConfigError(f"{what} leaves a single class (pos={ds.n_pos}, neg={ds.n_neg})")
    return ds


def _count(fraction: float, n: int) -> int:
    # absorbs representation error such as 0.29 * 100 = 28.999999999999996
    return int(math.floor(fraction * n + 1e-9))


def gen_teacher(n: int, dim: int = 10, hidden: int = 32, pos_frac: float = 0.2,
                seed: int = 0, depth: int = 4, return_teacher: bool = False):
    """Label standard-normal inputs by a random ReLU teacher network.

    The teacher has ``depth`` hidden layers of width ``hidden`` with N(0, 1)
    parameters.  The ``ceil(pos_frac * n)`` highest-scoring inputs (stable
    order) are positive.  With ``return_teacher`` the teacher parameters are
    returned alongside the dataset.
    """
    if n < 10 or dim < 1 or hidden < 1 or depth < 1:
        raise InvalidConfigError(f"invalid teacher shape n={n}, dim={dim}, hidden={hidden}")
    if not 0.0 < pos_frac < 1.0:
        raise InvalidConfigError(f"pos_frac must lie in (0, 1), got {pos_frac}")
    n_pos = math.ceil(pos_frac * n - 1e-9)
    if n_pos <= 0 or n_pos >= n:
        raise InvalidConfigError(f"pos_frac={pos_frac} with n={n} leaves an empty class")

    teacher = mlp_init(layer_dims_for(dim, [hidden] * depth), seed)
    X = make_rng(seed, _INPUT_STREAM).standard_normal((n, dim))
    teacher_scores = net_scores(teacher, X)
    top = np.argsort(-teacher_scores, kind="stable")[:n_pos]
    labels = np.zeros(n, dtype=np.int8)
    labels[top] = 1
    ds = Dataset.from_arrays(X, labels)
    return (ds, teacher) if return_teacher else ds


def gen_norm_threshold(n: int, dim: int = 10, sigma: float = 10.0, t_hi: float = 1200.0,
                       t_lo: float = 1000.0, seed: int = 0) -> Dataset:
    """Gaussian inputs labelled positive when ``|x|^2 > t_hi``, negative below ``t_lo``.

    Candidates inside ``[t_lo, t_hi]`` are discarded and more are drawn until
    ``n`` samples are kept, in generation order.
    """
    if n < 1 or dim < 1:
        raise InvalidConfigError(f"invalid size n={n}, dim={dim}")
    if not (t_hi > t_lo > 0):
        raise InvalidConfigError(f"need t_hi > t_lo > 0, got t_hi={t_hi}, t_lo={t_lo}")
    if sigma <= 0:
        raise InvalidConfigError(f"sigma must be positive, got {sigma}")
    rng = make_rng(seed, _NORM_STREAM)
    kept_x, kept_y, total = [], [], 0
    while total < n:
        cand = sigma * rng.standard_normal((max(n, 256), dim))
        sq = np.einsum("ij,ij->i", cand, cand)
        keep = (sq > t_hi) | (sq < t_lo)
        kept_x.append(cand[keep])
        kept_y.append((sq[keep] > t_hi).astype(np.int8))
        total += int(keep.sum())
    X = np.concatenate(kept_x)[:n]
    y = np.concatenate(kept_y)[:n]
    return _require_two_classes(Dataset.from_arrays(X, y), "norm-threshold generation")


def flip_labels(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Complement the labels of ``floor(fraction * n)`` uniformly chosen samples."""
    if not 0.0 <= fraction <= 1.0:
        raise InvalidConfigError(f"flip fraction must lie in [0, 1], got {fraction}")
    k = _count(fraction, ds.n)
    rows = make_rng(seed, _FLIP_STREAM).choice(ds.n, size=k, replace=False)
    labels = ds.labels.copy()
    labels[rows] = 1 - labels[rows]
    return _require_two_classes(ds.with_labels(labels), "label flipping")


def split(ds: Dataset, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random partition into ``floor(train_frac * n)`` training rows and the rest.

    Both parts keep the original row order.
    """
    if not 0.0 < train_frac < 1.0:
        raise InvalidConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    k = _count(train_frac, ds.n)
    perm = make_rng(seed, _SPLIT_STREAM).permutation(ds.n)
    train = ds.subset(np.sort(perm[:k]))
    test = ds.subset(np.sort(perm[k:]))
    _require_two_classes(train, "split (train part)")
    _require_two_classes(test, "split (test part)")
    return train, test


# -- CSV ---------------------------------------------------------------------


def write_csv(ds: Dataset, path) -> None:
    header = "label," + ",".join(f"f{k}" for k in range(ds.dim))
    rows = [header]
    for label, x in zip(ds.labels, ds.features):
        rows.append(str(int(label)) + "," + ",".join(f"{v:.17g}" for v in x))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_csv(path) -> Dataset:
    """Read a dataset CSV; raises :class:`InvalidInputError` on malformed content."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidInputError(f"cannot read dataset {path}: {exc}") from exc
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise InvalidInputError(f"{path}: empty file")
    header = lines[0].strip().split(",")
    dim = len(header) - 1
    if header[0] != "label" or dim < 1 or header[1:] != [f"f{k}" for k in range(dim)]:
        raise InvalidInputError(f"{path}: header must be label,f0,...,f{{d-1}}")
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric entry ({exc})") from exc
    if data.size == 0:
        raise InvalidInputError(f"{path}: no data rows")
    if data.ndim != 2 or data.shape[1] != dim + 1:
        raise InvalidInputError(f"{path}: rows must have {dim + 1} columns")
    return Dataset.from_arrays(data[:, 1:], data[:, 0])
