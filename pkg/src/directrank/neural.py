"""Fully connected ReLU scoring network with exact backpropagation.

The network maps an input vector to a scalar score ``phi(x, w)``.  Hidden
layers use ReLU (derivative 0 at exactly 0); the output layer is linear.
Weights are stored as ``(d_in, d_out)`` matrices so a batch ``X`` of shape
``(n, d_in)`` propagates as ``X @ W + b``.

Random initialization draws every weight and bias i.i.d. from N(0, 1) with
numpy's PCG64 bit generator (``Generator.standard_normal``, ziggurat
sampling), layer by layer, weights before biases.  A given seed therefore
reproduces identical parameters with this package and numpy version.

Checkpoint format (text, UTF-8)::

    directrank-mlp v1
    dims 10 32 32 1
    W 0
    <d_in rows of d_out floats>
    b 0
    <one row of d_out floats>
    W 1
    ...

Values are written with 17 significant digits, which round-trips float64
exactly; rows are row-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError, InvalidConfigError, InvalidInputError
from .ranking import Interleaving, RankingInstance

CHECKPOINT_MAGIC = "directrank-mlp v1"

_SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, *stream) -> np.random.Generator:
    """PCG64 generator for ``seed`` (any 64-bit integer) and a stream tag."""
    return np.random.Generator(np.random.PCG64([int(seed) & _SEED_MASK, *stream]))


@dataclass(frozen=True)
class MlpParams:
    """Network parameters; also used to hold gradients of the same shape."""

    layer_dims: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(np.asarray(w, np.float64) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, np.float64) for b in self.biases))
        _check_dims(dims)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InvalidConfigError("need one weight matrix and bias vector per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[k], dims[k + 1]) or b.shape != (dims[k + 1],):
                raise InvalidConfigError(
                    f"layer {k}: got W{w.shape}, b{b.shape}, "
                    f"expected W{(dims[k], dims[k + 1])}, b{(dims[k + 1],)}"
                )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def unflatten(self, flat) -> "MlpParams":
        """Parameters with this layout filled from a flat vector."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise InvalidInputError(f"flat vector must have length {self.size}")
        weights, biases, at = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[at: at + w.size].reshape(w.shape))
            at += w.size
            biases.append(flat[at: at + b.size].copy())
            at += b.size
        return MlpParams(self.layer_dims, weights, biases)

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            self.layer_dims,
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
        )

    def _combine(self, other, op) -> "MlpParams":
        if not isinstance(other, MlpParams) or other.layer_dims != self.layer_dims:
            return NotImplemented
        return MlpParams(
            self.layer_dims,
            [op(a, b) for a, b in zip(self.weights, other.weights)],
            [op(a, b) for a, b in zip(self.biases, other.biases)],
        )

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return MlpParams(
            self.layer_dims,
            [scalar * w for w in self.weights],
            [scalar * b for b in self.biases],
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def sq_norm(self) -> float:
        return float(sum(np.sum(w * w) + np.sum(b * b) for w, b in zip(self.weights, self.biases)))

    def equals(self, other: "MlpParams") -> bool:
        """Bitwise equality of layout and every value."""
        return (
            self.layer_dims == other.layer_dims
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


@dataclass(frozen=True)
class ForwardCache:
    """Inputs, pre-activations and activations kept for the backward pass.

    All arrays are 2-d with one row per sample; ``activations[0]`` is the
    input batch and ``activations[k]`` the output of layer ``k``.
    """

    pre_activations: tuple
    activations: tuple


def _check_dims(dims) -> None:
    if len(dims) < 2:
        raise InvalidConfigError("layer_dims needs at least an input and an output dimension")
    if any(d < 1 for d in dims):
        raise InvalidConfigError(f"layer dimensions must be positive, got {list(dims)}")
    if dims[-1] != 1:
        raise InvalidConfigError(f"the output dimension must be 1, got {dims[-1]}")


def mlp_init(layer_dims, seed: int) -> MlpParams:
    """Standard-normal parameters for a network with the given layer sizes."""
    dims = tuple(int(d) for d in layer_dims)
    _check_dims(dims)
    rng = make_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((d_in, d_out)))
        biases.append(rng.standard_normal(d_out))
    return MlpParams(dims, weights, biases)


def layer_dims_for(input_dim: int, hidden) -> tuple:
    return (int(input_dim), *(int(h) for h in hidden), 1)


def forward_batch(params: MlpParams, X) -> tuple[np.ndarray, ForwardCache]:
    """Scores of every row of ``X`` plus the cache needed by :func:`backward`."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InvalidInputError(
            f"expected inputs of shape (n, {params.input_dim}), got {X.shape}"
        )
    pre, act = [], [X]
    a = X
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        act.append(a)
    return a[:, 0].copy(), ForwardCache(tuple(pre), tuple(act))


def forward(params: MlpParams, x) -> tuple[float, ForwardCache]:
    """Score of a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-d input vector, got shape {x.shape}")
    phi, cache = forward_batch(params, x[None, :])
    return float(phi[0]), cache


def scores(params: MlpParams, X) -> np.ndarray:
    return forward_batch(params, X)[0]


def backward(params: MlpParams, cache: ForwardCache, upstream) -> MlpParams:
    """Gradient of ``sum_i upstream_i * phi(x_i)`` with respect to the parameters.

    ``upstream`` is a scalar for a single-sample cache or one coefficient
    per cached sample.
    """
    n = cache.activations[0].shape[0]
    up = np.asarray(upstream, dtype=np.float64).reshape(-1)
    if up.size == 1 and n != 1:
        raise InvalidInputError("a scalar upstream needs a single-sample cache")
    if up.size != n:
        raise InvalidInputError(f"need {n} upstream coefficients, got {up.size}")
    if len(cache.pre_activations) != params.n_layers:
        raise InvalidInputError("cache does not match the network depth")

    delta = up[:, None]
    d_weights = [None] * params.n_layers
    d_biases = [None] * params.n_layers
    for k in range(params.n_layers - 1, -1, -1):
        d_weights[k] = cache.activations[k].T @ delta
        d_biases[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k].T) * (cache.pre_activations[k - 1] > 0.0)
    return MlpParams(params.layer_dims, d_weights, d_biases)


def grad_F(params: MlpParams, X, inst: RankingInstance, y: Interleaving,
           cache: ForwardCache | None = None) -> MlpParams:
    """Gradient of the pairwise ranking score F(x, y, w).

    ``inst`` must be built from the scores of ``X`` under ``params``; its
    sample ids index rows of ``X``.  Pass the forward ``cache`` to reuse it.
    """
    X = np.asarray(X, dtype=np.float64)
    if inst.size != X.shape[0] or len(y) != X.shape[0]:
        raise InvalidInputError(
            f"batch of {X.shape[0]} samples does not match instance/interleaving sizes "
            f"{inst.size}/{len(y)}"
        )
    if cache is None:
        _, cache = forward_batch(params, X)
    return backward(params, cache, sample_coefficients(inst, y))


def sample_coefficients(inst: RankingInstance, y: Interleaving) -> np.ndarray:
    """Weight of each sample's score in F, indexed by sample id."""
    if y.n_pos != inst.n_pos or y.n_neg != inst.n_neg:
        raise InvalidInputError("interleaving counts do not match the instance")
    c_pos, c_neg = y.coefficients()
    coef = np.zeros(inst.size)
    coef[inst.pos_ids] = c_pos
    coef[inst.neg_ids] = c_neg
    return coef


# -- checkpoints -------------------------------------------------------------


def _fmt_row(values) -> str:
    return " ".join(f"{v:.17g}" for v in values)


def save_checkpoint(params: MlpParams, path) -> None:
    lines = [CHECKPOINT_MAGIC, "dims " + " ".join(str(d) for d in params.layer_dims)]
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"W {k}")
        lines.extend(_fmt_row(row) for row in w)
        lines.append(f"b {k}")
        lines.append(_fmt_row(b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> MlpParams:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: missing '{CHECKPOINT_MAGIC}' header")
    try:
        head, *dims = lines[1].split()
        if head != "dims":
            raise ValueError("expected a dims line")
        dims = [int(d) for d in dims]
        _check_dims(dims)
        at = 2
        weights, biases = [], []
        for k, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            if lines[at].split() != ["W", str(k)]:
                raise ValueError(f"expected 'W {k}' at line {at + 1}")
            w = np.array([[float(v) for v in lines[at + 1 + r].split()] for r in range(d_in)])
            at += 1 + d_in
            if lines[at].split() != ["b", str(k)]:
                raise ValueError(f"expected 'b {k}' at line {at + 1}")
            b = np.array([float(v) for v in lines[at + 1].split()])
            at += 2
            weights.append(w.reshape(d_in, d_out))
            biases.append(b.reshape(d_out))
        if any(line.strip() for line in lines[at:]):
            raise ValueError("trailing content after the last layer")
        return MlpParams(dims, weights, biases)
    except (ValueError, IndexError, InvalidConfigError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
