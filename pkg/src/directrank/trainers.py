"""Training methods for the scoring network.

Every step function has the signature ``step(params, X, labels, cfg)`` and
returns a :class:`StepResult` whose ``grad`` is to be *subtracted* from the
parameters (gradient descent) and whose ``objective`` is the value of the
surrogate being descended on the batch, L2 penalty included.

Methods
-------
pos-ap, neg-ap
    Direct loss minimization of the AP loss: ``+/-(1/eps) * (grad F(y_direct)
    - grad F(y_w))`` where ``y_w`` is the score sort and ``y_direct`` the AP
    loss-augmented optimum with sign ``+/-``.
pos-01, neg-01
    The same update for the 0-1 loss with the decomposable score
    ``F(y) = (1/N) sum_i y_i phi_i``, ``y_i`` in {-1, +1}.
hinge-ap, hinge-01
    Structured hinge: ``grad F(y_aug) - grad F(y_truth)`` when the margin is
    violated, with ``y_aug = argmax F + L``.
per-ap, per-01
    Structured perceptron: ``grad F(y_w) - grad F(y_truth)``.
xent
    Mean binary cross-entropy of ``sigmoid(phi)``.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .exceptions import InvalidConfigError, SkipStep, TrainingDiverged
from .inference import LossAugConfig, Sign, dp_loss_augmented, predicted_interleaving
from .metrics import average_precision
from .neural import MlpParams, backward, forward_batch, make_rng, sample_coefficients, scores
from .ranking import Interleaving, RankingInstance, score_F
from .synthdata import Dataset

log = logging.getLogger(__name__)

_BATCH_STREAM = 7


class Method(str, enum.Enum):
    POS_AP = "pos-ap"
    NEG_AP = "neg-ap"
    POS_01 = "pos-01"
    NEG_01 = "neg-01"
    HINGE_AP = "hinge-ap"
    HINGE_01 = "hinge-01"
    PER_AP = "per-ap"
    PER_01 = "per-01"
    XENT = "xent"

    @property
    def is_direct(self) -> bool:
        return self in _DIRECT

    @property
    def sign(self) -> Sign:
        return Sign.NEGATIVE if self in (Method.NEG_AP, Method.NEG_01) else Sign.POSITIVE


_DIRECT = frozenset({Method.POS_AP, Method.NEG_AP, Method.POS_01, Method.NEG_01})


class TaskLoss(str, enum.Enum):
    AP = "ap"
    ZERO_ONE = "01"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``batch_size=None`` trains on the full training set every iteration;
    otherwise each iteration draws ``batch_size`` distinct samples uniformly
    and the batch AP stands in for the full AP.
    """

    method: Method
    learning_rate: float
    iterations: int
    epsilon: float | None = None
    l2_weight: float = 0.0
    batch_size: int | None = None
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.method.is_direct:
            if self.epsilon is None or not (self.epsilon > 0 and math.isfinite(self.epsilon)):
                raise InvalidConfigError(f"{self.method.value} needs a positive epsilon")
        elif self.epsilon is not None:
            raise InvalidConfigError(f"{self.method.value} takes no epsilon")
        if not self.learning_rate >= 0:
            raise InvalidConfigError("learning_rate must be non-negative")
        if not self.l2_weight >= 0:
            raise InvalidConfigError("l2_weight must be non-negative")
        if self.iterations < 1:
            raise InvalidConfigError("iterations must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidConfigError("batch_size must be positive or None (full batch)")
        if self.eval_every < 1:
            raise InvalidConfigError("eval_every must be positive")


class StepResult(NamedTuple):
    grad: MlpParams
    objective: float


def _with_l2(params: MlpParams, grad: MlpParams, objective: float, cfg: TrainConfig) -> StepResult:
    if cfg.l2_weight == 0.0:
        return StepResult(grad, objective)
    return StepResult(grad + params * (2.0 * cfg.l2_weight),
                      objective + cfg.l2_weight * params.sq_norm())


def l2_gradient(params: MlpParams, l2_weight: float) -> MlpParams:
    return params * (2.0 * l2_weight)


def _ranking(phi: np.ndarray, labels) -> RankingInstance:
    inst = RankingInstance.from_scores(phi, labels)
    if inst.n_pos == 0 or inst.n_neg == 0:
        raise SkipStep(f"batch holds a single class (pos={inst.n_pos}, neg={inst.n_neg})")
    return inst


def _signs(labels) -> np.ndarray:
    return 2.0 * np.asarray(labels, dtype=np.float64) - 1.0


def _predict_signs(phi: np.ndarray) -> np.ndarray:
    # a score of exactly 0 predicts the negative class
    return np.where(phi > 0.0, 1.0, -1.0)


def _augment_signs(phi: np.ndarray, truth: np.ndarray, signed_eps: float) -> np.ndarray:
    """Per-sample argmax of ``y_i phi_i + signed_eps * [y_i != truth_i]``.

    Ties go to -1, matching :func:`_predict_signs`.
    """
    plus = phi + signed_eps * (truth < 0)
    minus = -phi + signed_eps * (truth > 0)
    return np.where(plus > minus, 1.0, -1.0)


def _f01(phi: np.ndarray, y: np.ndarray) -> float:
    return float(y @ phi) / phi.size


def _loss01(y: np.ndarray, truth: np.ndarray) -> float:
    return float(np.count_nonzero(y != truth)) / y.size


# -- direct loss minimization ------------------------------------------------


def direct_loss_step_ap(params: MlpParams, X, labels, cfg: TrainConfig,
                        sign: Sign | None = None) -> StepResult:
    """Finite-epsilon direct loss gradient for the AP loss.

    The objective is the ramp ``+/-(1/eps) [max(F +/- eps L) - max F]``.
    ``sign`` defaults to the one implied by ``cfg.method``.
    """
    sign = cfg.method.sign if sign is None else Sign(sign)
    phi, cache = forward_batch(params, X)
    inst = _ranking(phi, labels)
    y_w = predicted_interleaving(inst)
    y_direct, aug_value = dp_loss_augmented(inst, LossAugConfig(cfg.epsilon, sign))
    scale = float(sign) / cfg.epsilon
    ramp = scale * (aug_value - score_F(inst, y_w))
    if y_direct == y_w:
        coef = np.zeros(inst.size)
    else:
        coef = scale * (sample_coefficients(inst, y_direct) - sample_coefficients(inst, y_w))
    return _with_l2(params, backward(params, cache, coef), ramp, cfg)


def direct_loss_step_01(params: MlpParams, X, labels, cfg: TrainConfig,
                        sign: Sign | None = None) -> StepResult:
    """Finite-epsilon direct loss gradient for the 0-1 loss.

    With the decomposable score, loss-augmented inference compares
    ``y_i phi_i +/- eps [y_i != truth_i]`` per sample.
    """
    sign = cfg.method.sign if sign is None else Sign(sign)
    phi, cache = forward_batch(params, X)
    truth = _signs(labels)
    signed_eps = float(sign) * cfg.epsilon
    y_w = _predict_signs(phi)
    y_direct = _augment_signs(phi, truth, signed_eps)
    scale = float(sign) / cfg.epsilon
    aug_value = _f01(phi, y_direct) + signed_eps * _loss01(y_direct, truth)
    ramp = scale * (aug_value - _f01(phi, y_w))
    coef = scale * (y_direct - y_w) / phi.size
    return _with_l2(params, backward(params, cache, coef), ramp, cfg)


# -- surrogate baselines -----------------------------------------------------


def hinge_step(params: MlpParams, X, labels, cfg: TrainConfig,
               task_loss: TaskLoss = TaskLoss.AP) -> StepResult:
    """Structured hinge (margin rescaling, unit loss scale)."""
    task_loss = TaskLoss(task_loss)
    phi, cache = forward_batch(params, X)
    if task_loss is TaskLoss.AP:
        inst = _ranking(phi, labels)
        y_gt = Interleaving.positives_first(inst.n_pos, inst.n_neg)
        y_aug, aug_value = dp_loss_augmented(inst, LossAugConfig(1.0, Sign.POSITIVE))
        violation = aug_value - score_F(inst, y_gt)
        if violation > 0.0 and y_aug != y_gt:
            coef = sample_coefficients(inst, y_aug) - sample_coefficients(inst, y_gt)
        else:
            coef = np.zeros(inst.size)
    else:
        truth = _signs(labels)
        y_aug = _augment_signs(phi, truth, 1.0)
        violation = _f01(phi, y_aug) + _loss01(y_aug, truth) - _f01(phi, truth)
        coef = (y_aug - truth) / phi.size if violation > 0.0 else np.zeros(phi.size)
    return _with_l2(params, backward(params, cache, coef), max(violation, 0.0), cfg)


def perceptron_step(params: MlpParams, X, labels, cfg: TrainConfig,
                    task_loss: TaskLoss = TaskLoss.AP) -> StepResult:
    """Structured perceptron: descend on ``F(y_w) - F(y_truth)``."""
    task_loss = TaskLoss(task_loss)
    phi, cache = forward_batch(params, X)
    if task_loss is TaskLoss.AP:
        inst = _ranking(phi, labels)
        y_gt = Interleaving.positives_first(inst.n_pos, inst.n_neg)
        y_w = predicted_interleaving(inst)
        gap = score_F(inst, y_w) - score_F(inst, y_gt)
        if y_w == y_gt:
            coef = np.zeros(inst.size)
        else:
            coef = sample_coefficients(inst, y_w) - sample_coefficients(inst, y_gt)
    else:
        truth = _signs(labels)
        y_w = _predict_signs(phi)
        gap = _f01(phi, y_w) - _f01(phi, truth)
        coef = (y_w - truth) / phi.size
    return _with_l2(params, backward(params, cache, coef), gap, cfg)


def cross_entropy_step(params: MlpParams, X, labels, cfg: TrainConfig) -> StepResult:
    phi, cache = forward_batch(params, X)
    y = np.asarray(labels, dtype=np.float64)
    coef = (expit(phi) - y) / phi.size
    nll = float(np.mean(np.logaddexp(0.0, phi) - y * phi))
    return _with_l2(params, backward(params, cache, coef), nll, cfg)


def step(params: MlpParams, X, labels, cfg: TrainConfig) -> StepResult:
    """Dispatch to the step function of ``cfg.method``."""
    m = cfg.method
    if m in (Method.POS_AP, Method.NEG_AP):
        return direct_loss_step_ap(params, X, labels, cfg)
    if m in (Method.POS_01, Method.NEG_01):
        return direct_loss_step_01(params, X, labels, cfg)
    if m is Method.HINGE_AP:
        return hinge_step(params, X, labels, cfg, TaskLoss.AP)
    if m is Method.HINGE_01:
        return hinge_step(params, X, labels, cfg, TaskLoss.ZERO_ONE)
    if m is Method.PER_AP:
        return perceptron_step(params, X, labels, cfg, TaskLoss.AP)
    if m is Method.PER_01:
        return perceptron_step(params, X, labels, cfg, TaskLoss.ZERO_ONE)
    return cross_entropy_step(params, X, labels, cfg)


# -- training loop -----------------------------------------------------------

LOG_HEADER = "iter,train_ap,test_ap,objective,wall_ms"


class LogRecord(NamedTuple):
    iteration: int
    train_ap: float
    test_ap: float
    objective: float
    wall_ms: float


@dataclass
class RunLog:
    """Per-evaluation metrics of a run plus the final parameters.

    Record 0 describes the initial parameters and has no objective (NaN).
    Record ``t`` describes the parameters after ``t`` updates; its objective
    is the surrogate value on the batch of update ``t``.
    """

    records: list = field(default_factory=list)
    params: MlpParams | None = None
    skipped: int = 0

    def final(self) -> LogRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        lines = [LOG_HEADER]
        for r in self.records:
            lines.append(f"{r.iteration},{r.train_ap:.17g},{r.test_ap:.17g},"
                         f"{r.objective:.17g},{r.wall_ms:.17g}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def run_training(train: Dataset, test: Dataset, params: MlpParams, cfg: TrainConfig,
                 record_time: bool = True) -> RunLog:
    """Plain SGD on ``cfg.method`` for exactly ``cfg.iterations`` updates.

    ``w <- w - learning_rate * grad`` each iteration.  Batches with a single
    class are skipped (logged, counted in ``RunLog.skipped``).  Raises
    :class:`TrainingDiverged` once parameters or scores stop being finite.  With
    ``record_time=False`` the ``wall_ms`` column is 0, making the log a pure
    function of its inputs.
    """
    if train.dim != params.input_dim or test.dim != params.input_dim:
        raise InvalidConfigError(
            f"feature dimensions train={train.dim}, test={test.dim} do not match "
            f"the network input {params.input_dim}"
        )
    rng = make_rng(cfg.seed, _BATCH_STREAM)
    start = time.perf_counter()
    runlog = RunLog(params=params)

    def record(t: int, objective: float) -> None:
        wall = (time.perf_counter() - start) * 1e3 if record_time else 0.0
        train_phi = scores(runlog.params, train.features)
        test_phi = scores(runlog.params, test.features)
        if not (np.all(np.isfinite(train_phi)) and np.all(np.isfinite(test_phi))):
            raise TrainingDiverged(f"non-finite scores after {t} iterations")
        runlog.records.append(LogRecord(
            t,
            average_precision(train_phi, train.labels),
            average_precision(test_phi, test.labels),
            objective,
            wall,
        ))

    full_batch = cfg.batch_size is None or cfg.batch_size >= train.n
    with np.errstate(over="ignore", invalid="ignore"):
        record(0, math.nan)
        for t in range(1, cfg.iterations + 1):
            if full_batch:
                X, y = train.features, train.labels
            else:
                rows = np.sort(rng.choice(train.n, size=cfg.batch_size, replace=False))
                X, y = train.features[rows], train.labels[rows]
            try:
                result = step(runlog.params, X, y, cfg)
            except SkipStep as exc:
                runlog.skipped += 1
                log.warning("iteration %d skipped: %s", t, exc)
                objective = math.nan
            else:
                runlog.params = runlog.params - result.grad * cfg.learning_rate
                objective = result.objective
                if not np.all(np.isfinite(runlog.params.flatten())):
                    raise TrainingDiverged(f"non-finite parameters after {t} iterations")
            if t % cfg.eval_every == 0 or t == cfg.iterations:
                record(t, objective)
    return runlog


def grid_search(train: Dataset, test: Dataset, params: MlpParams, cfg: TrainConfig,
                learning_rates, record_time: bool = True) -> tuple[float, RunLog]:
    """Train once per learning rate; keep the run with the best final train AP.

    Ties keep the earliest learning rate in ``learning_rates``; diverged
    runs are dropped.
    """
    best = None
    for lr in learning_rates:
        try:
            runlog = run_training(train, test, params, replace(cfg, learning_rate=float(lr)),
                                  record_time=record_time)
        except TrainingDiverged as exc:
            log.info("%s at learning rate %g diverged: %s", cfg.method.value, lr, exc)
            continue
        if best is None or runlog.final().train_ap > best[1].final().train_ap:
            best = (float(lr), runlog)
    if best is None:
        raise TrainingDiverged(f"{cfg.method.value}: every learning rate diverged")
    return best
