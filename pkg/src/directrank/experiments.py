"""Desk-scale versions of the two synthetic comparisons.

``clean_teacher_comparison`` trains several methods on teacher-network data
and reports final test AP; ``noisy_norm_comparison`` does the same on the
norm-threshold data after flipping a fraction of the training labels.  Each
method gets a 3-point learning-rate grid and the run with the best final
*training* AP is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

from .neural import layer_dims_for, mlp_init
from .synthdata import flip_labels, gen_norm_threshold, gen_teacher, split
from .trainers import Method, TrainConfig, grid_search

HIDDEN = (32, 32, 32, 32)
ITERATIONS = 300

# grids bracket each method's stable step sizes; gradient scales differ by orders of magnitude
CLEAN_LR_GRID = {
    Method.POS_AP: (0.3, 1.0, 3.0),
    Method.NEG_AP: (0.3, 1.0, 3.0),
    Method.HINGE_AP: (1e-3, 3e-3, 1e-2),
    Method.PER_AP: (1e-3, 3e-3, 1e-2),
    Method.XENT: (1e-4, 1e-3, 1e-2),
}
CLEAN_EPSILON = 0.1

NOISY_LR_GRID = {
    Method.POS_AP: (0.3, 1.0, 3.0),
    Method.HINGE_AP: (1e-4, 3e-4, 1e-3),
}
# norm-threshold inputs have scale ~10, so scores are far larger than on teacher data
NOISY_EPSILON = 1.0
NOISY_L2 = 1e-3


@dataclass(frozen=True)
class MethodResult:
    method: Method
    learning_rate: float
    final_train_ap: float
    final_test_ap: float


def _student_seed(seed: int) -> int:
    return seed + 1000


def _compare(train, test, methods, grids, epsilon, l2, seed, iterations):
    params = mlp_init(layer_dims_for(train.dim, HIDDEN), _student_seed(seed))
    out = {}
    for method in methods:
        method = Method(method)
        cfg = TrainConfig(
            method=method,
            learning_rate=0.0,
            iterations=iterations,
            epsilon=epsilon if method.is_direct else None,
            l2_weight=l2,
            seed=seed,
            eval_every=iterations,
        )
        lr, runlog = grid_search(train, test, params, cfg, grids[method], record_time=False)
        final = runlog.final()
        out[method] = MethodResult(method, lr, final.train_ap, final.test_ap)
    return out


def clean_teacher_comparison(seed: int, methods=(Method.POS_AP, Method.HINGE_AP,
                                                 Method.XENT, Method.PER_AP),
                             n: int = 4000, iterations: int = ITERATIONS):
    ds = gen_teacher(n, dim=10, hidden=32, pos_frac=0.2, seed=seed)
    train, test = split(ds, 0.5, seed)
    return _compare(train, test, methods, CLEAN_LR_GRID, CLEAN_EPSILON, 0.0, seed, iterations)


def noisy_norm_comparison(seed: int, flip: float, methods=(Method.POS_AP, Method.HINGE_AP),
                          n: int = 1000, iterations: int = ITERATIONS):
    ds = gen_norm_threshold(n, seed=seed)
    train, test = split(ds, 0.5, seed)
    train = flip_labels(train, flip, seed)
    return _compare(train, test, methods, NOISY_LR_GRID, NOISY_EPSILON, NOISY_L2, seed, iterations)
