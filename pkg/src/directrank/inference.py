"""Standard and AP loss-augmented inference.

Loss-augmented inference solves ``argmax_y F(y) +/- eps * L_AP(y)``.  Only
interleavings of the two descending-sorted class lists need to be searched,
and the optimum over the first ``i`` positives and ``j`` negatives extends an
optimum over a shorter prefix.  That gives the table recursion

    h(i, j) = max( h(i-1, j) -/+ (eps/|P|) * i/(i+j) + B(i, j),
                   h(i, j-1) + G(i, j) )

where ``B(i, j)`` (``G(i, j)``) is the change in F when the i-th positive
(j-th negative) is appended.  ``h(0, 0) = 0``; the constant ``+/- eps`` of the
AP loss is added to ``h(|P|, |N|)`` when the objective is reported.

The brute-force routines enumerate the interleaving space and the full
permutation space and exist to certify the recursion.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .exceptions import InvalidInputError, SizeError
from .ranking import (
    Interleaving,
    RankingInstance,
    descending_order,
    interleaving_ap_loss,
    score_F,
)

FROM_NEG = 0
FROM_POS = 1

MAX_ENUMERATION = 10**6


class Sign(enum.IntEnum):
    POSITIVE = 1
    NEGATIVE = -1


@dataclass(frozen=True)
class LossAugConfig:
    epsilon: float
    sign: Sign = Sign.POSITIVE

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidInputError(f"epsilon must be a positive finite number, got {self.epsilon}")
        object.__setattr__(self, "sign", Sign(self.sign))

    @property
    def signed_epsilon(self) -> float:
        return float(self.sign) * float(self.epsilon)


@dataclass(frozen=True)
class DPState:
    """Filled tables of the recursion.

    ``h``, ``B``, ``G`` and ``back`` all have shape ``(|P|+1, |N|+1)``;
    ``back[i, j]`` records whether the optimum for the prefix ending at
    ``(i, j)`` was reached by appending a positive or a negative.
    """

    h: np.ndarray
    B: np.ndarray
    G: np.ndarray
    back: np.ndarray


def augmented_objective(inst: RankingInstance, y: Interleaving, cfg: LossAugConfig) -> float:
    """``F(y) +/- eps * L_AP(y)`` evaluated directly from the definitions."""
    return score_F(inst, y) + cfg.signed_epsilon * interleaving_ap_loss(y)


def standard_inference(scores) -> np.ndarray:
    """Ranking permutation maximizing F: a stable descending sort."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise InvalidInputError("standard inference needs a non-empty score vector")
    return descending_order(scores)


def predicted_interleaving(inst: RankingInstance) -> Interleaving:
    """The interleaving of ``inst`` produced by standard inference."""
    inst.require_both_classes()
    scores = np.concatenate([inst.pos_scores, inst.neg_scores])
    labels = np.concatenate([np.ones(inst.n_pos, np.int8), np.zeros(inst.n_neg, np.int8)])
    # sample ids break score ties, as in the instance's own sort
    ids = np.concatenate([inst.pos_ids, inst.neg_ids])
    order = np.lexsort((ids, -scores))
    return Interleaving(labels[order])


def precompute_BG(inst: RankingInstance) -> tuple[np.ndarray, np.ndarray]:
    """Score increments for appending a positive (B) or a negative (G).

    ``B(i, j) = B(i, j-1) - d(i, j)`` and ``G(i, j) = G(i-1, j) + d(i, j)``
    with ``d(i, j) = (phi_pos_i - phi_neg_j) / (|P||N|)`` and zero first
    column / first row respectively.
    """
    inst.require_both_classes()
    n_pos, n_neg = inst.n_pos, inst.n_neg
    d = np.zeros((n_pos + 1, n_neg + 1))
    d[1:, 1:] = np.subtract.outer(inst.pos_scores, inst.neg_scores) / (float(n_pos) * n_neg)
    B = 0.0 - np.cumsum(d, axis=1)
    G = np.cumsum(d, axis=0)
    B[0, :] = 0.0
    G[:, 0] = 0.0
    return B, G


@numba.njit(cache=True)
def _fill_tables(pos, neg, signed_eps):
    n_pos = pos.shape[0]
    n_neg = neg.shape[0]
    norm = float(n_pos) * float(n_neg)
    per_pos = signed_eps / n_pos
    h = np.empty((n_pos + 1, n_neg + 1))
    back = np.empty((n_pos + 1, n_neg + 1), dtype=np.uint8)
    g = np.zeros(n_neg + 1)
    h[0, 0] = 0.0
    back[0, 0] = FROM_POS
    for j in range(1, n_neg + 1):
        h[0, j] = h[0, j - 1]
        back[0, j] = FROM_NEG
    for i in range(1, n_pos + 1):
        b = 0.0
        h[i, 0] = h[i - 1, 0] - per_pos
        back[i, 0] = FROM_POS
        p_i = pos[i - 1]
        for j in range(1, n_neg + 1):
            d = (p_i - neg[j - 1]) / norm
            b -= d
            g[j] += d
            take_pos = h[i - 1, j] - per_pos * i / (i + j) + b
            take_neg = h[i, j - 1] + g[j]
            if take_pos >= take_neg:
                h[i, j] = take_pos
                back[i, j] = FROM_POS
            else:
                h[i, j] = take_neg
                back[i, j] = FROM_NEG
    return h, back


@numba.njit(cache=True)
def _backtrack(back):
    i = back.shape[0] - 1
    j = back.shape[1] - 1
    bits = np.empty(i + j, dtype=np.int8)
    t = i + j
    while t > 0:
        t -= 1
        if i > 0 and (j == 0 or back[i, j] == FROM_POS):
            bits[t] = 1
            i -= 1
        else:
            bits[t] = 0
            j -= 1
    return bits


def solve_dp(inst: RankingInstance, cfg: LossAugConfig) -> DPState:
    """Fill all tables of the recursion, including B and G."""
    inst.require_both_classes()
    h, back = _fill_tables(inst.pos_scores, inst.neg_scores, cfg.signed_epsilon)
    B, G = precompute_BG(inst)
    return DPState(h=h, B=B, G=G, back=back)


def backtrack(state: DPState) -> Interleaving:
    return Interleaving(_backtrack(state.back))


def dp_loss_augmented(inst: RankingInstance, cfg: LossAugConfig) -> tuple[Interleaving, float]:
    """Exact AP loss-augmented inference in O(|P||N|) time.

    Returns the maximizing interleaving and its value ``F +/- eps * L_AP``.
    Branch ties go to appending a positive.
    """
    inst.require_both_classes()
    h, back = _fill_tables(
        np.ascontiguousarray(inst.pos_scores), np.ascontiguousarray(inst.neg_scores),
        cfg.signed_epsilon,
    )
    y = Interleaving(_backtrack(back))
    return y, float(h[-1, -1] + cfg.signed_epsilon)


# -- exhaustive oracles ------------------------------------------------------


def _interleaving_candidates(n_pos: int, n_neg: int, chunk: int):
    combos = itertools.combinations(range(n_pos + n_neg), n_pos)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            return
        yield block.reshape(-1, n_pos)


def brute_force_interleavings(
    inst: RankingInstance, cfg: LossAugConfig, epsilon_override: float | None = None
) -> tuple[Interleaving, float]:
    """Maximize ``F +/- eps * L_AP`` by enumerating every interleaving.

    Candidates are visited in lexicographic order of their positive
    positions (all-positives-first comes first); the first maximizer wins.
    ``epsilon_override`` allows ``eps = 0``, which :class:`LossAugConfig`
    rejects.
    """
    inst.require_both_classes()
    n_pos, n_neg = inst.n_pos, inst.n_neg
    n = n_pos + n_neg
    if math.comb(n, n_pos) > MAX_ENUMERATION:
        raise SizeError(f"C({n}, {n_pos}) interleavings exceed {MAX_ENUMERATION}")
    signed_eps = cfg.signed_epsilon if epsilon_override is None else float(cfg.sign) * epsilon_override
    norm = float(n_pos) * n_neg
    ks = np.arange(n_pos)
    ms = np.arange(n_neg)

    best_val = -np.inf
    best_pos = None
    for pos_at in _interleaving_candidates(n_pos, n_neg, chunk=1 << 15):
        bits = np.zeros((pos_at.shape[0], n), dtype=np.int8)
        np.put_along_axis(bits, pos_at, 1, axis=1)
        neg_at = np.argsort(bits, axis=1, kind="stable")[:, :n_neg]
        c_pos = (n_neg - 2.0 * (pos_at - ks)) / norm
        c_neg = (n_pos - 2.0 * (neg_at - ms)) / norm
        F = c_pos @ inst.pos_scores + c_neg @ inst.neg_scores
        loss = 1.0 - ((ks + 1.0) / (pos_at + 1.0)).sum(axis=1) / n_pos
        vals = F + signed_eps * loss
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_pos = pos_at[k]
    bits = np.zeros(n, dtype=np.int8)
    bits[best_pos] = 1
    return Interleaving(bits), best_val


@lru_cache(maxsize=16)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int8)


def brute_force_all_rankings(
    inst: RankingInstance, cfg: LossAugConfig, epsilon_override: float | None = None
) -> float:
    """Maximize ``F +/- eps * L_AP`` over every complete ranking of the samples.

    Unlike :func:`brute_force_interleavings` this does not assume that each
    class appears in score order, so it checks that assumption.
    """
    inst.require_both_classes()
    n_pos, n_neg = inst.n_pos, inst.n_neg
    n = n_pos + n_neg
    if math.factorial(n) > MAX_ENUMERATION:
        raise SizeError(f"{n}! rankings exceed {MAX_ENUMERATION}")
    signed_eps = cfg.signed_epsilon if epsilon_override is None else float(cfg.sign) * epsilon_override
    # samples 0..|P|-1 are the positives, the rest negatives; scores in any order work
    perms = _permutations(n)
    where = np.argsort(perms, axis=1)  # rank position of every sample
    pos_where = where[:, :n_pos]
    neg_where = where[:, n_pos:]
    diff = np.subtract.outer(inst.pos_scores, inst.neg_scores)
    above = pos_where[:, :, None] < neg_where[:, None, :]
    F = np.where(above, diff, -diff).sum(axis=(1, 2)) / (float(n_pos) * n_neg)
    relevant = perms < n_pos
    hits = np.cumsum(relevant, axis=1)
    prec = hits / np.arange(1.0, n + 1.0)
    loss = 1.0 - np.where(relevant, prec, 0.0).sum(axis=1) / n_pos
    return float(np.max(F + signed_eps * loss))


# -- certification -----------------------------------------------------------

ORACLE_EPSILONS = (0.01, 0.1, 1.0, 10.0)


def prefix_objective(inst: RankingInstance, bits, cfg: LossAugConfig) -> float:
    """Restricted objective of a prefix interleaving, as tabulated in ``h``.

    The prefix covers the first ``i`` positives and ``j`` negatives; pair
    terms keep the full ``1/(|P||N|)`` normalization and the constant of the
    AP loss is left out.
    """
    bits = np.asarray(bits, dtype=np.int8)
    i = int(np.count_nonzero(bits))
    j = int(bits.size - i)
    norm = float(inst.n_pos) * inst.n_neg
    total = 0.0
    pos_seen = neg_seen = 0
    for t, b in enumerate(bits):
        if b:
            pos_seen += 1
            total -= cfg.signed_epsilon / inst.n_pos * pos_seen / (t + 1)
        else:
            neg_seen += 1
    pos_at = np.flatnonzero(bits == 1)
    neg_at = np.flatnonzero(bits == 0)
    for k in range(i):
        for m in range(j):
            y = 1.0 if pos_at[k] < neg_at[m] else -1.0
            total += y * (inst.pos_scores[k] - inst.neg_scores[m]) / norm
    return total


@dataclass
class CertificationReport:
    """Outcome of :func:`certify_dp`; ``failures`` holds human-readable lines."""

    checks: int = 0
    max_deviation: float = 0.0
    failures: list = None

    def __post_init__(self):
        if self.failures is None:
            self.failures = []

    @property
    def passed(self) -> bool:
        return not self.failures

    def note(self, deviation: float, tol: float, describe) -> None:
        self.checks += 1
        self.max_deviation = max(self.max_deviation, deviation)
        if not deviation <= tol:
            self.failures.append(describe() + f" deviation={deviation:.3e}")


def certify_dp(max_p: int, max_n: int, trials: int, seed: int, full_perm: bool = False,
               epsilons=ORACLE_EPSILONS, perm_epsilons=None, tol: float = 1e-9,
               check_prefixes: bool = True, solver=None) -> CertificationReport:
    """Compare the DP against the exhaustive oracles on random instances.

    For every ``1 <= p <= max_p``, ``1 <= n <= max_n`` and trial, scores are
    drawn i.i.d. N(0, 1).  For both signs and every epsilon it checks that
    the DP objective equals the interleaving optimum, that the returned
    interleaving evaluates to that objective, and (``check_prefixes``) that
    each prefix of it attains the tabulated ``h``.  With ``full_perm`` the
    permutation optimum must not exceed the DP objective for ``p + n <= 7``,
    using ``perm_epsilons`` (default: ``epsilons``).  ``solver`` replaces
    :func:`dp_loss_augmented` and exists for negative controls.
    """
    from .neural import make_rng

    solver = dp_loss_augmented if solver is None else solver
    perm_epsilons = epsilons if perm_epsilons is None else perm_epsilons
    rng = make_rng(seed, 11)
    report = CertificationReport()
    for p in range(1, max_p + 1):
        for n in range(1, max_n + 1):
            labels = np.r_[np.ones(p, np.int8), np.zeros(n, np.int8)]
            for _ in range(trials):
                raw = rng.standard_normal(p + n)
                inst = RankingInstance.from_scores(raw, labels)
                for sign in (Sign.POSITIVE, Sign.NEGATIVE):
                    for eps in sorted(set(epsilons) | (set(perm_epsilons) if full_perm else set())):
                        cfg = LossAugConfig(eps, sign)

                        def describe(what, raw=raw, cfg=cfg):
                            return (f"{what}: scores={np.array2string(raw, precision=17)} "
                                    f"labels={labels.tolist()} eps={cfg.epsilon} sign={cfg.sign.name}")

                        y, value = solver(inst, cfg)
                        if eps in epsilons:
                            _, best = brute_force_interleavings(inst, cfg)
                            report.note(abs(value - best), tol, lambda: describe("dp vs interleavings"))
                            direct = augmented_objective(inst, y, cfg)
                            report.note(abs(direct - value), tol, lambda: describe("dp solution value"))
                            if check_prefixes:
                                state = solve_dp(inst, cfg)
                                worst = 0.0
                                for t in range(1, len(y) + 1):
                                    i = int(np.count_nonzero(y.bits[:t]))
                                    worst = max(worst, abs(prefix_objective(inst, y.bits[:t], cfg)
                                                           - state.h[i, t - i]))
                                report.note(worst, tol, lambda: describe("prefix optimality"))
                        if full_perm and eps in perm_epsilons and p + n <= 7:
                            excess = brute_force_all_rankings(inst, cfg) - value
                            report.note(max(excess, 0.0), tol, lambda: describe("permutation oracle"))
    return report
