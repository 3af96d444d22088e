"""
Loss-augmented inference for average precision
===============================================

Walks through the two-sample case by hand, then checks the table recursion
against exhaustive search on a slightly bigger instance.
"""

import numpy as np

from directrank import (
    Interleaving,
    LossAugConfig,
    RankingInstance,
    Sign,
    augmented_objective,
    brute_force_interleavings,
    dp_loss_augmented,
    predicted_interleaving,
    score_F,
    solve_dp,
)

# One positive scored 0.2 and one negative scored 0.5.  The score sort puts
# the negative first.
inst = RankingInstance.from_scores([0.2, 0.5], [1, 0])
print("score sort:", predicted_interleaving(inst))

# Only two interleavings exist.  With the positive sign and eps = 1 the loss
# term rewards the worse ranking, and the recursion agrees with enumeration.
cfg = LossAugConfig(1.0, Sign.POSITIVE)
for bits in ([1, 0], [0, 1]):
    y = Interleaving.from_sequence(bits)
    print(y, "F =", round(score_F(inst, y), 3), " F + L =", round(augmented_objective(inst, y, cfg), 3))
y, value = dp_loss_augmented(inst, cfg)
print("dp picks", y, "with value", value)

# A random instance with 5 positives and 6 negatives: 462 interleavings.
rng = np.random.default_rng(0)
labels = rng.permutation([1] * 5 + [0] * 6)
inst = RankingInstance.from_scores(rng.standard_normal(11), labels)
for sign in Sign:
    for eps in (0.1, 1.0, 10.0):
        cfg = LossAugConfig(eps, sign)
        y, value = dp_loss_augmented(inst, cfg)
        _, best = brute_force_interleavings(inst, cfg)
        print(f"{sign.name:8s} eps={eps:<5} dp={value:+.6f} enum={best:+.6f} {y}")

# The filled tables are available too.  h[i, j] is the best value of any
# prefix with i positives and j negatives (constant loss term left out).
state = solve_dp(inst, LossAugConfig(1.0))
print("h table shape:", state.h.shape)
print(np.round(state.h, 3))
