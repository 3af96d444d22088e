"""
Checking the network gradient
=============================

The scoring network is a plain ReLU MLP.  Here its backward pass and the
gradient of the pairwise ranking score are compared with central
differences.
"""

import numpy as np

from directrank.neural import backward, forward_batch, grad_F, mlp_init, sample_coefficients, scores
from directrank.ranking import Interleaving, RankingInstance, score_F

rng = np.random.default_rng(1)
params = mlp_init((5, 16, 16, 16, 1), seed=3)
X = rng.standard_normal((8, 5))
labels = np.array([1, 0, 1, 0, 0, 1, 0, 0])

# Gradient of sum_i u_i * phi(x_i) from one batched backward pass.
u = rng.standard_normal(8)
_, cache = forward_batch(params, X)
analytic = backward(params, cache, u).flatten()

flat = params.flatten()
h = 1e-5
numeric = np.empty_like(flat)
for k in range(flat.size):
    up, down = flat.copy(), flat.copy()
    up[k] += h
    down[k] -= h
    numeric[k] = (u @ scores(params.unflatten(up), X) - u @ scores(params.unflatten(down), X)) / (2 * h)
err = np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1e-8)
print(f"{flat.size} coordinates, median relative error {np.median(err):.1e}")

# The ranking score F is linear in the scores, with one coefficient per
# sample.  Positives first gives +1/|P| and -1/|N|.
inst = RankingInstance.from_scores(scores(params, X), labels)
print("positives-first coefficients:", sample_coefficients(inst, Interleaving.positives_first(3, 5)))

# grad_F is a single backward pass with those coefficients as upstream.
y = Interleaving.from_sequence([0, 1, 0, 0, 1, 0, 1, 0])
g = grad_F(params, X, inst, y, cache)
print("F(y) =", round(score_F(inst, y), 4), " |grad F| =", round(np.sqrt(g.sq_norm()), 4))
