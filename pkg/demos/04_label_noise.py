"""
Robustness to flipped training labels
=====================================

Inputs are 10-d Gaussians with standard deviation 10.  Points with squared
norm above 1200 are positive and below 1000 negative.  A fraction of the
training labels is flipped, and pos-ap is compared with the structured hinge.

Both methods use L2 weight 1e-3.  pos-ap uses eps = 1, because these inputs
produce scores far larger than on the teacher data.
"""

import sys

from directrank.experiments import noisy_norm_comparison
from directrank.trainers import Method

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 2)

print("flip  seed  pos-ap   hinge-ap  margin")
for flip in (0.0, 0.1, 0.2, 0.3):
    for seed in seeds:
        res = noisy_norm_comparison(seed, flip)
        pos, hinge = res[Method.POS_AP].final_test_ap, res[Method.HINGE_AP].final_test_ap
        print(f"{flip:<5} {seed:<5} {pos:.3f}    {hinge:.3f}     {pos - hinge:+.3f}")
