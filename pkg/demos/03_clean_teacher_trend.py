"""
Direct loss training on clean teacher data
==========================================

A random 4-layer ReLU "teacher" labels the top 20% of its scores positive.
A student of the same shape is trained by each method for 300 full-batch
steps, using the best of three learning rates by training AP.

Takes about half a minute per seed on one core.
"""

import sys

from directrank.experiments import CLEAN_LR_GRID, clean_teacher_comparison
from directrank.trainers import Method

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
results = clean_teacher_comparison(seed)

print(f"seed {seed}: n=4000 split 50/50, eps=0.1 for pos-ap")
for method, res in results.items():
    grid = ", ".join(f"{lr:g}" for lr in CLEAN_LR_GRID[method])
    print(f"  {method.value:9s} lr={res.learning_rate:<6g} (grid {grid:18s}) "
          f"train AP {res.final_train_ap:.3f}  test AP {res.final_test_ap:.3f}")

pos = results[Method.POS_AP].final_test_ap
for other in (Method.HINGE_AP, Method.XENT, Method.PER_AP):
    print(f"  pos-ap minus {other.value}: {pos - results[other].final_test_ap:+.3f}")
