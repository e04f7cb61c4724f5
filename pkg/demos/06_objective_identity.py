"""
The consistency objective, decomposed
=====================================

The labeler is trained by RL on its own labels: each label's reward is
the integrated step reward times that label. In expectation this equals
a weighted sum of two branches, 4 p^2 on steps of successful
trajectories and 4 (1-p)^2 on steps of failed ones, plus a constant,
where p is the labeler's probability of emitting +1. A paired
Monte-Carlo estimator checks the identity sample for sample, and the
branch masses show what the objective actually optimizes at a given
task difficulty.
"""

from tritrain import mc_objective_identity, weight_ratio_curve
from tritrain.theory import reference_identity_configs, reference_ratio_sweep

# identity check on three fixed (task, policy, labeler) triples
print("paired MC check of lhs = rhs + C (rel_error shrinks ~ 1/sqrt(n)):")
for name, (task, policy, rm) in reference_identity_configs().items():
    for n in (10_000, 1_000_000):
        rep = mc_objective_identity(task, policy, rm, n_samples=n, seed=0)
        print(f"  {name:>9} n={n:>9,}  lhs={rep.lhs_estimate:+.5f} "
              f"rhs={rep.rhs_estimate:+.5f}  rel_error={rep.rel_error:.5f}")

# Branch masses: on a task the actor almost never solves, nearly all
# trajectories fail, so the objective pushes p toward 0 on every step
# (call everything wrong); on a task it always solves, toward 1. Only
# in between do both branches carry weight and the labels have to track
# the actual per-step correctness.
tasks, policy, rm = reference_ratio_sweep()
print("\nL2 mass of the success branch vs the failure branch:")
for row in weight_ratio_curve(tasks, policy, rm, n_samples=20000, seed=0):
    print(f"  {row['task_id']:>14}: p_success={row['p_success']:.3f}  "
          f"norm+={row['norm_plus']:8.3f}  norm-={row['norm_minus']:8.3f}  "
          f"ratio={row['ratio']:.4f}")

print("""
This is why the training loop only feeds the labeler tasks whose
accuracy sits inside the band, and why keeping the pool difficulty
balanced (the adaptive mode) protects labeler quality.
""")
