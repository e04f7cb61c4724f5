"""
Integrated rewards and the two advantage views
==============================================

One scalar reward per (trajectory, step): the trajectory outcome in
{-1, +1} plus lambda times the mean of m step labels. The policy and
the labeler read the same array through different standardizations.
"""

import numpy as np

from tritrain import integrated_step_reward, standardize
from tritrain.feedback import rm_advantages_array, standardize_axis, step_rewards_array

# Two trajectories on a 3-step task, m = 3 labels per step. Trajectory 0
# succeeded, trajectory 1 failed.
outcomes = np.array([1, -1])
labels = np.array([
    [[+1, +1, -1], [+1, +1, +1], [-1, +1, +1]],
    [[-1, -1, -1], [-1, +1, -1], [+1, -1, -1]],
])

lam = 1.0
rewards = step_rewards_array(outcomes, labels, lam, "integrated")
print("integrated rewards R[traj, step]:")
print(rewards)

# scalar form, same number (plus the outcome/step split for inspection)
r00 = integrated_step_reward(outcomes[0], labels[0, 0], lam)
assert r00.value == rewards[0, 0]
print(f"\nR[0,0] = {r00.outcome_part} outcome + {r00.step_part:.3f} steps")

# The policy compares trajectories at the same step index, so its
# advantage standardizes each column of R across trajectories.
policy_adv = standardize_axis(rewards, axis=0)
print("\npolicy advantages (per step, across trajectories):")
print(policy_adv)

# The labeler compares the m labels within one step. Its raw reward is
# R times the individual label, and R is constant across those labels,
# so after standardization only sign(R) survives. With lam <= 1 that
# sign is just the outcome: unanimous steps get zero advantage, split
# steps reward the labels that agree with the outcome.
rm_adv = rm_advantages_array(rewards, labels)
print("\nlabeler advantages [traj, step, label]:")
print(np.round(rm_adv, 3))
print("\nunanimous steps (all three labels equal) have zero advantage:")
unanimous = np.abs(labels.sum(axis=2)) == 3
print(np.all(rm_adv[unanimous] == 0.0))

# standardize() itself is the one-group primitive both views reduce to
print("\nstandardize([2, 0, 1]) =", standardize(np.array([2.0, 0.0, 1.0])))
