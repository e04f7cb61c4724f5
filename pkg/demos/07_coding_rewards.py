"""
Scoring generated unit tests three ways, getting one gradient
=============================================================

A synthetic coding instance holds candidate solutions and candidate
unit tests. A solution is good (gt) when it passes every dataset test;
a generated test is good when every gt solution passes it. Good tests
earn credit for catching bad solutions, bad tests are charged for the
bad solutions they let through. Whether you score that as raw counts,
as rates, or as correctness + detection - 1, the three numbers are
affinely related within an instance, so group standardization maps them
to the same advantage vector and the three reward designs train the
test generator identically.
"""

import numpy as np

from tritrain import equivalence_sweep, label_populations, synth_coding_instance
from tritrain.coding import (
    remark2_equivalence,
    ut_reward_combined,
    ut_reward_counts,
    ut_reward_rates,
)
from tritrain.feedback import standardize

codes, uts, gt_uts = synth_coding_instance(seed=11)
codes, uts, degenerate = label_populations(codes, uts, gt_uts)
n_gt = sum(c.is_gt for c in codes)
print(f"{len(codes)} solutions ({n_gt} gt), {len(uts)} generated tests, "
      f"{len(gt_uts)} dataset tests")

print(f"\n{'test':>6} {'gt':>5} {'detect':>7} {'counts':>7} {'rates':>8} {'combined':>9}")
for ut in uts[:8]:
    print(f"{ut.ut_id:>6} {str(ut.is_gt):>5} {ut.detect_rate:>7.3f} "
          f"{ut_reward_counts(ut, codes):>7d} {ut_reward_rates(ut, codes):>8.3f} "
          f"{ut_reward_combined(ut):>9.3f}")

counts = np.array([ut_reward_counts(u, codes) for u in uts], dtype=float)
rates = np.array([ut_reward_rates(u, codes) for u in uts])
print("\ncounts == (number of non-gt solutions) * rates:",
      np.allclose(counts, (len(codes) - n_gt) * rates))

report = remark2_equivalence(uts, codes)
print(f"max deviation between the three standardized vectors: "
      f"{report.max_deviation:.2e}")
print("first five standardized entries:",
      np.round(standardize(counts)[:5], 4))

# the same check over many seeded instances, skipping degenerate ones
# (no gt solution, or nothing to catch)
sweep = equivalence_sweep(n_instances=200, seed0=0)
print(f"\n200-instance sweep: checked={sweep['checked']} "
      f"degenerate={sweep['degenerate']} "
      f"worst deviation={sweep['max_deviation']:.2e}")
