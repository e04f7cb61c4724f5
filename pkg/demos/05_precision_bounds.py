"""
How many labels until the ranking is reliable?
==============================================

A step labeler with true-positive rate p+ and true-negative rate p-
compares a step from a successful trajectory against one from a failed
trajectory by averaging m labels each. The per-comparison margin is a
sum of m i.i.d. terms in {+2, 0, -2}, so the win probability has an
exact convolution form, and mu = p+ + p- tells the whole story: above 1
the win probability converges to certainty at least as fast as
1 - exp(-m (mu - 1)^2 / 4), at 1 it never beats a coin flip, below 1 it
collapses to zero.
"""

from tritrain import PrecisionQuery, exact_precision, hoeffding_bound, verify_theorem1

M_GRID = (1, 4, 16, 64, 256)

print("       exact win probability (lower bound) by m")
print(f"{'p+':>4} {'p-':>4} {'mu':>4}" + "".join(f"{m:>16}" for m in M_GRID))
for pp, pm in ((0.8, 0.8), (0.7, 0.6), (0.6, 0.5), (0.5, 0.5), (0.4, 0.3)):
    mu = pp + pm
    cells = []
    for m in M_GRID:
        a, _ = exact_precision(PrecisionQuery(pp, pm, m))
        if mu > 1:
            cells.append(f"{a:.4f} ({hoeffding_bound(mu, m):.4f})")
        else:
            cells.append(f"{a:.4f}         ")
    print(f"{pp:>4} {pm:>4} {mu:>4.1f}" + "".join(f"{c:>16}" for c in cells))

# mu = 1 exactly: wins and losses are symmetric, so the strict-win
# probability is (1 - P(tie)) / 2 at every m
a, tie = exact_precision(PrecisionQuery(0.5, 0.5, 16))
print(f"\nmu = 1: a = {a:.6f}, (1 - tie)/2 = {(1 - tie) / 2:.6f}")

# the full grid check behind `tritrain verify thm1`
report = verify_theorem1()
print(f"\nfull grid: {len(report.rows)} (p+, p-) pairs, "
      f"{len(report.violations)} violations")
