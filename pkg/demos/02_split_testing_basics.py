"""The statistical core, piece by piece.

Shows the Gini machinery on soft-labeled samples: scoring one split,
comparing two splits with the normal test, and planning how many more
samples a failed test needs.
"""
import numpy as np

import stabletree as st
from stabletree.core import SplitRule

rng = np.random.Generator(np.random.Philox(7))

# Soft-labeled pseudo sample: covariates plus oracle class probabilities.
n = 4000
X = rng.uniform(size=(n, 2))
p1 = np.clip(0.15 + 0.7 * (X[:, 0] > 0.4), 0.05, 0.95)
Y = np.column_stack([1 - p1, p1])

# Impurity of a class distribution, and of a split.
print("impurity of (0.5, 0.5):", st.gini_gain_distribution([0.5, 0.5]))
print("impurity of (0.9, 0.1):", st.gini_gain_distribution([0.9, 0.1]))

good = SplitRule(column=0, threshold=0.4)  # aligned with the signal
poor = SplitRule(column=1, threshold=0.5)  # orthogonal noise column
for rule in (good, poor):
    summary = st.split_gini_index((X, Y), rule)
    print(
        f"split col{rule.column}@{rule.threshold}: weighted gini "
        f"{summary.gini_index:.4f} (left {summary.n_left}, right {summary.n_right})"
    )

# One-sided better-split test: probability a fresh pseudo sample of the same
# size would reverse the ranking.
stats = st.compare_splits((X, Y), good, poor)
outcome = st.better_split_pvalue(stats)
print(
    f"\ngood vs poor: delta={outcome.delta_hat:.4f}, "
    f"flip probability={outcome.p_value:.2e}"
)

# Two equally-good splits are another story: under a logistic ramp symmetric
# about 0.5, thresholds at 0.45 and 0.55 have identical population gini, so
# the flip probability hovers near 1/2 and a winner cannot be certified.
p_sym = 1.0 / (1.0 + np.exp(-8.0 * (X[:, 0] - 0.5)))
Y_sym = np.column_stack([1 - p_sym, p_sym])
near_a, near_b = SplitRule(0, 0.45), SplitRule(0, 0.55)
ordered = sorted(
    (near_a, near_b),
    key=lambda r: st.split_gini_index((X, Y_sym), r).gini_index,
)
close = st.better_split_pvalue(st.compare_splits((X, Y_sym), *ordered))
print(f"tied splits: flip probability={close.p_value:.3f}")

# Sequential sizing: grow n until the observed effect would clear alpha.
if 0.1 < close.p_value < 0.5:
    needed = st.required_sample_size(n, close.p_value, alpha=0.1)
    print(f"sample size the sizing rule asks for at alpha=0.1: ~{needed}")
else:
    print("already separable (or a pure tie) at this sample size")

# Many rivals at once: Bonferroni-style aggregation bounds the chance that
# any rival would out-rank the leader on a fresh draw.
print("aggregate of [0.02, 0.03, 0.04]:", st.aggregate_pvalue([0.02, 0.03, 0.04]))
