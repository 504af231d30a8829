"""Distill a random forest into a single stable tree, end to end.

Trains the built-in bagged-CART forest on synthetic data, builds the
stabilized approximation tree, and walks through what the node diagnostics
say. Runs in well under a minute at this scale.
"""
import numpy as np

import stabletree as st

# 1. Synthetic ground truth: five uniform covariates, piecewise log-odds.
data = st.sample_synthetic(1000, seed=42)
print(f"training sample: {data.n_rows} rows, " f"{data.schema.column_count} covariates")

# 2. The black box to be explained: a 100-tree forest.
forest = st.fit_forest(data, st.ForestConfig(tree_count=100, seed=42))
print(f"forest out-of-bag accuracy: {forest.oob_accuracy(data):.3f}")

# 3. Distill. Each node keeps drawing oracle-labeled pseudo samples until the
#    leading split's advantage is certified at level alpha, or the per-node
#    budget n_ps_max runs out (then the current minimal-Gini split is taken).
cfg = st.BuildConfig(
    alpha=0.1,
    n_initial=1000,
    n_ps_max=20_000,  # small budget keeps the demo quick
    max_depth=4,
    seed=42,
)
tree = st.build_tree(data, forest, cfg)
print(f"\ndistilled tree: depth {tree.depth()}, {tree.leaf_count()} leaves")

for path, node in sorted(tree.iter_nodes(), key=lambda pn: (len(pn[0]), pn[0])):
    if not isinstance(node, st.Internal):
        continue
    name = data.schema.columns[node.rule.column].name
    label = "root" if not path else "root." + ".".join("LR"[t] for t in path)
    diag = node.diagnostics
    print(
        f"  {label:12s} splits {name} <= {node.rule.threshold:.4f} | "
        f"n={diag.pseudo_samples_used:>6d} "
        f"candidates={diag.candidates_considered:>4d} "
        f"certainty={diag.final_aggregate_pvalue}"
    )

# 4. The tree is a drop-in (if rougher) stand-in for the forest.
probe = st.sample_synthetic(5000, seed=777).rows
agreement = np.mean(
    np.argmax(st.predict_batch(tree, probe), axis=1)
    == np.argmax(forest.predict_proba(probe), axis=1)
)
print(f"\nclass agreement with the forest on fresh rows: {agreement:.3f}")
