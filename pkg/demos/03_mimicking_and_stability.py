"""Measure what the distilled tree is worth: mimicking accuracy against the
forest, predictive accuracy against ground truth, and structural stability
across replicate builds (the point of the certification machinery).

Takes a couple of minutes at this reduced scale.
"""
import stabletree as st

data = st.sample_synthetic(1000, seed=9)
forest = st.fit_forest(data, st.ForestConfig(tree_count=100, seed=9))
test = st.sample_synthetic(5000, seed=90)

cfg = st.BuildConfig(alpha=0.1, n_initial=1000, n_ps_max=20_000, max_depth=4, seed=9)
tree = st.build_tree(data, forest, cfg)

report = st.mimic_accuracy(tree, forest, test.rows)
print(f"mimicking: {report.class_agreement:.1%} class agreement, "
      f"L1 probability gap {report.l1_prob_diff:.3f}")
print(f"predictive accuracy: tree {st.predictive_accuracy(tree, test):.3f} vs "
      f"forest {st.predictive_accuracy(forest, test):.3f}")

# Stability: rebuild from the same forest with fresh pseudo-sample seeds and
# histogram the resulting structures. The certified builder (alpha=0.1) is
# compared against plain greedy CART on the same pseudo-sample budget
# (alpha=1.0 disables testing).
depths = [1, 2, 3]
replicates = 10
sta = st.stability_experiment(
    data, forest, cfg, replicates=replicates, depths=depths, threads=2
)
cart_cfg = st.BuildConfig(alpha=1.0, n_ps_max=20_000, max_depth=4, seed=9)
cart = st.stability_experiment(
    data, forest, cart_cfg, replicates=replicates, depths=depths, threads=2
)

print(f"\nstructure variation over {replicates} replicate builds:")
print("depth | unique structures (certified / greedy) | modal share (certified)")
for depth in depths:
    print(
        f"  {depth}   |        {sta.unique_structures(depth):2d} / "
        f"{cart.unique_structures(depth):2d}                      | "
        f"{sta.modal_fraction(depth):.2f}"
    )
