"""From distilled tree to adaptive questionnaire.

Builds a tree over ordinal survey-style covariates, exports it to JSON and
Graphviz DOT, and replays one respondent through the same routing the web
frontend uses.
"""
from pathlib import Path

import numpy as np

import stabletree as st

rng = np.random.default_rng(5)
schema = st.Schema(
    (
        st.ColumnSpec("sleep_quality", "ordinal", 4),
        st.ColumnSpec("energy", "ordinal", 5),
        st.ColumnSpec("appetite", "ordinal", 3),
        st.ColumnSpec("hours_active", "continuous"),
    ),
    ("low-risk", "high-risk"),
    label_column="risk",
)

n = 700
rows = np.column_stack([
    rng.integers(0, 4, n),
    rng.integers(0, 5, n),
    rng.integers(0, 3, n),
    rng.uniform(0, 12, n),
]).astype(float)
score = rows[:, 0] + 0.8 * rows[:, 1] + 0.5 * rows[:, 2] - 0.25 * rows[:, 3]
labels = (score + rng.normal(0, 1.2, n) > np.median(score)).astype(int)
data = st.Dataset(schema, rows, labels)

forest = st.fit_forest(data, st.ForestConfig(tree_count=60, seed=5))
tree = st.build_tree(
    data, forest,
    st.BuildConfig(alpha=0.1, n_initial=500, n_ps_max=8000, max_depth=4, seed=5,
                   min_node_anchors=10),
)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
(out / "questionnaire_tree.json").write_text(st.tree_to_json(tree) + "\n")
(out / "questionnaire_tree.dot").write_text(st.tree_to_dot(tree) + "\n")
print(f"exported {out / 'questionnaire_tree.json'} (load it in frontend/index.html)")
print("render the DOT file with: dot -Tsvg questionnaire_tree.dot -o tree.svg")

# The questionnaire asks only the columns along the respondent's path:
respondent = {"sleep_quality": 1, "energy": 3, "appetite": 0, "hours_active": 2.5}
row = [float(respondent[c.name]) for c in schema.columns]
probs, path = st.predict(tree, row)
print("\nadaptive session for one respondent:")
for i, (rule, side) in enumerate(path, 1):
    name = schema.columns[rule.column].name
    print(f"  Q{i}: {name}? answered {respondent[name]} -> {side}")
print(f"  -> {schema.class_names[int(np.argmax(probs))]}  "
      f"(probabilities {np.round(probs, 3).tolist()})")
print(f"asked {len(path)} of {schema.column_count} questions")
