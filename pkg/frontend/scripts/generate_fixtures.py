"""Regenerate the questionnaire test fixtures from the primary library.

Builds a small mixed-schema pipeline (ordinal + continuous columns), distills
a tree, and records 100 random respondent rows with the library's predict()
output and routing path for each. Run from the frontend directory:

    python scripts/generate_fixtures.py
"""
import json
from pathlib import Path

import numpy as np

from stabletree import (
    BuildConfig,
    ColumnSpec,
    Dataset,
    ForestConfig,
    Schema,
    build_tree,
    fit_forest,
    predict,
    tree_to_dict,
)

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def make_dataset(rng: np.random.Generator, n: int = 600) -> Dataset:
    schema = Schema(
        (
            ColumnSpec("mood", "ordinal", 5),
            ColumnSpec("sleep", "ordinal", 4),
            ColumnSpec("appetite", "ordinal", 3),
            ColumnSpec("weight", "continuous"),
            ColumnSpec("activity", "continuous"),
        ),
        ("low", "high"),
        label_column="risk",
    )
    rows = np.column_stack(
        [
            rng.integers(0, 5, n),
            rng.integers(0, 4, n),
            rng.integers(0, 3, n),
            rng.uniform(40, 120, n),
            rng.uniform(0, 10, n),
        ]
    ).astype(float)
    score = (
        0.8 * rows[:, 0]
        + 0.6 * rows[:, 1]
        + 0.4 * rows[:, 2]
        + 0.02 * rows[:, 3]
        - 0.3 * rows[:, 4]
    )
    p = 1.0 / (1.0 + np.exp(-(score - np.median(score))))
    labels = (rng.uniform(size=n) < p).astype(int)
    return Dataset(schema, rows, labels)


def sample_row(rng: np.random.Generator, schema: Schema) -> list[float]:
    row = []
    for spec in schema.columns:
        if spec.is_ordinal:
            row.append(float(rng.integers(0, spec.levels)))
        else:
            lo, hi = (40.0, 120.0) if spec.name == "weight" else (0.0, 10.0)
            row.append(float(rng.uniform(lo, hi)))
    return row


def main() -> None:
    rng = np.random.default_rng(2024)
    data = make_dataset(rng)
    forest = fit_forest(data, ForestConfig(tree_count=40, seed=12))
    cfg = BuildConfig(
        alpha=0.1, n_initial=400, n_ps_max=4000, max_depth=5, seed=12,
        min_node_anchors=10,
    )
    tree = build_tree(data, forest, cfg)

    OUT.mkdir(exist_ok=True)
    (OUT / "tree.json").write_text(json.dumps(tree_to_dict(tree), indent=1) + "\n")

    paths = []
    for _ in range(100):
        row = sample_row(rng, data.schema)
        probs, path = predict(tree, row)
        answers = [
            {"column": rule.column, "value": row[rule.column], "side": side}
            for rule, side in path
        ]
        paths.append(
            {
                "row": row,
                "answers": answers,
                "expected_probs": [float(p) for p in probs],
            }
        )
    (OUT / "paths.json").write_text(json.dumps(paths, indent=1) + "\n")
    print(f"wrote fixtures for a depth-{tree.depth()} tree with "
          f"{tree.leaf_count()} leaves to {OUT}")


if __name__ == "__main__":
    main()
