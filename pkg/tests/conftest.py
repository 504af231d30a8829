import numpy as np
import pytest

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)

from stabletree import (
    ColumnSpec,
    Dataset,
    ForestConfig,
    Internal,
    Leaf,
    Schema,
    SplitRule,
    Tree,
    fit_forest,
    sample_synthetic,
)


@pytest.fixture(scope="session")
def mixed_schema() -> Schema:
    return Schema(
        (
            ColumnSpec("age"),
            ColumnSpec("score"),
            ColumnSpec("grade", "ordinal", 4),
        ),
        ("neg", "pos"),
        label_column="label",
    )


@pytest.fixture(scope="session")
def synth_small() -> Dataset:
    return sample_synthetic(300, seed=11)


@pytest.fixture(scope="session")
def small_forest(synth_small):
    return fit_forest(synth_small, ForestConfig(tree_count=25, seed=5))


def random_tree(schema: Schema, rng: np.random.Generator, depth: int = 4) -> Tree:
    """Random valid tree over a schema, thresholds kept inside refined boxes."""
    k = schema.class_count

    def grow(lower, upper, d):
        if d >= depth or rng.uniform() < 0.3:
            probs = rng.dirichlet(np.ones(k))
            return Leaf(tuple(probs))
        for col in rng.permutation(schema.column_count):
            col = int(col)
            spec = schema.columns[col]
            lo = max(lower[col], -1.0 if not spec.is_ordinal else -0.5)
            hi = min(upper[col], 2.0 if not spec.is_ordinal else spec.levels - 0.5)
            if spec.is_ordinal:
                levels = [v for v in range(spec.levels) if lo < v <= hi]
                if len(levels) < 2:
                    continue
                cut = rng.integers(0, len(levels) - 1)
                thr = 0.5 * (levels[cut] + levels[cut + 1])
            else:
                if hi - lo < 1e-3:
                    continue
                thr = float(rng.uniform(lo + 1e-4, hi - 1e-4))
            rule = SplitRule(col, float(thr))
            left_upper = list(upper)
            left_upper[col] = thr
            right_lower = list(lower)
            right_lower[col] = thr
            return Internal(
                rule,
                grow(lower, left_upper, d + 1),
                grow(right_lower, upper, d + 1),
            )
        probs = rng.dirichlet(np.ones(k))
        return Leaf(tuple(probs))

    m = schema.column_count
    return Tree(grow([-np.inf] * m, [np.inf] * m, 1), schema)


def random_rows(schema: Schema, rng: np.random.Generator, n: int) -> np.ndarray:
    cols = []
    for spec in schema.columns:
        if spec.is_ordinal:
            cols.append(rng.integers(0, spec.levels, size=n).astype(float))
        else:
            cols.append(rng.uniform(-1.0, 2.0, size=n))
    return np.column_stack(cols)
