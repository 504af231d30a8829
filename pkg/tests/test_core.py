import json

import numpy as np
import pytest

from stabletree import (
    ColumnSpec,
    Internal,
    Leaf,
    Region,
    Schema,
    SplitRule,
    Tree,
    predict,
    predict_batch,
    route,
    tree_from_json,
    tree_to_dot,
    tree_to_json,
)
from stabletree.core import check_tree_compatible
from stabletree.errors import DegenerateSplitError, IncompatibleTreeError, SchemaError

from conftest import random_rows, random_tree


class TestRoute:
    def test_below_threshold_goes_left(self):
        assert route(SplitRule(0, 0.5), [0.3, 1.0]) == "left"

    def test_boundary_goes_left(self):
        assert route(SplitRule(0, 0.5), [0.5, 1.0]) == "left"

    def test_ordinal_level_above_goes_right(self):
        assert route(SplitRule(2, 1.5), [0.0, 0.0, 2.0]) == "right"

    def test_column_out_of_range(self):
        with pytest.raises(SchemaError):
            route(SplitRule(5, 0.5), [0.1, 0.2])


class TestRegion:
    def test_refine_left_sets_upper_bound(self, mixed_schema):
        region = Region.unbounded(mixed_schema)
        refined = region.refine(SplitRule(0, 0.5), "left")
        assert refined.upper[0] == 0.5
        assert refined.lower[0] == region.lower[0]

    def test_refine_intersects_interval(self, mixed_schema):
        region = Region(
            mixed_schema,
            (0.2, -np.inf, -np.inf),
            (0.8, np.inf, np.inf),
        )
        refined = region.refine(SplitRule(0, 0.5), "right")
        assert refined.lower[0] == 0.5
        assert refined.upper[0] == 0.8

    def test_refine_empty_side_raises(self, mixed_schema):
        region = Region(
            mixed_schema,
            (0.2, -np.inf, -np.inf),
            (0.4, np.inf, np.inf),
        )
        with pytest.raises(DegenerateSplitError):
            region.refine(SplitRule(0, 0.5), "right")
        with pytest.raises(DegenerateSplitError):
            region.refine(SplitRule(0, 0.5), "left")

    def test_refine_is_monotone(self, mixed_schema):
        rng = np.random.default_rng(3)
        region = Region.unbounded(mixed_schema)
        rows = random_rows(mixed_schema, rng, 500)
        for rule, side in [
            (SplitRule(0, 0.7), "left"),
            (SplitRule(1, 0.1), "right"),
            (SplitRule(2, 1.5), "left"),
        ]:
            refined = region.refine(rule, side)
            inside_refined = refined.contains_rows(rows)
            inside_parent = region.contains_rows(rows)
            assert not np.any(inside_refined & ~inside_parent)
            region = refined

    def test_ordinal_levels_clip_to_schema(self, mixed_schema):
        region = Region.unbounded(mixed_schema).refine(SplitRule(2, 1.5), "right")
        assert region.ordinal_levels(2).tolist() == [2, 3]

    def test_sequential_refinement_equals_intersection(self, mixed_schema):
        rng = np.random.default_rng(9)
        rows = random_rows(mixed_schema, rng, 800)
        region = Region.unbounded(mixed_schema)
        r1, r2 = SplitRule(0, 0.5), SplitRule(1, 0.3)
        path = region.refine(r1, "left").refine(r2, "right")
        by_hand = r1.route_rows(rows) & ~r2.route_rows(rows)
        assert np.array_equal(path.contains_rows(rows), by_hand)


def leaf_conjunctions(tree: Tree):
    """Each leaf with the list of (rule, side) constraints along its path."""
    out = []

    def walk(node, constraints):
        if isinstance(node, Leaf):
            out.append((constraints, node))
            return
        walk(node.left, constraints + [(node.rule, "left")])
        walk(node.right, constraints + [(node.rule, "right")])

    walk(tree.root, [])
    return out


def satisfied(constraints, row) -> bool:
    for rule, side in constraints:
        goes_left = row[rule.column] <= rule.threshold
        if goes_left != (side == "left"):
            return False
    return True


class TestPredict:
    def test_single_leaf(self, mixed_schema):
        tree = Tree(Leaf((0.3, 0.7)), mixed_schema)
        probs, path = predict(tree, [0.0, 0.0, 1.0])
        assert probs.tolist() == [0.3, 0.7]
        assert path == []

    def test_depth_two_routing(self, mixed_schema):
        tree = Tree(
            Internal(
                SplitRule(0, 0.5),
                Internal(SplitRule(1, 0.0), Leaf((1.0, 0.0)), Leaf((0.6, 0.4))),
                Leaf((0.0, 1.0)),
            ),
            mixed_schema,
        )
        probs, path = predict(tree, [0.2, -0.3, 1.0])
        assert probs.tolist() == [1.0, 0.0]
        assert [(r.column, s) for r, s in path] == [(0, "left"), (1, "left")]

    def test_against_path_enumeration_oracle(self, mixed_schema):
        # independent oracle: evaluate the conjunction of path rules per leaf
        rng = np.random.default_rng(21)
        for _ in range(25):
            tree = random_tree(mixed_schema, rng)
            rows = random_rows(mixed_schema, rng, 40)
            leaves = leaf_conjunctions(tree)
            for row in rows:
                matches = [
                    leaf for constraints, leaf in leaves if satisfied(constraints, row)
                ]
                assert len(matches) == 1  # exactly one leaf is reached
                probs, _ = predict(tree, row)
                assert probs.tolist() == list(matches[0].class_probs)

    def test_batch_agrees_with_scalar(self, mixed_schema):
        rng = np.random.default_rng(2)
        tree = random_tree(mixed_schema, rng)
        rows = random_rows(mixed_schema, rng, 200)
        batch = predict_batch(tree, rows)
        for i, row in enumerate(rows):
            probs, _ = predict(tree, row)
            assert np.array_equal(batch[i], probs)

    def test_digest_mismatch_rejected(self, mixed_schema):
        tree = Tree(Leaf((0.5, 0.5)), mixed_schema)
        other = Schema((ColumnSpec("z"),), ("a", "b"))
        with pytest.raises(IncompatibleTreeError):
            check_tree_compatible(tree, other)


class TestSerialization:
    def test_roundtrip_predictions_bit_equal(self, mixed_schema):
        rng = np.random.default_rng(7)
        tree = random_tree(mixed_schema, rng)
        restored = tree_from_json(tree_to_json(tree))
        rows = random_rows(mixed_schema, rng, 1000)
        assert np.array_equal(predict_batch(tree, rows), predict_batch(restored, rows))

    def test_export_is_nested_objects(self, mixed_schema):
        tree = Tree(
            Internal(SplitRule(1, 0.25), Leaf((1.0, 0.0)), Leaf((0.2, 0.8))),
            mixed_schema,
        )
        doc = json.loads(tree_to_json(tree))
        assert doc["root"]["rule"] == {"column": 1, "threshold": 0.25}
        assert doc["root"]["left"] == {"probs": [1.0, 0.0]}
        assert set(doc["schema"]) >= {"columns", "classes"}
        assert doc["schema_digest"] == mixed_schema.digest()

    def test_tampered_digest_rejected(self, mixed_schema):
        tree = Tree(Leaf((0.5, 0.5)), mixed_schema)
        doc = json.loads(tree_to_json(tree))
        doc["schema_digest"] = "0" * 64
        with pytest.raises(IncompatibleTreeError):
            tree_from_json(json.dumps(doc))

    def test_dot_export_mentions_columns(self, mixed_schema):
        tree = Tree(
            Internal(SplitRule(2, 1.5), Leaf((1.0, 0.0)), Leaf((0.0, 1.0))),
            mixed_schema,
        )
        dot = tree_to_dot(tree)
        assert dot.startswith("digraph")
        assert "grade <= 1.5" in dot


class TestLeafInvariants:
    def test_predicted_class_lowest_index_tie(self):
        assert Leaf((0.5, 0.5)).predicted_class == 0
        assert Leaf((0.2, 0.4, 0.4)).predicted_class == 1

    def test_probs_must_sum_to_one(self):
        with pytest.raises(SchemaError):
            Leaf((0.5, 0.6))


class TestSchema:
    def test_duplicate_columns_rejected(self):
        with pytest.raises(SchemaError):
            Schema((ColumnSpec("a"), ColumnSpec("a")), ("0", "1"))

    def test_ordinal_needs_two_levels(self):
        with pytest.raises(SchemaError):
            ColumnSpec("q", "ordinal", 1)

    def test_ordinal_cells_validated(self, mixed_schema):
        with pytest.raises(SchemaError):
            mixed_schema.validate_rows(np.array([[0.1, 0.2, 2.5]]))
        with pytest.raises(SchemaError):
            mixed_schema.validate_rows(np.array([[0.1, 0.2, 9.0]]))
