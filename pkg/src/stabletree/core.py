"""Domain types shared by every stabletree module.

Schemas describe covariate columns (continuous or ordinal) and the class
labels. Trees are immutable binary structures whose internal nodes carry
axis-aligned threshold rules; routing uses the convention that
``x[column] <= threshold`` goes left.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence, Union

import numpy as np

from .errors import (
    DegenerateSplitError,
    IncompatibleTreeError,
    SchemaError,
)

Side = Literal["left", "right"]

CONTINUOUS = "continuous"
ORDINAL = "ordinal"


@dataclass(frozen=True)
class ColumnSpec:
    """One covariate column: continuous, or ordinal with integer levels 0..levels-1."""

    name: str
    kind: str = CONTINUOUS
    levels: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (CONTINUOUS, ORDINAL):
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.kind == ORDINAL:
            if self.levels is None or self.levels < 2:
                raise SchemaError(
                    f"ordinal column {self.name!r} needs at least 2 levels"
                )
        elif self.levels is not None:
            raise SchemaError(f"continuous column {self.name!r} cannot declare levels")

    @property
    def is_ordinal(self) -> bool:
        return self.kind == ORDINAL

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind}
        if self.kind == ORDINAL:
            d["levels"] = self.levels
        return d

    @staticmethod
    def from_dict(d: dict) -> "ColumnSpec":
        return ColumnSpec(d["name"], d.get("kind", CONTINUOUS), d.get("levels"))


@dataclass(frozen=True)
class Schema:
    """Typed covariate layout plus the class labels a model predicts over."""

    columns: tuple[ColumnSpec, ...]
    class_names: tuple[str, ...]
    label_column: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        if len(self.class_names) < 2:
            raise SchemaError("need at least 2 classes")
        if len(set(self.class_names)) != len(self.class_names):
            raise SchemaError("class names must be unique")

    @staticmethod
    def with_default_classes(
        columns: Sequence[ColumnSpec], class_count: int
    ) -> "Schema":
        return Schema(tuple(columns), tuple(str(i) for i in range(class_count)))

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def column_count(self) -> int:
        return len(self.columns)

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    def to_dict(self) -> dict:
        d: dict = {
            "columns": [c.to_dict() for c in self.columns],
            "classes": list(self.class_names),
        }
        if self.label_column is not None:
            d["label_column"] = self.label_column
        return d

    @staticmethod
    def from_dict(d: dict) -> "Schema":
        try:
            columns = tuple(ColumnSpec.from_dict(c) for c in d["columns"])
            classes = tuple(str(c) for c in d["classes"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc
        return Schema(columns, classes, d.get("label_column"))

    def digest(self) -> str:
        """Checksum binding artifacts (trees, oracles) to this schema."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def validate_rows(self, rows: np.ndarray) -> np.ndarray:
        """Coerce to a float matrix and check shape and ordinal ranges."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows.reshape(1, -1)
        if rows.ndim != 2 or rows.shape[1] != self.column_count:
            raise SchemaError(
                f"expected {self.column_count} columns, got shape {rows.shape}"
            )
        for j, col in enumerate(self.columns):
            if not col.is_ordinal:
                continue
            vals = rows[:, j]
            if not np.all(np.equal(np.floor(vals), vals)):
                raise SchemaError(f"ordinal column {col.name!r} has non-integer cells")
            if vals.size and (vals.min() < 0 or vals.max() > col.levels - 1):
                raise SchemaError(
                    f"ordinal column {col.name!r} has levels outside 0..{col.levels - 1}"
                )
        return rows


@dataclass(frozen=True)
class Dataset:
    """Original covariate sample, with optional hard class labels."""

    schema: Schema
    rows: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        rows = self.schema.validate_rows(self.rows)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (rows.shape[0],):
                raise SchemaError("labels must be one class index per row")
            k = self.schema.class_count
            if labels.size and (labels.min() < 0 or labels.max() >= k):
                raise SchemaError(f"labels must lie in 0..{k - 1}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])


@dataclass(frozen=True)
class SoftLabeledSample:
    """A pseudo covariate row together with the oracle's class-probability vector."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64)
        if y.min() < 0 or abs(y.sum() - 1.0) > 1e-9:
            raise SchemaError("soft label must be a probability vector summing to 1")


@dataclass(frozen=True, order=True)
class SplitRule:
    """Axis-aligned split: rows with x[column] <= threshold go left."""

    column: int
    threshold: float

    def route(self, x: Sequence[float]) -> Side:
        return "left" if x[self.column] <= self.threshold else "right"

    def route_rows(self, rows: np.ndarray) -> np.ndarray:
        """Boolean mask, True where the row goes left."""
        return rows[:, self.column] <= self.threshold

    def to_dict(self) -> dict:
        return {"column": self.column, "threshold": float(self.threshold)}

    @staticmethod
    def from_dict(d: dict) -> "SplitRule":
        return SplitRule(int(d["column"]), float(d["threshold"]))


def route(rule: SplitRule, x: Sequence[float], m: int | None = None) -> Side:
    """Route one covariate row through a rule, left on ties."""
    if m is not None and not (0 <= rule.column < m):
        raise SchemaError(f"rule column {rule.column} out of range for {m} columns")
    if rule.column >= len(x):
        raise SchemaError(f"rule column {rule.column} out of range for row of {len(x)}")
    return rule.route(x)


@dataclass(frozen=True)
class Region:
    """Axis-aligned box: per-column interval (lower, upper], intersected along a path.

    Ordinal columns use the same interval semantics; the admissible levels are
    the integers inside the interval clipped to the declared range.
    """

    schema: Schema
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        m = self.schema.column_count
        if len(self.lower) != m or len(self.upper) != m:
            raise SchemaError("region bounds must cover every column")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        for j, col in enumerate(self.schema.columns):
            if self._column_is_empty(j, col):
                raise DegenerateSplitError(
                    f"region is empty on column {col.name!r}: "
                    f"({self.lower[j]}, {self.upper[j]}]"
                )

    def _column_is_empty(self, j: int, col: ColumnSpec) -> bool:
        lo, hi = self.lower[j], self.upper[j]
        if not col.is_ordinal:
            return not lo < hi
        return self.ordinal_levels(j).size == 0

    @staticmethod
    def unbounded(schema: Schema) -> "Region":
        m = schema.column_count
        return Region(schema, (-math.inf,) * m, (math.inf,) * m)

    def ordinal_levels(self, j: int) -> np.ndarray:
        """Admissible integer levels of ordinal column j inside this region."""
        col = self.schema.columns[j]
        if not col.is_ordinal:
            raise SchemaError(f"column {col.name!r} is not ordinal")
        lo_bound, hi_bound = self.lower[j], self.upper[j]
        # smallest integer strictly above lower, largest at or below upper
        lo = 0 if math.isinf(lo_bound) else max(math.floor(lo_bound) + 1, 0)
        hi = col.levels - 1 if math.isinf(hi_bound) else min(
            math.floor(hi_bound), col.levels - 1
        )
        return np.arange(lo, hi + 1, dtype=np.int64) if hi >= lo else np.empty(0, int)

    def contains_rows(self, rows: np.ndarray) -> np.ndarray:
        """Vector of booleans: row inside the box, boundary convention (lower, upper]."""
        rows = np.asarray(rows, dtype=np.float64)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((rows > lo) & (rows <= hi), axis=1)

    def contains(self, x: Sequence[float]) -> bool:
        return bool(self.contains_rows(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])

    def refine(self, rule: SplitRule, side: Side) -> "Region":
        """Intersect with one side of a rule; raises if the result would be empty."""
        j = rule.column
        if not 0 <= j < self.schema.column_count:
            raise SchemaError(f"rule column {j} out of range")
        lo, hi = self.lower[j], self.upper[j]
        thr = float(rule.threshold)
        if not lo < thr < hi:
            raise DegenerateSplitError(
                f"threshold {thr} not strictly inside ({lo}, {hi}] on column {j}"
            )
        col = self.schema.columns[j]
        if col.is_ordinal:
            levels = self.ordinal_levels(j)
            if not ((levels <= thr).any() and (levels > thr).any()):
                raise DegenerateSplitError(
                    f"threshold {thr} does not separate levels {levels.tolist()}"
                )
        lower = list(self.lower)
        upper = list(self.upper)
        if side == "left":
            upper[j] = thr
        elif side == "right":
            lower[j] = thr
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        return Region(self.schema, tuple(lower), tuple(upper))


def refine(region: Region, rule: SplitRule, side: Side) -> Region:
    return region.refine(rule, side)


@dataclass(frozen=True)
class NodeDiagnostics:
    """Audit trail of how a split was certified."""

    pseudo_samples_used: int
    final_aggregate_pvalue: Union[float, str]  # float, or "cutoff-reached"
    candidates_considered: int
    candidates_surviving: int

    def to_dict(self) -> dict:
        return {
            "pseudo_samples_used": self.pseudo_samples_used,
            "final_aggregate_pvalue": self.final_aggregate_pvalue,
            "candidates_considered": self.candidates_considered,
            "candidates_surviving": self.candidates_surviving,
        }

    @staticmethod
    def from_dict(d: dict) -> "NodeDiagnostics":
        return NodeDiagnostics(
            int(d["pseudo_samples_used"]),
            d["final_aggregate_pvalue"],
            int(d["candidates_considered"]),
            int(d["candidates_surviving"]),
        )


@dataclass(frozen=True)
class Leaf:
    class_probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = np.asarray(self.class_probs, dtype=np.float64)
        if probs.min() < -1e-12 or abs(probs.sum() - 1.0) > 1e-9:
            raise SchemaError("leaf class probabilities must sum to 1")
        object.__setattr__(self, "class_probs", tuple(float(p) for p in self.class_probs))

    @property
    def predicted_class(self) -> int:
        """Argmax class index; exact ties resolve to the lowest index."""
        return int(np.argmax(self.class_probs))


@dataclass(frozen=True)
class Internal:
    rule: SplitRule
    left: "TreeNode"
    right: "TreeNode"
    diagnostics: NodeDiagnostics | None = None


TreeNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class Tree:
    """Binary decision tree bound to a schema by digest."""

    root: TreeNode
    schema: Schema
    schema_digest: str = field(default="")

    def __post_init__(self) -> None:
        if not self.schema_digest:
            object.__setattr__(self, "schema_digest", self.schema.digest())
        elif self.schema_digest != self.schema.digest():
            raise IncompatibleTreeError("schema digest does not match schema")

    def depth(self) -> int:
        """Number of layers, counting the root as depth 1."""

        def d(node: TreeNode) -> int:
            if isinstance(node, Leaf):
                return 1
            return 1 + max(d(node.left), d(node.right))

        return d(self.root)

    def iter_nodes(self) -> Iterator[tuple[tuple[int, ...], TreeNode]]:
        """Depth-first (node path, node) pairs; path is a tuple of 0/1 turns."""
        stack: list[tuple[tuple[int, ...], TreeNode]] = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            if isinstance(node, Internal):
                stack.append((path + (1,), node.right))
                stack.append((path + (0,), node.left))

    def leaf_count(self) -> int:
        return sum(1 for _, n in self.iter_nodes() if isinstance(n, Leaf))

    def internal_count(self) -> int:
        return sum(1 for _, n in self.iter_nodes() if isinstance(n, Internal))


def predict(tree: Tree, x: Sequence[float]) -> tuple[np.ndarray, list[tuple[SplitRule, Side]]]:
    """Route one row to its unique leaf.

    Returns the leaf's class-probability vector and the path of (rule, side)
    decisions taken from the root.
    """
    row = tree.schema.validate_rows(np.asarray(x, dtype=np.float64))[0]
    node = tree.root
    path: list[tuple[SplitRule, Side]] = []
    while isinstance(node, Internal):
        side = node.rule.route(row)
        path.append((node.rule, side))
        node = node.left if side == "left" else node.right
    return np.asarray(node.class_probs, dtype=np.float64), path


def predict_batch(tree: Tree, rows: np.ndarray) -> np.ndarray:
    """Class-probability matrix for many rows (vectorized recursion on masks)."""
    rows = tree.schema.validate_rows(rows)
    n = rows.shape[0]
    k = tree.schema.class_count
    out = np.empty((n, k), dtype=np.float64)
    if n == 0:
        return out

    def fill(node: TreeNode, idx: np.ndarray) -> None:
        if isinstance(node, Leaf):
            out[idx] = np.asarray(node.class_probs)
            return
        left_mask = node.rule.route_rows(rows[idx])
        fill(node.left, idx[left_mask])
        fill(node.right, idx[~left_mask])

    fill(tree.root, np.arange(n))
    return out


def check_tree_compatible(tree: Tree, schema: Schema) -> None:
    if tree.schema_digest != schema.digest():
        raise IncompatibleTreeError(
            "tree was built for a different schema (digest mismatch)"
        )


# --- serialization -----------------------------------------------------------


def _node_to_dict(node: TreeNode, include_diagnostics: bool) -> dict:
    if isinstance(node, Leaf):
        return {"probs": [float(p) for p in node.class_probs]}
    d: dict = {
        "rule": node.rule.to_dict(),
        "left": _node_to_dict(node.left, include_diagnostics),
        "right": _node_to_dict(node.right, include_diagnostics),
    }
    if include_diagnostics and node.diagnostics is not None:
        d["diagnostics"] = node.diagnostics.to_dict()
    return d


def _node_from_dict(d: dict) -> TreeNode:
    if "probs" in d:
        return Leaf(tuple(float(p) for p in d["probs"]))
    diagnostics = (
        NodeDiagnostics.from_dict(d["diagnostics"]) if "diagnostics" in d else None
    )
    return Internal(
        SplitRule.from_dict(d["rule"]),
        _node_from_dict(d["left"]),
        _node_from_dict(d["right"]),
        diagnostics,
    )


def tree_to_dict(tree: Tree, include_diagnostics: bool = True) -> dict:
    return {
        "format": "stabletree-tree",
        "version": 1,
        "schema": tree.schema.to_dict(),
        "schema_digest": tree.schema_digest,
        "root": _node_to_dict(tree.root, include_diagnostics),
    }


def tree_to_json(tree: Tree, include_diagnostics: bool = True) -> str:
    """Canonical JSON export; identical trees serialize to identical bytes."""
    return json.dumps(
        tree_to_dict(tree, include_diagnostics), indent=1, separators=(",", ": ")
    )


def tree_from_dict(d: dict) -> Tree:
    try:
        schema = Schema.from_dict(d["schema"])
        root = _node_from_dict(d["root"])
        digest = d["schema_digest"]
    except (KeyError, TypeError, ValueError) as exc:
        raise IncompatibleTreeError(f"malformed tree export: {exc}") from exc
    if digest != schema.digest():
        raise IncompatibleTreeError("tree export digest does not match its schema")
    return Tree(root, schema, digest)


def tree_from_json(text: str) -> Tree:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IncompatibleTreeError(f"tree export is not valid JSON: {exc}") from exc
    return tree_from_dict(d)


def tree_to_dot(tree: Tree) -> str:
    """Graphviz DOT rendering with column names on internal nodes."""
    lines = ["digraph stabletree {", '  node [shape=box, fontname="Helvetica"];']
    counter = 0

    def emit(node: TreeNode) -> int:
        nonlocal counter
        nid = counter
        counter += 1
        if isinstance(node, Leaf):
            probs = ", ".join(f"{p:.3f}" for p in node.class_probs)
            label = f"{tree.schema.class_names[node.predicted_class]}\\n[{probs}]"
            lines.append(f'  n{nid} [label="{label}", style=filled, fillcolor=lightgrey];')
            return nid
        name = tree.schema.columns[node.rule.column].name
        lines.append(f'  n{nid} [label="{name} <= {node.rule.threshold:g}"];')
        left_id = emit(node.left)
        right_id = emit(node.right)
        lines.append(f'  n{nid} -> n{left_id} [label="yes"];')
        lines.append(f'  n{nid} -> n{right_id} [label="no"];')
        return nid

    emit(tree.root)
    lines.append("}")
    return "\n".join(lines)
