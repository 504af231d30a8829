"""Black-box class-probability oracles.

The built-in oracle is a bagged forest of greedy CART trees with per-split
feature subsampling. Leaves store training-sample class frequencies, so
``predict_proba`` returns smooth soft labels (the per-tree frequency vectors
averaged over the forest). An adapter speaks a line-delimited JSON protocol to
external predictor processes so any model can stand in for the forest.
"""
from __future__ import annotations

import io
import json
import math
import select
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .core import Dataset, Schema
from .errors import DataError, DegenerateOracleError, OracleIOError

try:  # optional fast traversal; the numpy fallback is bit-identical
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


@runtime_checkable
class Oracle(Protocol):
    """Anything that maps covariate rows to class-probability rows."""

    class_count: int

    def predict_proba(self, rows: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ForestConfig:
    tree_count: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # default ceil(sqrt(m))
    bootstrap: bool = True
    allow_constant: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tree_count < 1:
            raise ValueError("tree_count must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")

    def resolved_mtry(self, m: int) -> int:
        mtry = self.features_per_split
        if mtry is None:
            mtry = math.ceil(math.sqrt(m))
        if not 1 <= mtry <= m:
            raise ValueError(f"features_per_split must lie in 1..{m}")
        return mtry


def _gini_of_counts(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts / n
    return float(1.0 - p @ p)


def _best_split_on_feature(
    values: np.ndarray, one_hot: np.ndarray, min_leaf: int
) -> tuple[float, float] | None:
    """(weighted child gini, threshold) minimizing impurity, or None."""
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    sv = values[order]
    csum = np.cumsum(one_hot[order], axis=0)
    # candidate cut after position i requires a value change between i and i+1
    cuts = np.nonzero(sv[:-1] < sv[1:])[0] + 1
    if min_leaf > 1:
        cuts = cuts[(cuts >= min_leaf) & (n - cuts >= min_leaf)]
    if cuts.size == 0:
        return None
    left = csum[cuts - 1]
    total = csum[-1]
    right = total - left
    n_l = cuts.astype(np.float64)
    n_r = n - n_l
    gini_l = 1.0 - np.einsum("ij,ij->i", left, left) / n_l**2
    gini_r = 1.0 - np.einsum("ij,ij->i", right, right) / n_r**2
    weighted = (n_l * gini_l + n_r * gini_r) / n
    best = int(np.argmin(weighted))
    pos = cuts[best]
    threshold = 0.5 * (sv[pos - 1] + sv[pos])
    return float(weighted[best]), float(threshold)


class _TreeArrays:
    """Mutable flat arrays while a single CART tree is being grown."""

    def __init__(self, k: int) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.probs: list[np.ndarray] = []
        self.k = k

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.probs.append(np.zeros(self.k))
        return len(self.feature) - 1


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    k: int,
    config: ForestConfig,
    rng: np.random.Generator,
) -> _TreeArrays:
    n, m = X.shape
    mtry = config.resolved_mtry(m)
    one_hot = np.eye(k)[y]
    tree = _TreeArrays(k)
    root = tree.add_node()
    # stack of (node id, row indices, depth); children are visited left-first
    stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(n), 1)]
    while stack:
        node, idx, depth = stack.pop()
        counts = one_hot[idx].sum(axis=0)
        tree.probs[node] = counts / counts.sum()
        parent_gini = _gini_of_counts(counts)
        at_depth_limit = config.max_depth is not None and depth >= config.max_depth
        if at_depth_limit or idx.size < 2 * config.min_leaf or parent_gini <= 0.0:
            continue
        feats = np.sort(rng.choice(m, size=mtry, replace=False))
        best: tuple[float, int, float] | None = None
        for f in feats:
            found = _best_split_on_feature(X[idx, f], one_hot[idx], config.min_leaf)
            if found is None:
                continue
            gini, thr = found
            if best is None or gini < best[0]:
                best = (gini, int(f), thr)
        if best is None or best[0] >= parent_gini - 1e-12:
            continue
        _, f, thr = best
        mask = X[idx, f] <= thr
        left_id = tree.add_node()
        right_id = tree.add_node()
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = left_id
        tree.right[node] = right_id
        stack.append((right_id, idx[~mask], depth + 1))
        stack.append((left_id, idx[mask], depth + 1))
    return tree


if _HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _traverse_forest(X, feature, threshold, left, right, probs, roots, out):
        n = X.shape[0]
        n_trees = roots.shape[0]
        k = out.shape[1]
        for i in prange(n):
            for t in range(n_trees):
                node = roots[t]
                while feature[node] >= 0:
                    if X[i, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                for j in range(k):
                    out[i, j] += probs[node, j]
            for j in range(k):
                out[i, j] /= n_trees


def _traverse_forest_numpy(X, feature, threshold, left, right, probs, roots, depths, out):
    n = X.shape[0]
    rows = np.arange(n)
    for t in range(roots.shape[0]):
        idx = np.full(n, roots[t], dtype=np.int64)
        for _ in range(depths[t]):
            f = feature[idx]
            at_leaf = f < 0
            if at_leaf.all():
                break
            f_safe = np.where(at_leaf, 0, f)
            go_left = X[rows, f_safe] <= threshold[idx]
            nxt = np.where(go_left, left[idx], right[idx])
            idx = np.where(at_leaf, idx, nxt)
        out += probs[idx]
    out /= roots.shape[0]


@dataclass
class BuiltinForest:
    """Bagged CART forest, flattened into shared arrays for fast traversal."""

    schema: Schema
    config: ForestConfig
    feature: np.ndarray  # (total nodes,) int32, -1 marks a leaf
    threshold: np.ndarray  # (total nodes,) float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    probs: np.ndarray  # (total nodes, k) leaf class frequencies
    roots: np.ndarray  # (tree_count,) int32
    depths: np.ndarray  # (tree_count,) int32 max depth per tree
    inbag: np.ndarray  # (tree_count, n0) uint32 bootstrap multiplicities
    class_count: int = field(init=False)

    def __post_init__(self) -> None:
        self.class_count = self.schema.class_count

    @property
    def schema_digest(self) -> str:
        return self.schema.digest()

    @property
    def tree_count(self) -> int:
        return int(self.roots.shape[0])

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = self.schema.validate_rows(np.asarray(rows, dtype=np.float64))
        out = np.zeros((rows.shape[0], self.class_count))
        if rows.shape[0] == 0:
            return out
        if _HAVE_NUMBA:
            _traverse_forest(
                rows,
                self.feature,
                self.threshold,
                self.left,
                self.right,
                self.probs,
                self.roots,
                out,
            )
        else:
            _traverse_forest_numpy(
                rows,
                self.feature,
                self.threshold,
                self.left,
                self.right,
                self.probs,
                self.roots,
                self.depths,
                out,
            )
        return out

    def oob_accuracy(self, data: Dataset) -> float:
        """Out-of-bag accuracy on the training sample."""
        if data.labels is None:
            raise DataError("out-of-bag accuracy needs labels")
        n = data.n_rows
        if self.inbag.shape[1] != n:
            raise DataError("dataset size does not match the fitted sample")
        acc = np.zeros((n, self.class_count))
        votes = np.zeros(n)
        rows = data.rows
        for t in range(self.tree_count):
            oob = self.inbag[t] == 0
            if not oob.any():
                continue
            single = BuiltinForest(
                self.schema,
                self.config,
                self.feature,
                self.threshold,
                self.left,
                self.right,
                self.probs,
                self.roots[t : t + 1],
                self.depths[t : t + 1],
                self.inbag[t : t + 1],
            )
            acc[oob] += single.predict_proba(rows[oob])
            votes[oob] += 1
        covered = votes > 0
        if not covered.any():
            raise DataError("no out-of-bag rows; was the forest fit without bootstrap?")
        predicted = np.argmax(acc[covered], axis=1)
        return float(np.mean(predicted == data.labels[covered]))


def fit_forest(data: Dataset, config: ForestConfig | None = None) -> BuiltinForest:
    """Fit a bagged CART forest on hard-labeled data; deterministic given seed."""
    config = config or ForestConfig()
    if data.labels is None:
        raise DataError("fit_forest needs a labeled dataset")
    n, m = data.rows.shape
    if n < 2:
        raise DegenerateOracleError("need at least 2 training rows")
    k = data.schema.class_count
    observed = np.unique(data.labels)
    if observed.size < 2 and not config.allow_constant:
        raise DegenerateOracleError(
            "training labels contain a single class; "
            "set allow_constant to accept a constant oracle"
        )
    config.resolved_mtry(m)  # validate early

    seeds = np.random.SeedSequence(config.seed).spawn(config.tree_count)
    feature_parts: list[np.ndarray] = []
    threshold_parts: list[np.ndarray] = []
    left_parts: list[np.ndarray] = []
    right_parts: list[np.ndarray] = []
    probs_parts: list[np.ndarray] = []
    roots = np.zeros(config.tree_count, dtype=np.int32)
    depths = np.zeros(config.tree_count, dtype=np.int32)
    inbag = np.zeros((config.tree_count, n), dtype=np.uint32)

    offset = 0
    for t in range(config.tree_count):
        rng = np.random.Generator(np.random.Philox(seeds[t]))
        if config.bootstrap:
            indices = rng.integers(0, n, size=n)
        else:
            indices = np.arange(n)
        np.add.at(inbag[t], indices, 1)
        tree = _grow_tree(data.rows[indices], data.labels[indices], k, config, rng)
        count = len(tree.feature)
        feature = np.asarray(tree.feature, dtype=np.int32)
        left = np.asarray(tree.left, dtype=np.int32)
        right = np.asarray(tree.right, dtype=np.int32)
        internal = feature >= 0
        left[internal] += offset
        right[internal] += offset
        feature_parts.append(feature)
        threshold_parts.append(np.asarray(tree.threshold))
        left_parts.append(left)
        right_parts.append(right)
        probs_parts.append(np.asarray(tree.probs))
        roots[t] = offset
        depths[t] = _tree_depth(feature, left - offset, right - offset)
        offset += count

    return BuiltinForest(
        schema=data.schema,
        config=config,
        feature=np.concatenate(feature_parts),
        threshold=np.concatenate(threshold_parts),
        left=np.concatenate(left_parts),
        right=np.concatenate(right_parts),
        probs=np.vstack(probs_parts),
        roots=roots,
        depths=depths,
        inbag=inbag,
    )


def _tree_depth(feature: np.ndarray, left: np.ndarray, right: np.ndarray) -> int:
    depth = np.zeros(len(feature), dtype=np.int32)
    best = 1
    # nodes are stored preorder, so parents precede children
    for node in range(len(feature)):
        d = depth[node] + 1
        if feature[node] >= 0:
            depth[left[node]] = d
            depth[right[node]] = d
        elif d > best:
            best = int(d)
    return best


# --- serialization -----------------------------------------------------------

_FOREST_MAGIC = b"STFORESTv1\n"
_ARRAY_FIELDS = ("feature", "threshold", "left", "right", "probs", "roots", "depths", "inbag")


def save_forest(forest: BuiltinForest, path: str) -> None:
    header = {
        "schema": forest.schema.to_dict(),
        "config": {
            "tree_count": forest.config.tree_count,
            "max_depth": forest.config.max_depth,
            "min_leaf": forest.config.min_leaf,
            "features_per_split": forest.config.features_per_split,
            "bootstrap": forest.config.bootstrap,
            "allow_constant": forest.config.allow_constant,
            "seed": forest.config.seed,
        },
        "arrays": list(_ARRAY_FIELDS),
    }
    with open(path, "wb") as fh:
        fh.write(_FOREST_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in _ARRAY_FIELDS:
            np.lib.format.write_array(fh, getattr(forest, name), version=(1, 0))


def load_forest(path: str) -> BuiltinForest:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(_FOREST_MAGIC))
            if magic != _FOREST_MAGIC:
                raise DataError(f"{path} is not a stabletree forest artifact")
            header = json.loads(fh.readline().decode("utf-8"))
            arrays = {
                name: np.lib.format.read_array(fh) for name in header["arrays"]
            }
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load forest from {path}: {exc}") from exc
    schema = Schema.from_dict(header["schema"])
    config = ForestConfig(**header["config"])
    return BuiltinForest(schema=schema, config=config, **arrays)


# --- external oracle ---------------------------------------------------------


class ExternalProcessOracle:
    """Adapter to a predictor subprocess speaking line-delimited JSON.

    Request:  {"id": <int>, "rows": [[...], ...]}
    Reply:    {"id": <int>, "probs": [[...], ...]}

    One request per line on stdin, one reply per line on stdout, ids echoed.
    """

    MAX_BATCH = 5000

    def __init__(self, command: str | list[str], class_count: int,
                 timeout: float = 60.0) -> None:
        if class_count < 2:
            raise ValueError("class_count must be at least 2")
        self.command = command
        self.class_count = class_count
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._next_id = 0

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        argv = shlex.split(self.command) if isinstance(self.command, str) else self.command
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleIOError(f"cannot start oracle process {argv!r}: {exc}") from exc

    def _read_reply_line(self) -> str:
        assert self._proc is not None and self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        buf = io.StringIO()
        while True:
            ready, _, _ = select.select([fd], [], [], self.timeout)
            if not ready:
                raise OracleIOError(
                    f"oracle process timed out after {self.timeout}s"
                )
            line = self._proc.stdout.readline()
            if line == "":
                raise OracleIOError(
                    f"oracle process exited (code {self._proc.poll()}) mid-request"
                )
            buf.write(line)
            if line.endswith("\n"):
                return buf.getvalue()

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-D matrix")
        if rows.shape[0] == 0:
            return np.zeros((0, self.class_count))
        self._ensure_started()
        out = np.empty((rows.shape[0], self.class_count))
        for start in range(0, rows.shape[0], self.MAX_BATCH):
            chunk = rows[start : start + self.MAX_BATCH]
            out[start : start + chunk.shape[0]] = self._request(chunk)
        return out

    def _request(self, chunk: np.ndarray) -> np.ndarray:
        assert self._proc is not None and self._proc.stdin is not None
        req_id = self._next_id
        self._next_id += 1
        message = json.dumps({"id": req_id, "rows": chunk.tolist()})
        try:
            self._proc.stdin.write(message + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise OracleIOError(f"oracle process pipe broke: {exc}") from exc
        reply = self._read_reply_line()
        try:
            payload = json.loads(reply)
            probs = np.asarray(payload["probs"], dtype=np.float64)
            reply_id = payload["id"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise OracleIOError(f"malformed oracle reply {reply[:200]!r}: {exc}") from exc
        if reply_id != req_id:
            raise OracleIOError(f"oracle reply id {reply_id} != request id {req_id}")
        if probs.shape != (chunk.shape[0], self.class_count):
            raise OracleIOError(
                f"oracle returned shape {probs.shape}, "
                f"expected {(chunk.shape[0], self.class_count)}"
            )
        if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-9 or probs.min() < 0:
            raise OracleIOError("oracle returned rows that are not probability vectors")
        return probs

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:  # pragma: no cover
                self._proc.kill()
            self._proc = None

    def __enter__(self) -> "ExternalProcessOracle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


@dataclass(frozen=True)
class ConstantOracle:
    """Fixed-probability oracle, handy for tests and degenerate data."""

    probs: tuple[float, ...]

    @property
    def class_count(self) -> int:
        return len(self.probs)

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        return np.tile(np.asarray(self.probs), (rows.shape[0], 1))


@dataclass(frozen=True)
class FunctionOracle:
    """Wrap a plain function rows -> probability matrix as an oracle."""

    fn: object
    class_count: int

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        probs = np.asarray(self.fn(np.asarray(rows, dtype=np.float64)), dtype=np.float64)
        if probs.shape != (rows.shape[0], self.class_count):
            raise ValueError(f"oracle function returned shape {probs.shape}")
        return probs
