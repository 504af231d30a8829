"""Measurements over fitted artifacts: mimicking accuracy, predictive
accuracy, and structural stability across replicate builds."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .builder import BuildConfig, build_tree
from .core import Dataset, Internal, Tree, check_tree_compatible, predict_batch
from .errors import DataError
from .oracle import Oracle


@dataclass(frozen=True)
class MimicReport:
    """How closely a tree reproduces its oracle on a test sample."""

    l1_prob_diff: float  # mean over rows of sum_j |p_tree_j - p_oracle_j|
    class_agreement: float  # fraction of rows with equal argmax
    n_test: int

    def to_dict(self) -> dict:
        return {
            "l1_prob_diff": self.l1_prob_diff,
            "class_agreement": self.class_agreement,
            "n_test": self.n_test,
        }


def model_probabilities(model, rows: np.ndarray) -> np.ndarray:
    """Probability matrix from either a Tree or an oracle-like object."""
    if isinstance(model, Tree):
        return predict_batch(model, rows)
    return model.predict_proba(rows)


def mimic_accuracy(tree: Tree, oracle: Oracle, test_rows: np.ndarray) -> MimicReport:
    rows = tree.schema.validate_rows(np.asarray(test_rows, dtype=np.float64))
    if rows.shape[0] == 0:
        raise DataError("mimic_accuracy needs at least one test row")
    p_tree = predict_batch(tree, rows)
    p_oracle = oracle.predict_proba(rows)
    l1 = float(np.mean(np.abs(p_tree - p_oracle).sum(axis=1)))
    agreement = float(np.mean(np.argmax(p_tree, axis=1) == np.argmax(p_oracle, axis=1)))
    return MimicReport(l1, agreement, int(rows.shape[0]))


def predictive_accuracy(model, data: Dataset) -> float:
    """Fraction of rows whose predicted argmax class matches the hard label."""
    if data.labels is None:
        raise DataError("predictive_accuracy needs labeled rows")
    if isinstance(model, Tree):
        check_tree_compatible(model, data.schema)
    probs = model_probabilities(model, data.rows)
    return float(np.mean(np.argmax(probs, axis=1) == data.labels))


def structure_key(tree: Tree, depth: int, tolerance) -> str:
    """Canonical string identifying the top ``depth`` layers of a tree.

    Thresholds are bucketed by rounding to the nearest multiple of
    ``tolerance`` (a scalar, or one value per column), so numerically close
    splits map to the same key. Layers below ``depth`` are truncated.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    m = tree.schema.column_count
    tol = np.broadcast_to(np.asarray(tolerance, dtype=np.float64), (m,))

    def key(node, remaining: int) -> str:
        if not isinstance(node, Internal):
            return "L"
        rule = node.rule
        t = tol[rule.column]
        bucket = int(round(rule.threshold / t)) if t > 0 else rule.threshold
        here = f"{rule.column}@{bucket}"
        if remaining == 1:
            return f"({here})"
        return f"({here} {key(node.left, remaining - 1)} {key(node.right, remaining - 1)})"

    return key(tree.root, depth)


def default_tolerances(rows: np.ndarray, fraction: float = 1e-3) -> np.ndarray:
    """Per-column threshold tolerance: ``fraction`` of the column's value range."""
    rows = np.asarray(rows, dtype=np.float64)
    spans = rows.max(axis=0) - rows.min(axis=0)
    spans[spans <= 0] = 1.0
    return spans * fraction


@dataclass(frozen=True)
class StabilityReport:
    """Histogram of structure keys per examined depth over replicate builds."""

    histograms: dict[int, dict[str, int]]
    replicates: int
    threshold_tolerance: float  # fraction of each column's range used to bucket
    failures: tuple[str, ...] = field(default_factory=tuple)

    def unique_structures(self, depth: int) -> int:
        return len(self.histograms[depth])

    def modal_fraction(self, depth: int) -> float:
        counts = self.histograms[depth]
        total = sum(counts.values())
        return max(counts.values()) / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "replicates": self.replicates,
            "threshold_tolerance": self.threshold_tolerance,
            "failures": list(self.failures),
            "histograms": {
                str(d): dict(sorted(h.items())) for d, h in self.histograms.items()
            },
        }


def stability_experiment(
    data: Dataset,
    oracle: Oracle,
    cfg: BuildConfig,
    replicates: int,
    depths: list[int],
    tolerance_fraction: float = 1e-3,
    threads: int = 1,
) -> StabilityReport:
    """Build ``replicates`` trees from one oracle with seeds seed+1..seed+R and
    histogram their structure keys at each requested depth.

    Replicates are independent (each owns its derived seed), so the result is
    identical for any thread count. Individual build failures are recorded,
    not fatal.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    if not depths or min(depths) < 1:
        raise ValueError("depths must be a non-empty list of positive ints")
    tolerances = default_tolerances(data.rows, tolerance_fraction)

    def one(r: int):
        try:
            return build_tree(data, oracle, replace(cfg, seed=cfg.seed + 1 + r)), None
        except Exception as exc:  # noqa: BLE001 - per-replicate isolation
            return None, f"replicate {r}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(replicates)))
    else:
        results = [one(r) for r in range(replicates)]

    histograms: dict[int, dict[str, int]] = {d: {} for d in depths}
    failures: list[str] = []
    for tree, err in results:
        if tree is None:
            failures.append(err)
            continue
        for d in depths:
            k = structure_key(tree, d, tolerances)
            histograms[d][k] = histograms[d].get(k, 0) + 1
    return StabilityReport(
        histograms=histograms,
        replicates=replicates,
        threshold_tolerance=tolerance_fraction,
        failures=tuple(failures),
    )
