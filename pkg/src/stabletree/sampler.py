"""Pseudo-covariate generation and oracle labeling.

Covariates are drawn from the node-conditional empirical distribution of the
original rows that reached the node (the anchors), smoothed per column:
Gaussian noise with a Silverman rule-of-thumb bandwidth on continuous columns,
and a small-probability jump to a neighboring level on ordinal columns. Rows
falling outside the node's region are rejected and redrawn, so every emitted
row satisfies the region by construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import Region, Schema, SoftLabeledSample
from .errors import SamplerStarvationError, SchemaError
from .oracle import Oracle


def make_stream(*entropy: int) -> np.random.Generator:
    """Counter-based generator keyed by an entropy tuple (seed, node path, ...)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def silverman_bandwidth(values: np.ndarray) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5), with degenerate spreads falling back to sd."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 2:
        return 0.0
    sd = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    a = min(sd, iqr / 1.34)
    if a == 0.0:
        a = sd
    return 0.9 * a * n ** (-0.2)


@dataclass(frozen=True)
class SamplerConfig:
    bandwidth_factor: float = 1.0
    ordinal_jump_prob: float = 0.1
    max_rejection_factor: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.bandwidth_factor < 0:
            raise ValueError("bandwidth_factor must be non-negative")
        if not 0.0 <= self.ordinal_jump_prob <= 0.5:
            raise ValueError("ordinal_jump_prob must lie in [0, 0.5]")
        if self.max_rejection_factor < 1:
            raise ValueError("max_rejection_factor must be at least 1")


@dataclass(frozen=True)
class NodeContext:
    """Region plus the original-sample rows available as smoothing anchors.

    Anchors normally all satisfy the region. A node that inherited its parent's
    anchors (because no original row reached it) sets ``strict=False``; the
    rejection step still guarantees emitted rows satisfy the region.
    """

    schema: Schema
    region: Region
    anchors: np.ndarray
    strict: bool = True

    def __post_init__(self) -> None:
        anchors = self.schema.validate_rows(self.anchors)
        if anchors.shape[0] == 0:
            raise SchemaError("node context needs at least one anchor row")
        anchors.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)
        if self.strict and not self.region.contains_rows(anchors).all():
            raise SchemaError("anchor rows must satisfy the node region")
        bandwidths = np.zeros(self.schema.column_count)
        for j, col in enumerate(self.schema.columns):
            if not col.is_ordinal:
                bandwidths[j] = silverman_bandwidth(anchors[:, j])
        bandwidths.setflags(write=False)
        object.__setattr__(self, "_bandwidths", bandwidths)

    @property
    def bandwidths(self) -> np.ndarray:
        return self._bandwidths  # type: ignore[attr-defined]

    @staticmethod
    def root(schema: Schema, anchors: np.ndarray) -> "NodeContext":
        return NodeContext(schema, Region.unbounded(schema), anchors)


class RegionAudit:
    """Counts emitted rows and region violations when instrumentation is on."""

    def __init__(self) -> None:
        self.emitted = 0
        self.violations = 0


_audit: RegionAudit | None = None


def enable_region_audit() -> RegionAudit:
    global _audit
    _audit = RegionAudit()
    return _audit


def disable_region_audit() -> None:
    global _audit
    _audit = None


def _propose(
    ctx: NodeContext, cfg: SamplerConfig, count: int, rng: np.random.Generator
) -> np.ndarray:
    anchors = ctx.anchors
    idx = rng.integers(0, anchors.shape[0], size=count)
    rows = anchors[idx].copy()
    for j, col in enumerate(ctx.schema.columns):
        if col.is_ordinal:
            jump = rng.uniform(size=count) < cfg.ordinal_jump_prob
            direction = rng.integers(0, 2, size=count) * 2 - 1
            moved = rows[:, j] + jump * direction
            rows[:, j] = np.clip(moved, 0, col.levels - 1)
        else:
            sd = cfg.bandwidth_factor * ctx.bandwidths[j]
            rows[:, j] = rows[:, j] + rng.normal(0.0, 1.0, size=count) * sd
    return rows


def draw_covariates(
    ctx: NodeContext, cfg: SamplerConfig, count: int,
    stream: np.random.Generator | None = None,
) -> np.ndarray:
    """Draw ``count`` covariate rows inside the node region.

    Proposals that leave the region are rejected and redrawn; a run of more
    than ``max_rejection_factor * count`` consecutive rejections aborts with a
    starvation error (the region is too thin for the bandwidth).
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = stream if stream is not None else make_stream(cfg.seed)
    m = ctx.schema.column_count
    out = np.empty((count, m))
    filled = 0
    consecutive = 0
    limit = cfg.max_rejection_factor * count
    while filled < count:
        need = count - filled
        proposals = _propose(ctx, cfg, need, rng)
        ok = ctx.region.contains_rows(proposals)
        n_ok = int(ok.sum())
        if n_ok == 0:
            consecutive += need
        else:
            consecutive = need - 1 - int(np.nonzero(ok)[0].max())
        if consecutive > limit:
            raise SamplerStarvationError(
                f"rejected {consecutive} consecutive proposals for a batch of "
                f"{count}; region is too thin for the configured bandwidth"
            )
        out[filled : filled + n_ok] = proposals[ok]
        filled += n_ok
    if _audit is not None:
        inside = ctx.region.contains_rows(out)
        _audit.emitted += count
        _audit.violations += int(count - inside.sum())
    return out


@dataclass(frozen=True)
class PseudoSample(Sequence):
    """Covariate rows with their oracle soft labels, behaving as a sample list."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("covariates and labels must have equal row counts")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def __getitem__(self, i):
        if isinstance(i, (slice, list, np.ndarray)):
            return PseudoSample(self.X[i], self.Y[i])
        return SoftLabeledSample(tuple(self.X[i]), tuple(self.Y[i]))

    def __iter__(self) -> Iterator[SoftLabeledSample]:
        for i in range(len(self)):
            yield self[i]

    def extend(self, other: "PseudoSample") -> "PseudoSample":
        return PseudoSample(np.vstack([self.X, other.X]), np.vstack([self.Y, other.Y]))

    def mean_label(self) -> np.ndarray:
        return self.Y.mean(axis=0)

    @staticmethod
    def empty(m: int, k: int) -> "PseudoSample":
        return PseudoSample(np.empty((0, m)), np.empty((0, k)))


def draw_labeled(
    ctx: NodeContext,
    cfg: SamplerConfig,
    count: int,
    oracle: Oracle,
    stream: np.random.Generator | None = None,
    hard_labels: bool = False,
) -> PseudoSample:
    """Covariates from draw_covariates, labeled row-wise by the oracle.

    With ``hard_labels`` the oracle's probability rows are collapsed to one-hot
    vectors at the argmax class (lowest index on ties).
    """
    if count == 0:
        return PseudoSample.empty(ctx.schema.column_count, oracle.class_count)
    X = draw_covariates(ctx, cfg, count, stream)
    Y = oracle.predict_proba(X)
    if hard_labels:
        Y = np.eye(oracle.class_count)[np.argmax(Y, axis=1)]
    return PseudoSample(X, Y)
