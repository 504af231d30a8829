"""Recursive construction of a stabilized approximation tree over an oracle.

Each node draws pseudo samples conditioned on its region, ranks every
candidate threshold by Gini index, and certifies the leader with the
better-split test against all surviving rivals. When the aggregate flip
probability is not below alpha, the pseudo sample is grown per the sequential
sizing rule until either the test passes or the per-node cutoff is reached, at
which point the current minimal-Gini candidate wins by default.

Setting alpha >= 1 disables testing entirely and degenerates the builder to
plain greedy CART on a single root pseudo sample whose rows are inherited down
the recursion (the baseline the stability experiments compare against).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    Internal,
    Leaf,
    NodeDiagnostics,
    Region,
    Schema,
    SplitRule,
    Tree,
    TreeNode,
)
from .errors import BuildError, StableTreeError
from .oracle import Oracle
from .sampler import (
    NodeContext,
    PseudoSample,
    SamplerConfig,
    draw_labeled,
    make_stream,
)
from . import splitstat


@dataclass(frozen=True)
class BuildConfig:
    alpha: float = 0.1
    n_initial: int = 1000
    n_ps_max: int = 100_000
    growth_cap: float = 4.0
    max_rounds: int = 20
    max_depth: int = 5  # counting the root as depth 1
    min_node_anchors: int = 5
    purity_epsilon: float = 1e-3
    prune_q: float = 0.5
    bandwidth_factor: float = 1.0
    ordinal_jump_prob: float = 0.1
    max_rejection_factor: int = 100
    hard_labels: bool = False
    leaf_hard_vote: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.n_initial < 2:
            raise ValueError("n_initial must be at least 2")
        if self.n_initial > self.n_ps_max:
            raise ValueError("n_initial cannot exceed n_ps_max")
        if self.growth_cap <= 1.0:
            raise ValueError("growth_cap must exceed 1")
        if self.max_rounds < 1 or self.max_depth < 1 or self.min_node_anchors < 1:
            raise ValueError("max_rounds, max_depth, min_node_anchors must be >= 1")

    @property
    def cart_mode(self) -> bool:
        """alpha >= 1 turns off testing: greedy CART on one inherited sample."""
        return self.alpha >= 1.0

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            bandwidth_factor=self.bandwidth_factor,
            ordinal_jump_prob=self.ordinal_jump_prob,
            max_rejection_factor=self.max_rejection_factor,
            seed=self.seed,
        )


@dataclass
class Candidate:
    rule: SplitRule
    live: bool = True
    last_pvalue: float | None = None


@dataclass
class CandidateSet:
    """Candidate rules of one node, ordered by (column, threshold)."""

    candidates: list[Candidate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.candidates)

    def live_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.candidates) if c.live]


def enumerate_candidates(ctx: NodeContext) -> CandidateSet:
    """Thresholds at midpoints of adjacent distinct anchor values, per column.

    Only anchor values inside the node region participate, and a threshold must
    fall strictly inside the region's open interval for its column.
    """
    if ctx.anchors.shape[0] < 2:
        return CandidateSet()
    inside = ctx.region.contains_rows(ctx.anchors)
    rows = ctx.anchors[inside]
    out: list[Candidate] = []
    for j in range(ctx.schema.column_count):
        if rows.shape[0] < 2:
            break
        values = np.unique(rows[:, j])
        if values.size < 2:
            continue
        mids = 0.5 * (values[:-1] + values[1:])
        lo, hi = ctx.region.lower[j], ctx.region.upper[j]
        for thr in mids:
            if lo < thr < hi:
                out.append(Candidate(SplitRule(j, float(thr))))
    out.sort(key=lambda c: (c.rule.column, c.rule.threshold))
    return CandidateSet(out)


# impurity-reduction slack absorbing prefix-sum float drift at large pools
_NO_IMPROVEMENT_TOL = 1e-9


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Deterministic 64-bit mix used to fingerprint left-child index sets."""
    z = x.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass
class _RoundEval:
    """Per-round evaluation of all live candidates on the current pool."""

    usable: list[int]  # candidate indices with two non-empty children
    ginis: dict[int, float]
    groups: dict[int, list[int]]  # partition-representative -> group members
    rep_of: dict[int, int]
    best: int  # representative index of the minimal-Gini partition


def _evaluate_round(
    pool: PseudoSample, cands: CandidateSet, live: list[int]
) -> tuple[_RoundEval | None, dict[int, "splitstat.ColumnSweep"]]:
    X, Y = pool.X, pool.Y
    n = len(pool)
    by_col: dict[int, list[int]] = {}
    for i in live:
        by_col.setdefault(cands.candidates[i].rule.column, []).append(i)

    hashes = _splitmix64(np.arange(n))
    sweeps: dict[int, splitstat.ColumnSweep] = {}
    positions: dict[int, int] = {}
    ginis: dict[int, float] = {}
    fingerprints: dict[int, tuple[int, int]] = {}
    usable: list[int] = []
    for col, members in by_col.items():
        sweep = splitstat.ColumnSweep.build(X[:, col], Y, with_second_moment=True)
        sweeps[col] = sweep
        thr = np.asarray([cands.candidates[i].rule.threshold for i in members])
        pos = sweep.positions(thr)
        gin = sweep.gini(pos)
        prefix_hash = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum(hashes[sweep.order], out=prefix_hash[1:])
        for i, p, g in zip(members, pos, gin):
            positions[i] = int(p)
            if 0 < p < n:
                usable.append(i)
                ginis[i] = float(g)
                fingerprints[i] = (int(p), int(prefix_hash[p]))
    if not usable:
        return None, sweeps

    def rule_key(i: int) -> tuple[int, float]:
        rule = cands.candidates[i].rule
        return (rule.column, rule.threshold)

    # merge candidates inducing identical partitions of the pool; the
    # representative is the lexicographically smallest (column, threshold)
    by_fingerprint: dict[tuple[int, int], list[int]] = {}
    for i in usable:
        by_fingerprint.setdefault(fingerprints[i], []).append(i)
    groups: dict[int, list[int]] = {}
    rep_of: dict[int, int] = {}
    for members in by_fingerprint.values():
        cols = {cands.candidates[i].rule.column for i in members}
        if len(cols) > 1:
            # fingerprint collisions across columns are verified exactly
            subgroups = _verify_same_partition(X, cands, members)
        else:
            subgroups = [members]
        for sub in subgroups:
            rep = min(sub, key=rule_key)
            groups[rep] = sub
            for i in sub:
                rep_of[i] = rep

    usable.sort(key=rule_key)
    best = min(groups, key=lambda i: (ginis[i], *rule_key(i)))
    return (
        _RoundEval(usable=usable, ginis=ginis, groups=groups, rep_of=rep_of, best=best),
        sweeps,
    )


def _verify_same_partition(X: np.ndarray, cands: CandidateSet, members: list[int]):
    """Split a fingerprint group into lists of exactly-equal partitions."""
    buckets: list[tuple[np.ndarray, list[int]]] = []
    for i in members:
        mask = cands.candidates[i].rule.route_rows(X)
        for existing, lst in buckets:
            if np.array_equal(existing, mask):
                lst.append(i)
                break
        else:
            buckets.append((mask, [i]))
    return [lst for _, lst in buckets]


@dataclass
class SplitDecision:
    rule: SplitRule
    diagnostics: NodeDiagnostics
    pool: PseudoSample


def select_split(
    ctx: NodeContext,
    cands: CandidateSet,
    oracle: Oracle,
    cfg: BuildConfig,
    stream: np.random.Generator,
    pool: PseudoSample,
) -> SplitDecision | None:
    """Pick the node's split, escalating the pseudo sample until certified.

    Returns None when every candidate degenerates on the pool (the node must
    become a leaf). Diagnostics record the final pool size, the aggregate
    p-value (or the cutoff flag), and candidate counts.
    """
    if len(cands) == 0:
        return None
    considered = len(cands)
    scfg = cfg.sampler_config()
    rounds = 0
    while True:
        rounds += 1
        live = cands.live_indices()
        ev, sweeps = _evaluate_round(pool, cands, live)
        if ev is None:
            return None
        best_cand = cands.candidates[ev.best]
        best_gini = ev.ginis[ev.best]
        node_gini = splitstat.gini_gain_distribution(pool.mean_label())
        if best_gini >= node_gini - _NO_IMPROVEMENT_TOL:
            return None  # no candidate reduces impurity: the node is a leaf
        rival_reps = [r for r in ev.groups if r != ev.best]

        if rival_reps:
            projection, _, _ = splitstat.best_split_projection(
                pool.X, pool.Y, best_cand.rule
            )
            pvalues = _rival_pvalues(
                pool, cands, sweeps, rival_reps, best_gini, projection
            )
            for rep, p in zip(rival_reps, pvalues):
                for i in ev.groups[rep]:
                    cands.candidates[i].last_pvalue = float(p)
            surviving = splitstat.prune_candidates(pvalues, cfg.prune_q)
            for idx, rep in enumerate(rival_reps):
                if idx not in surviving:
                    for i in ev.groups[rep]:
                        cands.candidates[i].live = False
            aggregate = splitstat.aggregate_pvalue(
                [pvalues[i] for i in sorted(surviving)]
            )
        else:
            aggregate = 0.0

        live_now = len(cands.live_indices())
        n = len(pool)
        if aggregate < cfg.alpha:
            diag = NodeDiagnostics(n, float(aggregate), considered, live_now)
            return SplitDecision(best_cand.rule, diag, pool)
        if n >= cfg.n_ps_max or rounds >= cfg.max_rounds:
            diag = NodeDiagnostics(n, "cutoff-reached", considered, live_now)
            return SplitDecision(best_cand.rule, diag, pool)

        cap_target = int(np.ceil(cfg.growth_cap * n))
        if aggregate >= 0.5:
            target = cap_target
        else:
            try:
                target = min(
                    splitstat.required_sample_size(n, aggregate, cfg.alpha), cap_target
                )
            except ValueError:
                target = cap_target
        target = min(max(target, n + 1), cfg.n_ps_max)
        extra = draw_labeled(
            ctx, scfg, target - n, oracle, stream, hard_labels=cfg.hard_labels
        )
        pool = pool.extend(extra)


def _rival_pvalues(
    pool: PseudoSample,
    cands: CandidateSet,
    sweeps: dict[int, "splitstat.ColumnSweep"],
    rival_reps: Sequence[int],
    best_gini: float,
    projection: np.ndarray,
) -> list[float]:
    by_col: dict[int, list[int]] = {}
    for idx, rep in enumerate(rival_reps):
        by_col.setdefault(cands.candidates[rep].rule.column, []).append(idx)
    out = np.empty(len(rival_reps))
    for col, idxs in by_col.items():
        sweep = sweeps[col]
        thr = np.asarray([cands.candidates[rival_reps[i]].rule.threshold for i in idxs])
        pos = sweep.positions(thr)
        ginis = sweep.gini(pos)
        p = sweep.rival_pvalues(pos, ginis, best_gini, projection)
        out[idxs] = p
    return [float(v) for v in out]


def build_tree(data, oracle: Oracle, cfg: BuildConfig | None = None) -> Tree:
    """Distill the oracle into a depth-bounded stabilized tree.

    Deterministic given (data, oracle, cfg.seed): every node derives its own
    counter-based random stream from the seed and its path, so sibling
    subtrees are independent of each other's sampling effort.
    """
    cfg = cfg or BuildConfig()
    schema: Schema = data.schema
    digest = getattr(oracle, "schema_digest", None)
    if digest is not None and digest != schema.digest():
        raise BuildError("oracle and data disagree on the schema (digest mismatch)")
    if oracle.class_count != schema.class_count:
        raise BuildError(
            f"oracle predicts {oracle.class_count} classes, schema has {schema.class_count}"
        )
    builder = _Builder(schema, oracle, cfg)
    root_ctx = NodeContext.root(schema, data.rows)
    root = builder.build_node(root_ctx, path=(), depth=1, inherited=None)
    return Tree(root, schema)


class _Builder:
    def __init__(self, schema: Schema, oracle: Oracle, cfg: BuildConfig) -> None:
        self.schema = schema
        self.oracle = oracle
        self.cfg = cfg
        self.scfg = cfg.sampler_config()

    def build_node(
        self,
        ctx: NodeContext,
        path: tuple[int, ...],
        depth: int,
        inherited: PseudoSample | None,
    ) -> TreeNode:
        try:
            return self._build_node_inner(ctx, path, depth, inherited)
        except BuildError:
            raise
        except StableTreeError as exc:
            label = "root" if not path else "root." + ".".join(
                "LR"[t] for t in path
            )
            raise BuildError(f"building node {label} failed: {exc}") from exc

    def _draw(self, ctx: NodeContext, count: int, stream) -> PseudoSample:
        return draw_labeled(
            ctx, self.scfg, count, self.oracle, stream, hard_labels=self.cfg.hard_labels
        )

    def _leaf(self, pool: PseudoSample, ctx: NodeContext, stream) -> Leaf:
        if len(pool) == 0:
            pool = self._draw(ctx, self.cfg.n_initial, stream)
        if self.cfg.leaf_hard_vote:
            k = self.oracle.class_count
            votes = np.bincount(np.argmax(pool.Y, axis=1), minlength=k)
            probs = votes / votes.sum()
        else:
            probs = pool.mean_label()
        return Leaf(tuple(float(p) for p in probs))

    def _build_node_inner(
        self,
        ctx: NodeContext,
        path: tuple[int, ...],
        depth: int,
        inherited: PseudoSample | None,
    ) -> TreeNode:
        cfg = self.cfg
        stream = make_stream(cfg.seed, *path)
        own_anchors = ctx.anchors.shape[0] if ctx.strict else 0

        if cfg.cart_mode:
            pool = inherited if inherited is not None else self._draw(
                ctx, cfg.n_ps_max, stream
            )
        else:
            pool = self._draw(ctx, cfg.n_initial, stream)

        stop = (
            depth >= cfg.max_depth
            or own_anchors < cfg.min_node_anchors
            or (
                len(pool) > 0
                and splitstat.gini_gain_distribution(pool.mean_label())
                < cfg.purity_epsilon
            )
        )
        if stop:
            return self._leaf(pool, ctx, stream)

        cands = enumerate_candidates(ctx)
        if len(cands) == 0:
            return self._leaf(pool, ctx, stream)

        if cfg.cart_mode:
            decision = self._greedy_split(pool, cands)
        else:
            decision = select_split(ctx, cands, self.oracle, cfg, stream, pool)
        if decision is None:
            return self._leaf(pool, ctx, stream)

        rule = decision.rule
        left_region = ctx.region.refine(rule, "left")
        right_region = ctx.region.refine(rule, "right")
        anchor_left = rule.route_rows(ctx.anchors)
        left_ctx = self._child_context(ctx, left_region, ctx.anchors[anchor_left])
        right_ctx = self._child_context(ctx, right_region, ctx.anchors[~anchor_left])

        if cfg.cart_mode:
            pool_left_mask = rule.route_rows(decision.pool.X)
            left_pool = decision.pool[pool_left_mask]
            right_pool = decision.pool[~pool_left_mask]
        else:
            left_pool = right_pool = None

        left = self.build_node(left_ctx, path + (0,), depth + 1, left_pool)
        right = self.build_node(right_ctx, path + (1,), depth + 1, right_pool)
        return Internal(rule, left, right, decision.diagnostics)

    def _child_context(
        self, parent: NodeContext, region: Region, anchors: np.ndarray
    ) -> NodeContext:
        if anchors.shape[0] > 0:
            return NodeContext(self.schema, region, anchors, strict=parent.strict)
        # no original row reached this child: smooth around the parent's
        # anchors and let rejection enforce the region
        return NodeContext(self.schema, region, parent.anchors, strict=False)

    def _greedy_split(self, pool: PseudoSample, cands: CandidateSet) -> SplitDecision | None:
        if len(pool) < 2:
            return None
        ev, _ = _evaluate_round(pool, cands, cands.live_indices())
        if ev is None:
            return None
        node_gini = splitstat.gini_gain_distribution(pool.mean_label())
        if ev.ginis[ev.best] >= node_gini - _NO_IMPROVEMENT_TOL:
            return None
        rule = cands.candidates[ev.best].rule
        diag = NodeDiagnostics(len(pool), "testing-disabled", len(cands), len(cands))
        return SplitDecision(rule, diag, pool)
