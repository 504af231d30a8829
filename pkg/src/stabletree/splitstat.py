"""Split statistics: Gini estimators, the two-split comparison test, and
sample-size planning.

Labels here are soft: each sample carries a class-probability vector rather
than a hard class (components summing to 1). The Gini index of a split is the
child-weighted plug-in

    g_hat = 1 - (n_l/n) * sum_j theta_l[j]^2 - (n_r/n) * sum_j theta_r[j]^2

with theta the per-child mean label vector. Two splits evaluated on the same
sample are compared through the asymptotic normal law of g1_hat - g2_hat,
whose variance is a quadratic form gradient' Sigma gradient over the
covariance Sigma of the stacked per-sample vector

    W = (Y * 1{left of split 1}, Y * 1{right of 1}, Y * 1{left of 2}, Y * 1{right of 2}).

g1_hat - g2_hat is a smooth function of the mean of W: each child's weighted
impurity is (sum_j w_j^2) / (sum_j w_j) on that child's block (the block sum
recovers the child proportion because label rows sum to 1). Differentiating
at the population point gives per-block gradient components

    +/- (2 * theta_j - sum_l theta_l^2),

the -|theta|^2 term reflecting that the child proportions are estimated, not
known. Dropping that term (treating proportions as known) overstates the
variance severalfold for uneven splits; Monte Carlo resampling confirms the
corrected form, so it is used everywhere here.

Equivalently (used by the vectorized sweep): the quadratic form equals the
sample variance of the scalar projection s_i = b_i - a_i, where for each
sample a_i = 2 <theta_own_child, Y_i> - |theta_own_child|^2 under split 1 and
b_i likewise under split 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .core import SoftLabeledSample, SplitRule
from .errors import DegenerateSplitError


# Gini values computed by prefix sums carry absolute float error well below
# this; differences smaller than it are treated as exact ties.
GINI_NOISE_TOL = 1e-9


def _as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Accept (X, Y) arrays, an object with .X/.Y, or SoftLabeledSample sequences."""
    if hasattr(samples, "X") and hasattr(samples, "Y"):
        return samples.X, samples.Y
    if (
        isinstance(samples, tuple)
        and len(samples) == 2
        and not isinstance(samples[0], SoftLabeledSample)
    ):
        x, y = np.asarray(samples[0], float), np.asarray(samples[1], float)
        return x, y
    xs = np.asarray([s.x for s in samples], dtype=np.float64)
    ys = np.asarray([s.y for s in samples], dtype=np.float64)
    return xs, ys


def gini_gain_distribution(class_probs: Sequence[float]) -> float:
    """Gini impurity 1 - sum_i p_i^2 of a class distribution."""
    p = np.asarray(class_probs, dtype=np.float64)
    if p.size and p.min() < 0:
        raise ValueError("class probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"class probabilities must sum to 1, got {p.sum()!r}")
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True)
class GiniSummary:
    """Per-split counts, child mean labels, and the weighted Gini index."""

    n: int
    n_left: int
    n_right: int
    theta_left: np.ndarray
    theta_right: np.ndarray
    gini_index: float

    def __post_init__(self) -> None:
        if self.n_left + self.n_right != self.n:
            raise ValueError("child counts must add up to n")
        for name, cnt, theta in (
            ("left", self.n_left, self.theta_left),
            ("right", self.n_right, self.theta_right),
        ):
            if cnt > 0 and abs(float(np.sum(theta)) - 1.0) > 1e-9:
                raise ValueError(f"{name} child mean label must sum to 1")
        k = len(self.theta_left)
        if not -1e-12 <= self.gini_index <= 1.0 - 1.0 / k + 1e-12:
            raise ValueError(f"gini index {self.gini_index} outside [0, 1-1/k]")


def split_gini_index(samples, rule: SplitRule) -> GiniSummary:
    """Weighted two-child Gini index of a split over soft-labeled samples.

    An empty child contributes zero to the weighted sum; callers that cannot
    tolerate one-sided splits must filter them beforehand.
    """
    X, Y = _as_arrays(samples)
    if X.shape[0] == 0:
        raise ValueError("need at least one sample")
    n = X.shape[0]
    k = Y.shape[1]
    mask = rule.route_rows(X)
    n_l = int(mask.sum())
    n_r = n - n_l
    theta_l = Y[mask].mean(axis=0) if n_l else np.zeros(k)
    theta_r = Y[~mask].mean(axis=0) if n_r else np.zeros(k)
    gini = 1.0 - (n_l / n) * float(theta_l @ theta_l) - (n_r / n) * float(
        theta_r @ theta_r
    )
    return GiniSummary(n, n_l, n_r, theta_l, theta_r, float(gini))


@dataclass(frozen=True)
class SplitComparisonStats:
    """Everything needed to test split 1 against split 2 on one sample."""

    summary_1: GiniSummary
    summary_2: GiniSummary
    sigma_hat: np.ndarray  # 4k x 4k covariance of the stacked indicator-label vector
    gradient: np.ndarray  # 4k
    comparison_variance: float

    def __post_init__(self) -> None:
        sig = self.sigma_hat
        if sig.shape[0] != sig.shape[1] or sig.shape[0] != len(self.gradient):
            raise ValueError("sigma_hat and gradient dimensions disagree")
        if not np.allclose(sig, sig.T, atol=1e-10):
            raise ValueError("sigma_hat must be symmetric")
        eigvals = np.linalg.eigvalsh(sig)
        if eigvals.min() < -1e-9:
            raise ValueError(f"sigma_hat has negative eigenvalue {eigvals.min()}")
        if self.comparison_variance < -1e-12:
            raise ValueError("comparison variance must be non-negative")

    @property
    def delta_hat(self) -> float:
        return self.summary_1.gini_index - self.summary_2.gini_index

    @property
    def n(self) -> int:
        return self.summary_1.n


def compare_splits(samples, rule_1: SplitRule, rule_2: SplitRule) -> SplitComparisonStats:
    """Joint statistics of two splits evaluated on the same pseudo sample.

    The covariance uses denominator n (plug-in form). Both splits must put at
    least one sample in each child.
    """
    X, Y = _as_arrays(samples)
    n, k = Y.shape
    if n < 10:
        raise ValueError(f"need at least 10 samples to compare splits, got {n}")
    s1 = split_gini_index((X, Y), rule_1)
    s2 = split_gini_index((X, Y), rule_2)
    for rule, s in ((rule_1, s1), (rule_2, s2)):
        if s.n_left == 0 or s.n_right == 0:
            raise DegenerateSplitError(f"split {rule} leaves an empty child")

    mask1 = rule_1.route_rows(X)
    mask2 = rule_2.route_rows(X)
    stacked = np.hstack(
        [
            Y * mask1[:, None],
            Y * ~mask1[:, None],
            Y * mask2[:, None],
            Y * ~mask2[:, None],
        ]
    )
    centered = stacked - stacked.mean(axis=0)
    sigma_hat = centered.T @ centered / n

    gradient = np.concatenate(
        [
            sign * (2.0 * theta - float(theta @ theta))
            for sign, theta in (
                (-1.0, s1.theta_left),
                (-1.0, s1.theta_right),
                (1.0, s2.theta_left),
                (1.0, s2.theta_right),
            )
        ]
    )
    comparison_variance = float(gradient @ sigma_hat @ gradient)
    return SplitComparisonStats(s1, s2, sigma_hat, gradient, max(comparison_variance, 0.0))


@dataclass(frozen=True)
class TestOutcome:
    delta_hat: float
    p_value: float
    n_used: int


def better_split_pvalue(stats: SplitComparisonStats) -> TestOutcome:
    """Probability that a fresh pseudo sample of the same size would flip the ranking.

    Requires the pair ordered so split 1 is the currently better one
    (delta_hat = g1_hat - g2_hat <= 0). Under the prediction distribution of
    the re-estimated difference, N(delta_hat, 2*variance/n), the flip
    probability is Phi(delta_hat / sqrt(2*variance/n)).
    """
    delta = stats.delta_hat
    if delta > 0:
        raise ValueError(
            "pair must be ordered so split 1 has the smaller Gini index"
        )
    var = stats.comparison_variance
    n = stats.n
    if var <= 0.0:
        p = 0.5 if abs(delta) <= GINI_NOISE_TOL else 0.0
    else:
        p = float(norm.cdf(delta / np.sqrt(2.0 * var / n)))
    return TestOutcome(delta_hat=float(delta), p_value=p, n_used=n)


def required_sample_size(current_n: int, p_n: float, alpha: float) -> int:
    """Sample size at which the observed effect would reach significance alpha.

    Solves sqrt(n / n') = Z_{p_n} / Z_{alpha} for n' with Z the upper-tail
    standard normal quantile, rounding up. Only meaningful when the test just
    failed (alpha < p_n < 0.5); at p_n >= 0.5 the quantile degenerates and the
    caller must fall back to its growth cap.
    """
    if current_n < 1:
        raise ValueError("current_n must be at least 1")
    if not 0.0 < alpha < p_n:
        raise ValueError(f"need 0 < alpha < p_n, got alpha={alpha}, p_n={p_n}")
    if p_n >= 0.5:
        raise ValueError("p_n >= 0.5: quantile degenerate, use the growth cap")
    z_alpha = norm.isf(alpha)
    z_p = norm.isf(p_n)
    target = current_n * (z_alpha / z_p) ** 2
    return max(current_n + 1, int(np.ceil(target)))


def aggregate_pvalue(pairwise_pvalues: Sequence[float]) -> float:
    """Sum of best-vs-rival flip probabilities, clamped to 1.

    Bounds the probability that any rival would out-rank the current best on a
    fresh sample (union bound). An empty list means a lone candidate: 0.
    """
    total = float(np.sum(pairwise_pvalues)) if len(pairwise_pvalues) else 0.0
    return min(1.0, total)


def prune_candidates(pairwise_pvalues: Sequence[float], q: float = 0.5) -> frozenset[int]:
    """Step-up discard of rivals by their p-value against the current best.

    Sort ascending, find the largest rank i with p_(i) <= (i/t)*q, and keep the
    candidates at ranks 1..i; everything ranked above is discarded. The current
    best is not part of the list and always survives. Returns surviving
    candidate indices.
    """
    t = len(pairwise_pvalues)
    if t == 0:
        return frozenset()
    p = np.asarray(pairwise_pvalues, dtype=np.float64)
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, t + 1)
    passed = p[order] <= ranks / t * q
    if not passed.any():
        return frozenset()
    cutoff = int(np.max(np.nonzero(passed)[0])) + 1
    return frozenset(int(i) for i in order[:cutoff])


# --- vectorized per-column machinery ----------------------------------------
#
# The builder tests thousands of candidate thresholds per column each round.
# Sorting the pool once per column lets every candidate's Gini index, and its
# comparison variance against the current best, be read off prefix sums.


@dataclass
class ColumnSweep:
    """Prefix statistics of one column over a pseudo sample.

    A candidate threshold is identified by its position s = number of samples
    at or below it in sorted order; rows [0, s) of the sorted sample form the
    left child.
    """

    sorted_values: np.ndarray  # (n,)
    order: np.ndarray  # (n,) indices into the original sample
    sorted_labels: np.ndarray  # (n, k)
    prefix_label: np.ndarray  # (n+1, k) cumulative label sums
    prefix_second: np.ndarray | None  # (n+1, k, k) cumulative outer products
    n: int
    k: int

    @staticmethod
    def build(values: np.ndarray, labels: np.ndarray, with_second_moment: bool = False
              ) -> "ColumnSweep":
        n, k = labels.shape
        order = np.argsort(values, kind="stable")
        sorted_values = values[order]
        sorted_labels = labels[order]
        prefix_label = np.zeros((n + 1, k))
        np.cumsum(sorted_labels, axis=0, out=prefix_label[1:])
        prefix_second = None
        if with_second_moment:
            outer = sorted_labels[:, :, None] * sorted_labels[:, None, :]
            prefix_second = np.zeros((n + 1, k, k))
            np.cumsum(outer, axis=0, out=prefix_second[1:])
        return ColumnSweep(
            sorted_values, order, sorted_labels, prefix_label, prefix_second, n, k
        )

    def positions(self, thresholds: np.ndarray) -> np.ndarray:
        """Left-child sizes for each threshold (<= goes left)."""
        return np.searchsorted(self.sorted_values, thresholds, side="right")

    def child_means(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-threshold left/right mean label vectors; zeros for empty children."""
        n = self.n
        s = positions.astype(np.int64)
        sum_left = self.prefix_label[s]
        sum_right = self.prefix_label[n] - sum_left
        n_l = s[:, None]
        n_r = n - n_l
        theta_l = np.divide(sum_left, n_l, out=np.zeros_like(sum_left), where=n_l > 0)
        theta_r = np.divide(sum_right, n_r, out=np.zeros_like(sum_right), where=n_r > 0)
        return theta_l, theta_r

    def gini(self, positions: np.ndarray) -> np.ndarray:
        """Weighted Gini index of each candidate position."""
        n = self.n
        theta_l, theta_r = self.child_means(positions)
        w_l = positions / n
        w_r = 1.0 - w_l
        return (
            1.0
            - w_l * np.einsum("ij,ij->i", theta_l, theta_l)
            - w_r * np.einsum("ij,ij->i", theta_r, theta_r)
        )

    def rival_pvalues(
        self,
        positions: np.ndarray,
        ginis: np.ndarray,
        best_gini: float,
        best_projection: np.ndarray,
    ) -> np.ndarray:
        """Flip probability of the best split against each candidate position.

        ``best_projection`` is the adjusted per-sample projection under the
        current best split (the a_i of the projection identity in the module
        docstring, from best_split_projection). Candidates with an empty child
        get p = 0 placeholders; the caller must exclude them separately.
        """
        if self.prefix_second is None:
            raise ValueError("sweep built without second moments")
        n, k = self.n, self.k
        a = best_projection[self.order]
        sum_a = float(a.sum())
        sum_a2 = float(a @ a)
        prefix_a = np.zeros(n + 1)
        np.cumsum(a, out=prefix_a[1:])
        prefix_ay = np.zeros((n + 1, k))
        np.cumsum(self.sorted_labels * a[:, None], axis=0, out=prefix_ay[1:])

        s = positions.astype(np.int64)
        theta_l, theta_r = self.child_means(s)
        c_l = np.einsum("ij,ij->i", theta_l, theta_l)
        c_r = np.einsum("ij,ij->i", theta_r, theta_r)
        n_l = s.astype(np.float64)
        n_r = n - n_l
        sum_left = self.prefix_label[s]
        sum_right = self.prefix_label[n] - sum_left
        m2_left = self.prefix_second[s]
        m2_right = self.prefix_second[n] - m2_left
        ay_left = prefix_ay[s]
        ay_right = prefix_ay[n] - ay_left
        a_left = prefix_a[s]
        a_right = prefix_a[n] - a_left

        dot_l = np.einsum("ij,ij->i", theta_l, sum_left)
        dot_r = np.einsum("ij,ij->i", theta_r, sum_right)
        sum_b = 2.0 * (dot_l + dot_r) - (n_l * c_l + n_r * c_r)
        quad = np.einsum("ij,ijk,ik->i", theta_l, m2_left, theta_l) + np.einsum(
            "ij,ijk,ik->i", theta_r, m2_right, theta_r
        )
        sum_b2 = 4.0 * quad - 4.0 * (c_l * dot_l + c_r * dot_r) + (
            n_l * c_l**2 + n_r * c_r**2
        )
        sum_ab = 2.0 * (
            np.einsum("ij,ij->i", theta_l, ay_left)
            + np.einsum("ij,ij->i", theta_r, ay_right)
        ) - (c_l * a_left + c_r * a_right)

        diff_sum = sum_b - sum_a
        diff_sq = sum_b2 - 2.0 * sum_ab + sum_a2
        comparison_variance = np.maximum(diff_sq / n - (diff_sum / n) ** 2, 0.0)

        delta = np.minimum(best_gini - ginis, 0.0)
        sd = np.sqrt(2.0 * comparison_variance / n)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sd > 0, delta / np.where(sd > 0, sd, 1.0), 0.0)
        p = norm.cdf(z)
        # at zero variance, a difference below prefix-sum float noise is a tie
        tied = np.abs(delta) <= GINI_NOISE_TOL
        p = np.where(sd > 0, p, np.where(tied, 0.5, 0.0))
        return p


def best_split_projection(
    X: np.ndarray, Y: np.ndarray, rule: SplitRule
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample adjusted projection a_i = 2 <theta_own_child, Y_i> - |theta_own_child|^2.

    Returns (projection vector, theta_left, theta_right); this is the a_i of
    the projection identity in the module docstring.
    """
    mask = rule.route_rows(X)
    k = Y.shape[1]
    theta_l = Y[mask].mean(axis=0) if mask.any() else np.zeros(k)
    inv = ~mask
    theta_r = Y[inv].mean(axis=0) if inv.any() else np.zeros(k)
    a = np.where(
        mask,
        2.0 * (Y @ theta_l) - float(theta_l @ theta_l),
        2.0 * (Y @ theta_r) - float(theta_r @ theta_r),
    )
    return a, theta_l, theta_r
