"""Synthetic binary-classification generator used by the demos and test rig.

Covariates are five independent Uniform[0,1] draws. The log-odds of class 1
are piecewise constant over seven axis-ish regions of (x1, x2, x3, x4, x5),
so the optimal first split sits at x1 = 0.5 and the model rewards trees that
discover the region structure.
"""
from __future__ import annotations

import numpy as np

from .core import ColumnSpec, Dataset, Schema


def synthetic_schema() -> Schema:
    columns = tuple(ColumnSpec(f"x{i}") for i in range(1, 6))
    return Schema(columns, ("0", "1"), label_column="y")


def logit_value(x: np.ndarray) -> np.ndarray:
    """Piecewise-constant log-odds of class 1; cases partition [0,1]^5."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    x1, x2, x3, x4, x5 = (x[:, i] for i in range(5))
    curve = x3 + x4**2
    out = np.full(x.shape[0], np.nan)

    upper = x1 > 0.5
    out[upper & (x2 > 0.7)] = 2.0
    out[upper & (x2 <= 0.7) & (x2 > 0.2)] = -3.0
    out[upper & (x2 <= 0.2)] = -4.0

    lower = ~upper
    side = lower & (x5 <= 0.5)
    out[side & (curve >= 1.4)] = 3.0
    out[side & (curve < 1.4) & (curve >= 0.5)] = 2.0
    out[side & (curve < 0.5)] = -2.0
    out[lower & (x5 > 0.5)] = 2.0

    if np.isnan(out).any():
        raise AssertionError("logit cases failed to cover a point")
    return out


def class1_probability(x: np.ndarray) -> np.ndarray:
    """sigmoid(logit_value(x))"""
    return 1.0 / (1.0 + np.exp(-logit_value(x)))


def sample_synthetic(n: int, seed: int = 0) -> Dataset:
    """n labeled rows: x ~ Uniform[0,1]^5, y ~ Bernoulli(class1_probability(x))."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    rows = rng.uniform(0.0, 1.0, size=(n, 5))
    p1 = class1_probability(rows)
    labels = (rng.uniform(size=n) < p1).astype(np.int64)
    return Dataset(synthetic_schema(), rows, labels)
