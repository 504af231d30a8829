import numpy as np
import pytest

from stabletree import class1_probability, logit_value, sample_synthetic
from stabletree.synth import synthetic_schema


def independent_case_masks(x: np.ndarray):
    """Re-derive the seven cases directly for cross-checking."""
    x1, x2, x3, x4, x5 = (x[:, i] for i in range(5))
    curve = x3 + x4**2
    return {
        2.0: (x1 > 0.5) & (x2 > 0.7),
        -3.0: (x1 > 0.5) & (x2 <= 0.7) & (x2 > 0.2),
        -4.0: (x1 > 0.5) & (x2 <= 0.2),
        3.0: (x1 <= 0.5) & (x5 <= 0.5) & (curve >= 1.4),
        "case5": (x1 <= 0.5) & (x5 <= 0.5) & (curve < 1.4) & (curve >= 0.5),
        -2.0: (x1 <= 0.5) & (x5 <= 0.5) & (curve < 0.5),
        "case7": (x1 <= 0.5) & (x5 > 0.5),
    }


def test_first_case_point():
    x = np.array([[0.6, 0.8, 0.1, 0.1, 0.9]])
    assert logit_value(x)[0] == 2.0
    assert class1_probability(x)[0] == pytest.approx(0.8807970779778823, abs=1e-12)


def test_third_case_point():
    x = np.array([[0.6, 0.1, 0.1, 0.1, 0.9]])
    assert logit_value(x)[0] == -4.0
    assert class1_probability(x)[0] == pytest.approx(0.01798620996209156, abs=1e-12)


def test_cases_partition_the_cube():
    rng = np.random.default_rng(100)
    x = rng.uniform(size=(1_000_000, 5))
    masks = list(independent_case_masks(x).values())
    coverage = np.sum(masks, axis=0)
    assert np.all(coverage == 1)
    logit_value(x)  # raises if its own cases fail to cover


def test_empirical_rates_match_sigmoid_per_case():
    data = sample_synthetic(1_000_000, seed=5)
    x, y = data.rows, data.labels
    logits = logit_value(x)
    for value in np.unique(logits):
        mask = logits == value
        expected = 1.0 / (1.0 + np.exp(-value))
        assert y[mask].mean() == pytest.approx(expected, abs=0.01)


def test_fixed_seed_reproduces_bit_exactly():
    a = sample_synthetic(5000, seed=9)
    b = sample_synthetic(5000, seed=9)
    assert np.array_equal(a.rows, b.rows)
    assert np.array_equal(a.labels, b.labels)


def test_schema_shape():
    schema = synthetic_schema()
    assert [c.name for c in schema.columns] == ["x1", "x2", "x3", "x4", "x5"]
    assert schema.class_count == 2
    assert schema.label_column == "y"
