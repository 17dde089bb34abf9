import math

import pytest

from loraee.utils.stats import binomial_stderr, mean_confidence_interval


def test_mean_confidence_interval_matches_student_t() -> None:
    """Tests the half-width against a hand-computed t interval."""
    # Arrange
    values = [1.0, 2.0, 3.0]
    # sd = 1, sem = 1/sqrt(3), t_{0.975, 2} = 4.302653
    expected = 4.302653 / math.sqrt(3.0)

    # Act
    mean, half = mean_confidence_interval(values)

    # Assert
    assert mean == pytest.approx(2.0)
    assert half == pytest.approx(expected, rel=1e-5)


def test_mean_confidence_interval_single_sample_has_no_interval() -> None:
    """Tests that one sample gives its value and no half-width."""
    mean, half = mean_confidence_interval([0.25])
    assert mean == 0.25
    assert half is None


def test_mean_confidence_interval_empty() -> None:
    """Tests that an empty sample gives NaN and no half-width."""
    mean, half = mean_confidence_interval([])
    assert math.isnan(mean)
    assert half is None


def test_binomial_stderr() -> None:
    """Tests the proportion standard error and its zero-trial guard."""
    assert binomial_stderr(0.5, 100) == pytest.approx(0.05)
    assert binomial_stderr(1.0, 10) == 0.0
    assert binomial_stderr(0.5, 0) == math.inf
