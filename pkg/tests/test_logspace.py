"""Tests for the log-space primitives."""
import math

import numpy as np
import pytest

from clickmodels.errors import UsageError
from clickmodels.logspace import LOG2, log1m_sigmoid, log1mexp, log_sigmoid, log_sum_exp, logit


class TestLogSumExp:
    """Test suite for log_sum_exp."""

    def test_two_equal_terms(self):
        """[0, 0] gives ln 2."""
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_single_term_is_identity(self):
        """A single value comes back unchanged."""
        for value in (-3.5, 0.0, 12.25, -math.inf):
            assert log_sum_exp([value]) == value

    def test_large_inputs_do_not_overflow(self):
        """[1000, 1000] stays finite."""
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2.0))

    def test_neg_inf_terms_are_exact(self):
        """All but one term at -inf returns that term exactly."""
        assert log_sum_exp([-math.inf, -2.5, -math.inf]) == -2.5
        assert log_sum_exp([-math.inf, -math.inf]) == -math.inf

    def test_at_least_the_max(self):
        """The result is never below the larger input."""
        rng = np.random.default_rng(0)
        for a, b in rng.normal(0, 20, size=(100, 2)):
            assert log_sum_exp([a, b]) >= max(a, b)

    def test_axis_reduction(self):
        """Reducing along an axis works per column."""
        values = np.log(np.array([[0.25, 0.5], [0.25, 0.25]]))
        result = log_sum_exp(values, axis=0)
        np.testing.assert_allclose(np.exp(result), [0.5, 0.75])

    def test_empty_input_rejected(self):
        """An empty sequence is a usage error."""
        with pytest.raises(UsageError):
            log_sum_exp([])

    def test_nan_rejected(self):
        """NaN inputs are a usage error."""
        with pytest.raises(UsageError):
            log_sum_exp([0.0, math.nan])


class TestLog1mexp:
    """Test suite for log1mexp."""

    def test_half(self):
        """log(1 - 0.5) = log 0.5."""
        assert log1mexp(math.log(0.5)) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_neg_inf(self):
        """log(1 - 0) = 0."""
        assert log1mexp(-math.inf) == 0.0

    def test_zero_is_neg_inf(self):
        """a = 0 is log 0, not an error."""
        assert log1mexp(0.0) == -math.inf

    def test_tiny_argument(self):
        """Near zero the expm1 branch keeps full precision."""
        assert log1mexp(-1e-20) == pytest.approx(math.log(1e-20), rel=1e-12)

    def test_complement_identity(self):
        """exp(log1mexp(a)) + exp(a) = 1 across the range."""
        a = -np.logspace(-12, math.log10(50), 200)
        np.testing.assert_allclose(np.exp(log1mexp(a)) + np.exp(a), 1.0, atol=1e-12)

    def test_branch_continuity(self):
        """Values on either side of -ln 2 agree."""
        above = log1mexp(-LOG2 + 1e-12)
        below = log1mexp(-LOG2 - 1e-12)
        assert abs(above - below) < 1e-10

    def test_positive_rejected(self):
        """a > 0 is a usage error."""
        with pytest.raises(UsageError):
            log1mexp(0.1)


class TestLogSigmoid:
    """Test suite for log_sigmoid, log1m_sigmoid and logit."""

    def test_zero(self):
        """sigma(0) = 0.5 for both sides."""
        assert log_sigmoid(0.0) == pytest.approx(-math.log(2.0))
        assert log1m_sigmoid(0.0) == pytest.approx(-math.log(2.0))

    def test_extremes_stay_finite(self):
        """Large logits do not underflow to -inf."""
        assert log_sigmoid(-1000.0) == pytest.approx(-1000.0)
        assert log_sigmoid(1000.0) == pytest.approx(0.0, abs=1e-300)
        assert log_sigmoid(1000.0) <= 0.0

    def test_log1m_sigmoid_values(self):
        """log(1 - sigma(2)) = log_sigmoid(-2)."""
        assert log1m_sigmoid(2.0) == pytest.approx(-2.126928011, abs=1e-9)
        assert log1m_sigmoid(2.0) == log_sigmoid(-2.0)
        assert log1m_sigmoid(-1e6) == pytest.approx(0.0, abs=1e-12)

    def test_probabilities_sum_to_one(self):
        """sigma(x) + (1 - sigma(x)) = 1."""
        x = np.linspace(-30, 30, 301)
        np.testing.assert_allclose(np.exp(log_sigmoid(x)) + np.exp(log1m_sigmoid(x)), 1.0,
                                   atol=1e-12)

    def test_nan_rejected(self):
        """NaN logits are a usage error."""
        with pytest.raises(UsageError):
            log_sigmoid(math.nan)

    def test_logit_inverts_sigmoid(self):
        """logit maps back to the logit."""
        assert logit(0.5) == 0.0
        assert math.exp(log_sigmoid(logit(0.1))) == pytest.approx(0.1)
        with pytest.raises(UsageError):
            logit(1.0)
