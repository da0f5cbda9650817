import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfreg.errors import EntropyUndefinedError, InfeasibleNormalizationError, SignalError
from selfreg.signals import (
    ReflectedSignal,
    SignalKind,
    TransactiveSignal,
    mean,
    normalize_reflection,
    read_signal_csv,
    reflect,
    shannon_entropy,
    stats,
    volatility,
    write_signal_csv,
)

from _oracles import exact_mean, exact_stats


def tis(values):
    return TransactiveSignal(values, SignalKind.TIS)


positive_signals = st.lists(
    st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False), min_size=1, max_size=60
)


class TestTransactiveSignal:
    def test_values_are_read_only_copies(self):
        src = np.array([1.0, 2.0])
        s = tis(src)
        src[0] = 99.0
        assert s.values[0] == 1.0
        with pytest.raises(ValueError):
            s.values[0] = 5.0

    def test_rejects_empty(self):
        with pytest.raises(SignalError):
            tis([])

    def test_rejects_negative_price(self):
        with pytest.raises(SignalError, match="negative"):
            tis([1.0, -0.5])

    def test_rejects_non_finite(self):
        with pytest.raises(SignalError):
            tis([1.0, float("nan")])

    def test_ub_may_be_negative(self):
        s = TransactiveSignal([1.0, -2.0], SignalKind.UB)
        assert s.values.min() == -2.0

    def test_equality(self):
        assert tis([1, 2]) == tis([1.0, 2.0])
        assert tis([1, 2]) != TransactiveSignal([1, 2], SignalKind.ITFS)

    def test_csv_roundtrip(self, tmp_path):
        s = tis([0.1, 1 / 3, 2.5e-7])
        path = tmp_path / "s.csv"
        write_signal_csv(s, path)
        assert path.read_text().splitlines()[0] == "t,value"
        assert read_signal_csv(path) == s


class TestStats:
    def test_constant(self):
        st_ = stats(tis([4, 4, 4, 4]))
        assert st_.mean == 4
        assert st_.volatility == 0
        assert st_.entropy == 2.0

    def test_one_two_three(self):
        st_ = stats(tis([1, 2, 3]))
        assert st_.mean == 2
        assert st_.volatility == pytest.approx(math.sqrt(2 / 3), rel=1e-15)

    def test_matches_arbitrary_precision_on_144_values(self):
        rng = np.random.default_rng(7)
        values = rng.lognormal(3.0, 0.6, 144)
        mu, sigma, h = exact_stats(values)
        got = stats(tis(values))
        assert got.mean == pytest.approx(mu, rel=1e-15)
        assert got.volatility == pytest.approx(sigma, rel=1e-14)
        assert got.entropy == pytest.approx(h, rel=1e-14)

    def test_zero_sum_entropy_undefined(self):
        with pytest.raises(EntropyUndefinedError):
            shannon_entropy(np.zeros(3))

    def test_negative_entropy_undefined(self):
        with pytest.raises(EntropyUndefinedError):
            shannon_entropy([1.0, -1.0, 2.0])

    @given(positive_signals)
    def test_stats_bounds(self, values):
        st_ = stats(values)
        assert st_.volatility >= 0
        assert 0 <= st_.entropy <= math.log2(len(values))


class TestEntropy:
    def test_uniform_144(self):
        assert shannon_entropy(np.full(144, 3.7)) == pytest.approx(math.log2(144), abs=1e-12)
        assert math.log2(144) == pytest.approx(7.1699, abs=1e-4)

    def test_two_two_four(self):
        assert shannon_entropy([2, 2, 4]) == pytest.approx(1.5, abs=1e-15)

    @pytest.mark.parametrize("eps", [1e-3, 1e-6, 1e-12])
    def test_concentration_limit(self, eps):
        h = shannon_entropy([1.0] + [eps] * 9)
        assert h < 100 * eps ** 0.5

    @given(positive_signals)
    def test_max_only_when_constant(self, values):
        h = shannon_entropy(values)
        if len(set(values)) > 1 and max(values) / min(values) > 1.001:
            assert h < math.log2(len(values))


class TestReflect:
    @pytest.mark.parametrize(
        "values, expected",
        [([1, 2, 3], [3, 2, 1]), ([5, 5], [5, 5]), ([1, 1, 10], [7, 7, -2])],
    )
    def test_examples(self, values, expected):
        r = reflect(tis(values))
        assert isinstance(r, ReflectedSignal)
        np.testing.assert_array_equal(r.values, expected)

    def test_rejects_non_price(self):
        with pytest.raises(SignalError):
            reflect(TransactiveSignal([1, 2], SignalKind.ITFS))

    @given(positive_signals)
    def test_sum_preserved(self, values):
        r = reflect(tis(values))
        assert mean(r) == pytest.approx(float(exact_mean(values)), rel=1e-12)

    @given(positive_signals)
    def test_involution_within_one_ulp(self, values):
        s = tis(values)
        back = reflect(reflect(s)).values
        pivot = reflect(s).pivot
        bound = np.spacing(np.maximum(np.abs(2 * pivot), np.abs(s.values)))
        assert np.all(np.abs(back - s.values) <= bound)


class TestNormalize:
    def test_identity_without_negatives(self):
        r = reflect(tis([1, 2, 3]))
        np.testing.assert_array_equal(normalize_reflection(r).values, [3, 2, 1])

    def test_seven_seven_minus_two(self):
        r = reflect(tis([1, 1, 10]))
        out = normalize_reflection(r).values
        np.testing.assert_allclose(out, [6, 6, 0], rtol=0, atol=1e-15)
        assert mean(out) == pytest.approx(4, rel=1e-15)

    def test_infeasible(self):
        with pytest.raises(InfeasibleNormalizationError):
            normalize_reflection(ReflectedSignal([1.0, -3.0], -1.0))

    def test_balanced_masses_infeasible(self):
        with pytest.raises(InfeasibleNormalizationError):
            normalize_reflection(ReflectedSignal([2.0, -2.0], 0.0))

    @settings(max_examples=200)
    @given(st.lists(st.floats(min_value=0.01, max_value=100), min_size=2, max_size=50), st.floats(1.5, 20))
    def test_properties(self, values, spike):
        values = values + [max(values) * spike]  # forces negatives in the reflection
        r = reflect(tis(values))
        out = normalize_reflection(r).values
        assert out.min() >= 0
        assert mean(out) == pytest.approx(mean(r), rel=1e-9)
        pos = r.values > 0
        # monotone on positives: order of positive entries preserved
        order = np.argsort(r.values[pos], kind="stable")
        assert np.all(np.diff(out[pos][order]) >= 0)


def test_volatility_is_population():
    assert volatility([1.0, 3.0]) == 1.0


@pytest.mark.parametrize("value", [0.1, 1 / 3, 7.3e-5])
def test_constant_signal_is_exact(value):
    values = [value] * 7
    assert mean(values) == value
    assert volatility(values) == 0.0
