import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflexsched.errors import DecodeError, ParameterError
from reflexsched.sampling import (
    GREEDY,
    SAMPLE,
    greedy_token,
    sample_token,
    softmax,
    top_p_support,
)


def brute_force_support(probs, top_p):
    """Independent oracle: sort (desc, lowest id first), take smallest prefix >= top_p."""
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    chosen, mass = [], 0.0
    for i in order:
        chosen.append(i)
        mass += probs[i]
        if mass >= top_p:
            break
    return chosen


class TestSoftmax:
    def test_matches_direct_formula(self):
        logits = np.array([1.0, 2.0, 3.0])
        expected = np.exp(logits) / np.exp(logits).sum()
        assert np.allclose(softmax(logits), expected, atol=1e-12)

    def test_masked_entries_get_zero(self):
        probs = softmax(np.array([0.0, -np.inf, 0.0]))
        assert probs[1] == 0.0
        assert probs.sum() == pytest.approx(1.0)

    def test_all_masked_is_an_error(self):
        with pytest.raises(DecodeError):
            softmax(np.array([-np.inf, -np.inf]))

    def test_shift_invariance(self):
        logits = np.array([0.5, -1.0, 2.0])
        assert np.allclose(softmax(logits), softmax(logits + 1000.0), atol=1e-12)


class TestGreedy:
    def test_tie_breaks_to_lowest_id(self):
        assert greedy_token(np.array([2.0, 2.0, 1.0])) == 0

    def test_picks_argmax(self):
        assert greedy_token(np.array([0.0, 5.0, 1.0])) == 1


class TestTopPSupport:
    def test_spec_example(self):
        support = top_p_support(np.array([0.5, 0.3, 0.2]), 0.7)
        assert list(support) == [0, 1]

    def test_top_p_one_keeps_everything(self):
        support = top_p_support(np.array([0.5, 0.3, 0.2]), 1.0)
        assert sorted(support) == [0, 1, 2]

    def test_rejects_out_of_range(self):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ParameterError):
                top_p_support(np.array([1.0]), bad)

    @given(st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=1, max_size=32),
           st.floats(min_value=1e-6, max_value=1.0))
    @settings(max_examples=300)
    def test_matches_brute_force_oracle(self, weights, top_p):
        probs = np.array(weights) / sum(weights)
        assert list(top_p_support(probs, top_p)) == brute_force_support(list(probs), top_p)


class TestSampleToken:
    def test_greedy_mode_ignores_rng(self):
        token = sample_token(np.array([2.0, 2.0, 1.0]), GREEDY, 1.0, 1.0, None)
        assert token == 0

    def test_sampled_frequencies_match_softmax(self):
        logits = np.array([1.0, 0.2, -0.5, 2.0, 0.0])
        probs = softmax(logits)
        rng = np.random.default_rng(2024)
        n = 100_000
        counts = np.zeros(len(logits))
        for _ in range(n):
            counts[sample_token(logits, SAMPLE, 1.0, 1.0, rng)] += 1
        freqs = counts / n
        for p, f in zip(probs, freqs):
            sigma = math.sqrt(p * (1 - p) / n)
            assert abs(f - p) <= 3 * sigma

    def test_nucleus_excludes_tail(self):
        # probs ~ [0.665, 0.245, 0.09]; top_p=0.7 keeps ids {0,1} only
        logits = np.log(np.array([0.665, 0.245, 0.09]))
        rng = np.random.default_rng(7)
        seen = {sample_token(logits, SAMPLE, 1.0, 0.7, rng) for _ in range(2000)}
        assert seen == {0, 1}

    def test_renormalized_nucleus_distribution(self):
        logits = np.log(np.array([0.5, 0.3, 0.2]))
        rng = np.random.default_rng(11)
        n = 50_000
        counts = np.zeros(3)
        for _ in range(n):
            counts[sample_token(logits, SAMPLE, 1.0, 0.7, rng)] += 1
        assert counts[2] == 0
        expected = np.array([0.625, 0.375])
        freqs = counts[:2] / n
        for p, f in zip(expected, freqs):
            assert abs(f - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_deterministic_given_seed(self):
        logits = np.array([0.3, 0.2, 0.1, 0.0])
        draws_a = [
            sample_token(logits, SAMPLE, 0.6, 0.95, np.random.default_rng(5))
            for _ in range(1)
        ]
        draws_b = [
            sample_token(logits, SAMPLE, 0.6, 0.95, np.random.default_rng(5))
            for _ in range(1)
        ]
        assert draws_a == draws_b

    def test_bad_temperature_rejected(self):
        with pytest.raises(ParameterError):
            sample_token(np.array([1.0]), SAMPLE, 0.0, 0.9, np.random.default_rng(0))
