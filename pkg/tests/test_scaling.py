import itertools

import numpy as np
import pytest

from reflexsched.engine import DecodeConfig, ReflectionConfig, decode
from reflexsched.errors import HarnessError, ParameterError
from reflexsched.scaling import (
    Candidate,
    LogprobReward,
    OracleReward,
    RewardScorer,
    beam_search,
    best_of_n,
    generate_candidates,
    pass_at_n,
)
from reflexsched.sampling import softmax
from reflexsched.scorers import ScriptedRule, ScriptedScorer
from reflexsched.vocab import Vocab

from conftest import EOS, A_TOK, B_TOK, peaked_logits

BRANCH_A, BRANCH_B = 2, 3  # branch tokens in the tree vocab below
TREE_VOCAB = Vocab(("<eos>", "pad", "L", "R", "wait"))


def tree_scorer(depth: int) -> ScriptedScorer:
    """Uniform binary tree: L/R equally likely for ``depth`` steps, then <eos>."""
    floor = -1e9
    branch = peaked_logits(TREE_VOCAB.size, {BRANCH_A: 1.0, BRANCH_B: 1.0}, floor)
    eos = peaked_logits(TREE_VOCAB.size, {EOS: 1.0}, floor)
    rules = []
    for path in itertools.product((BRANCH_A, BRANCH_B), repeat=depth):
        rules.append(ScriptedRule(suffix=tuple(path), logits=eos))
    return ScriptedScorer(TREE_VOCAB, rules, branch)


def leaf_table(depth: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    leaves = list(itertools.product((BRANCH_A, BRANCH_B), repeat=depth))
    return {leaf: float(rng.random()) for leaf in leaves}


class TableReward(RewardScorer):
    """Perfect process reward: max leaf reward reachable from the prefix."""

    def __init__(self, table: dict):
        self.table = table

    def score(self, prompt_ids, trace) -> float:
        prefix = tuple(t for t in trace.token_ids() if t != EOS)
        matching = [r for leaf, r in self.table.items() if leaf[: len(prefix)] == prefix]
        return max(matching) if matching else float("-inf")


def sample_config(**kwargs) -> DecodeConfig:
    base = dict(
        sampler="sample",
        temperature=1.0,
        top_p=1.0,
        max_new_tokens=16,
        stop_ids=frozenset({EOS}),
        reflection=ReflectionConfig(words=("wait",)),
    )
    base.update(kwargs)
    return DecodeConfig(**base)


class TestBestOfN:
    def test_argmax_over_rewards(self, tiny_vocab):
        scorer = tree_scorer(depth=1)

        class SeedReward(RewardScorer):
            rewards = {BRANCH_A: 0.25, BRANCH_B: 0.9}

            def score(self, prompt_ids, trace):
                return self.rewards[trace.token_ids()[0]]

        best = best_of_n(scorer, SeedReward(), [], sample_config(), n=8, base_seed=0)
        assert best.trace.token_ids()[0] == BRANCH_B
        assert best.reward == 0.9

    def test_n_equals_one_is_plain_decode(self, tiny_vocab):
        scorer = tree_scorer(depth=2)
        cfg = sample_config()
        reward = TableReward(leaf_table(2, seed=1))
        best = best_of_n(scorer, reward, [], cfg, n=1, base_seed=42)
        plain = decode(scorer, [], cfg.with_seed(42))
        assert best.trace == plain

    def test_matches_enumeration_oracle(self):
        depth = 3
        scorer = tree_scorer(depth)
        table = leaf_table(depth, seed=7)
        reward = TableReward(table)
        best = best_of_n(scorer, reward, [], sample_config(), n=64, base_seed=11)
        oracle_best = max(table.values())
        assert best.reward == pytest.approx(oracle_best)
        prefix = tuple(t for t in best.trace.token_ids() if t != EOS)
        assert table[prefix] == pytest.approx(oracle_best)

    def test_ties_break_to_lowest_seed_offset(self):
        scorer = tree_scorer(depth=1)

        class Flat(RewardScorer):
            def score(self, prompt_ids, trace):
                return 1.0

        candidates = generate_candidates(
            scorer, Flat(), [], sample_config(), n=5, base_seed=0
        )
        best = best_of_n(scorer, Flat(), [], sample_config(), n=5, base_seed=0)
        assert best.trace == candidates[0].trace
        assert best.seed_offset == 0

    def test_returned_reward_dominates_all_candidates(self):
        depth = 2
        scorer = tree_scorer(depth)
        reward = TableReward(leaf_table(depth, seed=3))
        candidates = generate_candidates(scorer, reward, [], sample_config(), n=12, base_seed=5)
        best = best_of_n(scorer, reward, [], sample_config(), n=12, base_seed=5)
        assert all(best.reward >= c.reward for c in candidates)

    def test_workers_do_not_change_result(self):
        depth = 2
        scorer = tree_scorer(depth)
        reward = TableReward(leaf_table(depth, seed=3))
        serial = generate_candidates(scorer, reward, [], sample_config(), n=8, base_seed=2, workers=1)
        parallel = generate_candidates(scorer, reward, [], sample_config(), n=8, base_seed=2, workers=4)
        assert [c.trace for c in serial] == [c.trace for c in parallel]

    def test_invalid_n_rejected(self):
        with pytest.raises(ParameterError):
            best_of_n(tree_scorer(1), TableReward({}), [], sample_config(), n=0, base_seed=0)


class TestBeamSearch:
    def test_degenerate_equals_plain_decode(self):
        scorer = tree_scorer(depth=2)
        cfg = sample_config()
        reward = TableReward(leaf_table(2, seed=1))
        cand = beam_search(
            scorer, reward, [], cfg, beam_width=1, chunk_len=cfg.max_new_tokens, base_seed=9
        )
        plain = decode(scorer, [], cfg.with_seed(9))
        assert cand.trace.token_ids() == plain.token_ids()
        assert cand.trace.finish_reason == plain.finish_reason

    def test_depth_two_tree_enumeration(self):
        depth = 2
        scorer = tree_scorer(depth)
        table = leaf_table(depth, seed=21)
        reward = TableReward(table)
        cand = beam_search(
            scorer,
            reward,
            [],
            sample_config(),
            beam_width=2,
            chunk_len=1,
            base_seed=0,
            expansions_per_beam=8,
        )
        assert cand.reward == pytest.approx(max(table.values()))

    def test_depth_three_tree_enumeration_width_four(self):
        depth = 3
        scorer = tree_scorer(depth)
        table = leaf_table(depth, seed=33)
        reward = TableReward(table)
        cand = beam_search(
            scorer,
            reward,
            [],
            sample_config(),
            beam_width=4,
            chunk_len=1,
            base_seed=1,
            expansions_per_beam=8,
        )
        assert cand.reward == pytest.approx(max(table.values()))
        prefix = tuple(t for t in cand.trace.token_ids() if t != EOS)
        assert table[prefix] == pytest.approx(max(table.values()))

    def test_deterministic_given_seed(self):
        scorer = tree_scorer(2)
        reward = TableReward(leaf_table(2, seed=4))
        runs = [
            beam_search(scorer, reward, [], sample_config(), beam_width=2, chunk_len=1, base_seed=6)
            for _ in range(2)
        ]
        assert runs[0].trace == runs[1].trace

    def test_budget_exhaustion_finishes_beams(self):
        # scorer never emits eos within the budget
        floor = -1e9
        branch = peaked_logits(TREE_VOCAB.size, {BRANCH_A: 1.0, BRANCH_B: 1.0}, floor)
        scorer = ScriptedScorer(TREE_VOCAB, [], branch)
        reward = TableReward({})

        class Count(RewardScorer):
            def score(self, prompt_ids, trace):
                return float(len(trace.steps))

        cand = beam_search(
            scorer, Count(), [], sample_config(max_new_tokens=6), beam_width=2, chunk_len=2, base_seed=0
        )
        assert cand.trace.length_tokens == 6
        assert cand.trace.finish_reason == "max_tokens"

    def test_invalid_parameters_rejected(self):
        scorer = tree_scorer(1)
        with pytest.raises(ParameterError):
            beam_search(scorer, TableReward({}), [], sample_config(), beam_width=0, chunk_len=1)
        with pytest.raises(ParameterError):
            beam_search(scorer, TableReward({}), [], sample_config(), beam_width=1, chunk_len=0)


class TestPassAtN:
    def test_hand_example(self):
        outcomes = [[False, True], [False, False]]
        assert pass_at_n(outcomes, 2) == 0.5

    def test_n_one_is_first_sample_accuracy(self):
        outcomes = [[True, False], [False, True], [False, False]]
        assert pass_at_n(outcomes, 1) == pytest.approx(1 / 3)

    def test_monotone_in_n(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            outcomes = (rng.random((8, 16)) < 0.3).tolist()
            values = [pass_at_n(outcomes, n) for n in range(1, 17)]
            assert all(a <= b for a, b in zip(values, values[1:]))
            assert all(0.0 <= v <= 1.0 for v in values)

    def test_insufficient_outcomes_rejected(self):
        with pytest.raises(ParameterError):
            pass_at_n([[True], [True, False]], 2)


class TestRewards:
    def test_logprob_reward_matches_hand_computation(self, tiny_vocab):
        from conftest import C_TOK, constant_scorer

        vector = peaked_logits(tiny_vocab.size, {A_TOK: 2.0, B_TOK: 1.0})
        scorer = constant_scorer(tiny_vocab, vector)
        cfg = DecodeConfig(
            sampler="greedy",
            max_new_tokens=3,
            stop_ids=frozenset(),
            reflection=ReflectionConfig(words=("wait",)),
        )
        trace = decode(scorer, [C_TOK], cfg)
        probs = softmax(np.array(vector))
        expected = float(np.log(probs[A_TOK]))
        assert LogprobReward(scorer).score([C_TOK], trace) == pytest.approx(expected)

    def test_oracle_reward_string_match(self):
        vocab = Vocab(("so ", "\\boxed{42}", "\\boxed{7}", "<eos>"))
        floor = -1e9
        scorer = ScriptedScorer(
            vocab,
            [
                ScriptedRule(suffix=(1,), logits=peaked_logits(4, {3: 1.0}, floor)),
            ],
            peaked_logits(4, {1: 1.0}, floor),
        )
        cfg = DecodeConfig(
            sampler="greedy",
            max_new_tokens=4,
            stop_ids=frozenset({3}),
            reflection=ReflectionConfig(words=("wait",)),
        )
        trace = decode(scorer, [], cfg)
        assert OracleReward("42").score([], trace) == 1.0
        assert OracleReward("7").score([], trace) == 0.0

    def test_all_failures_raise_harness_error(self, tiny_vocab):
        from reflexsched.errors import ScorerError

        class Broken:
            vocab = tiny_vocab
            context_limit = 1 << 20

            def query(self, context):
                raise ScorerError("down")

        with pytest.raises(HarnessError):
            generate_candidates(
                Broken(), TableReward({}), [], sample_config(), n=3, base_seed=0
            )
