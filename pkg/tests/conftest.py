import numpy as np
import pytest

from reflexsched.scorers import ScriptedRule, ScriptedScorer
from reflexsched.vocab import Vocab

# Tiny decoding vocabulary reused across tests. Id layout:
# 0 <eos>, 1 </think>, 2 wait, 3 " Wait", 4 but, 5 hmm, 6..9 content a..d
TINY_SURFACES = (
    "<eos>",
    "</think>",
    "wait",
    " Wait",
    "but",
    "hmm",
    "a",
    "b",
    "c",
    "d",
)

EOS = 0
THINK_END = 1
WAIT = 2
WAIT_CAP = 3
BUT = 4
HMM = 5
A_TOK, B_TOK, C_TOK, D_TOK = 6, 7, 8, 9


@pytest.fixture
def tiny_vocab() -> Vocab:
    return Vocab(TINY_SURFACES)


def peaked_logits(size: int, peaks: dict[int, float], floor: float = 0.0) -> tuple:
    logits = [floor] * size
    for token_id, value in peaks.items():
        logits[token_id] = value
    return tuple(logits)


def chain_scorer(vocab: Vocab, sequence: list[int], floor: float = -10.0) -> ScriptedScorer:
    """Scripted scorer that greedily emits ``sequence`` then <eos>."""
    rules = []
    for i in range(len(sequence), 0, -1):
        rules.append(
            ScriptedRule(
                suffix=tuple(sequence[:i]),
                logits=peaked_logits(
                    vocab.size,
                    {sequence[i] if i < len(sequence) else EOS: 10.0},
                    floor,
                ),
            )
        )
    default = peaked_logits(vocab.size, {sequence[0]: 10.0}, floor)
    return ScriptedScorer(vocab, rules, default)


def constant_scorer(vocab: Vocab, logits) -> ScriptedScorer:
    return ScriptedScorer(vocab, [], tuple(float(x) for x in logits))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
