"""Greedy and nucleus (top-p) token selection over a logits vector.

Tie-breaking is pinned everywhere: equal logits/probabilities resolve to
the lowest token id, so decodes are reproducible across platforms.
"""

from __future__ import annotations

import numpy as np

from .errors import DecodeError, ParameterError

GREEDY = "greedy"
SAMPLE = "sample"


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax in double precision; -inf entries get probability 0."""
    logits = np.asarray(logits, dtype=np.float64)
    peak = np.max(logits)
    if not np.isfinite(peak):
        raise DecodeError("softmax undefined: no finite logit")
    exps = np.exp(logits - peak)
    return exps / exps.sum()


def greedy_token(logits: np.ndarray) -> int:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(np.max(logits)):
        raise DecodeError("greedy selection undefined: all logits masked")
    # np.argmax returns the first maximum, i.e. the lowest id on ties.
    return int(np.argmax(logits))


def top_p_support(probs: np.ndarray, top_p: float) -> np.ndarray:
    """Ids of the smallest descending-probability prefix with mass >= top_p.

    Returned in descending probability order (ties toward the lower id).
    """
    if not 0.0 < top_p <= 1.0:
        raise ParameterError(f"top_p must be in (0, 1], got {top_p}")
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(-probs, kind="stable")
    csum = np.cumsum(probs[order])
    cut = int(np.searchsorted(csum, top_p, side="left")) + 1
    # Cumulative float error can leave the total a hair under 1.0.
    cut = min(cut, len(order))
    return order[:cut]


def sample_token(
    logits: np.ndarray,
    sampler: str,
    temperature: float,
    top_p: float,
    rng: np.random.Generator,
) -> int:
    """Pick the next token id.

    Greedy ignores temperature/top_p/rng. Sampling applies temperature,
    restricts to the nucleus, renormalizes, and draws by inverse CDF from
    ``rng`` (which advances deterministically).
    """
    if sampler == GREEDY:
        return greedy_token(logits)
    if sampler != SAMPLE:
        raise ParameterError(f"unknown sampler {sampler!r}")
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, dtype=np.float64)
    probs = softmax(logits / temperature)
    support = top_p_support(probs, top_p)
    kept = probs[support]
    kept = kept / kept.sum()
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(kept), u, side="right"))
    idx = min(idx, len(support) - 1)
    return int(support[idx])
