"""Test-time scaling over the decode engine.

Best-of-N runs independent decodes on consecutive seeds and keeps the
candidate the reward scorer prefers. Beam search grows fixed-length token
chunks, scoring partial generations after every chunk and keeping the top
``beam_width`` extensions; the schedule position keeps advancing across a
beam's chunks so the waveform never restarts mid-generation. Pass@N is
first-N counting over recorded per-problem outcomes.

Reward scorers are pluggable: mean chosen-token log-probability under the
raw logits, an answer-match oracle, or a remote scorer speaking the same
wire protocol as the logits backends.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .analytics import extract_boxed_answer
from .engine import (
    FINISH_STOP,
    DecodeConfig,
    DecodeTrace,
    decode,
)
from .errors import DecodeError, HarnessError, ParameterError
from .sampling import softmax
from .vocab import build_reflection_set

DEFAULT_BEAM_WIDTH = 4
DEFAULT_CHUNK_LEN = 256


@dataclass
class Candidate:
    trace: DecodeTrace
    reward: float
    extracted_answer: str | None = None
    seed_offset: int = 0


class RewardScorer:
    """Deterministic map from (prompt, finished-or-partial trace) to a scalar."""

    def score(self, prompt_ids: list[int], trace: DecodeTrace) -> float:
        raise NotImplementedError


class LogprobReward(RewardScorer):
    """Mean log-probability of the chosen tokens under the raw logits.

    Replays the scorer over the trace (step records keep only the chosen
    token's raw logit, not the softmax normalizer).
    """

    def __init__(self, scorer):
        self.scorer = scorer

    def score(self, prompt_ids: list[int], trace: DecodeTrace) -> float:
        if not trace.steps:
            return float("-inf")
        context = list(prompt_ids)
        total = 0.0
        for step in trace.steps:
            probs = softmax(self.scorer.query(context))
            total += float(np.log(probs[step.token_id]))
            context.append(step.token_id)
        return total / len(trace.steps)


class OracleReward(RewardScorer):
    """1.0 when the trace's extracted answer matches the key, else 0.0."""

    def __init__(self, answer_key: str):
        self.answer_key = answer_key.strip()

    def score(self, prompt_ids: list[int], trace: DecodeTrace) -> float:
        answer = extract_boxed_answer(trace.text())
        return 1.0 if answer is not None and answer.strip() == self.answer_key else 0.0


class RemoteReward(RewardScorer):
    """Delegate scoring to a remote endpoint ({"score": ...} -> {"reward": ...})."""

    def __init__(self, client):
        self.client = client

    def score(self, prompt_ids: list[int], trace: DecodeTrace) -> float:
        return self.client.score(prompt_ids, trace.token_ids())


def generate_candidates(
    scorer,
    reward: RewardScorer,
    prompt_ids: list[int],
    config: DecodeConfig,
    n: int,
    base_seed: int,
    workers: int = 1,
) -> list[Candidate]:
    """Decode N candidates on seeds base_seed..base_seed+N-1 and score them.

    Individual decode failures are skipped; the list is ordered by seed
    offset. Raises if every decode fails.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")

    def one(offset: int) -> Candidate | None:
        try:
            trace = decode(scorer, prompt_ids, config.with_seed(base_seed + offset))
        except DecodeError:
            return None
        return Candidate(
            trace=trace,
            reward=reward.score(prompt_ids, trace),
            extracted_answer=extract_boxed_answer(trace.text()),
            seed_offset=offset,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n)))
    else:
        results = [one(i) for i in range(n)]
    candidates = [c for c in results if c is not None]
    if not candidates:
        raise HarnessError("all candidate decodes failed")
    return candidates


def best_of_n(
    scorer,
    reward: RewardScorer,
    prompt_ids: list[int],
    config: DecodeConfig,
    n: int,
    base_seed: int,
    workers: int = 1,
) -> Candidate:
    """Highest-reward candidate of N independent decodes (ties -> lowest seed)."""
    candidates = generate_candidates(scorer, reward, prompt_ids, config, n, base_seed, workers)
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.reward > best.reward:
            best = cand
    return best


@dataclass
class _Beam:
    steps: list
    think_ended: bool
    insertions_used: int
    rset: object
    finished: bool = False
    finish_reason: str = ""
    reward: float = float("-inf")

    def tokens(self) -> list[int]:
        return [s.token_id for s in self.steps]


def beam_search(
    scorer,
    reward: RewardScorer,
    prompt_ids: list[int],
    config: DecodeConfig,
    beam_width: int = DEFAULT_BEAM_WIDTH,
    chunk_len: int = DEFAULT_CHUNK_LEN,
    base_seed: int = 0,
    expansions_per_beam: int | None = None,
) -> Candidate:
    """Reward-guided chunked beam search.

    Every round, each live beam is extended ``expansions_per_beam`` times
    (default: beam_width) by ``chunk_len`` tokens, each extension on its own
    seed stream; the pooled extensions are scored as partial generations and
    the top ``beam_width`` survive (ties -> lower pool index). A beam
    finishes when it hits a stop token or the token budget. The best
    finished beam by final reward wins. With beam_width=1 and
    chunk_len=config.max_new_tokens this is a single plain decode.
    """
    if beam_width < 1:
        raise ParameterError(f"beam_width must be >= 1, got {beam_width}")
    if chunk_len < 1:
        raise ParameterError(f"chunk_len must be >= 1, got {chunk_len}")
    if expansions_per_beam is None:
        expansions_per_beam = beam_width
    config.validate()

    initial_set = build_reflection_set(
        scorer.vocab, list(config.reflection.words), dynamic=config.reflection.dynamic
    )
    live = [
        _Beam(steps=[], think_ended=False, insertions_used=0, rset=initial_set.clone())
    ]
    finished: list[_Beam] = []
    seed_counter = 0

    while live:
        pool: list[_Beam] = []
        for beam in live:
            remaining = config.max_new_tokens - len(beam.steps)
            if remaining <= 0:
                beam.finished = True
                beam.finish_reason = "max_tokens"
                finished.append(beam)
                continue
            for _ in range(expansions_per_beam):
                seed = base_seed + seed_counter
                seed_counter += 1
                ext_cfg = replace(
                    config, seed=seed, max_new_tokens=min(chunk_len, remaining)
                )
                rset = beam.rset.clone()
                try:
                    chunk = decode(
                        scorer,
                        list(prompt_ids) + beam.tokens(),
                        ext_cfg,
                        step_offset=len(beam.steps),
                        reflection_set=rset,
                        think_ended=beam.think_ended,
                        insertions_used=beam.insertions_used,
                    )
                except DecodeError:
                    continue
                forced_seen = beam.insertions_used + sum(
                    1 for s in chunk.steps if s.was_forced
                )
                child = _Beam(
                    steps=beam.steps + chunk.steps,
                    think_ended=beam.think_ended
                    or (
                        config.think_end_id is not None
                        and any(s.token_id == config.think_end_id for s in chunk.steps)
                    ),
                    insertions_used=forced_seen,
                    rset=rset,
                )
                if chunk.finish_reason == FINISH_STOP:
                    child.finished = True
                    child.finish_reason = FINISH_STOP
                elif len(child.steps) >= config.max_new_tokens:
                    child.finished = True
                    child.finish_reason = "max_tokens"
                child.reward = reward.score(
                    prompt_ids, _assemble(prompt_ids, child, config)
                )
                pool.append(child)
        if not pool:
            if finished:
                break
            raise HarnessError("no live beams and nothing finished")
        pool.sort(key=lambda b: -b.reward)  # stable: ties keep pool order
        survivors = pool[:beam_width]
        live = [b for b in survivors if not b.finished]
        finished.extend(b for b in survivors if b.finished)

    if not finished:
        raise HarnessError("beam search finished no beams")
    best = finished[0]
    for beam in finished[1:]:
        if beam.reward > best.reward:
            best = beam
    trace = _assemble(prompt_ids, best, config)
    return Candidate(
        trace=trace,
        reward=best.reward,
        extracted_answer=extract_boxed_answer(trace.text()),
    )


def _assemble(prompt_ids: list[int], beam: _Beam, config: DecodeConfig) -> DecodeTrace:
    reason = beam.finish_reason if beam.finished else "max_tokens"
    return DecodeTrace(
        prompt_ids=list(prompt_ids), steps=list(beam.steps), finish_reason=reason
    )


def pass_at_n(per_problem_outcomes: list[list[bool]], n: int) -> float:
    """Fraction of problems whose first ``n`` outcomes contain a success."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not per_problem_outcomes:
        raise ParameterError("need at least one problem")
    for i, outcomes in enumerate(per_problem_outcomes):
        if len(outcomes) < n:
            raise ParameterError(
                f"problem {i} has {len(outcomes)} outcomes, need at least {n}"
            )
    solved = sum(1 for outcomes in per_problem_outcomes if any(outcomes[:n]))
    return solved / len(per_problem_outcomes)
