"""The token-by-token decode loop.

Each step queries the scorer for raw logits, optionally grows the
reflection set (dynamic rule, on raw logits), adds the schedule's delta to
reflection-token logits while the thinking phase lasts, then samples. A
forced-reflection config replaces sampling right after the think-end
marker with a fixed token (budgeted), which extends reasoning without
touching logits. Every emitted token is recorded in a ``StepRecord``.

Determinism: greedy decodes are bit-reproducible; sampled decodes are
reproducible given the config seed. When a step's delta is exactly 0 the
logits vector is passed through untouched, so zero-amplitude schedules
produce traces bit-identical to no schedule at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import sampling
from .errors import DecodeError, ParameterError, ScorerError
from .schedule import ScheduleSpec, evaluate
from .vocab import ReflectionSet, build_reflection_set, dynamic_expand_step

FINISH_STOP = "stop"
FINISH_MAX_TOKENS = "max_tokens"
FINISH_ABORTED = "aborted"

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class ReflectionConfig:
    """How to build the session's reflection set from the scorer vocab."""

    words: tuple[str, ...] = ("wait", "but", "alternatively")
    dynamic: bool = False


@dataclass(frozen=True)
class ForcedReflection:
    """Insert ``token_id`` right after the think-end marker, up to a budget."""

    token_id: int
    max_insertions: int = 1


@dataclass(frozen=True)
class DecodeConfig:
    schedule: ScheduleSpec = ScheduleSpec()
    reflection: ReflectionConfig = ReflectionConfig()
    sampler: str = sampling.SAMPLE
    temperature: float = 0.6
    top_p: float = 0.95
    max_new_tokens: int = 8192
    seed: int = 0
    stop_ids: frozenset[int] = frozenset()
    think_end_id: int | None = None
    adjust_after_think_end: bool = False
    forced_reflection: ForcedReflection | None = None

    def validate(self) -> None:
        self.schedule.validate()
        if not 0.0 < self.top_p <= 1.0:
            raise ParameterError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        if self.max_new_tokens < 1:
            raise ParameterError(
                f"max_new_tokens must be >= 1, got {self.max_new_tokens}"
            )
        if self.sampler not in (sampling.GREEDY, sampling.SAMPLE):
            raise ParameterError(f"unknown sampler {self.sampler!r}")
        if self.forced_reflection is not None and self.forced_reflection.max_insertions < 0:
            raise ParameterError("forced_reflection.max_insertions must be >= 0")

    def with_seed(self, seed: int) -> "DecodeConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class StepRecord:
    """One emitted token: position, identity, and how it was chosen."""

    t: int
    token_id: int
    surface: str
    raw_logit: float
    adjustment: float
    is_reflection: bool
    was_forced: bool


@dataclass
class DecodeTrace:
    prompt_ids: list[int]
    steps: list[StepRecord]
    finish_reason: str
    reflection_count: int = 0
    length_tokens: int = 0

    def __post_init__(self) -> None:
        self.reflection_count = sum(1 for s in self.steps if s.is_reflection)
        self.length_tokens = len(self.steps)

    def token_ids(self) -> list[int]:
        return [s.token_id for s in self.steps]

    def text(self) -> str:
        return "".join(s.surface for s in self.steps)


def adjust_logits(logits: np.ndarray, rset: ReflectionSet, delta: float) -> np.ndarray:
    """Copy of ``logits`` with ``delta`` added at the reflection ids."""
    logits = np.asarray(logits, dtype=np.float64)
    out = logits.copy()
    if rset.token_ids and delta != 0.0:
        out[sorted(rset.token_ids)] += delta
    return out


def decode(
    scorer,
    prompt_ids: list[int],
    config: DecodeConfig,
    *,
    step_offset: int = 0,
    reflection_set: ReflectionSet | None = None,
    think_ended: bool = False,
    insertions_used: int = 0,
) -> DecodeTrace:
    """Generate up to ``config.max_new_tokens`` tokens from ``prompt_ids``.

    The keyword-only arguments let a caller continue an earlier generation
    (beam search chunks): ``step_offset`` keeps the schedule position
    advancing across chunks, and the session state (reflection set, phase,
    forced-insertion budget) carries over. Fresh decodes leave them at the
    defaults.

    Raises ``DecodeError`` (carrying the partial step list) if the scorer
    fails mid-run. Exceeding the scorer's context limit truncates with
    finish reason ``max_tokens``.
    """
    config.validate()
    vocab = scorer.vocab
    rset = (
        reflection_set
        if reflection_set is not None
        else build_reflection_set(
            vocab, list(config.reflection.words), dynamic=config.reflection.dynamic
        )
    )
    rng = np.random.Generator(np.random.PCG64(config.seed & _MASK64))
    context = list(prompt_ids)
    steps: list[StepRecord] = []
    forced = config.forced_reflection
    finish_reason = FINISH_MAX_TOKENS

    for local_t in range(config.max_new_tokens):
        t = step_offset + local_t
        if len(context) > scorer.context_limit:
            finish_reason = FINISH_MAX_TOKENS
            break
        try:
            logits = np.asarray(scorer.query(context), dtype=np.float64)
        except ScorerError as exc:
            raise DecodeError(
                f"scorer failed at step {t}: {exc}",
                partial_steps=steps,
                prompt_ids=prompt_ids,
            ) from exc
        if logits.shape != (vocab.size,):
            raise DecodeError(
                f"scorer returned {logits.shape} logits, expected ({vocab.size},)",
                partial_steps=steps,
                prompt_ids=prompt_ids,
            )
        if rset.dynamic:
            dynamic_expand_step(rset, logits)

        in_adjust_phase = (not think_ended) or config.adjust_after_think_end
        delta = evaluate(config.schedule, t).delta if in_adjust_phase else 0.0
        adjusted = adjust_logits(logits, rset, delta) if delta != 0.0 else logits

        prev_token = steps[-1].token_id if steps else None
        if (
            forced is not None
            and config.think_end_id is not None
            and prev_token == config.think_end_id
            and insertions_used < forced.max_insertions
        ):
            token = forced.token_id
            was_forced = True
            insertions_used += 1
            applied = 0.0
        else:
            token = sampling.sample_token(
                adjusted, config.sampler, config.temperature, config.top_p, rng
            )
            was_forced = False
            applied = delta if token in rset.token_ids else 0.0

        steps.append(
            StepRecord(
                t=t,
                token_id=token,
                surface=vocab.surface(token),
                raw_logit=float(logits[token]),
                adjustment=applied,
                is_reflection=token in rset.token_ids,
                was_forced=was_forced,
            )
        )
        if config.think_end_id is not None and token == config.think_end_id:
            think_ended = True
        context.append(token)
        if token in config.stop_ids:
            finish_reason = FINISH_STOP
            break

    return DecodeTrace(
        prompt_ids=list(prompt_ids), steps=steps, finish_reason=finish_reason
    )
