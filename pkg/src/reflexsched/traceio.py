"""Trace serialization: one JSON record per step plus a final summary.

The writer emits a fixed key order and compact separators so that reading
a file and re-serializing it reproduces the bytes exactly.
"""

from __future__ import annotations

import json

from .engine import DecodeTrace, StepRecord
from .errors import ParameterError


class TraceFormatError(ParameterError):
    """A trace line failed to parse; carries the 1-based line number."""

    def __init__(self, message: str, lineno: int):
        super().__init__(message)
        self.lineno = lineno


def step_to_record(step: StepRecord) -> dict:
    return {
        "t": step.t,
        "token_id": step.token_id,
        "surface": step.surface,
        "raw_logit": float(step.raw_logit),
        "adjustment": float(step.adjustment),
        "is_reflection": step.is_reflection,
        "was_forced": step.was_forced,
    }


def record_to_step(record: dict) -> StepRecord:
    return StepRecord(
        t=int(record["t"]),
        token_id=int(record["token_id"]),
        surface=record["surface"],
        raw_logit=float(record["raw_logit"]),
        adjustment=float(record["adjustment"]),
        is_reflection=bool(record["is_reflection"]),
        was_forced=bool(record["was_forced"]),
    )


def _dump(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def trace_to_lines(trace: DecodeTrace) -> list[str]:
    lines = [_dump(step_to_record(s)) for s in trace.steps]
    lines.append(
        _dump(
            {
                "summary": {
                    "prompt_ids": list(trace.prompt_ids),
                    "finish_reason": trace.finish_reason,
                    "reflection_count": trace.reflection_count,
                    "length_tokens": trace.length_tokens,
                }
            }
        )
    )
    return lines


def write_trace(trace: DecodeTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in trace_to_lines(trace):
            fh.write(line + "\n")


def write_partial_trace(steps: list[StepRecord], prompt_ids: list[int], path) -> None:
    """Flush an aborted decode: step records plus an 'aborted' summary."""
    with open(path, "w", encoding="utf-8") as fh:
        for step in steps:
            fh.write(_dump(step_to_record(step)) + "\n")
        fh.write(
            _dump(
                {
                    "summary": {
                        "prompt_ids": list(prompt_ids),
                        "finish_reason": "aborted",
                        "reflection_count": sum(1 for s in steps if s.is_reflection),
                        "length_tokens": len(steps),
                    }
                }
            )
            + "\n"
        )


def read_trace(path) -> DecodeTrace:
    steps = []
    summary = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {lineno}: invalid JSON: {exc}", lineno) from exc
            if not isinstance(record, dict):
                raise TraceFormatError(f"line {lineno}: expected an object", lineno)
            if "summary" in record:
                if summary is not None:
                    raise TraceFormatError(f"line {lineno}: duplicate summary", lineno)
                summary = record["summary"]
                continue
            try:
                steps.append(record_to_step(record))
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"line {lineno}: bad step record: {exc}", lineno) from exc
    if summary is None:
        raise TraceFormatError("missing summary record", lineno=0)
    trace = DecodeTrace(
        prompt_ids=[int(i) for i in summary["prompt_ids"]],
        steps=steps,
        finish_reason=summary["finish_reason"],
    )
    if trace.length_tokens != int(summary["length_tokens"]):
        raise TraceFormatError(
            f"summary length {summary['length_tokens']} != {trace.length_tokens} steps",
            lineno=0,
        )
    if trace.reflection_count != int(summary["reflection_count"]):
        raise TraceFormatError(
            "summary reflection_count disagrees with step flags", lineno=0
        )
    return trace
