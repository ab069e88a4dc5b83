"""Run and sweep config files: flat JSON documents, strictly validated.

Both formats carry a schema version field ``"v": 1`` and reject unknown
keys so a typo in a schedule parameter fails loudly instead of silently
decoding with defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .engine import DecodeConfig, ForcedReflection, ReflectionConfig
from .errors import ConfigError, ParameterError
from .sampling import GREEDY, SAMPLE
from .schedule import ScheduleKind, ScheduleSpec
from .scorers import (
    RemoteScorer,
    load_ngram_corpus,
    load_scripted_rules,
    ngram_train,
)
from .vocab import DEFAULT_REFLECTION_WORDS, Vocab, load_vocab

SCHEMA_VERSION = 1

_RUN_KEYS = {
    "v": int,
    "scorer_kind": str,        # scripted | ngram | remote
    "scorer_path": str,        # rules file (scripted) or corpus file (ngram)
    "endpoint": str,           # host:port (remote)
    "ngram_order": int,
    "ngram_kappa": float,
    "vocab_path": str,
    "sampler": str,            # greedy | sample
    "temperature": float,
    "top_p": float,
    "max_new_tokens": int,
    "seed": int,
    "stop_ids": list,
    "think_end_id": int,
    "adjust_after_think_end": bool,
    "forced_token_id": int,
    "forced_max_insertions": int,
    "schedule_kind": str,
    "amplitude": float,
    "period": float,
    "phase_shift": float,
    "alpha": float,
    "window": int,
    "decay_horizon": int,
    "noise_sigma": float,
    "noise_seed": int,
    "reflection_words": list,
    "reflection_dynamic": bool,
    "prompt_ids": list,
    "output_path": str,
    "workers": int,
    "reward_kind": str,        # logprob | oracle | remote
    "reward_answer": str,      # oracle answer key
    "reward_endpoint": str,    # remote reward host:port
}

_SWEEP_KEYS = {
    "v": int,
    "base_config": str,        # path to a run config supplying scorer/decode fields
    "sweep_kind": str,         # cyclic | tip
    "grid_amplitude": list,
    "grid_period": list,
    "grid_phase_shift": list,
    "grid_alpha": list,
    "grid_window": list,
    "dataset": list,           # [{"prompt_ids": [...], "answer": "..."}]
    "workers": int,
}


def _load_document(path, allowed: dict, label: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"{label} file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: {label} must be a JSON object")
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys: {sorted(unknown)}")
    if doc.get("v") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: requires \"v\": {SCHEMA_VERSION}")
    for key, value in doc.items():
        expected = allowed[key]
        if expected is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{path}: key {key!r} must be a number")
        elif expected is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{path}: key {key!r} must be an integer")
        elif not isinstance(value, expected):
            raise ConfigError(f"{path}: key {key!r} must be {expected.__name__}")
    return doc


_SCHEDULE_KINDS = {k.value: k for k in ScheduleKind}


@dataclass
class RunConfig:
    """Everything one decode run needs, resolved from a flat config file."""

    scorer_kind: str
    vocab_path: str
    decode: DecodeConfig
    scorer_path: str | None = None
    endpoint: str | None = None
    ngram_order: int = 2
    ngram_kappa: float = 1.0
    prompt_ids: list[int] = field(default_factory=list)
    output_path: str | None = None
    workers: int = 1
    reward_kind: str = "logprob"
    reward_answer: str | None = None
    reward_endpoint: str | None = None
    base_dir: str = "."

    def _resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def load_vocab(self) -> Vocab:
        resolved = self._resolve(self.vocab_path)
        if not os.path.exists(resolved):
            raise ConfigError(f"vocab file not found: {resolved}")
        return load_vocab(resolved)

    def build_scorer(self, vocab: Vocab):
        if self.scorer_kind == "scripted":
            if not self.scorer_path:
                raise ConfigError("scripted scorer requires scorer_path")
            resolved = self._resolve(self.scorer_path)
            if not os.path.exists(resolved):
                raise ConfigError(f"scorer rules file not found: {resolved}")
            return load_scripted_rules(resolved, vocab)
        if self.scorer_kind == "ngram":
            if not self.scorer_path:
                raise ConfigError("ngram scorer requires scorer_path (corpus file)")
            resolved = self._resolve(self.scorer_path)
            if not os.path.exists(resolved):
                raise ConfigError(f"ngram corpus file not found: {resolved}")
            corpus = load_ngram_corpus(resolved)
            try:
                return ngram_train(corpus, self.ngram_order, self.ngram_kappa, vocab)
            except ParameterError as exc:
                raise ConfigError(str(exc)) from exc
        if self.scorer_kind == "remote":
            if not self.endpoint:
                raise ConfigError("remote scorer requires endpoint")
            return RemoteScorer(self.endpoint, vocab)
        raise ConfigError(f"unknown scorer_kind {self.scorer_kind!r}")


def _schedule_from_doc(doc: dict, path) -> ScheduleSpec:
    kind_text = doc.get("schedule_kind", "none")
    if kind_text not in _SCHEDULE_KINDS:
        raise ConfigError(
            f"{path}: unknown schedule_kind {kind_text!r} "
            f"(expected one of {sorted(_SCHEDULE_KINDS)})"
        )
    spec = ScheduleSpec(
        kind=_SCHEDULE_KINDS[kind_text],
        amplitude=float(doc.get("amplitude", 0.0)),
        period=float(doc.get("period", 1.0)),
        phase_shift=float(doc.get("phase_shift", 0.0)),
        alpha=float(doc.get("alpha", 0.0)),
        window=int(doc.get("window", 0)),
        decay_horizon=int(doc.get("decay_horizon", 1)),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        noise_seed=int(doc.get("noise_seed", 0)),
    )
    try:
        spec.validate()
    except ParameterError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec


def load_run_config(path) -> RunConfig:
    doc = _load_document(path, _RUN_KEYS, "run config")
    for required in ("scorer_kind", "vocab_path"):
        if required not in doc:
            raise ConfigError(f"{path}: missing required key {required!r}")
    schedule = _schedule_from_doc(doc, path)

    forced = None
    if doc.get("schedule_kind") == "forced_reflection" or "forced_token_id" in doc:
        if "forced_token_id" not in doc:
            raise ConfigError(f"{path}: forced reflection requires forced_token_id")
        forced = ForcedReflection(
            token_id=int(doc["forced_token_id"]),
            max_insertions=int(doc.get("forced_max_insertions", 1)),
        )

    sampler = doc.get("sampler", SAMPLE)
    if sampler not in (GREEDY, SAMPLE):
        raise ConfigError(f"{path}: sampler must be 'greedy' or 'sample'")
    if doc.get("reward_kind", "logprob") not in ("logprob", "oracle", "remote"):
        raise ConfigError(f"{path}: reward_kind must be logprob, oracle, or remote")

    words = doc.get("reflection_words", DEFAULT_REFLECTION_WORDS)
    if not words or not all(isinstance(w, str) for w in words):
        raise ConfigError(f"{path}: reflection_words must be a nonempty string list")

    try:
        decode_config = DecodeConfig(
            schedule=schedule,
            reflection=ReflectionConfig(
                words=tuple(words), dynamic=bool(doc.get("reflection_dynamic", False))
            ),
            sampler=sampler,
            temperature=float(doc.get("temperature", 0.6)),
            top_p=float(doc.get("top_p", 0.95)),
            max_new_tokens=int(doc.get("max_new_tokens", 8192)),
            seed=int(doc.get("seed", 0)),
            stop_ids=frozenset(int(i) for i in doc.get("stop_ids", [])),
            think_end_id=doc.get("think_end_id"),
            adjust_after_think_end=bool(doc.get("adjust_after_think_end", False)),
            forced_reflection=forced,
        )
        decode_config.validate()
    except (ParameterError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    return RunConfig(
        scorer_kind=doc["scorer_kind"],
        vocab_path=doc["vocab_path"],
        decode=decode_config,
        scorer_path=doc.get("scorer_path"),
        endpoint=doc.get("endpoint"),
        ngram_order=int(doc.get("ngram_order", 2)),
        ngram_kappa=float(doc.get("ngram_kappa", 1.0)),
        prompt_ids=[int(i) for i in doc.get("prompt_ids", [])],
        output_path=doc.get("output_path"),
        workers=int(doc.get("workers", 0)) or (os.cpu_count() or 1),
        reward_kind=doc.get("reward_kind", "logprob"),
        reward_answer=doc.get("reward_answer"),
        reward_endpoint=doc.get("reward_endpoint"),
        base_dir=os.path.dirname(os.path.abspath(path)),
    )


@dataclass
class SweepSpec:
    base: RunConfig
    sweep_kind: str
    grid: list[dict]
    dataset: list[dict] = field(default_factory=list)
    workers: int = 1


def load_sweep_spec(path) -> SweepSpec:
    doc = _load_document(path, _SWEEP_KEYS, "sweep spec")
    for required in ("base_config", "sweep_kind", "dataset"):
        if required not in doc:
            raise ConfigError(f"{path}: missing required key {required!r}")
    base_path = doc["base_config"]
    if not os.path.isabs(base_path):
        base_path = os.path.join(os.path.dirname(os.path.abspath(path)), base_path)
    base = load_run_config(base_path)

    dataset = doc["dataset"]
    if not dataset:
        raise ConfigError(f"{path}: dataset must be nonempty")
    for i, item in enumerate(dataset):
        if not isinstance(item, dict) or "prompt_ids" not in item or "answer" not in item:
            raise ConfigError(f"{path}: dataset[{i}] needs prompt_ids and answer")

    kind = doc["sweep_kind"]
    if kind == "cyclic":
        amplitudes = doc.get("grid_amplitude", [float(a) for a in range(1, 11)])
        periods = doc.get("grid_period", [float(c) for c in range(200, 2001, 200)])
        phases = doc.get("grid_phase_shift", [0.0])
        if not amplitudes or not periods or not phases:
            raise ConfigError(f"{path}: cyclic sweep grids must be nonempty")
        grid = [
            {"amplitude": float(a), "period": float(c), "phase_shift": float(p)}
            for a in sorted(amplitudes)
            for c in sorted(periods)
            for p in sorted(phases)
        ]
    elif kind == "tip":
        alphas = doc.get("grid_alpha", [float(a) for a in range(-10, 0)])
        windows = doc.get("grid_window", [w for w in range(100, 1001, 100)])
        if not alphas or not windows:
            raise ConfigError(f"{path}: tip sweep grids must be nonempty")
        grid = [
            {"alpha": float(a), "window": int(w)}
            for a in sorted(alphas)
            for w in sorted(windows)
        ]
    else:
        raise ConfigError(f"{path}: sweep_kind must be 'cyclic' or 'tip'")

    return SweepSpec(
        base=base,
        sweep_kind=kind,
        grid=grid,
        dataset=dataset,
        workers=int(doc.get("workers", 0)) or (os.cpu_count() or 1),
    )
