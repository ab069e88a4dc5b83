"""Per-position logit adjustments for reflection tokens.

Every schedule is a pure function of the generated-token index ``t``
(0-based, prompt excluded). The cyclic schedule is a triangular waveform
oscillating between -amplitude and +amplitude with a fixed period; the
constant-penalty schedule adds a fixed offset inside an initial window;
linear decay ramps from a positive boost down to a penalty; random noise
is a keyed zero-mean draw. ``evaluate`` dispatches on a ``ScheduleSpec``.

All arithmetic is double precision. The noise draw deliberately avoids
library RNGs: it is a splitmix64 hash of ``(seed, t)`` mapped to a uniform
on ``[-sqrt(3)*sigma, +sqrt(3)*sigma]`` (zero mean, standard deviation
``sigma``), so any host runtime with IEEE-754 doubles can reproduce it
bit-exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ParameterError

_MASK64 = (1 << 64) - 1
_SQRT3 = math.sqrt(3.0)


class ScheduleKind(str, enum.Enum):
    NONE = "none"
    TIP = "tip"
    CYCLIC = "cyclic"
    LINEAR_DECAY = "linear_decay"
    RANDOM_NOISE = "random_noise"
    FORCED_REFLECTION = "forced_reflection"


@dataclass(frozen=True)
class ScheduleSpec:
    """Which adjustment family to apply and its parameters.

    Only the fields relevant to ``kind`` are consulted. ``forced_reflection``
    contributes no logit adjustment (the decode engine implements it by
    replacing sampling at specific steps), so its delta is always 0.
    """

    kind: ScheduleKind = ScheduleKind.NONE
    amplitude: float = 0.0
    period: float = 1.0
    phase_shift: float = 0.0
    alpha: float = 0.0
    window: int = 0
    decay_horizon: int = 1
    noise_sigma: float = 0.0
    noise_seed: int = 0

    def validate(self) -> None:
        if not isinstance(self.kind, ScheduleKind):
            raise ParameterError(f"unknown schedule kind: {self.kind!r}")
        if self.kind is ScheduleKind.CYCLIC:
            if self.period <= 0:
                raise ParameterError(f"period must be positive, got {self.period}")
            if self.amplitude < 0:
                raise ParameterError(
                    f"amplitude must be nonnegative, got {self.amplitude}"
                )
        if self.kind is ScheduleKind.TIP and self.window < 0:
            raise ParameterError(f"window must be nonnegative, got {self.window}")
        if self.kind is ScheduleKind.LINEAR_DECAY and self.decay_horizon <= 0:
            raise ParameterError(
                f"decay_horizon must be positive, got {self.decay_horizon}"
            )
        if self.kind is ScheduleKind.RANDOM_NOISE and self.noise_sigma < 0:
            raise ParameterError(
                f"noise_sigma must be nonnegative, got {self.noise_sigma}"
            )


@dataclass(frozen=True)
class Adjustment:
    """A single step's logit offset for reflection-token ids."""

    delta: float
    applies_to_reflection_only: bool


def cyclic_adjustment(t: int, amplitude: float, period: float, phase: float = 0.0) -> float:
    """Triangular waveform value at generated-token position ``t``.

    Rises from 0 at t=0 to +amplitude at t=period/4, falls through 0 at
    t=period/2 to -amplitude at t=3*period/4, and returns to 0 at t=period.
    ``phase`` shifts the waveform in token-position units (evaluated at
    t+phase). The modulo is Euclidean so negative arguments land in
    [0, period).
    """
    if period <= 0:
        raise ParameterError(f"period must be positive, got {period}")
    if amplitude < 0:
        raise ParameterError(f"amplitude must be nonnegative, got {amplitude}")
    x = (float(t) + float(phase)) - float(period) / 4.0
    r = math.fmod(x, period)
    if r < 0.0:
        r += period
    return amplitude * abs(4.0 * (r / period) - 2.0) - amplitude


def tip_adjustment(t: int, alpha: float, window: int) -> float:
    """Constant offset ``alpha`` while ``t < window``, 0 afterwards."""
    if window < 0:
        raise ParameterError(f"window must be nonnegative, got {window}")
    return float(alpha) if t < window else 0.0


def linear_decay_adjustment(t: int, alpha_start: float, horizon: int) -> float:
    """Linear ramp from +alpha_start at t=0 to -alpha_start at t=horizon.

    Clamped at -alpha_start beyond the horizon.
    """
    if horizon <= 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    if t > horizon:
        return -float(alpha_start)
    return float(alpha_start) * (1.0 - (2.0 * float(t)) / float(horizon))


def splitmix64(x: int) -> int:
    """One splitmix64 output for a 64-bit input. Pure integer arithmetic."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash_unit(seed: int, t: int) -> float:
    """Deterministic uniform draw in [0, 1) keyed by (seed, t)."""
    h = splitmix64(splitmix64(seed & _MASK64) ^ (t & _MASK64))
    return (h >> 11) * 2.0 ** -53


def random_adjustment(t: int, sigma: float, seed: int) -> float:
    """Zero-mean draw with standard deviation ``sigma``, keyed by (seed, t).

    Uniform on [-sqrt(3)*sigma, +sqrt(3)*sigma]; the same (seed, t) always
    yields the same value, in any IEEE-754 runtime.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be nonnegative, got {sigma}")
    u = hash_unit(seed, t)
    return (2.0 * u - 1.0) * _SQRT3 * float(sigma)


def evaluate(spec: ScheduleSpec, t: int) -> Adjustment:
    """Dispatch to the kind-specific adjustment at position ``t``."""
    spec.validate()
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    kind = spec.kind
    if kind is ScheduleKind.NONE or kind is ScheduleKind.FORCED_REFLECTION:
        return Adjustment(0.0, kind is not ScheduleKind.NONE)
    if kind is ScheduleKind.TIP:
        return Adjustment(tip_adjustment(t, spec.alpha, spec.window), True)
    if kind is ScheduleKind.CYCLIC:
        return Adjustment(
            cyclic_adjustment(t, spec.amplitude, spec.period, spec.phase_shift), True
        )
    if kind is ScheduleKind.LINEAR_DECAY:
        return Adjustment(
            linear_decay_adjustment(t, spec.alpha, spec.decay_horizon), True
        )
    if kind is ScheduleKind.RANDOM_NOISE:
        return Adjustment(random_adjustment(t, spec.noise_sigma, spec.noise_seed), True)
    raise ParameterError(f"unknown schedule kind: {kind!r}")
