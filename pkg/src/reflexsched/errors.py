"""Exception types shared across the package."""


class ReflexschedError(Exception):
    """Base class for all package errors."""


class ParameterError(ReflexschedError, ValueError):
    """A value violates an operation's preconditions."""


class ConfigError(ReflexschedError):
    """A config/sweep file is missing, malformed, or fails validation."""


class ScorerError(ReflexschedError):
    """A scorer backend could not produce logits for a context."""


class DecodeError(ReflexschedError):
    """Decoding aborted mid-run.

    Carries the steps generated so far so callers can flush a partial trace.
    """

    def __init__(self, message, partial_steps=None, prompt_ids=None):
        super().__init__(message)
        self.partial_steps = list(partial_steps) if partial_steps is not None else []
        self.prompt_ids = list(prompt_ids) if prompt_ids is not None else []


class HarnessError(ReflexschedError):
    """A scaling harness (best-of-N / beam search) could not produce a candidate."""
