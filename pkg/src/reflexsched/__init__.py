"""Reflection-token logit scheduling for reasoning-model decoding.

A decoding-control library: position-dependent logit adjustments for a
configurable set of reflection tokens (triangular waveform, constant
penalty, linear decay, keyed noise, forced insertion), a deterministic
decode engine over pluggable token scorers, best-of-N / beam-search
scaling with reward interfaces, and trace analytics.
"""

from .analytics import (
    ClusterResult,
    SegmentHistogram,
    difficulty_cluster,
    extract_boxed_answer,
    reflection_stats,
    segment_distribution,
    thought_distance,
    truncate_trace,
)
from .engine import (
    DecodeConfig,
    DecodeTrace,
    ForcedReflection,
    ReflectionConfig,
    StepRecord,
    adjust_logits,
    decode,
)
from .errors import (
    ConfigError,
    DecodeError,
    HarnessError,
    ParameterError,
    ReflexschedError,
    ScorerError,
)
from .sampling import GREEDY, SAMPLE, sample_token, softmax, top_p_support
from .scaling import (
    Candidate,
    LogprobReward,
    OracleReward,
    RewardScorer,
    beam_search,
    best_of_n,
    pass_at_n,
)
from .schedule import (
    Adjustment,
    ScheduleKind,
    ScheduleSpec,
    cyclic_adjustment,
    evaluate,
    linear_decay_adjustment,
    random_adjustment,
    tip_adjustment,
)
from .scorers import (
    NGramScorer,
    RemoteScorer,
    ScorerHandle,
    ScorerServer,
    ScriptedRule,
    ScriptedScorer,
    ngram_train,
)
from .vocab import (
    ReflectionSet,
    Vocab,
    build_reflection_set,
    dynamic_expand_step,
    load_vocab,
    normalize_surface,
    save_vocab,
)

__version__ = "0.1.0"
