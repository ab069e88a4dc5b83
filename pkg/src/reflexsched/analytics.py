"""Post-hoc analysis over decode traces.

Covers reflection statistics, the per-segment distribution of reflection
tokens, an uncertainty distance between a reasoning step and the final
answer, difficulty clustering of (reflection count, length) points,
trace truncation for self-correction protocols, and rule-based answer
extraction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .engine import DecodeTrace
from .errors import ParameterError
from .sampling import softmax

DIFFICULTY_NAMES = ("easy", "medium", "hard")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SegmentHistogram:
    """Share of all reflection tokens falling in each fixed-width bin."""

    bin_width: int
    proportions: tuple[float, ...]


def segment_distribution(trace: DecodeTrace, bin_width: int = 1000) -> SegmentHistogram:
    """Bin reflection positions into [b*w, (b+1)*w) and normalize by total count.

    The number of bins is ceil(length / bin_width); a trace without
    reflections yields an empty histogram.
    """
    if bin_width < 1:
        raise ParameterError(f"bin_width must be >= 1, got {bin_width}")
    positions = [s.t for s in trace.steps if s.is_reflection]
    if not positions:
        return SegmentHistogram(bin_width=bin_width, proportions=())
    n_bins = math.ceil(trace.length_tokens / bin_width)
    counts = [0] * n_bins
    for pos in positions:
        counts[pos // bin_width] += 1
    total = len(positions)
    return SegmentHistogram(
        bin_width=bin_width, proportions=tuple(c / total for c in counts)
    )


def thought_distance(p: float, answer_len: int, allow_infinite: bool = False) -> float:
    """Uncertainty distance p**(-1/answer_len) between a step and the answer.

    Equals 1 exactly when the answer is certain (p=1) and grows as the
    conditional probability shrinks. ``p <= 0`` is a domain error unless
    ``allow_infinite`` maps it to +inf.
    """
    if answer_len < 1:
        raise ParameterError(f"answer_len must be >= 1, got {answer_len}")
    if p <= 0.0:
        if allow_infinite:
            return float("inf")
        raise ParameterError(f"probability must be in (0, 1], got {p}")
    if p > 1.0:
        raise ParameterError(f"probability must be in (0, 1], got {p}")
    return p ** (-1.0 / answer_len)


def thought_distance_from_logp(logp: float, answer_len: int) -> float:
    """Same distance computed from log(p), immune to probability underflow."""
    if answer_len < 1:
        raise ParameterError(f"answer_len must be >= 1, got {answer_len}")
    if logp > 0.0:
        raise ParameterError(f"log-probability must be <= 0, got {logp}")
    return math.exp(-logp / answer_len)


def answer_log_probability(scorer, context_ids: list[int], answer_ids: list[int]) -> float:
    """log p(answer | context) by teacher-forcing the answer token by token."""
    if not answer_ids:
        raise ParameterError("answer must be nonempty")
    context = list(context_ids)
    total = 0.0
    for token in answer_ids:
        probs = softmax(scorer.query(context))
        total += float(np.log(probs[token]))
        context.append(token)
    return total


@dataclass(frozen=True)
class ThoughtStep:
    """A token span between consecutive reflection tokens."""

    start: int
    end: int


def thought_steps(trace: DecodeTrace) -> list[ThoughtStep]:
    """Split the generation at reflection-token positions.

    Each reflection token starts a new step; tokens before the first
    reflection form a leading step. An empty trace has no steps.
    """
    if not trace.steps:
        return []
    boundaries = [s.t for s in trace.steps if s.is_reflection]
    starts = ([0] if (not boundaries or boundaries[0] > 0) else []) + boundaries
    spans = []
    for i, start in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else trace.length_tokens
        spans.append(ThoughtStep(start=start, end=end))
    return spans


@dataclass(frozen=True)
class ClusterResult:
    assignments: tuple[int, ...]
    centroids: tuple[tuple[float, float], ...]
    names: tuple[str, ...]
    inertia: float


def _zscore(points: np.ndarray) -> np.ndarray:
    mean = points.mean(axis=0)
    std = points.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (points - mean) / std


def kmeans_fit(points: np.ndarray, k: int, seed: int, max_iter: int = 100):
    """k-means++ seeding followed by Lloyd iterations to assignment fixpoint.

    Operates on the points as given (callers normalize first). Nearest-
    centroid ties break toward the lower centroid index; an emptied cluster
    keeps its previous centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n < k:
        raise ParameterError(f"need at least k={k} points, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed & _MASK64))

    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[int(rng.integers(n))]
    for j in range(1, k):
        d2 = np.min(
            ((points[:, None, :] - centroids[None, :j, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            centroids[j] = points[int(rng.integers(n))]
            continue
        u = rng.random()
        centroids[j] = points[int(np.searchsorted(np.cumsum(d2 / total), u, side="right").clip(0, n - 1))]

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignments = np.argmin(d2, axis=1)  # argmin: ties -> lower index
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for j in range(k):
            members = points[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    inertia = float(d2[np.arange(n), assignments].sum())
    return assignments, centroids, inertia


def difficulty_cluster(
    points: list[tuple[float, float]], k: int = 3, seed: int = 0
) -> ClusterResult:
    """Cluster (reflection_count, generation_length) points into difficulty groups.

    Features are z-score normalized before clustering (counts and lengths
    live on incommensurate scales). The result is invariant to input order:
    seeding and Lloyd run on a lexicographically sorted copy, then every
    original point is assigned to its nearest final centroid. Clusters are
    named easy/medium/hard by ascending centroid length when k=3.
    """
    if len(points) < k:
        raise ParameterError(f"need at least k={k} points, got {len(points)}")
    raw = np.asarray(points, dtype=np.float64)
    order = np.lexsort((raw[:, 1], raw[:, 0]))
    normalized = _zscore(raw)
    _, centroids, _ = kmeans_fit(normalized[order], k, seed)

    d2 = ((normalized[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assignments = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(raw)), assignments].sum())

    mean = raw.mean(axis=0)
    std = np.where(raw.std(axis=0) > 0, raw.std(axis=0), 1.0)
    centroids_raw = centroids * std + mean

    length_order = np.argsort(centroids_raw[:, 1], kind="stable")
    rank_of = np.empty(k, dtype=np.int64)
    rank_of[length_order] = np.arange(k)
    if k == 3:
        names = tuple(DIFFICULTY_NAMES[rank_of[j]] for j in range(k))
    else:
        names = tuple(f"cluster_{rank_of[j]}" for j in range(k))
    return ClusterResult(
        assignments=tuple(int(a) for a in assignments),
        centroids=tuple((float(c[0]), float(c[1])) for c in centroids_raw),
        names=names,
        inertia=inertia,
    )


def truncate_trace(trace: DecodeTrace, fraction: float) -> list[int]:
    """First floor(fraction * length) generated token ids.

    The prefix is meant to be appended to the original question as an
    injected reasoning prefix for a fresh decode.
    """
    if not trace.steps:
        raise ParameterError("cannot truncate an empty trace")
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    keep = math.floor(fraction * trace.length_tokens)
    return [s.token_id for s in trace.steps[:keep]]


_BOXED_RE = re.compile(r"\\boxed\s*\{")


def extract_boxed_answer(text: str) -> str | None:
    """Content of the last balanced ``\\boxed{...}`` group, if any.

    Falls back to the trailing text after the last ``Answer:`` marker.
    Nested braces are balanced; whitespace around the answer is trimmed.
    """
    last = None
    for match in _BOXED_RE.finditer(text):
        depth = 1
        pos = match.end()
        while pos < len(text) and depth > 0:
            if text[pos] == "{":
                depth += 1
            elif text[pos] == "}":
                depth -= 1
            pos += 1
        if depth == 0:
            last = text[match.end() : pos - 1].strip()
    if last is not None:
        return last
    marker = text.rfind("Answer:")
    if marker != -1:
        tail = text[marker + len("Answer:") :].strip()
        return tail if tail else None
    return None


def reflection_stats(trace: DecodeTrace) -> dict:
    """Reflection count, positions, and generation length for one trace."""
    positions = [s.t for s in trace.steps if s.is_reflection]
    return {
        "count": len(positions),
        "positions": positions,
        "length": trace.length_tokens,
    }
