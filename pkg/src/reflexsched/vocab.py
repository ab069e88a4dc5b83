"""Vocabulary tables and the reflection-token set.

A ``Vocab`` maps dense token ids to surface strings. A ``ReflectionSet``
holds the ids whose (normalized) surface matches a word list such as
["wait", "but", "alternatively"]; those ids receive schedule adjustments
during decoding. The set can optionally grow online: when the top-1 token
is already in the set and the top-1/top-2 logit gap is smaller than the
top-2/top-3 gap, the top-2 token is adopted as a new reflection token.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

logger = logging.getLogger(__name__)

DEFAULT_REFLECTION_WORDS = ["wait", "but", "alternatively"]

# Leading markers tokenizers use for a word boundary: plain whitespace,
# the GPT-2 byte-level space, and the sentencepiece underline.
_BOUNDARY_MARKERS = (" ", "\t", "Ġ", "▁")

_ESCAPES = {"\\n": "\n", "\\t": "\t", "\\\\": "\\"}


@dataclass(frozen=True)
class Vocab:
    """Dense id -> surface table. Ids run 0..size-1; surfaces may repeat."""

    surfaces: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.surfaces)

    def surface(self, token_id: int) -> str:
        return self.surfaces[token_id]

    def ids_for_surface(self, surface: str) -> list[int]:
        return [i for i, s in enumerate(self.surfaces) if s == surface]


def normalize_surface(surface: str) -> str:
    """Strip one leading word-boundary marker, then lowercase."""
    if surface and surface[0] in _BOUNDARY_MARKERS:
        surface = surface[1:]
    return surface.lower()


def _escape_surface(surface: str) -> str:
    out = []
    for ch in surface:
        if ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return "".join(out)


def _unescape_surface(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(text):
            raise ParameterError(f"dangling escape in vocab surface: {text!r}")
        nxt = text[i + 1]
        if nxt == "n":
            out.append("\n")
            i += 2
        elif nxt == "t":
            out.append("\t")
            i += 2
        elif nxt == "\\":
            out.append("\\")
            i += 2
        elif nxt == "x":
            if i + 3 >= len(text):
                raise ParameterError(f"truncated \\xHH escape in: {text!r}")
            out.append(chr(int(text[i + 2 : i + 4], 16)))
            i += 4
        else:
            raise ParameterError(f"unknown escape \\{nxt} in vocab surface: {text!r}")
    return "".join(out)


def load_vocab(path) -> Vocab:
    """Read a vocab file: one line per token, ``id<TAB>surface-escaped``."""
    entries: dict[int, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ParameterError(f"{path}:{lineno}: missing tab separator")
            id_text, surface_text = line.split("\t", 1)
            try:
                token_id = int(id_text)
            except ValueError as exc:
                raise ParameterError(f"{path}:{lineno}: bad token id {id_text!r}") from exc
            if token_id in entries:
                raise ParameterError(f"{path}:{lineno}: duplicate token id {token_id}")
            entries[token_id] = _unescape_surface(surface_text)
    if not entries:
        raise ParameterError(f"{path}: empty vocab file")
    size = len(entries)
    if set(entries) != set(range(size)):
        raise ParameterError(f"{path}: token ids are not dense 0..{size - 1}")
    return Vocab(tuple(entries[i] for i in range(size)))


def save_vocab(vocab: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token_id, surface in enumerate(vocab.surfaces):
            fh.write(f"{token_id}\t{_escape_surface(surface)}\n")


@dataclass
class ReflectionSet:
    """Token ids treated as reflection tokens during a decode session.

    ``added_ids`` records ids adopted at runtime by the dynamic rule, in
    adoption order; they are always disjoint from the initial ids. A set is
    owned by a single decode session; concurrent sessions must ``clone()``.
    """

    word_list: tuple[str, ...]
    token_ids: set[int]
    dynamic: bool = False
    added_ids: list[int] = field(default_factory=list)

    def clone(self) -> "ReflectionSet":
        return ReflectionSet(
            word_list=self.word_list,
            token_ids=set(self.token_ids),
            dynamic=self.dynamic,
            added_ids=list(self.added_ids),
        )


def build_reflection_set(
    vocab: Vocab, words: list[str] | None = None, dynamic: bool = False
) -> ReflectionSet:
    """Collect every vocab id whose normalized surface equals one of ``words``.

    Matching is whole-surface after normalization, so "Wait" and " wait"
    match "wait" but "butter" never matches "but". An empty match is only a
    warning: decoding still runs and the schedule becomes a no-op.
    """
    if words is None:
        words = DEFAULT_REFLECTION_WORDS
    if not words:
        raise ParameterError("reflection word list must be nonempty")
    wanted = []
    for word in words:
        lowered = word.lower()
        if lowered not in wanted:
            wanted.append(lowered)
    ids = {
        token_id
        for token_id, surface in enumerate(vocab.surfaces)
        if normalize_surface(surface) in wanted
    }
    if not ids:
        logger.warning(
            "no vocabulary surface matches reflection words %s; schedule will be a no-op",
            wanted,
        )
    return ReflectionSet(word_list=tuple(wanted), token_ids=ids, dynamic=dynamic)


def dynamic_expand_step(rset: ReflectionSet, logits: np.ndarray) -> ReflectionSet:
    """Maybe adopt the top-2 token as a reflection token for this session.

    Runs on the raw (pre-adjustment) logits, once per decode step, and adds
    at most one id: the top-2 token is adopted iff the top-1 token is
    already a reflection token and top1-top2 gap < top2-top3 gap. Ties in
    the ranking break toward the lower id.
    """
    if not rset.dynamic:
        raise ParameterError("dynamic_expand_step requires a dynamic ReflectionSet")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.shape[0] < 3:
        raise ParameterError("dynamic expansion needs a flat logits vector with |V| >= 3")
    order = np.argsort(-logits, kind="stable")
    i1, i2, i3 = int(order[0]), int(order[1]), int(order[2])
    if i1 not in rset.token_ids or i2 in rset.token_ids:
        return rset
    if (logits[i1] - logits[i2]) < (logits[i2] - logits[i3]):
        rset.token_ids.add(i2)
        rset.added_ids.append(i2)
    return rset
