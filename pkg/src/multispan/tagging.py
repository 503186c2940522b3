"""Tag schemes, span <-> tagging conversion and enumeration of gold taggings.

Tag indices are fixed so that model files and fixtures stay stable:

    BIO: O=0, B=1, I=2
    IO:  O=0, I=1
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

logger = logging.getLogger(__name__)

O = 0


class TagScheme(enum.Enum):
    BIO = "bio"
    IO = "io"

    @property
    def tag_names(self) -> tuple[str, ...]:
        return ("O", "B", "I") if self is TagScheme.BIO else ("O", "I")

    @property
    def size(self) -> int:
        return len(self.tag_names)

    @property
    def B(self) -> int:
        if self is not TagScheme.BIO:
            raise AttributeError("IO scheme has no B tag")
        return 1

    @property
    def I(self) -> int:  # noqa: E743
        return 2 if self is TagScheme.BIO else 1

    def index(self, name: str) -> int:
        return self.tag_names.index(name)

    @classmethod
    def parse(cls, value: "str | TagScheme") -> "TagScheme":
        if isinstance(value, TagScheme):
            return value
        return cls(value.lower())


BIO = TagScheme.BIO
IO = TagScheme.IO


@dataclass(frozen=True)
class Tagging:
    tags: tuple[int, ...]
    scheme: TagScheme

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(int(t) for t in self.tags))
        for t in self.tags:
            if not 0 <= t < self.scheme.size:
                raise ValueError(f"tag index {t} out of range for {self.scheme.name}")

    def __len__(self) -> int:
        return len(self.tags)

    def __str__(self) -> str:
        names = self.scheme.tag_names
        return " ".join(names[t] for t in self.tags)

    @classmethod
    def from_string(cls, text: str, scheme: "TagScheme | str") -> "Tagging":
        scheme = TagScheme.parse(scheme)
        return cls(tuple(scheme.index(name) for name in text.split()), scheme)


class Span(NamedTuple):
    start: int
    end: int  # inclusive
    text: str = ""


@dataclass(frozen=True)
class SpanSet:
    """Answer spans sorted by start offset."""

    spans: tuple[Span, ...] = ()

    def __post_init__(self):
        spans = tuple(sorted((Span(*s) for s in self.spans), key=lambda s: (s.start, s.end)))
        for a, b in zip(spans, spans[1:]):
            if b.start <= a.end:
                raise ValueError(f"overlapping spans {a[:2]} and {b[:2]}")
        object.__setattr__(self, "spans", spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __iter__(self):
        return iter(self.spans)

    def ranges(self) -> list[tuple[int, int]]:
        return [(s.start, s.end) for s in self.spans]

    def strings(self) -> list[str]:
        return [s.text for s in self.spans]


def is_valid_tagging(tagging: Tagging) -> bool:
    """BIO forbids an I that follows an O; the sequence start counts as an O."""
    if tagging.scheme is IO:
        return True
    prev = O
    for t in tagging.tags:
        if t == 2 and prev == O:
            return False
        prev = t
    return True


def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def spans_to_tagging(spans: Iterable, m: int, scheme: "TagScheme | str") -> Tagging:
    scheme = TagScheme.parse(scheme)
    ranges = sorted({(int(s[0]), int(s[1])) for s in spans})
    for start, end in ranges:
        if not 0 <= start <= end < m:
            raise ValueError(f"span ({start}, {end}) outside [0, {m})")
    for a, b in zip(ranges, ranges[1:]):
        if _overlaps(a, b):
            raise ValueError(f"overlapping spans {a} and {b}")
    tags = [O] * m
    inside = scheme.I
    for start, end in ranges:
        for i in range(start, end + 1):
            tags[i] = inside
        if scheme is BIO:
            tags[start] = scheme.B
    return Tagging(tuple(tags), scheme)


def surface_text(sequence: Sequence, start: int, end: int) -> str:
    """Rebuild the text of tokens start..end from their character offsets.

    A single space is inserted wherever the source had a gap (or where the
    offsets restart, e.g. at the question/passage boundary).
    """
    parts = [sequence[start].text]
    for prev, tok in zip(sequence[start:end], sequence[start + 1:end + 1]):
        if tok.char_start != prev.char_end:
            parts.append(" ")
        parts.append(tok.text)
    return "".join(parts)


def tagging_to_spans(tagging: Tagging, sequence: Sequence | None = None) -> SpanSet:
    """Read spans off a tagging.

    BIO spans open at each B and run through the following I's; IO spans are
    the maximal runs of I. If ``sequence`` is given, span texts are filled in.
    """
    if not is_valid_tagging(tagging):
        raise ValueError(f"invalid {tagging.scheme.name} tagging: {tagging}")
    if sequence is not None and len(sequence) != len(tagging):
        raise ValueError(f"tagging length {len(tagging)} != sequence length {len(sequence)}")
    tags = tagging.tags
    inside = tagging.scheme.I
    opens = {1} if tagging.scheme is BIO else {inside}
    ranges = []
    i = 0
    while i < len(tags):
        if tags[i] in opens:
            j = i
            while j + 1 < len(tags) and tags[j + 1] == inside:
                j += 1
            ranges.append((i, j))
            i = j + 1
        else:
            i += 1
    if sequence is None:
        return SpanSet(tuple(Span(s, e) for s, e in ranges))
    return SpanSet(tuple(Span(s, e, surface_text(sequence, s, e)) for s, e in ranges))


def _fallback_ranges(occurrences: Sequence[Sequence[tuple[int, int]]]) -> list[tuple[int, int]]:
    # longest first, then leftmost; drop anything that overlaps a kept range
    pool = sorted({tuple(r) for occ in occurrences for r in occ},
                  key=lambda r: (-(r[1] - r[0]), r[0]))
    kept: list[tuple[int, int]] = []
    for r in pool:
        if any(_overlaps(r, k) for k in kept):
            logger.debug("fallback tagging drops range %s overlapping a longer one", r)
            continue
        kept.append(r)
    return sorted(kept)


def enumerate_correct_taggings(
    occurrences: Mapping[str, Sequence[tuple[int, int]]] | Sequence[Sequence[tuple[int, int]]],
    m: int,
    scheme: "TagScheme | str",
    cap: int = 1000,
) -> tuple[list[Tagging], bool]:
    """All taggings that mark every answer string at least once.

    ``occurrences`` holds, per answer string, the token ranges where it
    appears. A tagging is produced for every choice of a nonempty subset of
    occurrences per answer whose ranges do not overlap; the same range chosen
    for two answers counts once. If more than ``cap`` distinct taggings exist,
    a single tagging marking all occurrences is returned instead and the
    second element of the result is True.
    """
    scheme = TagScheme.parse(scheme)
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if isinstance(occurrences, Mapping):
        items = list(occurrences.items())
    else:
        items = [(str(k), v) for k, v in enumerate(occurrences)]
    groups: list[list[tuple[int, int]]] = []
    for answer, occ in items:
        ranges = sorted({(int(r[0]), int(r[1])) for r in occ})
        if not ranges:
            raise ValueError(f"answer {answer!r} has no occurrences")
        for s, e in ranges:
            if not 0 <= s <= e < m:
                raise ValueError(f"occurrence ({s}, {e}) of {answer!r} outside [0, {m})")
        groups.append(ranges)

    # each answer's occurrences become one decision list; answers sharing a
    # range would otherwise produce the same tagging from different choices
    seen: set[tuple[int, ...]] = set()
    found: list[Tagging] = []
    chosen: list[tuple[int, int]] = []
    overflow = False

    def emit():
        nonlocal overflow
        tagging = spans_to_tagging(chosen, m, scheme)
        if tagging.tags not in seen:
            seen.add(tagging.tags)
            found.append(tagging)
            if len(found) > cap:
                overflow = True

    def visit(g: int, k: int, picked: int):
        # g: answer group, k: next occurrence within group, picked: count chosen in group
        if overflow:
            return
        if g == len(groups):
            emit()
            return
        ranges = groups[g]
        if k == len(ranges):
            if picked:
                visit(g + 1, 0, 0)
            return
        r = ranges[k]
        if r in chosen:
            visit(g, k + 1, picked + 1)
            return
        if not any(_overlaps(r, c) for c in chosen):
            chosen.append(r)
            visit(g, k + 1, picked + 1)
            chosen.pop()
        visit(g, k + 1, picked)

    visit(0, 0, 0)
    if overflow:
        return [spans_to_tagging(_fallback_ranges(groups), m, scheme)], True
    return found, False
