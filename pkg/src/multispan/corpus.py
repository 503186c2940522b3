"""Reading-comprehension data: tokens, examples, DROP/Quoref loaders, truncation.

Token ranges are inclusive on both ends and index into ``Example.sequence``,
the question tokens followed by the passage tokens.
"""
from __future__ import annotations

import json
import logging
import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

from .evaluation import normalize_answer
from .tagging import surface_text

logger = logging.getLogger(__name__)

DEFAULT_MAX_LENGTH = 512
FORMATS = ("drop", "quoref", "synth")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int  # exclusive


@dataclass(frozen=True)
class GoldAnswer:
    strings: tuple[str, ...]
    explicit_spans: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        strings = tuple(dict.fromkeys(s for s in self.strings if s))
        if not strings:
            raise ValueError("gold answer needs at least one nonempty string")
        object.__setattr__(self, "strings", strings)
        if self.explicit_spans is not None:
            object.__setattr__(self, "explicit_spans",
                               tuple((int(s), int(e)) for s, e in self.explicit_spans))


@dataclass(frozen=True)
class Example:
    id: str
    question_tokens: tuple[Token, ...]
    passage_tokens: tuple[Token, ...]
    gold: GoldAnswer
    question: str = field(default="", compare=False)
    passage: str = field(default="", compare=False)

    @cached_property
    def sequence(self) -> tuple[Token, ...]:
        return self.question_tokens + self.passage_tokens

    def __len__(self) -> int:
        return len(self.question_tokens) + len(self.passage_tokens)


def _is_punct(ch: str) -> bool:
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[Token]:
    """Split on whitespace, detaching leading/trailing punctuation characters.

    >>> [t.text for t in tokenize("Monte Arruit.")]
    ['Monte', 'Arruit', '.']
    """
    tokens = []
    for match in re.finditer(r"\S+", text):
        chunk, base = match.group(), match.start()
        lo, hi = 0, len(chunk)
        while lo < hi and _is_punct(chunk[lo]):
            lo += 1
        while hi > lo and _is_punct(chunk[hi - 1]):
            hi -= 1
        for i in range(lo):
            tokens.append(Token(chunk[i], base + i, base + i + 1))
        if lo < hi:
            tokens.append(Token(chunk[lo:hi], base + lo, base + hi))
        for i in range(hi, len(chunk)):
            tokens.append(Token(chunk[i], base + i, base + i + 1))
    return tokens


def find_occurrences(sequence: Sequence[Token], answer: str) -> list[tuple[int, int]]:
    """Token ranges whose normalized text equals the normalized answer.

    Tokens that normalize to nothing (punctuation, articles) are skipped while
    matching, and never start or end a returned range.
    """
    target = normalize_answer(answer)
    if not target:
        return []
    words: list[str] = []
    owners: list[int] = []
    for i, tok in enumerate(sequence):
        for w in normalize_answer(tok.text):
            words.append(w)
            owners.append(i)
    k = len(target)
    found = []
    for j in range(len(words) - k + 1):
        if words[j:j + k] == target:
            found.append((owners[j], owners[j + k - 1]))
    return sorted(set(found))


def gold_occurrences(example: Example) -> dict[str, list[tuple[int, int]]]:
    """Where each gold string can be tagged in the example's sequence.

    Explicit spans (Quoref) take priority for the strings they cover; other
    strings fall back to text matching over the whole sequence.
    """
    m = len(example)
    seq = example.sequence
    explicit: dict[tuple[str, ...], list[tuple[int, int]]] = {}
    for s, e in example.gold.explicit_spans or ():
        if e < m:
            key = tuple(normalize_answer(surface_text(seq, s, e)))
            explicit.setdefault(key, []).append((s, e))
    out = {}
    for answer in example.gold.strings:
        ranges = explicit.get(tuple(normalize_answer(answer)))
        out[answer] = sorted(set(ranges)) if ranges else find_occurrences(seq, answer)
    return out


def truncate(example: Example, max_length: int) -> Example | None:
    """Drop passage tokens from the end so the sequence fits ``max_length``.

    Returns None when the question alone does not leave room for a passage
    token. Explicit spans that no longer fit are removed.
    """
    nq = len(example.question_tokens)
    if max_length <= nq:
        return None
    if len(example) <= max_length:
        return example
    passage = example.passage_tokens[:max_length - nq]
    gold = example.gold
    if gold.explicit_spans is not None:
        gold = replace(gold, explicit_spans=tuple(
            (s, e) for s, e in gold.explicit_spans if e < max_length))
    return replace(example, passage_tokens=passage, gold=gold)


def truncate_and_filter(examples: Sequence[Example], max_length: int = DEFAULT_MAX_LENGTH
                        ) -> tuple[list[Example], dict[str, str]]:
    """Truncate every example and drop those whose answer no longer occurs.

    Returns the kept examples and a mapping from discarded id to reason.
    """
    if max_length < 1:
        raise ValueError("max_length must be positive")
    kept, discarded = [], {}
    for ex in examples:
        cut = truncate(ex, max_length)
        if cut is None:
            discarded[ex.id] = f"question has {len(ex.question_tokens)} tokens, max_length {max_length}"
            continue
        absent = [a for a, occ in gold_occurrences(cut).items() if not occ]
        if absent:
            discarded[ex.id] = f"answer not found in input: {absent[0]!r}"
            continue
        kept.append(cut)
    if discarded:
        logger.info("discarded %d of %d examples", len(discarded), len(examples))
    return kept, discarded


class LoadResult(NamedTuple):
    examples: list[Example]
    skipped: Counter


def _get(obj, key, where: str, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise DatasetError(f"{where}: missing key {key!r}")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise DatasetError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def make_example(qid: str, question: str, passage: str, strings: Sequence[str],
                 explicit_spans=None) -> Example:
    return Example(
        id=qid,
        question_tokens=tuple(tokenize(question)),
        passage_tokens=tuple(tokenize(passage)),
        gold=GoldAnswer(tuple(strings), explicit_spans),
        question=question,
        passage=passage,
    )


def _load_drop(data, where: str, skipped: Counter) -> list[Example]:
    if not isinstance(data, dict):
        raise DatasetError(f"{where}: expected an object keyed by passage id")
    examples = []
    for pid, entry in data.items():
        loc = f"{where}[{pid!r}]"
        passage = _get(entry, "passage", loc, str)
        for k, qa in enumerate(_get(entry, "qa_pairs", loc, list)):
            qloc = f"{loc}.qa_pairs[{k}]"
            qid = str(_get(qa, "query_id", qloc))
            question = _get(qa, "question", qloc, str)
            answer = _get(qa, "answer", qloc, dict)
            spans = [s for s in answer.get("spans") or [] if isinstance(s, str) and s.strip()]
            number = str(answer.get("number") or "").strip()
            date = answer.get("date") or {}
            if spans and not number:
                examples.append(make_example(qid, question, passage, spans))
            elif number:
                skipped["number"] += 1
            elif any(str(v).strip() for v in date.values()):
                skipped["date"] += 1
            else:
                skipped["unrecognized"] += 1
    return examples


def _char_range_to_tokens(tokens: Sequence[Token], start: int, end: int) -> tuple[int, int] | None:
    covered = [i for i, t in enumerate(tokens) if t.char_start < end and start < t.char_end]
    if not covered:
        return None
    return covered[0], covered[-1]


def _load_quoref(data, where: str, skipped: Counter) -> list[Example]:
    articles = _get(data, "data", where, list)
    examples = []
    for a, article in enumerate(articles):
        aloc = f"{where}.data[{a}]"
        for p, para in enumerate(_get(article, "paragraphs", aloc, list)):
            ploc = f"{aloc}.paragraphs[{p}]"
            context = _get(para, "context", ploc, str)
            passage_tokens = tokenize(context)
            for k, qa in enumerate(_get(para, "qas", ploc, list)):
                qloc = f"{ploc}.qas[{k}]"
                qid = str(_get(qa, "id", qloc))
                question = _get(qa, "question", qloc, str)
                answers = _get(qa, "answers", qloc, list)
                strings = [ans.get("text", "") for ans in answers if isinstance(ans, dict)]
                strings = [s for s in strings if isinstance(s, str) and s.strip()]
                if not strings:
                    skipped["no_answer"] += 1
                    continue
                nq = len(tokenize(question))
                spans = []
                for ans in answers:
                    text, start = ans.get("text"), ans.get("answer_start")
                    if not isinstance(text, str) or not isinstance(start, int):
                        continue
                    rng = _char_range_to_tokens(passage_tokens, start, start + len(text))
                    if rng is None or normalize_answer(surface_text(passage_tokens, *rng)) \
                            != normalize_answer(text):
                        skipped["explicit_span_dropped"] += 1
                        continue
                    spans.append((rng[0] + nq, rng[1] + nq))
                examples.append(make_example(qid, question, context, strings,
                                             tuple(sorted(set(spans))) or None))
    return examples


def load_dataset(path, fmt: str = "drop") -> LoadResult:
    """Load a DROP- or Quoref-format JSON file.

    Non-span answers are skipped and tallied in ``skipped`` by reason.
    ``fmt="synth"`` reads the DROP layout written by the synthetic generator.
    """
    path = Path(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    skipped: Counter = Counter()
    where = str(path)
    if fmt == "quoref":
        examples = _load_quoref(data, where, skipped)
    else:
        examples = _load_drop(data, where, skipped)
    if skipped:
        logger.info("%s: loaded %d examples, skipped %s", path, len(examples), dict(skipped))
    return LoadResult(examples, skipped)
