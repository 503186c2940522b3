"""Test-time decoding of taggings and spans.

Ties are broken toward the lower tag index (O first) and the leftmost
position everywhere, so decoders and the brute-force oracle agree exactly.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .corpus import Example
from .evaluation import normalize_answer
from .features import featurize
from .heads import Model, head_posterior, span_distribution, tag_distribution
from .tagging import BIO, IO, Span, SpanSet, Tagging, TagScheme, is_valid_tagging, surface_text, tagging_to_spans

BRUTE_FORCE_MAX_LENGTH = 16

# allowed predecessor tags for each BIO tag; the sequence start behaves as O
_BIO_PREV = {0: (0, 1, 2), 1: (0, 1, 2), 2: (1, 2)}


def viterbi_decode(log_p: np.ndarray, scheme=BIO) -> Tagging:
    """Most probable BIO tagging with no I directly after an O (or at the start)."""
    scheme = TagScheme.parse(scheme)
    if scheme is not BIO:
        raise ValueError("viterbi_decode expects the BIO scheme")
    log_p = np.asarray(log_p, dtype=float)
    m = log_p.shape[0]
    if m == 0:
        return Tagging((), BIO)
    n = scheme.size
    delta = [float(log_p[0, s]) if s != 2 else -math.inf for s in range(n)]
    back = np.zeros((m, n), dtype=np.intp)
    for t in range(1, m):
        new = []
        for s in range(n):
            best_prev = None
            for p in _BIO_PREV[s]:
                if best_prev is None or delta[p] > delta[best_prev]:
                    best_prev = p
            back[t, s] = best_prev
            new.append(delta[best_prev] + float(log_p[t, s]))
        delta = new
    last = 0
    for s in range(1, n):
        if delta[s] > delta[last]:
            last = s
    tags = [last]
    for t in range(m - 1, 0, -1):
        tags.append(int(back[t, tags[-1]]))
    return Tagging(tuple(reversed(tags)), BIO)


def greedy_io_decode(log_p: np.ndarray, scheme=IO) -> Tagging:
    """Per-token argmax; ties go to O."""
    scheme = TagScheme.parse(scheme)
    if scheme is not IO:
        raise ValueError("greedy_io_decode expects the IO scheme")
    log_p = np.asarray(log_p, dtype=float).reshape(-1, scheme.size)
    return Tagging(tuple(np.argmax(log_p, axis=1).tolist()), IO)


def decode_tags(log_p: np.ndarray, scheme) -> Tagging:
    scheme = TagScheme.parse(scheme)
    return viterbi_decode(log_p, scheme) if scheme is BIO else greedy_io_decode(log_p, scheme)


def single_span_decode(log_p_start: Sequence[float], log_p_end: Sequence[float]) -> tuple[int, int]:
    """argmax over s <= e of p_start[s] * p_end[e] in one pass; ties -> smallest s, then e."""
    start = np.asarray(log_p_start, dtype=float)
    end = np.asarray(log_p_end, dtype=float)
    if start.shape != end.shape or start.ndim != 1 or start.size == 0:
        raise ValueError("start/end vectors must be nonempty and the same length")
    best_s = 0
    best = (-math.inf, 0, 0)
    for e in range(start.size):
        if start[e] > start[best_s]:
            best_s = e
        score = start[best_s] + end[e]
        if e == 0 or score > best[0] or (score == best[0] and best_s < best[1]):
            best = (score, best_s, e)
    return best[1], best[2]


def brute_force_decode(log_p: np.ndarray, scheme) -> Tagging:
    """Exhaustive argmax over every valid tagging (test oracle, m <= 16)."""
    scheme = TagScheme.parse(scheme)
    log_p = np.asarray(log_p, dtype=float)
    m = log_p.shape[0]
    if m > BRUTE_FORCE_MAX_LENGTH:
        raise ValueError(f"brute force decoding refused for m={m} > {BRUTE_FORCE_MAX_LENGTH}")
    rows = log_p.tolist()
    labels = range(scheme.size)
    first = [s for s in labels if is_valid_tagging(Tagging((s,), scheme))]
    # a transition t -> s is legal if it is legal after some valid prefix ending in t
    allowed_after = {t: [s for s in labels if any(
        is_valid_tagging(Tagging((f, t, s), scheme)) for f in first)] for t in labels}
    best_tags, best_score = None, -math.inf

    # every valid tagging is visited; invalid prefixes are never extended
    def visit(prefix, score):
        nonlocal best_tags, best_score
        i = len(prefix)
        if i == m:
            tags = tuple(prefix)
            # the decoders pick the lowest tag from the last position backwards
            if (best_tags is None or score > best_score
                    or (score == best_score and tags[::-1] < best_tags[::-1])):
                best_tags, best_score = tags, score
            return
        for t in (first if i == 0 else allowed_after[prefix[-1]]):
            prefix.append(t)
            visit(prefix, score + rows[i][t])
            prefix.pop()

    visit([], 0.0)
    if m == 0:
        best_tags = ()
    return Tagging(best_tags, scheme)


def predict_answer(example: Example, model: Model, features: np.ndarray | None = None) -> SpanSet:
    """Decode with whichever head the selector prefers.

    An all-O tagging yields an empty SpanSet.
    """
    if features is None:
        features = featurize(example, model.feature_dim, model.feature_seed)
    seq = example.sequence
    if len(seq) == 0:
        return SpanSet()
    head = model.heads[int(np.argmax(head_posterior(features, model.selector)))]
    if head == "tase":
        tagging = decode_tags(tag_distribution(features, model.tase), model.scheme)
        return tagging_to_spans(tagging, seq)
    s, e = single_span_decode(*span_distribution(features, model.sse))
    return SpanSet((Span(s, e, surface_text(seq, s, e)),))


def answer_strings(spans: SpanSet) -> list[str]:
    """Span texts in order, keeping one string per normalized form."""
    seen, out = set(), []
    for text in spans.strings():
        key = tuple(normalize_answer(text))
        if key not in seen:
            seen.add(key)
            out.append(text)
    return out


def predict(examples: Sequence[Example], model: Model) -> dict[str, list[str]]:
    """Map each example id to its predicted answer strings, sorted by id."""
    out = {ex.id: answer_strings(predict_answer(ex, model)) for ex in examples}
    return dict(sorted(out.items()))
