"""Multi-span EM/F1 in the style of the DROP evaluation script.

Each answer is a list of span strings. A predicted list is aligned to the gold
list by a maximum-weight one-to-one assignment on per-pair bag-of-words F1;
the matched scores are summed and divided by the longer list's length.
"""
from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

_ARTICLES = frozenset({"a", "an", "the"})
_PUNCT = frozenset(string.punctuation)
_NUMBER = re.compile(r"\d+(?:[.,]\d+)*")


def _strip_punct(word: str) -> str:
    core = word.strip(string.punctuation)
    if _NUMBER.fullmatch(core):
        return core
    return "".join(ch for ch in word if ch not in _PUNCT)


def normalize_answer(s: str) -> list[str]:
    """Lowercase, drop punctuation (kept inside numbers) and articles, split."""
    words = []
    for word in s.lower().split():
        word = _strip_punct(word)
        if word and word not in _ARTICLES:
            words.append(word)
    return words


def _bag_f1(pred: set, gold: set) -> float:
    overlap = len(pred & gold)
    precision = overlap / len(pred) if pred else 1.0
    recall = overlap / len(gold) if gold else 1.0
    if precision == 0.0 and recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def align_scores(scores: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-weight one-to-one assignment of rows to columns."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return []
    rows, cols = linear_sum_assignment(scores, maximize=True)
    return list(zip(rows.tolist(), cols.tolist()))


def em_f1(pred: Sequence[str], gold: Sequence[str]) -> tuple[float, float]:
    if not gold:
        raise ValueError("gold answer must contain at least one span")
    pred_norm = [normalize_answer(p) for p in pred]
    gold_norm = [normalize_answer(g) for g in gold]
    em = float(Counter(map(tuple, pred_norm)) == Counter(map(tuple, gold_norm)))

    pred_bags = [set(p) for p in pred_norm]
    gold_bags = [set(g) for g in gold_norm]
    scores = np.array([[_bag_f1(p, g) for g in gold_bags] for p in pred_bags]).reshape(
        len(pred_bags), len(gold_bags))
    total = sum(scores[i, j] for i, j in align_scores(scores))
    return em, float(total / max(len(pred), len(gold)))


@dataclass
class Bucket:
    em: float = 0.0
    f1: float = 0.0
    n: int = 0
    avg_predicted_spans: float = 0.0


@dataclass
class MetricReport:
    em: float
    f1: float
    n: int
    missing: int = 0
    avg_predicted_spans: float = 0.0
    by_gold_span_count: dict[int, Bucket] = field(default_factory=dict)
    by_question_type: dict[str, Bucket] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["by_gold_span_count"] = {str(k): v for k, v in d["by_gold_span_count"].items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            f"examples: {self.n}  (missing predictions: {self.missing})",
            f"EM {100 * self.em:6.2f}   F1 {100 * self.f1:6.2f}   "
            f"avg predicted spans {self.avg_predicted_spans:.2f}",
            "",
            "by question type:",
        ]
        for name, b in self.by_question_type.items():
            lines.append(f"  {name:<12} n={b.n:<6} EM {100 * b.em:6.2f}   F1 {100 * b.f1:6.2f}")
        lines.append("by number of gold spans:")
        for k, b in self.by_gold_span_count.items():
            lines.append(f"  {k:<12} n={b.n:<6} EM {100 * b.em:6.2f}   F1 {100 * b.f1:6.2f}   "
                         f"avg predicted spans {b.avg_predicted_spans:.2f}")
        return "\n".join(lines) + "\n"


def _summarize(rows: list[tuple[float, float, int]]) -> Bucket:
    n = len(rows)
    if not n:
        return Bucket()
    em, f1, npred = (sum(col) for col in zip(*rows))
    return Bucket(em / n, f1 / n, n, npred / n)


def _gold_strings(example) -> list[str]:
    if isinstance(example, (list, tuple)):
        return list(example)
    return list(example.gold.strings)


def evaluate(examples, predictions: Mapping[str, Sequence[str]] | Iterable[tuple[str, Sequence[str]]]
             ) -> MetricReport:
    """Score predictions against gold answers.

    ``examples`` is a sequence of Example objects or a mapping from id to gold
    strings. ``predictions`` maps id to predicted strings; a sequence of
    (id, strings) pairs is also accepted and duplicate ids are rejected.
    Examples without a prediction score zero and are counted as missing.
    """
    if isinstance(examples, Mapping):
        gold = {k: _gold_strings(v) for k, v in examples.items()}
    else:
        gold = {ex.id: _gold_strings(ex) for ex in examples}

    if isinstance(predictions, Mapping):
        preds = dict(predictions)
    else:
        preds = {}
        for qid, answer in predictions:
            if qid in preds:
                raise ValueError(f"duplicate prediction id {qid!r}")
            preds[qid] = answer
    unknown = sorted(set(preds) - set(gold))
    if unknown:
        raise ValueError(f"predictions for unknown ids: {unknown[:5]}")

    rows: dict[str, tuple[float, float, int]] = {}
    missing = 0
    for qid, gold_strings in gold.items():
        if qid not in preds:
            missing += 1
            rows[qid] = (0.0, 0.0, 0)
            continue
        pred = list(preds[qid])
        em, f1 = em_f1(pred, gold_strings)
        rows[qid] = (em, f1, len(pred))

    by_count: dict[int, list] = {}
    by_type: dict[str, list] = {"single_span": [], "multi_span": []}
    for qid, row in rows.items():
        k = len(gold[qid])
        by_count.setdefault(k, []).append(row)
        by_type["multi_span" if k > 1 else "single_span"].append(row)

    overall = _summarize(list(rows.values()))
    return MetricReport(
        em=overall.em,
        f1=overall.f1,
        n=overall.n,
        missing=missing,
        avg_predicted_spans=overall.avg_predicted_spans,
        by_gold_span_count={k: _summarize(by_count[k]) for k in sorted(by_count)},
        by_question_type={k: _summarize(v) for k, v in by_type.items()},
    )
