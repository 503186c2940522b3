import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multispan.corpus import make_example
from multispan.evaluation import align_scores, em_f1, evaluate, normalize_answer


@pytest.mark.parametrize("text,expected", [
    ("The Spanish retook", ["spanish", "retook"]),
    ("45,000 Pakistanis", ["45,000", "pakistanis"]),
    ("", []),
    ("since 1909,", ["since", "1909"]),
    ("  An  apple, a day ", ["apple", "day"]),
    ("U.S. troops", ["us", "troops"]),
    ("3.5 million", ["3.5", "million"]),
])
def test_normalize_answer(text, expected):
    assert normalize_answer(text) == expected


def frac_f1(pred_words, gold_words):
    p, g = set(pred_words), set(gold_words)
    inter = len(p & g)
    prec = Fraction(inter, len(p)) if p else Fraction(1)
    rec = Fraction(inter, len(g)) if g else Fraction(1)
    return Fraction(0) if prec == 0 and rec == 0 else 2 * prec * rec / (prec + rec)


def oracle_f1(pred, gold):
    """Exact F1 by trying every injective pairing of the shorter list into the longer."""
    P = [normalize_answer(x) for x in pred]
    G = [normalize_answer(x) for x in gold]
    best = Fraction(0)
    if len(P) <= len(G):
        for perm in itertools.permutations(range(len(G)), len(P)):
            best = max(best, sum((frac_f1(P[i], G[j]) for i, j in enumerate(perm)), Fraction(0)))
    else:
        for perm in itertools.permutations(range(len(P)), len(G)):
            best = max(best, sum((frac_f1(P[i], G[j]) for j, i in enumerate(perm)), Fraction(0)))
    return best / max(len(P), len(G))


def test_failure_case_extra_span():
    pred = ["Filipinos", "Pakistanis", "Indonesians"]
    gold = ["Filipinos", "Pakistanis"]
    em, f1 = em_f1(pred, gold)
    assert oracle_f1(pred, gold) == Fraction(2, 3)
    assert em == 0.0 and f1 == pytest.approx(2 / 3, abs=1e-9)


def test_failure_case_split_span():
    pred = ["August 1921, Spain lost all the", "territories it had gained since 1909"]
    gold = ["Spain lost all the territories it had gained since 1909"]
    em, f1 = em_f1(pred, gold)
    expected = oracle_f1(pred, gold)
    assert expected == Fraction(2, 5)
    assert em == 0.0 and f1 == pytest.approx(float(expected), abs=1e-12) and f1 < 1


@pytest.mark.parametrize("answer", [["Obama"], ["X", "Z"], ["a b c", "d", "e f"]])
def test_identity(answer):
    assert em_f1(answer, list(reversed(answer))) == (1.0, 1.0)


def test_em_uses_multisets():
    assert em_f1(["Z", "Z"], ["Z"])[0] == 0.0
    assert em_f1(["the Z"], ["z"]) == (1.0, 1.0)


def test_empty_prediction_scores_zero():
    assert em_f1([], ["x"]) == (0.0, 0.0)


def test_empty_gold_rejected():
    with pytest.raises(ValueError):
        em_f1(["x"], [])


def brute_assignment_value(scores):
    r, c = scores.shape
    if r <= c:
        return max(sum(scores[i, p[i]] for i in range(r)) for p in itertools.permutations(range(c), r))
    return max(sum(scores[p[j], j] for j in range(c)) for p in itertools.permutations(range(r), c))


def test_assignment_matches_permutation_search():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        r, c = rng.integers(1, 5, size=2)
        scores = rng.random((r, c))
        pairs = align_scores(scores)
        assert len(pairs) == min(r, c)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
        assert sum(scores[i, j] for i, j in pairs) == pytest.approx(brute_assignment_value(scores), abs=1e-12)


words = st.lists(st.sampled_from(["a", "b", "c", "d", "the", "45,000", "e."]), min_size=1, max_size=4).map(" ".join)
answers = st.lists(words, min_size=1, max_size=4)


@given(answers, answers)
def test_f1_bounds_and_em_implies_f1(pred, gold):
    em, f1 = em_f1(pred, gold)
    assert 0.0 <= f1 <= 1.0 + 1e-12
    if em == 1.0:
        assert f1 == pytest.approx(1.0)
    assert f1 == pytest.approx(float(oracle_f1(pred, gold)), abs=1e-12)


@given(st.data())
def test_f1_symmetric_for_equal_lengths(data):
    n = data.draw(st.integers(1, 4))
    pred = data.draw(st.lists(words, min_size=n, max_size=n))
    gold = data.draw(st.lists(words, min_size=n, max_size=n))
    assert em_f1(pred, gold)[1] == pytest.approx(em_f1(gold, pred)[1], abs=1e-12)


spurious = st.lists(st.sampled_from(["zz", "yy", "1921"]), min_size=1, max_size=3).map(" ".join)


@given(answers, answers, spurious)
def test_spurious_span_never_helps(pred, gold, extra):
    # extra shares no word with any gold span
    assert em_f1(pred + [extra], gold)[1] <= em_f1(pred, gold)[1] + 1e-12


# -- evaluate ----------------------------------------------------------------

def _examples(golds):
    return [make_example(f"q{i}", "q", " ".join(g), g) for i, g in enumerate(golds)]


def test_evaluate_perfect():
    exs = _examples([["a"], ["b", "c"], ["d", "e"]])
    report = evaluate(exs, {ex.id: list(ex.gold.strings) for ex in exs})
    assert report.em == report.f1 == 1.0
    for bucket in list(report.by_gold_span_count.values()) + list(report.by_question_type.values()):
        assert bucket.em == bucket.f1 == 1.0


def test_evaluate_half_empty():
    exs = _examples([["a"], ["b"]])
    report = evaluate(exs, {"q0": ["a"], "q1": []})
    assert report.em == 0.5 and report.n == 2


def test_evaluate_buckets_and_weighted_average():
    exs = _examples([["a"], ["b", "c"], ["d", "e"]])
    report = evaluate(exs, {"q0": ["a"], "q1": ["b"], "q2": ["d", "e", "x"]})
    assert {k: b.n for k, b in report.by_gold_span_count.items()} == {1: 1, 2: 2}
    assert report.by_gold_span_count[2].avg_predicted_spans == 2.0
    for buckets in (report.by_gold_span_count, report.by_question_type):
        n = sum(b.n for b in buckets.values())
        assert sum(b.em * b.n for b in buckets.values()) / n == pytest.approx(report.em, abs=1e-9)
        assert sum(b.f1 * b.n for b in buckets.values()) / n == pytest.approx(report.f1, abs=1e-9)


def test_evaluate_missing_and_errors():
    exs = _examples([["a"], ["b"]])
    report = evaluate(exs, {"q0": ["a"]})
    assert report.missing == 1 and report.em == 0.5
    with pytest.raises(ValueError, match="duplicate"):
        evaluate(exs, [("q0", ["a"]), ("q0", ["b"])])
    with pytest.raises(ValueError, match="unknown"):
        evaluate(exs, {"zzz": ["a"]})


def test_report_serializations():
    exs = _examples([["a"], ["b", "c"]])
    report = evaluate(exs, {"q0": ["a"], "q1": ["b", "c"]})
    assert '"em": 1.0' in report.to_json()
    assert "multi_span" in report.to_text()
