import itertools
import math

import numpy as np
import pytest
from scipy.special import log_softmax

from multispan.decode import (
    answer_strings, brute_force_decode, greedy_io_decode, predict, predict_answer, single_span_decode,
    viterbi_decode,
)
from multispan.heads import FeedForward, Model, SpanHeadParams
from multispan.tagging import BIO, IO, Tagging, is_valid_tagging


def logp(rows):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(rows, dtype=float))


def exhaustive_best(rows, scheme):
    """Score every valid tagging as a plain product of probabilities."""
    best, best_score = None, -1.0
    for tags in itertools.product(range(scheme.size), repeat=len(rows)):
        if not is_valid_tagging(Tagging(tags, scheme)):
            continue
        score = math.prod(rows[i][t] for i, t in enumerate(tags))
        if score > best_score:
            best, best_score = tags, score
    return best, best_score


def test_viterbi_beats_invalid_argmax():
    rows = [(0.6, 0.1, 0.3), (0.05, 0.05, 0.9)]
    best, score = exhaustive_best(rows, BIO)
    assert best == (1, 2) and score == pytest.approx(0.09)
    assert str(viterbi_decode(logp(rows))) == "B I"


def test_viterbi_concentrated():
    target = Tagging.from_string("B I O B O", "bio")
    rows = np.eye(3)[list(target.tags)]
    assert viterbi_decode(logp(rows)) == target


def test_viterbi_uniform_tie_break():
    assert str(viterbi_decode(np.full((3, 3), -math.log(3)))) == "O O O"


def test_viterbi_empty_and_scheme_guard():
    assert viterbi_decode(np.zeros((0, 3))).tags == ()
    with pytest.raises(ValueError):
        viterbi_decode(np.zeros((2, 2)), IO)


def test_greedy_io():
    assert str(greedy_io_decode(logp([(0.4, 0.6), (0.7, 0.3)]))) == "I O"
    assert str(greedy_io_decode(logp([(0.5, 0.5)] * 4))) == "O O O O"
    with pytest.raises(ValueError):
        greedy_io_decode(np.zeros((2, 3)), BIO)


def test_greedy_io_matches_exhaustive():
    rng = np.random.default_rng(0)
    rows = rng.dirichlet([1, 1], size=5)
    best, _ = exhaustive_best(rows, IO)
    assert greedy_io_decode(np.log(rows)).tags == best


def exhaustive_pair(p_start, p_end):
    best, best_score = None, -1.0
    for s in range(len(p_start)):
        for e in range(s, len(p_end)):
            if p_start[s] * p_end[e] > best_score:
                best, best_score = (s, e), p_start[s] * p_end[e]
    return best, best_score


def test_single_span_decode_examples():
    ps, pe = (0.6, 0.3, 0.1), (0.2, 0.1, 0.7)
    assert exhaustive_pair(ps, pe) == ((0, 2), pytest.approx(0.42))
    assert single_span_decode(np.log(ps), np.log(pe)) == (0, 2)
    assert single_span_decode([0.0], [0.0]) == (0, 0)


def test_single_span_decode_start_after_end_peak():
    # start sharply peaked at 2, end peaked at 1: the best legal pair starts at 2
    ps = (0.01, 0.01, 0.97, 0.01)
    pe = (0.1, 0.7, 0.1, 0.1)
    best, _ = exhaustive_pair(ps, pe)
    assert best == (2, 2)
    assert single_span_decode(np.log(ps), np.log(pe)) == (2, 2)


def test_single_span_tie_break():
    u = np.zeros(4)
    assert single_span_decode(u, u) == (0, 0)
    # (0,1), (0,3), (1,1) and (1,3) tie; smallest start, then smallest end
    assert single_span_decode(np.log([0.5, 0.5, 1e-9, 1e-9]), np.log([1e-9, 0.5, 1e-9, 0.5])) == (0, 1)


def test_single_span_matches_scan_random():
    rng = np.random.default_rng(1)
    for _ in range(300):
        m = int(rng.integers(1, 30))
        ls, le = log_softmax(rng.normal(size=m)), log_softmax(rng.normal(size=m))
        pairs = [(s, e) for s in range(m) for e in range(s, m)]
        expected = max(pairs, key=lambda p: (ls[p[0]] + le[p[1]], -p[0], -p[1]))
        assert single_span_decode(ls, le) == expected


def test_brute_force_guard():
    with pytest.raises(ValueError):
        brute_force_decode(np.zeros((17, 3)), BIO)


def test_decoders_match_brute_force_random():
    rng = np.random.default_rng(2)
    for _ in range(200):
        m = int(rng.integers(1, 7))
        bio = log_softmax(rng.normal(size=(m, 3)), axis=1)
        io = log_softmax(rng.normal(size=(m, 2)), axis=1)
        assert viterbi_decode(bio) == brute_force_decode(bio, BIO)
        assert greedy_io_decode(io) == brute_force_decode(io, IO)


def test_brute_force_tie_break_matches_viterbi_on_ties():
    rng = np.random.default_rng(3)
    for _ in range(200):
        m = int(rng.integers(1, 6))
        # coarse values make exact ties common
        bio = np.log(rng.integers(1, 3, size=(m, 3)) / 4.0)
        assert viterbi_decode(bio) == brute_force_decode(bio, BIO)
        io = np.log(rng.integers(1, 3, size=(m, 2)) / 4.0)
        assert greedy_io_decode(io) == brute_force_decode(io, IO)


def test_row_shift_invariance():
    rng = np.random.default_rng(4)
    for _ in range(100):
        m = int(rng.integers(1, 8))
        logits = rng.normal(size=(m, 3))
        shifted = logits.copy()
        shifted[rng.integers(m)] += rng.normal() * 10
        assert viterbi_decode(log_softmax(logits, axis=1)) == viterbi_decode(log_softmax(shifted, axis=1))
        io, io_shifted = logits[:, :2], shifted[:, :2]
        assert greedy_io_decode(log_softmax(io, axis=1)) == greedy_io_decode(log_softmax(io_shifted, axis=1))


# -- predict_answer ------------------------------------------------------------

def _forced_model(tags, prefer):
    """A model whose tag head reproduces ``tags`` from one-hot features."""
    d = 8
    w2 = np.zeros((d, 3))
    w2[:3, :3] = 50 * np.eye(3)
    tase = FeedForward(np.eye(d), np.zeros(d), w2, np.zeros(3))
    selector = FeedForward(np.zeros((d, d)), np.zeros(d), np.zeros((d, 2)),
                           np.array([5.0, 0.0]) if prefer == "tase" else np.array([0.0, 5.0]))
    sse = SpanHeadParams(FeedForward.zeros(d, d, 1), FeedForward.zeros(d, d, 1))
    model = Model(BIO, d, d, ("tase", "sse"), selector, tase, sse)
    features = np.eye(d)[list(tags)]
    return model, features


def test_predict_answer_tag_head(xyz):
    model, feats = _forced_model((1, 0, 1, 0, 1), "tase")
    spans = predict_answer(xyz, model, feats)
    assert [tuple(s) for s in spans] == [(0, 0, "X"), (2, 2, "Z"), (4, 4, "Z")]
    assert answer_strings(spans) == ["X", "Z"]


def test_predict_answer_span_head(xyz):
    model, feats = _forced_model((1, 0, 1, 0, 1), "sse")
    assert len(predict_answer(xyz, model, feats)) == 1


def test_predict_answer_all_o_is_empty(xyz):
    model, feats = _forced_model((0, 0, 0, 0, 0), "tase")
    assert len(predict_answer(xyz, model, feats)) == 0


def test_predict_sorted_by_id():
    from multispan.corpus import make_example
    exs = [make_example(i, "q", "a b", ["a"]) for i in ("b", "a", "c")]
    model = Model.init(IO, 8, 8, ("tase",), seed=0)
    assert list(predict(exs, model)) == ["a", "b", "c"]
