import numpy as np
import pytest

from multispan.corpus import make_example
from multispan.features import fnv1a64, featurize, hash_bucket


def test_fnv_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_hash_bucket_range_and_seed():
    buckets = {hash_bucket(f"w{i}", 7, 3)[0] for i in range(200)}
    assert buckets <= set(range(7)) and len(buckets) == 7
    assert hash_bucket("apple", 1000, 0) != hash_bucket("apple", 1000, 1)


def test_deterministic():
    ex = make_example("e", "Who won?", "Obama won and Biden lost.", ["Obama"])
    assert np.array_equal(featurize(ex, 16, 5), featurize(ex, 16, 5))
    assert not np.array_equal(featurize(ex, 16, 5), featurize(ex, 16, 6))


def test_overlap_feature_on_both_rows():
    ex = make_example("e", "Who met Obama?", "Obama met Biden.", ["Biden"])
    f = featurize(ex, 8, 0)
    texts = [t.text for t in ex.sequence]
    q_obama, p_obama = 2, len(ex.question_tokens)
    assert texts[q_obama] == texts[p_obama] == "Obama"
    assert f[q_obama, 1] == 1.0 and f[p_obama, 1] == 1.0
    biden = texts.index("Biden")
    assert f[biden, 1] == 0.0 and f[biden, 2] == 1.0  # follows "met", which is in the question
    who = texts.index("Who")
    assert f[who, 1] == 0.0


def test_shape_and_finite():
    ex = make_example("e", "", "a b c d e", ["a"])
    f = featurize(ex, 8, 0)
    assert f.shape == (5, 8) and np.all(np.isfinite(f))
    assert list(f[:, 0]) == [1.0] * 5
    assert f[0, 4] == 0.0 and f[-1, 4] == 1.0


def test_segment_flag():
    ex = make_example("e", "which one", "a b", ["a"])
    assert list(featurize(ex, 8, 0)[:, 0]) == [0.0, 0.0, 1.0, 1.0]


def test_dim_guard():
    ex = make_example("e", "", "a", ["a"])
    with pytest.raises(ValueError):
        featurize(ex, 7, 0)
