"""Deterministic per-token features standing in for encoder output.

Column layout for a feature dimension ``dim`` (``dim >= 8``):

    0  segment flag (1 for passage tokens)
    1  token text occurs in the other segment (question <-> passage)
    2  previous token occurs in the other segment
    3  next token occurs in the other segment
    4  position / (m - 1)
    5.. signed hashed identity buckets: the first ceil(n/2) for the token
        itself, the rest for the previous token

Token identity is hashed with FNV-1a (64 bit) on the normalized text, mixed
with the seed and bucketed by a multiply-shift step, so matrices are identical
across platforms and Python hash randomization.
"""
from __future__ import annotations

import numpy as np

from .corpus import Example
from .evaluation import normalize_answer

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN = 0x9E3779B97F4A7C15
N_FIXED = 5
MIN_DIM = 8


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def _mix_seed(seed: int) -> int:
    # splitmix64 finalizer
    z = (seed * GOLDEN + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def hash_bucket(text: str, n_buckets: int, seed: int) -> tuple[int, float]:
    """Map text to (bucket, sign) with a seeded 64-bit multiply-shift hash."""
    x = ((fnv1a64(text.encode("utf-8")) ^ _mix_seed(seed)) * GOLDEN) & MASK64
    bucket = (x * n_buckets) >> 64
    sign = 1.0 if (x >> 11) & 1 else -1.0
    return bucket, sign


def _key(text: str) -> str:
    words = normalize_answer(text)
    return " ".join(words) if words else text.lower()


def featurize(example: Example, dim: int = 32, seed: int = 0) -> np.ndarray:
    if dim < MIN_DIM:
        raise ValueError(f"feature dim must be >= {MIN_DIM}, got {dim}")
    seq = example.sequence
    m = len(seq)
    nq = len(example.question_tokens)
    keys = [_key(t.text) for t in seq]
    q_keys = set(keys[:nq])
    p_keys = set(keys[nq:])
    n_hash = dim - N_FIXED
    n_cur = (n_hash + 1) // 2
    n_prev = n_hash - n_cur

    cross = np.array([
        float(k in (p_keys if i < nq else q_keys) and bool(normalize_answer(seq[i].text)))
        for i, k in enumerate(keys)
    ])
    feats = np.zeros((m, dim))
    if m == 0:
        return feats
    feats[nq:, 0] = 1.0
    feats[:, 1] = cross
    feats[1:, 2] = cross[:-1]
    feats[:-1, 3] = cross[1:]
    feats[:, 4] = np.arange(m) / max(m - 1, 1)
    for i, k in enumerate(keys):
        b, s = hash_bucket(k, n_cur, seed)
        feats[i, N_FIXED + b] += s
        if n_prev and i > 0:
            b, s = hash_bucket(keys[i - 1], n_prev, seed + 1)
            feats[i, N_FIXED + n_cur + b] += s
    return feats
