"""Probability heads over token features.

* tag head: per-token distribution over the scheme's tags
* span head: start/end distributions over token positions
* selector: distribution over which answer head to use, from mean-pooled features

All heads are 2-layer ReLU feed-forward nets and all outputs are
log-probabilities.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, logsumexp

from .tagging import TagScheme

FORMAT_VERSION = 1
HEAD_NAMES = ("tase", "sse")


@dataclass
class FeedForward:
    w1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, k)
    b2: np.ndarray  # (k,)

    PARAMS = ("w1", "b1", "w2", "b2")

    @classmethod
    def init(cls, d: int, h: int, k: int, rng: np.random.Generator) -> "FeedForward":
        r1 = math.sqrt(6.0 / (d + h))
        r2 = math.sqrt(6.0 / (h + k))
        return cls(
            w1=rng.uniform(-r1, r1, size=(d, h)),
            b1=np.zeros(h),
            w2=rng.uniform(-r2, r2, size=(h, k)),
            b2=np.zeros(k),
        )

    @classmethod
    def zeros(cls, d: int, h: int, k: int) -> "FeedForward":
        return cls(np.zeros((d, h)), np.zeros(h), np.zeros((h, k)), np.zeros(k))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        pre = x @ self.w1 + self.b1
        hidden = np.maximum(pre, 0.0)
        return hidden @ self.w2 + self.b2, (x, pre, hidden)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: tuple, grad_out: np.ndarray) -> "FeedForward":
        x, pre, hidden = cache
        x2 = np.atleast_2d(x)
        g_out = np.atleast_2d(grad_out)
        g_hidden = g_out @ self.w2.T
        g_pre = g_hidden * (np.atleast_2d(pre) > 0)
        return FeedForward(
            w1=x2.T @ g_pre,
            b1=g_pre.sum(axis=0),
            w2=np.atleast_2d(hidden).T @ g_out,
            b2=g_out.sum(axis=0),
        )

    def to_json(self) -> dict:
        return {name: getattr(self, name).tolist() for name in self.PARAMS}

    @classmethod
    def from_json(cls, obj: dict, d: int, h: int, k: int, where: str) -> "FeedForward":
        expected = {"w1": (d, h), "b1": (h,), "w2": (h, k), "b2": (k,)}
        arrays = {}
        for name, shape in expected.items():
            if name not in obj:
                raise ValueError(f"{where}: missing {name}")
            arr = np.asarray(obj[name], dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{where}.{name}: shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{where}.{name}: non-finite values")
            arrays[name] = arr
        return cls(**arrays)


@dataclass
class SpanHeadParams:
    start: FeedForward
    end: FeedForward


def _check_features(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise ValueError(f"features must be a matrix, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise ValueError("features contain non-finite values")
    return features


def tag_logits(features: np.ndarray, params: FeedForward) -> np.ndarray:
    return params(_check_features(features))


def tag_distribution(features: np.ndarray, params: FeedForward) -> np.ndarray:
    """(m, |S|) log-probabilities of each token's tag; rows share the same net."""
    return log_softmax(tag_logits(features, params), axis=1)


def span_distribution(features: np.ndarray, params: SpanHeadParams) -> tuple[np.ndarray, np.ndarray]:
    """Log-probabilities of each position being the answer start / end."""
    features = _check_features(features)
    if features.shape[0] == 0:
        raise ValueError("span distribution needs at least one token")
    start = params.start(features)[:, 0]
    end = params.end(features)[:, 0]
    return log_softmax(start), log_softmax(end)


def head_posterior(features: np.ndarray, params: FeedForward) -> np.ndarray:
    """Log p(head | input) from the mean of the feature rows."""
    features = _check_features(features)
    pooled = features.mean(axis=0) if features.shape[0] else np.zeros(features.shape[1])
    return log_softmax(params(pooled))


def combine_heads(head_log_posterior: Sequence[float], per_head_answer_log_prob: Sequence[float]) -> float:
    """log sum_z p(z) * p_z(answer); returns -inf if no head gives the answer mass."""
    a = np.asarray(head_log_posterior, dtype=float)
    b = np.asarray(per_head_answer_log_prob, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    total = a + b
    if total.size == 0 or np.all(np.isneginf(total)):
        return -math.inf
    return float(logsumexp(total))


@dataclass
class Model:
    scheme: TagScheme
    feature_dim: int
    hidden_dim: int
    heads: tuple[str, ...]
    selector: FeedForward
    tase: FeedForward | None = None
    sse: SpanHeadParams | None = None
    feature_seed: int = 0

    @classmethod
    def init(cls, scheme, feature_dim: int, hidden_dim: int | None = None,
             heads: Sequence[str] = ("tase",), seed: int = 0, feature_seed: int | None = None
             ) -> "Model":
        scheme = TagScheme.parse(scheme)
        heads = tuple(h for h in HEAD_NAMES if h in heads)
        if not heads:
            raise ValueError("at least one of 'tase', 'sse' is required")
        d = feature_dim
        h = hidden_dim or d
        rng = np.random.default_rng(seed)
        tase = FeedForward.init(d, h, scheme.size, rng) if "tase" in heads else None
        sse = SpanHeadParams(FeedForward.init(d, h, 1, rng), FeedForward.init(d, h, 1, rng)) \
            if "sse" in heads else None
        selector = FeedForward.init(d, h, len(heads), rng)
        return cls(scheme, d, h, heads, selector, tase, sse,
                   seed if feature_seed is None else feature_seed)

    def modules(self) -> dict[str, FeedForward]:
        out = {}
        if self.tase is not None:
            out["tase"] = self.tase
        if self.sse is not None:
            out["sse.start"] = self.sse.start
            out["sse.end"] = self.sse.end
        out["selector"] = self.selector
        return out

    def to_json(self) -> dict:
        heads: dict = {}
        if self.tase is not None:
            heads["tase"] = self.tase.to_json()
        if self.sse is not None:
            heads["sse"] = {"start": self.sse.start.to_json(), "end": self.sse.end.to_json()}
        heads["selector"] = self.selector.to_json()
        return {
            "format_version": FORMAT_VERSION,
            "scheme": self.scheme.value,
            "feature_dim": self.feature_dim,
            "hidden_dim": self.hidden_dim,
            "feature_seed": self.feature_seed,
            "heads": heads,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Model":
        version = obj.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {version!r}")
        scheme = TagScheme.parse(obj["scheme"])
        d, h = int(obj["feature_dim"]), int(obj["hidden_dim"])
        raw = obj["heads"]
        names = tuple(n for n in HEAD_NAMES if n in raw)
        if not names or "selector" not in raw:
            raise ValueError("model file needs a selector and at least one answer head")
        tase = FeedForward.from_json(raw["tase"], d, h, scheme.size, "heads.tase") \
            if "tase" in raw else None
        sse = None
        if "sse" in raw:
            sse = SpanHeadParams(FeedForward.from_json(raw["sse"]["start"], d, h, 1, "heads.sse.start"),
                                 FeedForward.from_json(raw["sse"]["end"], d, h, 1, "heads.sse.end"))
        selector = FeedForward.from_json(raw["selector"], d, h, len(names), "heads.selector")
        return cls(scheme, d, h, names, selector, tase, sse, int(obj.get("feature_seed", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Model":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid model JSON: {exc.msg}") from exc
        return cls.from_json(obj)
