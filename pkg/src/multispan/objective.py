"""Training losses, their gradients, and the training loop.

Tag-head training maximizes the marginal likelihood of every tagging that
marks each gold answer string at least once. Gradients are taken with respect
to the logits feeding each softmax and then pushed through the feed-forward
heads by hand.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .corpus import Example, gold_occurrences
from .features import featurize
from .heads import FeedForward, Model
from .tagging import Tagging, TagScheme, _fallback_ranges, enumerate_correct_taggings, spans_to_tagging

logger = logging.getLogger(__name__)


def _tag_matrix(taggings) -> np.ndarray:
    rows = [t.tags if isinstance(t, Tagging) else tuple(t) for t in taggings]
    return np.asarray(rows, dtype=np.intp).reshape(len(rows), -1)


def _tagging_scores(log_p: np.ndarray, tags: np.ndarray) -> np.ndarray:
    log_p = np.asarray(log_p, dtype=float)
    if tags.shape[1] != log_p.shape[0]:
        raise ValueError(f"tagging length {tags.shape[1]} != distribution length {log_p.shape[0]}")
    return log_p[np.arange(log_p.shape[0]), tags].sum(axis=1)


def tagging_log_prob(log_p: np.ndarray, tagging) -> float:
    """sum_i log p_i[T_i]"""
    return float(_tagging_scores(log_p, _tag_matrix([tagging]))[0])


def marginal_log_likelihood(log_p: np.ndarray, taggings: Sequence) -> float:
    """log sum_T prod_i p_i[T_i] over the given taggings."""
    if len(taggings) == 0:
        raise ValueError("need at least one tagging")
    scores = _tagging_scores(log_p, _tag_matrix(taggings))
    if np.all(np.isneginf(scores)):
        return -math.inf
    return float(logsumexp(scores))


def marginal_nll_gradient(log_p: np.ndarray, taggings: Sequence) -> np.ndarray:
    """Gradient of the marginal NLL w.r.t. the per-token logits.

    softmax(row) minus the posterior-weighted one-hot tag counts.
    """
    if len(taggings) == 0:
        raise ValueError("need at least one tagging")
    log_p = np.asarray(log_p, dtype=float)
    tags = _tag_matrix(taggings)
    scores = _tagging_scores(log_p, tags)
    if np.all(np.isneginf(scores)):
        raise ValueError("every tagging has zero probability; gradient undefined")
    weights = softmax(scores)
    m = log_p.shape[0]
    expected = np.zeros_like(log_p)
    cols = np.tile(np.arange(m), len(tags))
    np.add.at(expected, (cols, tags.ravel()), np.repeat(weights, m))
    return np.exp(log_p) - expected


def _occurrence_posterior(log_p_start, log_p_end, occurrences):
    if not occurrences:
        raise ValueError("need at least one gold occurrence")
    s = np.array([o[0] for o in occurrences])
    e = np.array([o[1] for o in occurrences])
    scores = np.asarray(log_p_start)[s] + np.asarray(log_p_end)[e]
    return s, e, scores


def single_span_nll(log_p_start: np.ndarray, log_p_end: np.ndarray,
                    occurrences: Sequence[tuple[int, int]]) -> float:
    """-log sum over gold (s, e) of p_start[s] * p_end[e]."""
    _, _, scores = _occurrence_posterior(log_p_start, log_p_end, occurrences)
    if np.all(np.isneginf(scores)):
        return math.inf
    return float(-logsumexp(scores))


def single_span_nll_gradient(log_p_start, log_p_end, occurrences) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. the start and end logits."""
    s, e, scores = _occurrence_posterior(log_p_start, log_p_end, occurrences)
    w = softmax(scores)
    g_start = np.exp(np.asarray(log_p_start, dtype=float))
    g_end = np.exp(np.asarray(log_p_end, dtype=float))
    np.subtract.at(g_start, s, w)
    np.subtract.at(g_end, e, w)
    return g_start, g_end


def selector_nll(head_log_posterior: np.ndarray, correct_heads: Sequence[int]) -> float:
    correct = list(correct_heads)
    if not correct:
        raise ValueError("need at least one correct head")
    post = np.asarray(head_log_posterior, dtype=float)
    return float(-logsumexp(post[correct]))


def selector_nll_gradient(head_log_posterior, correct_heads) -> np.ndarray:
    post = np.asarray(head_log_posterior, dtype=float)
    correct = list(correct_heads)
    target = np.zeros_like(post)
    target[correct] = softmax(post[correct])
    return np.exp(post) - target


# -- gold targets -----------------------------------------------------------

def gold_taggings(example: Example, scheme, cap: int = 1000, marginalize: bool = True
                  ) -> tuple[list[Tagging], bool]:
    """Taggings to marginalize over for one example, plus the fallback flag.

    Explicit gold spans pin down a single tagging. With ``marginalize=False``
    the single all-occurrences tagging is used.
    """
    scheme = TagScheme.parse(scheme)
    m = len(example)
    occ = gold_occurrences(example)
    explicit = example.gold.explicit_spans
    pinned = bool(explicit) and all(set(r) <= set(explicit) for r in occ.values())
    if pinned or not marginalize:
        return [spans_to_tagging(_fallback_ranges(list(occ.values())), m, scheme)], False
    return enumerate_correct_taggings(occ, m, scheme, cap)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 30
    seed: int = 0
    cap: int = 1000
    scheme: TagScheme = TagScheme.IO
    heads: tuple[str, ...] = ("tase",)
    feature_dim: int = 32
    hidden_dim: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    marginalize: bool = True

    def __post_init__(self):
        self.scheme = TagScheme.parse(self.scheme)
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.cap < 1:
            raise ValueError("cap must be >= 1")


@dataclass
class TrainItem:
    id: str
    features: np.ndarray
    taggings: np.ndarray | None = None
    span_occurrences: list | None = None
    correct_heads: list[int] = field(default_factory=list)


def prepare(examples: Sequence[Example], model: Model, cap: int, marginalize: bool = True
            ) -> list[TrainItem]:
    items = []
    fell_back = 0
    for ex in examples:
        feats = featurize(ex, model.feature_dim, model.feature_seed)
        item = TrainItem(ex.id, feats)
        for z, head in enumerate(model.heads):
            if head == "tase":
                taggings, fb = gold_taggings(ex, model.scheme, cap, marginalize)
                fell_back += fb
                item.taggings = _tag_matrix(taggings)
                item.correct_heads.append(z)
            elif head == "sse" and len(ex.gold.strings) == 1:
                item.span_occurrences = gold_occurrences(ex)[ex.gold.strings[0]]
                item.correct_heads.append(z)
        if not item.correct_heads:
            logger.debug("no enabled head can express the answer of %s; skipped", ex.id)
            continue
        items.append(item)
    if fell_back:
        logger.info("%d examples exceeded the tagging cap and use the fallback tagging", fell_back)
    return items


def example_loss(model: Model, item: TrainItem, with_grad: bool = True):
    """Total loss for one example, its parts, and per-module gradients."""
    parts = {"tag": 0.0, "span": 0.0, "selector": 0.0}
    grads: dict[str, FeedForward] = {}
    x = item.features
    if item.taggings is not None:
        logits, cache = model.tase.forward(x)
        log_p = logits - logsumexp(logits, axis=1, keepdims=True)
        parts["tag"] = -marginal_log_likelihood(log_p, item.taggings)
        if with_grad:
            grads["tase"] = model.tase.backward(cache, marginal_nll_gradient(log_p, item.taggings))
    if item.span_occurrences is not None:
        s_logits, s_cache = model.sse.start.forward(x)
        e_logits, e_cache = model.sse.end.forward(x)
        lp_s = s_logits[:, 0] - logsumexp(s_logits[:, 0])
        lp_e = e_logits[:, 0] - logsumexp(e_logits[:, 0])
        parts["span"] = single_span_nll(lp_s, lp_e, item.span_occurrences)
        if with_grad:
            g_s, g_e = single_span_nll_gradient(lp_s, lp_e, item.span_occurrences)
            grads["sse.start"] = model.sse.start.backward(s_cache, g_s[:, None])
            grads["sse.end"] = model.sse.end.backward(e_cache, g_e[:, None])
    pooled = x.mean(axis=0)
    sel_logits, sel_cache = model.selector.forward(pooled)
    log_post = sel_logits - logsumexp(sel_logits)
    parts["selector"] = selector_nll(log_post, item.correct_heads)
    if with_grad:
        grads["selector"] = model.selector.backward(
            sel_cache, selector_nll_gradient(log_post, item.correct_heads))
    return sum(parts.values()), parts, grads


class Adam:
    def __init__(self, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.state: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}

    def step(self, modules: dict[str, FeedForward], grads: dict[str, FeedForward]) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for name, grad in grads.items():
            module = modules[name]
            for pname in FeedForward.PARAMS:
                g = getattr(grad, pname)
                key = (name, pname)
                m, v = self.state.get(key, (np.zeros_like(g), np.zeros_like(g)))
                m = self.beta1 * m + (1 - self.beta1) * g
                v = self.beta2 * v + (1 - self.beta2) * g * g
                self.state[key] = (m, v)
                param = getattr(module, pname)
                param -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mean_tag_nll: float
    mean_span_nll: float
    mean_selector_nll: float


def train(examples: Sequence[Example], config: TrainConfig, model: Model | None = None
          ) -> tuple[Model, list[EpochStats]]:
    """Per-example Adam updates with a seeded shuffle each epoch.

    Examples are expected to be truncated and filtered already.
    """
    if not examples:
        raise ValueError("cannot train on an empty dataset")
    if model is None:
        model = Model.init(config.scheme, config.feature_dim, config.hidden_dim,
                           config.heads, seed=config.seed)
    items = prepare(examples, model, config.cap, config.marginalize)
    if not items:
        raise ValueError("no example can be expressed by the enabled heads")
    rng = np.random.default_rng([config.seed, 1])
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    modules = model.modules()
    trace = []
    for epoch in range(1, config.epochs + 1):
        totals = np.zeros(4)
        for idx in rng.permutation(len(items)):
            item = items[idx]
            loss, parts, grads = example_loss(model, item)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} on example {item.id} "
                                         f"in epoch {epoch}: {parts}")
            totals += (loss, parts["tag"], parts["span"], parts["selector"])
            opt.step(modules, grads)
        stats = EpochStats(epoch, *(totals / len(items)).tolist())
        logger.info("epoch %d loss %.5f", epoch, stats.mean_loss)
        trace.append(stats)
    return model, trace


def write_loss_csv(trace: Sequence[EpochStats], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "mean_loss", "mean_tag_nll", "mean_span_nll", "mean_selector_nll"])
        for s in trace:
            writer.writerow([s.epoch, repr(s.mean_loss), repr(s.mean_tag_nll),
                             repr(s.mean_span_nll), repr(s.mean_selector_nll)])
