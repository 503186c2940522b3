"""Synthetic multi-span data in the DROP span layout.

Each question names a marker word; the answer is every passage word that
directly follows that marker. Passages also contain other markers with their
own followers, and some answer words are repeated at unrelated positions so
that the gold tagging is ambiguous.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MARKERS = (
    "zorb", "quell", "frim", "blap", "trosk", "vink", "glim", "dresh",
    "plonk", "skiv", "murn", "yeff",
)
VOCAB = (
    "apple", "river", "stone", "cloud", "ember", "maple", "harbor", "lantern",
    "meadow", "pepper", "candle", "falcon", "garnet", "island", "jasmine", "kettle",
    "ladder", "marble", "nectar", "orchid", "pebble", "quartz", "saddle", "timber",
    "velvet", "willow", "anchor", "bramble", "cobalt", "dune", "fennel", "granite",
    "hazel", "ivory", "juniper", "kelp", "lilac", "mango", "nutmeg", "olive",
    "parsley", "quiver", "raven", "sable", "thistle", "umber", "violet", "walnut",
    "yarrow", "zinnia", "basil", "copper", "delta", "fjord", "glacier", "heron",
)
TEMPLATES = (
    "Which words come right after {m} ?",
    "What follows each {m} in the text ?",
    "Name everything written just after {m} ?",
)
SPAN_COUNT_PROBS = (0.45, 0.35, 0.20)


def _valid(words: list[str], marker: str, answers: set[str]) -> bool:
    gold_pos = [i + 1 for i, w in enumerate(words[:-1]) if w == marker]
    if {words[i] for i in gold_pos} != answers or len(gold_pos) != len(answers):
        return False
    if words[-1] == marker:
        return False
    for i in gold_pos:
        for j in (i - 1, i + 1):
            if 0 <= j < len(words) and j not in gold_pos and words[j] in answers:
                return False
    return True


def generate_example(rng: np.random.Generator) -> tuple[str, str, list[str]]:
    n_spans = int(rng.choice(len(SPAN_COUNT_PROBS), p=SPAN_COUNT_PROBS)) + 1
    length = int(rng.integers(20, 61))
    marker_ids = rng.choice(len(MARKERS), size=3, replace=False)
    marker = MARKERS[marker_ids[0]]
    distractors = [MARKERS[i] for i in marker_ids[1:1 + int(rng.integers(1, 3))]]
    while True:
        picks = rng.choice(len(VOCAB), size=n_spans, replace=False)
        answers = [VOCAB[i] for i in picks]
        others = [w for w in VOCAB if w not in answers]
        units = [[marker, a] for a in answers]
        units += [[d, others[int(rng.integers(len(others)))]] for d in distractors]
        if rng.random() < 0.5:
            units.append([answers[int(rng.integers(n_spans))]])
        used = sum(len(u) for u in units)
        units += [[others[int(rng.integers(len(others)))]] for _ in range(max(length - used, 0))]
        order = rng.permutation(len(units))
        words = [w for k in order for w in units[k]]
        if _valid(words, marker, set(answers)):
            break
    # report answers in passage order
    answers = [words[i + 1] for i, w in enumerate(words[:-1]) if w == marker]
    question = TEMPLATES[int(rng.integers(len(TEMPLATES)))].format(m=marker)
    return question, " ".join(words), answers


def synth_generate(n: int, seed: int = 0) -> dict:
    """Return a DROP-layout dataset of ``n`` single-question passages."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    data = {}
    for i in range(n):
        question, passage, answers = generate_example(rng)
        pid = f"synth-{seed}-{i:05d}"
        data[pid] = {
            "passage": passage,
            "qa_pairs": [{
                "query_id": f"{pid}-q0",
                "question": question,
                "answer": {
                    "number": "",
                    "date": {"day": "", "month": "", "year": ""},
                    "spans": answers,
                },
            }],
        }
    return data


def write_synth(path, n: int, seed: int = 0) -> None:
    Path(path).write_text(json.dumps(synth_generate(n, seed), indent=1) + "\n", encoding="utf-8")
