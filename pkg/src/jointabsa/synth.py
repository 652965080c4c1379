"""Synthetic review-like corpora with marker-keyed polarities.

A sentence mentions one or two product nouns.  A noun counts as an
aspect exactly when a polarity marker follows it, and the marker
determines the gold polarity.  The same nouns also appear in plain
clauses with no marker, where they are not aspects, so aspect-hood
cannot be read off noun identity: the boundary predictor has to
recognize the sentiment markers.

``skew_markers`` draws markers from a long-tailed distribution instead
of a uniform one.  Training on a skewed corpus and evaluating on a
uniform one puts weight on markers that were rare during training,
which rewards models that share marker knowledge across the two task
stacks.
"""

from __future__ import annotations

import numpy as np

from .corpus import AspectAnnotation, SentenceExample, validate_example

NOUNS = [
    "battery", "screen", "keyboard", "camera", "speaker",
    "display", "price", "design", "service", "menu",
    "charger", "cable",
]
PHRASE_NOUNS = [("battery", "life"), ("screen", "quality"), ("sound", "system")]
MARKERS = {
    "positive": ["great", "excellent", "fantastic", "lovely", "superb", "delightful", "impressive"],
    "negative": ["terrible", "awful", "poor", "disappointing", "dreadful", "flimsy", "unusable"],
    "neutral": ["okay", "average", "ordinary", "acceptable", "unremarkable", "tolerable", "plain"],
}
# Long-tailed per-polarity marker frequencies used when skew_markers=True.
MARKER_SKEW = np.array([0.32, 0.28, 0.20, 0.12, 0.04, 0.02, 0.02])
OPENERS = [["i", "think"], ["we", "found"], ["honestly"], []]
VERBS = ["is", "was", "seems", "looked"]
# Marker-free clauses about the same nouns; the mentioned noun is not an aspect.
PLAIN_TAILS = [
    ["sat", "in", "the", "corner"],
    ["came", "with", "the", "box"],
    ["arrived", "on", "monday"],
    ["stayed", "in", "the", "drawer"],
]


def _pick_polarity(rng, skew):
    polarity = ["positive", "negative", "neutral"][rng.integers(3)]
    pool = MARKERS[polarity]
    if skew:
        return polarity, pool[rng.choice(len(pool), p=MARKER_SKEW)]
    return polarity, pool[rng.integers(len(pool))]


def _noun_tokens(rng):
    if rng.random() < 0.2:
        return list(PHRASE_NOUNS[rng.integers(len(PHRASE_NOUNS))])
    return [NOUNS[rng.integers(len(NOUNS))]]


def _marked_clause(rng, skew):
    """"the <noun> <verb> <marker>" plus the aspect relative to clause start."""
    noun = _noun_tokens(rng)
    polarity, marker = _pick_polarity(rng, skew)
    tokens = ["the"] + noun + [VERBS[rng.integers(len(VERBS))], marker]
    return tokens, AspectAnnotation(1, len(noun), polarity)


def _plain_clause(rng):
    """"the <noun> <tail...>" with no marker and no aspect."""
    noun = _noun_tokens(rng)
    tail = PLAIN_TAILS[rng.integers(len(PLAIN_TAILS))]
    return ["the"] + noun + list(tail)


def _shift(aspect, offset):
    return AspectAnnotation(aspect.start + offset, aspect.end + offset, aspect.polarity)


def _single(rng, skew):
    opener = OPENERS[rng.integers(len(OPENERS))]
    clause, aspect = _marked_clause(rng, skew)
    return opener + clause + ["."], [_shift(aspect, len(opener))]


def _with_distractor(rng, skew):
    """One marked aspect next to a bare mention of another noun."""
    clause, aspect = _marked_clause(rng, skew)
    plain = _plain_clause(rng)
    if rng.random() < 0.5:
        return clause + ["but"] + plain + ["."], [aspect]
    return plain + ["and"] + clause + ["."], [_shift(aspect, len(plain) + 1)]


def _double(rng, skew):
    """Two marked aspects joined by "and"."""
    first, a1 = _marked_clause(rng, skew)
    second, a2 = _marked_clause(rng, skew)
    return first + ["and"] + second + ["."], [a1, _shift(a2, len(first) + 1)]


def _empty(rng, skew):
    tokens = _plain_clause(rng)
    if rng.random() < 0.5:
        tokens = tokens + ["and"] + _plain_clause(rng)
    return tokens + ["."], []


def make_marker_corpus(size, seed, id_prefix="syn", skew_markers=False):
    """Generate ``size`` examples; same arguments give the same corpus."""
    rng = np.random.default_rng(seed)
    recipes = [_single, _with_distractor, _double, _empty]
    weights = np.array([0.4, 0.25, 0.15, 0.2])
    examples = []
    for i in range(size):
        recipe = recipes[rng.choice(len(recipes), p=weights)]
        tokens, aspects = recipe(rng, skew_markers)
        example = SentenceExample(
            tokens=tuple(tokens), aspects=tuple(aspects), id=f"{id_prefix}-{i}"
        )
        examples.append(validate_example(example))
    return examples
