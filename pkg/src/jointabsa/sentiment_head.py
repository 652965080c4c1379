"""Span-conditioned attention over sentiment features and polarity
classification.

The query starts as the mean of the feature rows under an aspect span and
is refined over a fixed number of hops: each hop attends over the whole
sentence with scaled dot-product scores, forms a context vector, and adds
it back into the query.  The final context feeds a three-way softmax
classifier.  The final hop's attention weights double as the per-aspect
distribution that the divergence objective compares against the pooled
boundary scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import POLARITIES, POLARITY_INDEX

EPS = 1e-12
MASK_BIAS = 1e9


@dataclass
class AttentionDistribution:
    """Simplex weights over one sentence's tokens for one aspect span."""

    weights: Tensor
    aspect: tuple[int, int]


@dataclass
class PolarityPrediction:
    """Predicted distribution over the three polarity classes."""

    probs: Tensor

    @property
    def label(self):
        return POLARITIES[int(np.argmax(self.probs.data))]


def mask_bias(mask):
    """Additive pre-softmax bias: 0 at real tokens, -1e9 at padding.

    Large enough that padded weights underflow to exactly zero after the
    max-shifted softmax.
    """
    return np.asarray(mask, dtype=np.float64) * MASK_BIAS - MASK_BIAS


def aspect_attention(features, span, mask, hops=2):
    """Multi-hop attention over (n, d) features conditioned on one span.

    Returns the final hop's AttentionDistribution and context vector (d,).
    """
    if hops < 1:
        raise ValueError(f"hops must be >= 1, got {hops}")
    start, end = span
    n, dim = features.shape
    real = int(np.asarray(mask).sum())
    if not 0 <= start <= end < real:
        raise ValueError(f"span ({start}, {end}) is invalid for a {real}-token sentence")
    query = features[start : end + 1, :].mean(axis=0, keepdims=True)
    keys = ad.transpose(features)
    bias = ad.as_tensor(mask_bias(mask).reshape(1, n))
    scale = 1.0 / np.sqrt(dim)
    weights = None
    context = None
    for _ in range(hops):
        scores = (query @ keys) * scale + bias
        weights = ad.softmax(scores, axis=-1)
        context = weights @ features
        query = query + context
    return (
        AttentionDistribution(weights=ad.reshape(weights, (n,)), aspect=(start, end)),
        ad.reshape(context, (dim,)),
    )


def classify(context, weights, bias):
    """Three-way softmax over a (d,) context vector; weights (d, 3), bias (3,)."""
    logits = ad.reshape(context, (1, context.shape[0])) @ weights + bias
    return PolarityPrediction(probs=ad.reshape(ad.softmax(logits, axis=-1), (3,)))


def sentiment_loss(predictions, golds):
    """Mean cross-entropy of predicted distributions against gold polarities."""
    if len(predictions) != len(golds):
        raise ValueError(
            f"got {len(predictions)} predictions for {len(golds)} gold polarities"
        )
    if not predictions:
        raise ValueError("sentiment_loss needs at least one prediction")
    losses = []
    for pred, gold in zip(predictions, golds):
        idx = POLARITY_INDEX[gold] if isinstance(gold, str) else int(gold)
        losses.append(-ad.log(ad.clamp_min(pred.probs[idx], EPS)))
    return ad.stack(losses).mean()


def sentence_attention(distributions):
    """Elementwise mean of per-aspect attention weights for one sentence."""
    if not distributions:
        raise ValueError("sentence_attention needs at least one distribution")
    n = distributions[0].weights.shape[0]
    for d in distributions:
        if d.weights.shape[0] != n:
            raise ad.ShapeError(
                f"attention lengths disagree: {d.weights.shape[0]} vs {n}"
            )
    return ad.stack([d.weights for d in distributions]).mean(axis=0)
