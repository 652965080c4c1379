"""Boundary scoring, the extraction loss, pooled aspect scores, and span
decoding.

Every token gets an independent start probability and end probability from
sigmoid readouts of the aspect features.  Training fits those to the
multi-hot gold boundaries with full binary cross-entropy.  A three-wide
mean pool over the two probability vectors, renormalized, gives the
per-token aspect-score distribution used by the divergence objective.
Decoding pairs thresholded starts and ends greedily into non-overlapping
spans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EPS = 1e-12


@dataclass
class BoundaryScores:
    """Per-token start/end probabilities, shape (n,) or (batch, n)."""

    start: Tensor
    end: Tensor


@dataclass
class AspectScoreDistribution:
    """Pooled boundary scores and their sum-normalized form."""

    raw: Tensor
    normalized: Tensor


@dataclass
class SpanPrediction:
    """A decoded aspect span; polarity is attached by the sentiment head."""

    start: int
    end: int
    score: float
    polarity: str | None = None

    @property
    def span(self):
        return (self.start, self.end)


def _rows(h):
    """View (n, d) input as (1, n, d) so one code path serves both."""
    return (ad.reshape(h, (1,) + h.shape), True) if h.ndim == 2 else (h, False)


def boundary_scores(features, v_start, v_end):
    """Sigmoid readouts of the aspect features against two weight vectors.

    ``features`` is (n, d) or (batch, n, d); the weight vectors are (d, 1).
    Scores come back with the leading layout of ``features``.
    """
    h, squeezed = _rows(features)
    n = h.shape[1]
    start = ad.sigmoid(ad.reshape(h @ v_start, (h.shape[0], n)))
    end = ad.sigmoid(ad.reshape(h @ v_end, (h.shape[0], n)))
    if squeezed:
        start = ad.reshape(start, (n,))
        end = ad.reshape(end, (n,))
    return BoundaryScores(start=start, end=end)


def boundary_loss(scores, start_targets, end_targets, mask):
    """Masked binary cross-entropy over both boundary channels.

    Summed over real tokens within each sentence, averaged over the batch.
    Accepts (n,) vectors or (batch, n) matrices; the targets and mask are
    plain arrays.
    """
    per_example = []
    for g, p in ((scores.start, start_targets), (scores.end, end_targets)):
        g = ad.as_tensor(g)
        if g.shape != np.shape(p):
            raise ad.ShapeError(
                f"boundary_loss: scores shape {g.shape} vs targets shape {np.shape(p)}"
            )
        hit = ad.as_tensor(p) * ad.log(ad.clamp_min(g, EPS))
        miss = ad.as_tensor(1.0 - np.asarray(p, dtype=np.float64)) * ad.log(
            ad.clamp_min(1.0 - g, EPS)
        )
        per_example.append(-((hit + miss) * ad.as_tensor(mask)).sum(axis=-1))
    totals = per_example[0] + per_example[1]
    return totals.mean() if totals.ndim else totals


def pool3(v):
    """Mean over a centered width-3 window with zero padding, divisor 3.

    Linear and differentiable; applied along the last axis.
    """
    v = ad.as_tensor(v)
    pad = ad.as_tensor(np.zeros(v.shape[:-1] + (1,)))
    succ = ad.concat([v[..., 1:], pad], axis=-1)
    pred = ad.concat([pad, v[..., :-1]], axis=-1)
    return (pred + v + succ) / 3.0


def aspect_score(g_start, g_end, mask):
    """Pooled, masked, sum-normalized per-token aspect scores.

    The boundary scores are zeroed at padded positions before pooling so a
    padded batch pools exactly like per-sentence vectors, and the pooled
    values are masked again before normalization.
    """
    m = ad.as_tensor(mask)
    pooled = (pool3(ad.as_tensor(g_start) * m) + pool3(ad.as_tensor(g_end) * m)) / 2.0
    raw = pooled * m
    denom = raw.sum(axis=-1, keepdims=True)
    if not np.all(denom.data > 0.0):
        raise FloatingPointError("aspect_score: pooled scores sum to zero")
    return AspectScoreDistribution(raw=raw, normalized=raw / denom)


def decode_spans(g_start, g_end, tau_start=0.5, tau_end=0.5, max_span_len=8, length=None):
    """Greedy non-overlapping span extraction from one sentence's scores.

    Candidate starts are positions with start score >= tau_start, likewise
    for ends; a candidate span runs from a start to a later end within
    ``max_span_len`` tokens and scores start * end.  Candidates are taken
    in descending score order (ties: smaller start, then shorter span),
    skipping any that overlap an accepted span.  Output is sorted by start.
    """
    if not (0.0 < tau_start < 1.0 and 0.0 < tau_end < 1.0):
        raise ValueError(f"thresholds must lie in (0, 1), got {tau_start}, {tau_end}")
    if max_span_len < 1:
        raise ValueError(f"max_span_len must be >= 1, got {max_span_len}")
    gs = np.asarray(getattr(g_start, "data", g_start), dtype=np.float64).reshape(-1)
    ge = np.asarray(getattr(g_end, "data", g_end), dtype=np.float64).reshape(-1)
    n = gs.size if length is None else int(length)
    starts = [i for i in range(n) if gs[i] >= tau_start]
    ends = [j for j in range(n) if ge[j] >= tau_end]
    candidates = [
        (i, j, gs[i] * ge[j])
        for i in starts
        for j in ends
        if i <= j <= i + max_span_len - 1
    ]
    candidates.sort(key=lambda c: (-c[2], c[0], c[1] - c[0]))
    taken = np.zeros(n, dtype=bool)
    accepted = []
    for i, j, score in candidates:
        if not taken[i : j + 1].any():
            taken[i : j + 1] = True
            accepted.append(SpanPrediction(start=i, end=j, score=float(score)))
    accepted.sort(key=lambda s: s.start)
    return accepted
