"""Output-level coupling: divergence between the aspect-score and
attention distributions, plus the combined training objective.

The symmetric divergence term pulls the extraction head's pooled score
distribution toward the classification head's attention weights and vice
versa; it is weighted by beta and added to the two task losses.  Natural
logarithms throughout, so the divergence is bounded by ln 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EPS = 1e-12
SIMPLEX_TOL = 1e-6
LN2 = float(np.log(2.0))


def _check_simplex(name, values):
    data = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    if data.ndim != 1:
        raise ad.ShapeError(f"{name} must be a vector, got shape {data.shape}")
    if np.any(data < -SIMPLEX_TOL):
        raise ValueError(f"{name} has negative entries")
    total = float(data.sum())
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} sums to {total}, expected 1 within {SIMPLEX_TOL}")
    return data


def kl(p, q, eps=EPS):
    """KL divergence sum(p * log(p / q)) with zero entries contributing zero.

    Both logs are clamp-guarded, which realizes the 0 * log 0 = 0
    convention exactly: a zero p entry multiplies a finite log difference.
    Returns a scalar Tensor wired into the graph of its inputs.
    """
    dp = _check_simplex("p", p)
    dq = _check_simplex("q", q)
    if dp.shape != dq.shape:
        raise ad.ShapeError(f"kl: length mismatch, {dp.shape} vs {dq.shape}")
    p = ad.as_tensor(p)
    q = ad.as_tensor(q)
    return (p * (ad.log(ad.clamp_min(p, eps)) - ad.log(ad.clamp_min(q, eps)))).sum()


def js_divergence(p, q):
    """Symmetric divergence: mean of the two KLs against the midpoint."""
    _check_simplex("p", p)
    _check_simplex("q", q)
    p = ad.as_tensor(p)
    q = ad.as_tensor(q)
    mid = (p + q) / 2.0
    return 0.5 * kl(p, mid) + 0.5 * kl(q, mid)


@dataclass
class LossBreakdown:
    """The three loss components, their weighted total, and the weight."""

    aspect: Tensor
    sentiment: Tensor
    divergence: Tensor
    total: Tensor
    beta: float

    def __post_init__(self):
        js = float(self.divergence.data)
        if not -1e-9 <= js <= LN2 + 1e-9:
            raise FloatingPointError(f"divergence {js} outside [0, ln 2]")

    def to_record(self):
        return {
            "j_ae": float(self.aspect.data),
            "j_sc": float(self.sentiment.data),
            "js": float(self.divergence.data),
            "total": float(self.total.data),
        }


def total_loss(aspect, sentiment, divergence, beta):
    """Weighted sum of the components; the divergence term stays in the
    graph even at beta = 0 so its value is logged either way."""
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    aspect = ad.as_tensor(aspect)
    sentiment = ad.as_tensor(sentiment)
    divergence = ad.as_tensor(divergence)
    total = aspect + sentiment + float(beta) * divergence
    return LossBreakdown(
        aspect=aspect, sentiment=sentiment, divergence=divergence, total=total, beta=float(beta)
    )
