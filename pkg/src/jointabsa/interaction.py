"""Feature-level coupling between the two task branches.

A constrained two-by-two stitch mixes the aspect and sentiment feature
matrices: each branch keeps a 1 - alpha share of itself and receives an
alpha share of the other.  The mixing weight is a fixed hyperparameter in
[0, 0.5]; alpha = 0 degenerates to fully parallel encoding.
"""

from __future__ import annotations

from .config import ConfigError
from .encoder import TaskFeatures


def check_alpha(alpha):
    if not 0.0 <= alpha <= 0.5:
        raise ConfigError(f"alpha must be in [0, 0.5], got {alpha}")
    return float(alpha)


def cross_stitch(features, alpha):
    """Mix level-0 task features into level-1 ones.

    aspect_out = alpha * sentiment_in + (1 - alpha) * aspect_in, and
    symmetrically for the sentiment branch.  At alpha = 0 the inputs are
    returned untouched, so the degenerate case is exact rather than a
    floating-point approximation.
    """
    alpha = check_alpha(alpha)
    if features.level != 0:
        raise ValueError(f"cross_stitch expects level-0 features, got level {features.level}")
    if alpha == 0.0:
        return TaskFeatures(aspect=features.aspect, sentiment=features.sentiment, level=1)
    keep = 1.0 - alpha
    mixed_aspect = keep * features.aspect + alpha * features.sentiment
    mixed_sentiment = keep * features.sentiment + alpha * features.aspect
    return TaskFeatures(aspect=mixed_aspect, sentiment=mixed_sentiment, level=1)
