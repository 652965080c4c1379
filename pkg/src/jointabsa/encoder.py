"""Token embedding plus recurrent feature extraction.

A bidirectional gated recurrent layer over trainable embeddings produces
shared contextual features; two separate unidirectional recurrent stacks
then derive the task-specific feature matrices for span extraction and for
polarity classification.  All sequence tensors are batch-first
``(batch, width, dim)`` with padded rows forced to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class TaskFeatures:
    """Paired per-token feature matrices for the two task branches.

    ``level`` 0 marks features straight off the task encoders, 1 marks
    features after the interaction layer.
    """

    aspect: Tensor
    sentiment: Tensor
    level: int = 0

    def __post_init__(self):
        if self.aspect.shape != self.sentiment.shape:
            raise ad.ShapeError(
                f"task feature shapes disagree: {self.aspect.shape} vs {self.sentiment.shape}"
            )
        if not (np.all(np.isfinite(self.aspect.data)) and np.all(np.isfinite(self.sentiment.data))):
            raise FloatingPointError("non-finite task features")


class GRULayer:
    """Single-direction gated recurrent layer with masked state updates.

    Padded steps neither update the state nor emit features, so padding
    contributes nothing to outputs or gradients in either direction.
    """

    def __init__(self, params, prefix, in_dim, hidden_dim, rng):
        self.hidden_dim = hidden_dim
        self.w_in = params.add(f"{prefix}.w_in", rng.normal(0.0, 1.0 / np.sqrt(in_dim), (in_dim, 3 * hidden_dim)))
        self.u_gates = params.add(f"{prefix}.u_gates", rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), (hidden_dim, 2 * hidden_dim)))
        self.u_cand = params.add(f"{prefix}.u_cand", rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), (hidden_dim, hidden_dim)))
        self.bias = params.add(f"{prefix}.bias", np.zeros(3 * hidden_dim))

    def run(self, steps, mask_cols, reverse=False):
        """Run over per-step inputs ``steps`` (each (batch, in_dim)).

        Returns per-step outputs (each (batch, hidden_dim)), masked to zero
        at padded positions, in original time order.
        """
        h = self.hidden_dim
        order = range(len(steps) - 1, -1, -1) if reverse else range(len(steps))
        state = ad.as_tensor(np.zeros((steps[0].shape[0], h)))
        b_update = self.bias[:h]
        b_reset = self.bias[h : 2 * h]
        b_cand = self.bias[2 * h :]
        outputs = [None] * len(steps)
        for t in order:
            x = steps[t]
            m = mask_cols[t]
            gates_x = x @ self.w_in
            gates_h = state @ self.u_gates
            update = ad.sigmoid(gates_x[:, :h] + gates_h[:, :h] + b_update)
            reset = ad.sigmoid(gates_x[:, h : 2 * h] + gates_h[:, h : 2 * h] + b_reset)
            cand = ad.tanh(gates_x[:, 2 * h :] + (reset * state) @ self.u_cand + b_cand)
            fresh = (1.0 - update) * state + update * cand
            state = m * fresh + (1.0 - m) * state
            outputs[t] = m * state
        return outputs


class Encoder:
    """Embedding table, shared bidirectional layer, and two task stacks."""

    def __init__(self, params, vocab_size, embed_dim, hidden_dim, dropout_rate, rng):
        if embed_dim % 2:
            raise ValueError(f"embed_dim must be even for the bidirectional split, got {embed_dim}")
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.dropout_rate = dropout_rate
        self.rng = rng
        self.embedding = params.add("embedding", rng.uniform(-0.1, 0.1, (vocab_size, embed_dim)))
        half = embed_dim // 2
        self.fwd = GRULayer(params, "shared.fwd", embed_dim, half, rng)
        self.bwd = GRULayer(params, "shared.bwd", embed_dim, half, rng)
        self.aspect_stack = GRULayer(params, "aspect", embed_dim, hidden_dim, rng)
        self.sentiment_stack = GRULayer(params, "sentiment", embed_dim, hidden_dim, rng)

    @staticmethod
    def _split_steps(seq, width):
        return [seq[:, t, :] for t in range(width)]

    @staticmethod
    def _mask_cols(mask, width):
        return [ad.as_tensor(mask[:, t : t + 1]) for t in range(width)]

    def encode(self, token_ids, mask, train=False):
        """Contextual features (batch, width, embed_dim); padded rows zero."""
        ids = np.asarray(token_ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ad.ShapeError(
                f"token id out of range for vocabulary of size {self.vocab_size}"
            )
        width = ids.shape[1]
        embedded = ad.take(self.embedding, ids)
        embedded = ad.dropout(embedded, self.dropout_rate, train, self.rng)
        steps = self._split_steps(embedded, width)
        cols = self._mask_cols(mask, width)
        fwd_out = self.fwd.run(steps, cols)
        bwd_out = self.bwd.run(steps, cols, reverse=True)
        per_step = [ad.concat([f, b], axis=1) for f, b in zip(fwd_out, bwd_out)]
        contextual = ad.stack(per_step, axis=1)
        return ad.dropout(contextual, self.dropout_rate, train, self.rng)

    def task_encode(self, contextual, mask, train=False):
        """Task-specific features from the shared ones; level-0 output."""
        width = contextual.shape[1]
        steps = self._split_steps(contextual, width)
        cols = self._mask_cols(mask, width)
        aspect = ad.stack(self.aspect_stack.run(steps, cols), axis=1)
        sentiment = ad.stack(self.sentiment_stack.run(steps, cols), axis=1)
        return TaskFeatures(aspect=aspect, sentiment=sentiment, level=0)
