"""End-to-end network: encoder, feature mixing, both heads, and the
combined loss over padded batches.

Everything here runs batch-first so one graph covers a whole batch: the
per-aspect attention gathers sentence rows for every gold (or predicted)
span at once, and the divergence term is computed row-wise with
aspect-free sentences masked out of its average.  Sentences without
aspects still contribute to the boundary loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .aspect_head import (
    AspectScoreDistribution,
    BoundaryScores,
    aspect_score,
    boundary_loss,
    boundary_scores,
    decode_spans,
)
from .corpus import POLARITIES, POLARITY_INDEX
from .encoder import Encoder, TaskFeatures
from .interaction import check_alpha, cross_stitch
from .objective import LossBreakdown, total_loss
from .sentiment_head import mask_bias

EPS = 1e-12


@dataclass
class ForwardState:
    """Intermediate tensors from one batched forward pass."""

    features: TaskFeatures
    scores: BoundaryScores
    aspect_dist: AspectScoreDistribution
    gold_items: list
    attention: Tensor | None
    contexts: Tensor | None
    probs: Tensor | None
    sentence_attention: Tensor | None
    has_aspect: np.ndarray


class Model:
    """The joint extraction/classification network over one vocabulary."""

    def __init__(
        self,
        vocab_size,
        embed_dim=64,
        hidden_dim=64,
        alpha=0.1,
        beta=0.1,
        dropout=0.1,
        attention_hops=2,
        tau_start=0.5,
        tau_end=0.5,
        max_span_len=8,
        no_shallow=False,
        no_deep=False,
        seed=0,
    ):
        if attention_hops < 1:
            raise ValueError(f"attention_hops must be >= 1, got {attention_hops}")
        self.alpha = 0.0 if no_shallow else check_alpha(alpha)
        self.beta = 0.0 if no_deep else float(beta)
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {beta}")
        self.attention_hops = attention_hops
        self.tau_start = tau_start
        self.tau_end = tau_end
        self.max_span_len = max_span_len
        self.hidden_dim = hidden_dim
        self.rng = np.random.default_rng(seed)
        self.params = ad.Parameters()
        self.encoder = Encoder(self.params, vocab_size, embed_dim, hidden_dim, dropout, self.rng)
        scale = 1.0 / np.sqrt(hidden_dim)
        self.v_start = self.params.add("boundary.start", self.rng.normal(0.0, scale, (hidden_dim, 1)))
        self.v_end = self.params.add("boundary.end", self.rng.normal(0.0, scale, (hidden_dim, 1)))
        self.w_polarity = self.params.add("polarity.weight", self.rng.normal(0.0, scale, (hidden_dim, 3)))
        self.b_polarity = self.params.add("polarity.bias", np.zeros(3))

    # -- forward pieces ------------------------------------------------

    def _features(self, batch_, train):
        contextual = self.encoder.encode(batch_.token_ids, batch_.mask, train)
        level0 = self.encoder.task_encode(contextual, batch_.mask, train)
        return cross_stitch(level0, self.alpha)

    @staticmethod
    def _gold_items(batch_):
        items = []
        for row, ex in enumerate(batch_.examples):
            for a in ex.aspects:
                items.append((row, a.start, a.end, POLARITY_INDEX[a.polarity]))
        return items

    def _attend(self, sentiment_feats, mask, items):
        """Batched multi-hop attention for spans ``(row, start, end, ...)``.

        Returns final attention weights (k, n) and contexts (k, d).
        """
        k = len(items)
        _, n, dim = sentiment_feats.shape
        rows = np.array([it[0] for it in items], dtype=np.int64)
        sel = ad.take(sentiment_feats, rows)
        span_avg = np.zeros((k, 1, n))
        for a, it in enumerate(items):
            start, end = it[1], it[2]
            span_avg[a, 0, start : end + 1] = 1.0 / (end - start + 1)
        query = ad.as_tensor(span_avg) @ sel
        keys = ad.transpose(sel, (0, 2, 1))
        bias = ad.as_tensor(mask_bias(mask[rows]).reshape(k, 1, n))
        scale = 1.0 / np.sqrt(dim)
        att = ctx = None
        for _ in range(self.attention_hops):
            att = ad.softmax((query @ keys) * scale + bias, axis=-1)
            ctx = att @ sel
            query = query + ctx
        return ad.reshape(att, (k, n)), ad.reshape(ctx, (k, dim))

    def _polarity_probs(self, contexts):
        return ad.softmax(contexts @ self.w_polarity + self.b_polarity, axis=-1)

    def _sentence_attention(self, attention, items, batch_size):
        """Mean the per-aspect rows into one distribution per sentence.

        Aspect-free sentences get an all-zero row and a zero indicator.
        """
        counts = np.zeros(batch_size)
        for it in items:
            counts[it[0]] += 1.0
        agg = np.zeros((batch_size, len(items)))
        for a, it in enumerate(items):
            agg[it[0], a] = 1.0 / counts[it[0]]
        sentence = ad.as_tensor(agg) @ attention
        return sentence, (counts > 0).astype(np.float64)

    def _divergence(self, aspect_dist, sentence_att, has_aspect):
        """Row-wise symmetric divergence, averaged over sentences with
        aspects; exact zero (value and gradient) for the rest."""
        e = aspect_dist.normalized
        a = sentence_att
        mid = (e + a) / 2.0
        kl_e = (e * (ad.log(ad.clamp_min(e, EPS)) - ad.log(ad.clamp_min(mid, EPS)))).sum(axis=-1)
        kl_a = (a * (ad.log(ad.clamp_min(a, EPS)) - ad.log(ad.clamp_min(mid, EPS)))).sum(axis=-1)
        per_row = 0.5 * kl_e + 0.5 * kl_a
        return (per_row * ad.as_tensor(has_aspect)).sum() / max(1.0, float(has_aspect.sum()))

    def forward_state(self, batch_, train=False):
        feats = self._features(batch_, train)
        scores = boundary_scores(feats.aspect, self.v_start, self.v_end)
        dist = aspect_score(scores.start, scores.end, batch_.mask)
        items = self._gold_items(batch_)
        if items:
            attention, contexts = self._attend(feats.sentiment, batch_.mask, items)
            probs = self._polarity_probs(contexts)
            sentence, has = self._sentence_attention(attention, items, len(batch_))
        else:
            attention = contexts = probs = sentence = None
            has = np.zeros(len(batch_))
        return ForwardState(
            features=feats,
            scores=scores,
            aspect_dist=dist,
            gold_items=items,
            attention=attention,
            contexts=contexts,
            probs=probs,
            sentence_attention=sentence,
            has_aspect=has,
        )

    # -- losses ---------------------------------------------------------

    def loss(self, batch_, train=False):
        """LossBreakdown for one batch; gold spans condition the
        classification branch (teacher forcing)."""
        state = self.forward_state(batch_, train)
        j_ae = boundary_loss(state.scores, batch_.start_targets, batch_.end_targets, batch_.mask)
        if state.gold_items:
            gold_idx = np.array([it[3] for it in state.gold_items])
            onehot = np.zeros((len(gold_idx), 3))
            onehot[np.arange(len(gold_idx)), gold_idx] = 1.0
            picked = (ad.log(ad.clamp_min(state.probs, EPS)) * ad.as_tensor(onehot)).sum(axis=-1)
            j_sc = -picked.mean()
            js = self._divergence(state.aspect_dist, state.sentence_attention, state.has_aspect)
        else:
            j_sc = ad.as_tensor(0.0)
            js = ad.as_tensor(0.0)
        return total_loss(j_ae, j_sc, js, self.beta)

    # -- inference ------------------------------------------------------

    def _labels(self, sentiment_feats, mask, items):
        _, contexts = self._attend(sentiment_feats, mask, items)
        probs = self._polarity_probs(contexts).data
        return [POLARITIES[i] for i in probs.argmax(axis=-1)]

    def predict_batch(self, batch_):
        """Decoded spans with polarities, one list per sentence."""
        with ad.no_grad():
            feats = self._features(batch_, train=False)
            scores = boundary_scores(feats.aspect, self.v_start, self.v_end)
            per_row = []
            items = []
            for row in range(len(batch_)):
                spans = decode_spans(
                    scores.start.data[row],
                    scores.end.data[row],
                    self.tau_start,
                    self.tau_end,
                    self.max_span_len,
                    length=batch_.lengths[row],
                )
                per_row.append(spans)
                items.extend((row, s.start, s.end) for s in spans)
            if items:
                labels = self._labels(feats.sentiment, batch_.mask, items)
                flat = iter(labels)
                for spans in per_row:
                    for s in spans:
                        s.polarity = next(flat)
        return per_row

    def classify_gold(self, batch_):
        """Predicted polarity for every gold span, grouped per sentence."""
        with ad.no_grad():
            items = self._gold_items(batch_)
            if not items:
                return [[] for _ in range(len(batch_))]
            feats = self._features(batch_, train=False)
            labels = self._labels(feats.sentiment, batch_.mask, items)
        grouped = [[] for _ in range(len(batch_))]
        for it, label in zip(items, labels):
            grouped[it[0]].append(((it[1], it[2]), label))
        return grouped


def model_grad_check(config, batch_, vocab_size=None, step=1e-5):
    """Finite-difference check of the combined loss over all parameters.

    Builds a fresh model from ``config`` (a TrainConfig) and compares the
    analytic gradient of the batch loss against central differences;
    dropout is off because the loss runs in evaluation mode.
    """
    config.validate()
    if vocab_size is None:
        vocab_size = int(batch_.token_ids.max()) + 1
    model = Model(
        vocab_size,
        embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim,
        alpha=config.alpha,
        beta=config.beta,
        dropout=config.dropout,
        attention_hops=config.attention_hops,
        tau_start=config.tau_start,
        tau_end=config.tau_end,
        max_span_len=config.max_span_len,
        no_shallow=config.no_shallow,
        no_deep=config.no_deep,
        seed=config.seed,
    )
    return ad.grad_check(lambda: model.loss(batch_, train=False).total, model.params, step=step)
