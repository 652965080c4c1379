import numpy as np
import pytest

from jointabsa import autodiff as ad
from jointabsa.aspect_head import boundary_loss, boundary_scores
from jointabsa.config import TrainConfig
from jointabsa.corpus import (
    AspectAnnotation,
    SentenceExample,
    Vocabulary,
    batch,
)
from jointabsa.model import Model, model_grad_check
from jointabsa.objective import js_divergence
from jointabsa.sentiment_head import aspect_attention

EXAMPLES = [
    SentenceExample(
        tokens=("the", "battery", "is", "great"),
        aspects=(AspectAnnotation(1, 1, "positive"),),
        id="m1",
    ),
    SentenceExample(
        tokens=("screen", "quality", "was", "poor", "overall"),
        aspects=(AspectAnnotation(0, 1, "negative"),),
        id="m2",
    ),
    SentenceExample(
        tokens=("we", "got", "it", "monday"),
        aspects=(),
        id="m3",
    ),
    SentenceExample(
        tokens=("fine", "keyboard", "but", "poor", "cable"),
        aspects=(
            AspectAnnotation(1, 1, "positive"),
            AspectAnnotation(4, 4, "negative"),
        ),
        id="m4",
    ),
]
VOCAB = Vocabulary.from_examples(EXAMPLES)


def full_batch():
    (b,) = batch(EXAMPLES, VOCAB, batch_size=len(EXAMPLES))
    return b


def make_model(**kw):
    kw.setdefault("embed_dim", 8)
    kw.setdefault("hidden_dim", 6)
    kw.setdefault("dropout", 0.0)
    return Model(VOCAB.size, **kw)


class TestAblationSwitches:
    def test_no_shallow_forces_alpha_zero(self):
        assert make_model(alpha=0.3, no_shallow=True).alpha == 0.0
        assert make_model(alpha=0.3).alpha == 0.3

    def test_no_deep_forces_beta_zero(self):
        assert make_model(beta=0.4, no_deep=True).beta == 0.0
        assert make_model(beta=0.4).beta == 0.4


class TestLossShape:
    def test_breakdown_components(self):
        model = make_model()
        breakdown = model.loss(full_batch())
        record = breakdown.to_record()
        assert set(record) == {"j_ae", "j_sc", "js", "total"}
        assert record["j_ae"] > 0.0
        assert record["j_sc"] > 0.0
        assert 0.0 <= record["js"] <= np.log(2) + 1e-9
        assert record["total"] == pytest.approx(
            record["j_ae"] + record["j_sc"] + 0.1 * record["js"], abs=1e-12
        )

    def test_aspect_free_batch_has_only_boundary_loss(self):
        model = make_model()
        (b,) = batch([EXAMPLES[2]], VOCAB, batch_size=1)
        record = model.loss(b).to_record()
        assert record["j_sc"] == 0.0
        assert record["js"] == 0.0
        assert record["total"] == record["j_ae"]

    def test_deterministic_across_instances(self):
        b = full_batch()
        r1 = make_model(seed=5).loss(b).to_record()
        r2 = make_model(seed=5).loss(b).to_record()
        assert r1 == r2
        r3 = make_model(seed=6).loss(b).to_record()
        assert r1 != r3


class TestBatchedAgainstPerCase:
    def test_attention_matches_single_span_path(self):
        model = make_model()
        b = full_batch()
        feats = model._features(b, train=False)
        items = [(1, 0, 1, 0)]
        att, ctx = model._attend(feats.sentiment, b.mask, items)

        row_feats = ad.as_tensor(feats.sentiment.data[1])
        dist, context = aspect_attention(
            row_feats, (0, 1), b.mask[1], hops=model.attention_hops
        )
        np.testing.assert_allclose(att.data[0], dist.weights.data, atol=1e-9)
        np.testing.assert_allclose(ctx.data[0], context.data, atol=1e-9)

    def test_divergence_matches_scalar_js(self):
        model = make_model()
        (b,) = batch([EXAMPLES[0]], VOCAB, batch_size=1)
        state = model.forward_state(b)
        got = float(
            model._divergence(
                state.aspect_dist, state.sentence_attention, state.has_aspect
            ).data
        )
        e_row = state.aspect_dist.normalized.data[0]
        a_row = state.sentence_attention.data[0]
        want = float(js_divergence(e_row, a_row).data)
        assert got == pytest.approx(want, abs=1e-9)

    def test_boundary_loss_matches_per_row_mean(self):
        model = make_model()
        b = full_batch()
        feats = model._features(b, train=False)
        scores = boundary_scores(feats.aspect, model.v_start, model.v_end)
        batched = float(
            boundary_loss(scores, b.start_targets, b.end_targets, b.mask).data
        )
        per_row = []
        for r in range(len(b)):
            row_scores = boundary_scores(
                ad.as_tensor(feats.aspect.data[r]), model.v_start, model.v_end
            )
            per_row.append(
                float(
                    boundary_loss(
                        row_scores, b.start_targets[r], b.end_targets[r], b.mask[r]
                    ).data
                )
            )
        assert batched == pytest.approx(float(np.mean(per_row)), abs=1e-9)


class TestMaskedBatchInvariant:
    def test_batch_loss_recombines_from_single_example_losses(self):
        # padding must be inert: the padded-batch components equal the
        # same quantities recombined from one-example batches, with each
        # component put back under its own averaging convention
        model = make_model()
        b = full_batch()
        whole = model.loss(b).to_record()

        parts = []
        for ex in EXAMPLES:
            (single,) = batch([ex], VOCAB, batch_size=1)
            parts.append(model.loss(single).to_record())

        n_aspects = [len(ex.aspects) for ex in EXAMPLES]
        j_ae = float(np.mean([p["j_ae"] for p in parts]))
        j_sc = sum(p["j_sc"] * k for p, k in zip(parts, n_aspects)) / sum(n_aspects)
        with_aspects = [p for p, k in zip(parts, n_aspects) if k]
        js = float(np.mean([p["js"] for p in with_aspects]))

        assert whole["j_ae"] == pytest.approx(j_ae, abs=1e-9)
        assert whole["j_sc"] == pytest.approx(j_sc, abs=1e-9)
        assert whole["js"] == pytest.approx(js, abs=1e-9)


class TestGradients:
    def test_finite_difference_with_both_interactions(self):
        config = TrainConfig(embed_dim=6, hidden_dim=4, dropout=0.0, alpha=0.1, beta=0.1)
        (b,) = batch(EXAMPLES[:2], VOCAB, batch_size=2)
        assert model_grad_check(config, b, vocab_size=VOCAB.size) < 1e-4

    def test_finite_difference_without_interactions(self):
        config = TrainConfig(
            embed_dim=6, hidden_dim=4, dropout=0.0, no_shallow=True, no_deep=True
        )
        (b,) = batch(EXAMPLES[:2], VOCAB, batch_size=2)
        assert model_grad_check(config, b, vocab_size=VOCAB.size) < 1e-4

    def test_error_value_is_reproducible(self):
        config = TrainConfig(embed_dim=6, hidden_dim=4, dropout=0.0)
        (b,) = batch(EXAMPLES[:2], VOCAB, batch_size=2)
        first = model_grad_check(config, b, vocab_size=VOCAB.size)
        assert model_grad_check(config, b, vocab_size=VOCAB.size) == first


class TestTwoWayCoupling:
    def test_divergence_alone_reaches_both_heads(self):
        model = make_model(alpha=0.0, beta=0.1)
        b = full_batch()
        breakdown = model.loss(b)
        model.params.zero_grads()
        (model.beta * breakdown.divergence).backward()
        assert np.any(model.params["boundary.start"].grad != 0.0)
        assert np.any(model.params["boundary.end"].grad != 0.0)
        assert np.any(model.params["sentiment.w_in"].grad != 0.0)

    def test_beta_zero_total_has_no_divergence_contribution(self):
        model = make_model(beta=0.0)
        b = full_batch()
        breakdown = model.loss(b)

        model.params.zero_grads()
        breakdown.total.backward()
        with_total = {n: t.grad.copy() for n, t in model.params.items()}

        model.params.zero_grads()
        (breakdown.aspect + breakdown.sentiment).backward()
        for name, t in model.params.items():
            np.testing.assert_array_equal(t.grad, with_total[name], err_msg=name)


class TestInference:
    def test_predict_batch_structure(self):
        model = make_model()
        b = full_batch()
        per_row = model.predict_batch(b)
        assert len(per_row) == len(EXAMPLES)
        for row, spans in enumerate(per_row):
            n = b.lengths[row]
            for s in spans:
                assert 0 <= s.start <= s.end < n
                assert s.polarity in ("positive", "negative", "neutral")
                assert s.end - s.start + 1 <= model.max_span_len

    def test_predict_deterministic(self):
        b = full_batch()
        runs = []
        for _ in range(2):
            spans = make_model(seed=2).predict_batch(b)
            runs.append([[(s.span, s.polarity, s.score) for s in row] for row in spans])
        assert runs[0] == runs[1]

    def test_classify_gold_grouping(self):
        model = make_model()
        b = full_batch()
        grouped = model.classify_gold(b)
        assert [len(g) for g in grouped] == [1, 1, 0, 2]
        assert grouped[0][0][0] == (1, 1)
        assert grouped[3][1][0] == (4, 4)
        for spans in grouped:
            for (_, label) in spans:
                assert label in ("positive", "negative", "neutral")

    def test_classify_gold_empty_batch_rows(self):
        model = make_model()
        (b,) = batch([EXAMPLES[2]], VOCAB, batch_size=1)
        assert model.classify_gold(b) == [[]]
