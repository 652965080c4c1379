"""Scikit-learn style estimator around the joint model.

``fit`` builds a vocabulary from the training sentences and optimizes the
combined objective with Adam, logging one record per epoch and keeping the
parameters from the best epoch on the monitored set.  ``predict`` decodes
polarity-labelled spans for new sentences.  Constructor arguments are
stored verbatim so ``get_params``/``set_params``/``clone`` behave the way
scikit-learn expects.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from . import metrics
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .config import TrainConfig
from .corpus import DatasetError, SentenceExample, Vocabulary, batch, validate_example
from .model import Model

CHECKPOINT_FORMAT = 1


def check_examples(X, name="X"):
    """Validate estimator input: a sequence of SentenceExample with
    pairwise distinct ids.  Returns it as a list."""
    try:
        examples = list(X)
    except TypeError:
        raise TypeError(f"{name} must be a sequence of SentenceExample") from None
    seen = set()
    for ex in examples:
        if not isinstance(ex, SentenceExample):
            raise TypeError(f"{name} must contain SentenceExample items, got {type(ex).__name__}")
        validate_example(ex)
        if ex.id in seen:
            raise DatasetError(f"duplicate sentence id {ex.id!r} in {name}")
        seen.add(ex.id)
    return examples


class JointAspectSentiment(BaseEstimator):
    """Joint aspect-span extraction and polarity classification.

    Parameters mirror the flat training configuration; see TrainConfig for
    ranges.  ``alpha`` mixes the two task feature streams, ``beta`` weights
    the divergence term, and the ``no_shallow``/``no_deep`` switches ablate
    those couplings.
    """

    def __init__(
        self,
        alpha=0.1,
        beta=0.1,
        lr=1e-3,
        batch_size=32,
        epochs=100,
        dropout=0.1,
        embed_dim=64,
        hidden_dim=64,
        attention_hops=2,
        tau_start=0.5,
        tau_end=0.5,
        max_span_len=8,
        seed=0,
        patience=20,
        no_shallow=False,
        no_deep=False,
    ):
        self.alpha = alpha
        self.beta = beta
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout = dropout
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.attention_hops = attention_hops
        self.tau_start = tau_start
        self.tau_end = tau_end
        self.max_span_len = max_span_len
        self.seed = seed
        self.patience = patience
        self.no_shallow = no_shallow
        self.no_deep = no_deep

    # -- construction helpers -------------------------------------------

    def _config(self):
        cfg = TrainConfig(**self.get_params())
        cfg.validate()
        return cfg

    def _build_model(self, vocab_size):
        return Model(
            vocab_size,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            alpha=self.alpha,
            beta=self.beta,
            dropout=self.dropout,
            attention_hops=self.attention_hops,
            tau_start=self.tau_start,
            tau_end=self.tau_end,
            max_span_len=self.max_span_len,
            no_shallow=self.no_shallow,
            no_deep=self.no_deep,
            seed=self.seed,
        )

    # -- training --------------------------------------------------------

    def fit(self, X, y=None, dev=None):
        """Train on annotated sentences.

        ``y`` is ignored (the annotations live on the examples).  ``dev``,
        when given, is the early-stopping and model-selection set;
        otherwise the training set is monitored.  Training stops once the
        monitored joint F1 is perfect or has not improved for ``patience``
        epochs, and the best epoch's parameters are kept.
        """
        cfg = self._config()
        examples = check_examples(X)
        if not examples:
            raise DatasetError("cannot fit on an empty corpus")
        monitored = check_examples(dev, "dev") if dev is not None else examples
        self.vocab_ = Vocabulary.from_examples(examples)
        self.model_ = self._build_model(len(self.vocab_))
        optimizer = ad.Adam(self.model_.params, lr=self.lr)
        shuffle_rng = np.random.default_rng(self.seed)
        eval_batches = batch(monitored, self.vocab_, self.batch_size)
        history = []
        self.n_steps_ = 0
        best_f1 = -1.0
        best_arrays = None
        stale = 0
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(len(examples))
            shuffled = [examples[i] for i in order]
            sums = {"j_ae": 0.0, "j_sc": 0.0, "js": 0.0}
            n_aspects = 0
            n_with_aspects = 0
            for b in batch(shuffled, self.vocab_, self.batch_size):
                self.model_.params.zero_grads()
                breakdown = self.model_.loss(b, train=True)
                total = float(breakdown.total.data)
                if not np.isfinite(total):
                    record = breakdown.to_record()
                    raise FloatingPointError(
                        f"non-finite loss at step {self.n_steps_} (epoch {epoch}): {record}"
                    )
                breakdown.total.backward()
                optimizer.step()
                self.n_steps_ += 1
                k = sum(len(ex.aspects) for ex in b.examples)
                h = sum(1 for ex in b.examples if ex.aspects)
                sums["j_ae"] += float(breakdown.aspect.data) * len(b)
                sums["j_sc"] += float(breakdown.sentiment.data) * k
                sums["js"] += float(breakdown.divergence.data) * h
                n_aspects += k
                n_with_aspects += h
            j_ae = sums["j_ae"] / len(examples)
            j_sc = sums["j_sc"] / n_aspects if n_aspects else 0.0
            js = sums["js"] / n_with_aspects if n_with_aspects else 0.0
            report = self._evaluate_batches(eval_batches)
            record = {
                "epoch": epoch,
                "j_ae": j_ae,
                "j_sc": j_sc,
                "js": js,
                "total": j_ae + j_sc + self.model_.beta * js,
                "dev_f1": report.joint.f1,
                "dev_ae_f1": report.ae.f1,
                "dev_sc_acc": report.sc_accuracy,
            }
            history.append(record)
            if report.joint.f1 > best_f1:
                best_f1 = report.joint.f1
                best_arrays = self.model_.params.copy_arrays()
                stale = 0
            else:
                stale += 1
            if best_f1 >= 1.0 or stale >= self.patience:
                break
        if best_arrays is not None:
            self.model_.params.load_arrays(best_arrays)
        self.history_ = history
        self.n_epochs_ = len(history)
        self.best_f1_ = best_f1
        return self

    # -- inference -------------------------------------------------------

    def predict(self, X):
        """Decoded spans with polarities, one list per input sentence."""
        check_is_fitted(self, "model_")
        examples = check_examples(X)
        out = []
        for b in batch(examples, self.vocab_, self.batch_size):
            out.extend(self.model_.predict_batch(b))
        return out

    def _evaluate_batches(self, batches):
        predictions = {}
        polarity = {}
        golds = {}
        for b in batches:
            for ex, spans, labelled in zip(
                b.examples, self.model_.predict_batch(b), self.model_.classify_gold(b)
            ):
                predictions[ex.id] = spans
                polarity[ex.id] = dict(labelled)
                golds[ex.id] = ex
        return metrics.evaluate(predictions, golds, polarity)

    def evaluate(self, X):
        """MetricReport (joint F1, span F1, polarity accuracy) over X."""
        check_is_fitted(self, "model_")
        examples = check_examples(X)
        return self._evaluate_batches(batch(examples, self.vocab_, self.batch_size))

    def score(self, X, y=None):
        """Joint F1 on X, for scikit-learn model selection."""
        return self.evaluate(X).joint.f1

    # -- persistence -----------------------------------------------------

    def save(self, path):
        """Write parameters plus enough metadata to reload the estimator."""
        check_is_fitted(self, "model_")
        metadata = {
            "format": CHECKPOINT_FORMAT,
            "config": self.get_params(),
            "config_hash": self._config().config_hash(),
            "steps": self.n_steps_,
            "epochs_run": self.n_epochs_,
            "best_f1": self.best_f1_,
            "vocab": self.vocab_.known_tokens(),
            "history": self.history_,
        }
        save_checkpoint(path, self.model_.params, metadata)

    @classmethod
    def load(cls, path):
        """Rebuild a fitted estimator from a checkpoint file."""
        arrays, metadata = load_checkpoint(path)
        if metadata.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {metadata.get('format')!r}")
        est = cls(**metadata["config"])
        est.vocab_ = Vocabulary(metadata["vocab"])
        est.model_ = est._build_model(len(est.vocab_))
        restore_into(est.model_.params, arrays)
        est.history_ = [dict(r) for r in metadata["history"]]
        est.n_steps_ = metadata["steps"]
        est.n_epochs_ = metadata["epochs_run"]
        est.best_f1_ = metadata["best_f1"]
        return est
