"""Exact-match evaluation: joint span+polarity F1, span-only F1, and
polarity accuracy over gold spans.

All counts are micro-averaged over the corpus.  Predictions and golds are
keyed by sentence id; a prediction for an id the gold corpus does not
contain is a caller error, not a false positive.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


@dataclass
class PRF:
    """Micro precision/recall/F1 counts for one matching criterion."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self):
        predicted = self.tp + self.fp
        return self.tp / predicted if predicted else 0.0

    @property
    def recall(self):
        gold = self.tp + self.fn
        return self.tp / gold if gold else 0.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0.0 else 0.0


@dataclass
class MetricReport:
    joint: PRF
    ae: PRF
    sc_correct: int
    sc_total: int

    @property
    def sc_accuracy(self):
        return self.sc_correct / self.sc_total if self.sc_total else 1.0

    def to_record(self):
        return {
            "joint": {"p": self.joint.precision, "r": self.joint.recall, "f1": self.joint.f1},
            "ae": {"p": self.ae.precision, "r": self.ae.recall, "f1": self.ae.f1},
            "sc_acc": self.sc_accuracy,
        }

    def table(self):
        lines = [
            "task    precision  recall     f1",
            f"joint   {self.joint.precision:9.4f}  {self.joint.recall:6.4f}  {self.joint.f1:6.4f}",
            f"spans   {self.ae.precision:9.4f}  {self.ae.recall:6.4f}  {self.ae.f1:6.4f}",
            f"polarity accuracy over gold spans: {self.sc_accuracy:.4f} "
            f"({self.sc_correct}/{self.sc_total})",
        ]
        return "\n".join(lines)


def _gold_map(golds):
    """Accept a list of SentenceExample or a ready id -> example mapping."""
    if isinstance(golds, dict):
        return golds
    return {ex.id: ex for ex in golds}


def _pred_triple(span):
    if isinstance(span, tuple):
        return span
    return (span.start, span.end, span.polarity)


def _count(predictions, golds, keep):
    gold_map = _gold_map(golds)
    for sid in predictions:
        if sid not in gold_map:
            raise ValueError(f"prediction for unknown sentence id {sid!r}")
    counts = PRF()
    for sid, ex in gold_map.items():
        pred = Counter(keep(_pred_triple(s)) for s in predictions.get(sid, []))
        gold = Counter(keep((a.start, a.end, a.polarity)) for a in ex.aspects)
        tp = sum((pred & gold).values())
        counts.tp += tp
        counts.fp += sum(pred.values()) - tp
        counts.fn += sum(gold.values()) - tp
    return counts


def joint_f1(predictions, golds):
    """Exact (start, end, polarity) matching; micro counts."""
    return _count(predictions, golds, keep=lambda t: t)


def ae_f1(predictions, golds):
    """Exact (start, end) matching, polarity ignored."""
    return _count(predictions, golds, keep=lambda t: t[:2])


def _sc_counts(polarity_predictions, golds):
    gold_map = _gold_map(golds)
    for sid in polarity_predictions:
        if sid not in gold_map:
            raise ValueError(f"prediction for unknown sentence id {sid!r}")
    correct = total = 0
    for sid, ex in gold_map.items():
        preds = polarity_predictions.get(sid, {})
        if not isinstance(preds, dict):
            preds = dict(preds)
        for a in ex.aspects:
            total += 1
            if preds.get((a.start, a.end)) == a.polarity:
                correct += 1
    return correct, total


def sc_accuracy(polarity_predictions, golds):
    """Fraction of gold aspects whose predicted polarity matches.

    ``polarity_predictions`` maps sentence id to a {(start, end): polarity}
    mapping (or an iterable of ((start, end), polarity) pairs).  A gold
    span with no prediction counts as incorrect.  Vacuously 1.0 when the
    corpus has no aspects.
    """
    correct, total = _sc_counts(polarity_predictions, golds)
    return correct / total if total else 1.0


def evaluate(predictions, golds, polarity_predictions=None):
    """Full report over one corpus.

    ``predictions`` holds decoded spans per sentence id; the optional
    ``polarity_predictions`` carries gold-span polarity decisions for the
    accuracy column (without it, accuracy falls back to reading polarities
    off exact span matches in ``predictions``).
    """
    if polarity_predictions is None:
        polarity_predictions = {}
        for sid, spans in predictions.items():
            triples = [_pred_triple(s) for s in spans]
            polarity_predictions[sid] = {(s, e): pol for s, e, pol in triples}
    joint = joint_f1(predictions, golds)
    ae = ae_f1(predictions, golds)
    correct, total = _sc_counts(polarity_predictions, golds)
    return MetricReport(joint=joint, ae=ae, sc_correct=correct, sc_total=total)
