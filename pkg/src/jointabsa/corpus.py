"""Annotated-sentence corpus handling.

Datasets are line-delimited UTF-8 records, one JSON object per line:

    {"tokens": ["I", "love", "it"], "aspects": [{"start": 2, "end": 2,
     "polarity": "positive"}], "id": "r1"}

Token spans are inclusive and 0-based; polarities are the case-sensitive
strings "positive" / "negative" / "neutral".  Records are validated at
ingestion (span bounds, pairwise-disjoint aspects) so downstream code can
assume well-formed examples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

POLARITIES = ("positive", "negative", "neutral")
POLARITY_INDEX = {p: i for i, p in enumerate(POLARITIES)}

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1


class DatasetError(ValueError):
    """Malformed or inconsistent dataset content."""


@dataclass(frozen=True)
class AspectAnnotation:
    """One gold aspect: inclusive token span plus sentiment polarity."""

    start: int
    end: int
    polarity: str

    @property
    def span(self):
        return (self.start, self.end)

    def as_tuple(self):
        return (self.start, self.end, self.polarity)


@dataclass(frozen=True)
class SentenceExample:
    """A tokenized sentence with its gold aspect annotations."""

    tokens: tuple[str, ...]
    aspects: tuple[AspectAnnotation, ...]
    id: str

    def __len__(self):
        return len(self.tokens)


def validate_example(example):
    """Check the span invariants; raises DatasetError naming the record."""
    n = len(example.tokens)
    if n < 1:
        raise DatasetError(f"record {example.id!r}: empty token sequence")
    for a in example.aspects:
        if a.polarity not in POLARITY_INDEX:
            raise DatasetError(f"record {example.id!r}: unknown polarity {a.polarity!r}")
        if not (0 <= a.start <= a.end < n):
            raise DatasetError(
                f"record {example.id!r}: span ({a.start}, {a.end}) out of bounds for length {n}"
            )
    spans = sorted(a.span for a in example.aspects)
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        if s2 <= e1:
            raise DatasetError(
                f"record {example.id!r}: overlapping aspects ({s1}, {e1}) and ({s2}, {e2})"
            )
    return example


def _int_field(obj, key, record_id):
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise DatasetError(f"record {record_id!r}: aspect field {key!r} must be an integer")
    return v


def example_from_record(obj, default_id):
    """Build a validated SentenceExample from a parsed JSON object."""
    if not isinstance(obj, dict):
        raise DatasetError(f"record {default_id!r}: expected an object")
    record_id = obj.get("id", default_id)
    if not isinstance(record_id, str):
        raise DatasetError(f"record {default_id!r}: id must be a string")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise DatasetError(f"record {record_id!r}: tokens must be a list of strings")
    raw_aspects = obj.get("aspects", [])
    if not isinstance(raw_aspects, list):
        raise DatasetError(f"record {record_id!r}: aspects must be a list")
    aspects = []
    for a in raw_aspects:
        if not isinstance(a, dict):
            raise DatasetError(f"record {record_id!r}: each aspect must be an object")
        polarity = a.get("polarity")
        if not isinstance(polarity, str):
            raise DatasetError(f"record {record_id!r}: aspect polarity must be a string")
        aspects.append(
            AspectAnnotation(
                start=_int_field(a, "start", record_id),
                end=_int_field(a, "end", record_id),
                polarity=polarity,
            )
        )
    example = SentenceExample(tokens=tuple(tokens), aspects=tuple(aspects), id=record_id)
    return validate_example(example)


def parse_dataset(path):
    """Read a line-delimited dataset file into validated examples.

    Blank lines are ignored.  Malformed JSON raises DatasetError with the
    1-based line number; invariant violations name the offending record.
    """
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON ({e.msg})") from None
            try:
                examples.append(example_from_record(obj, default_id=f"s{len(examples)}"))
            except DatasetError as e:
                raise DatasetError(f"{path}: line {lineno}: {e}") from None
    return examples


def to_record(example):
    """Serializable dict form of an example (inverse of example_from_record)."""
    return {
        "tokens": list(example.tokens),
        "aspects": [
            {"start": a.start, "end": a.end, "polarity": a.polarity} for a in example.aspects
        ],
        "id": example.id,
    }


def write_dataset(examples, path):
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(to_record(ex)) + "\n")


class Vocabulary:
    """Total token-to-id mapping with reserved padding and unknown ids."""

    def __init__(self, tokens):
        self._id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self._token_to_id = {}
        for i, tok in enumerate(self._id_to_token):
            if tok in self._token_to_id:
                raise DatasetError(f"duplicate vocabulary token {tok!r}")
            self._token_to_id[tok] = i

    @classmethod
    def from_examples(cls, examples):
        seen = {}
        for ex in examples:
            for tok in ex.tokens:
                if tok not in seen and tok not in (PAD_TOKEN, UNK_TOKEN):
                    seen[tok] = None
        return cls(seen.keys())

    def __len__(self):
        return len(self._id_to_token)

    @property
    def size(self):
        return len(self._id_to_token)

    def encode(self, tokens):
        return [self._token_to_id.get(t, UNK_ID) for t in tokens]

    def token(self, idx):
        return self._id_to_token[idx]

    def known_tokens(self):
        """Tokens beyond the two reserved ids, in insertion order."""
        return list(self._id_to_token[2:])


@dataclass
class BoundaryTargets:
    """Multi-hot start/end indicator vectors for one sentence."""

    start: np.ndarray
    end: np.ndarray


def make_boundary_targets(example):
    n = len(example.tokens)
    start = np.zeros(n)
    end = np.zeros(n)
    for a in example.aspects:
        start[a.start] = 1.0
        end[a.end] = 1.0
    return BoundaryTargets(start=start, end=end)


@dataclass
class Batch:
    """A padded batch with its length mask and boundary targets.

    Padded positions carry mask 0 and are excluded from every loss and
    metric downstream.
    """

    examples: list[SentenceExample]
    token_ids: np.ndarray
    mask: np.ndarray
    start_targets: np.ndarray
    end_targets: np.ndarray
    lengths: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.examples)

    @property
    def width(self):
        return self.token_ids.shape[1]


def batch(examples, vocab, batch_size=32):
    """Split examples into consecutive padded batches of at most ``batch_size``."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    batches = []
    for i in range(0, len(examples), batch_size):
        chunk = examples[i : i + batch_size]
        lengths = [len(ex) for ex in chunk]
        width = max(lengths)
        ids = np.full((len(chunk), width), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(chunk), width))
        p_start = np.zeros((len(chunk), width))
        p_end = np.zeros((len(chunk), width))
        for row, ex in enumerate(chunk):
            n = len(ex)
            ids[row, :n] = vocab.encode(ex.tokens)
            mask[row, :n] = 1.0
            targets = make_boundary_targets(ex)
            p_start[row, :n] = targets.start
            p_end[row, :n] = targets.end
        batches.append(
            Batch(
                examples=list(chunk),
                token_ids=ids,
                mask=mask,
                start_targets=p_start,
                end_targets=p_end,
                lengths=lengths,
            )
        )
    return batches
