"""Joint aspect-span extraction and sentiment classification with
two-level task coupling, on a self-contained float64 autodiff core."""

from .aspect_head import SpanPrediction, decode_spans, pool3
from .config import ConfigError, TrainConfig, parse_config_file, resolve_config
from .corpus import (
    POLARITIES,
    AspectAnnotation,
    DatasetError,
    SentenceExample,
    Vocabulary,
    parse_dataset,
    write_dataset,
)
from .estimator import JointAspectSentiment
from .metrics import MetricReport, ae_f1, evaluate, joint_f1, sc_accuracy
from .model import Model, model_grad_check
from .objective import js_divergence, kl

__version__ = "0.1.0"

__all__ = [
    "AspectAnnotation",
    "ConfigError",
    "DatasetError",
    "JointAspectSentiment",
    "MetricReport",
    "Model",
    "POLARITIES",
    "SentenceExample",
    "SpanPrediction",
    "TrainConfig",
    "Vocabulary",
    "ae_f1",
    "decode_spans",
    "evaluate",
    "joint_f1",
    "js_divergence",
    "kl",
    "model_grad_check",
    "parse_config_file",
    "parse_dataset",
    "pool3",
    "resolve_config",
    "sc_accuracy",
    "write_dataset",
    "__version__",
]
