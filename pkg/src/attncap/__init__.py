"""Attentive GRU image captioning on a small reverse-mode autodiff engine."""

from .captioner import CaptionerParams, FeatureGrid, caption_nll, decode_step, encode, generate
from .errors import ContractError, DataError, DimensionError, NumericError
from .estimator import AttentionCaptioner, SkipGramEmbedder
from .metrics import EvalInstance, ScoreReport, score_corpus
from .tensor import Tensor, backward
from .text import Vocabulary, build_vocab, normalize_tokenize
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "AttentionCaptioner",
    "CaptionerParams",
    "ContractError",
    "DataError",
    "DimensionError",
    "EvalInstance",
    "FeatureGrid",
    "NumericError",
    "ScoreReport",
    "SkipGramEmbedder",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "backward",
    "build_vocab",
    "caption_nll",
    "decode_step",
    "encode",
    "generate",
    "normalize_tokenize",
    "score_corpus",
]
