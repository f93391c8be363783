"""Parameter-efficient slot labelling without pretrained language models.

Character-LSTM word embeddings, multi-head relative attention driven by a
shared trainable query with current-position masking, a sigmoid fusion gate,
and a linear-chain CRF — plus block-diagonal dense kernels that store 1/k of
the weights, and a training/evaluation harness for few-shot fractions,
ablations, and unseen-entity substitution.
"""

from .attention import AttentionConfig, ContextAttention, FusionGate, gate_fuse, relative_index
from .charlstm import CharLstmEncoder, CharVocab
from .crf import CrfHead, TagSet, crf_nll, spans_from_bio, viterbi
from .data import (
    DataError,
    DatasetManifest,
    SlotSpan,
    Utterance,
    bio_from_spans,
    fraction_split,
    load_conll,
    load_jsonl,
    save_conll,
    save_jsonl,
    substitute_entities,
    tokenize,
)
from .evaluate import EvalReport, span_f1
from .layers import BlockDiagonalDenseLayer, DenseLayer, dropout
from .model import Checkpoint, ModelConfig, SlotModel, count_parameters, parameter_reduction, predict
from .params import Parameter, ParameterStore, grad_check
from .tensor import Tensor, backward, matmul, softmax_lastdim
from .training import AdamW, train

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AttentionConfig",
    "BlockDiagonalDenseLayer",
    "Checkpoint",
    "CharLstmEncoder",
    "CharVocab",
    "ContextAttention",
    "CrfHead",
    "DataError",
    "DatasetManifest",
    "DenseLayer",
    "EvalReport",
    "FusionGate",
    "ModelConfig",
    "Parameter",
    "ParameterStore",
    "SlotModel",
    "SlotSpan",
    "TagSet",
    "Tensor",
    "Utterance",
    "backward",
    "bio_from_spans",
    "count_parameters",
    "crf_nll",
    "dropout",
    "fraction_split",
    "gate_fuse",
    "grad_check",
    "load_conll",
    "load_jsonl",
    "matmul",
    "parameter_reduction",
    "predict",
    "relative_index",
    "save_conll",
    "save_jsonl",
    "softmax_lastdim",
    "span_f1",
    "spans_from_bio",
    "substitute_entities",
    "tokenize",
    "train",
    "viterbi",
]
