"""Full network assembly, configuration, parameter accounting, checkpoints.

Pipeline per utterance: char-LSTM word embeddings E -> context attention A ->
sigmoid gate fusing A with E -> CRF over the fused features. The crf_only
ablation (variant "none") skips the attention and gate entirely and runs the
CRF directly over the word embeddings, so its parameter count reflects what
it actually trains.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, ContextAttention, FusionGate
from .charlstm import CharLstmEncoder, CharVocab
from .crf import CrfHead, TagSet, crf_nll, crf_nll_batch, spans_from_bio, viterbi_decode
from .data import SlotSpan, Utterance, bio_from_spans
from .params import ParameterStore
from .tensor import ConfigError, ContractError, Tensor

CHECKPOINT_FORMAT_VERSION = 1
VARIANTS = ("abstract_rel", "self_rel", "self_abs", "none")


@dataclass
class ModelConfig:
    char_embed_dim: int = 512
    lstm_units: int = 128
    d_model: int = 256
    num_heads: int = 4
    head_size: int = 128
    num_blocks: int = 8
    dropout: float = 0.1
    attention_dropout: float = 0.1
    weight_decay: float = 0.01
    variant: str = "abstract_rel"
    use_block_dense: bool = False
    mask_current: bool | None = None
    max_relative_distance: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    dtype: str = "f64"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.dtype not in ("f32", "f64"):
            raise ConfigError(f"dtype must be 'f32' or 'f64', got {self.dtype!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path) -> "ModelConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(
            num_heads=self.num_heads,
            head_size=self.head_size,
            d_model=self.d_model,
            max_relative_distance=self.max_relative_distance,
            attention_dropout=self.attention_dropout,
            variant=self.variant,
            mask_current=self.mask_current,
        )


class SlotModel:
    """The assembled network over a frozen vocabulary and tagset."""

    def __init__(self, config: ModelConfig, vocab: CharVocab, tagset: TagSet):
        self.config = config
        self.vocab = vocab
        self.tagset = tagset
        self.store = ParameterStore(seed=config.seed, dtype=config.dtype)
        blocks = config.num_blocks if config.use_block_dense else 1
        self.encoder = CharLstmEncoder(
            self.store,
            vocab.size,
            config.char_embed_dim,
            config.lstm_units,
            config.d_model,
            num_blocks=blocks,
        )
        if config.variant == "none":
            self.attention = None
            self.gate = None
        else:
            self.attention = ContextAttention(self.store, config.attention_config(), num_blocks=blocks)
            self.gate = FusionGate(self.store, config.d_model, num_blocks=blocks)
        self.crf = CrfHead(self.store, config.d_model, tagset.size)

    # ------------------------------------------------------------------
    # forward paths

    def word_ids(self, utt: Utterance) -> list[list[int]]:
        return [self.vocab.encode(w) for w in utt.words]

    def features(self, utt: Utterance, training: bool = False) -> Tensor:
        """Fused features [T, d_model] feeding the CRF."""
        if len(utt.tokens) < 1:
            raise ContractError("cannot encode an utterance with no tokens")
        E = self.encoder.encode_utterance(self.word_ids(utt), self.config.dropout, training)
        if self.attention is None:
            return E
        A, _ = self.attention.attend(E, training)
        return self.gate.fuse(A, E)

    def features_batch(self, utts: Sequence[Utterance], training: bool = False) -> tuple[Tensor, np.ndarray]:
        """Padded fused features [B, Tmax, d_model] plus true lengths."""
        lengths = np.array([len(u.tokens) for u in utts])
        if lengths.min() < 1:
            raise ContractError("cannot encode an utterance with no tokens")
        all_words = [ids for u in utts for ids in self.word_ids(u)]
        flat = self.encoder.encode_utterance(all_words, self.config.dropout, training)
        t_max = int(lengths.max())
        d = self.config.d_model
        rows = []
        offset = 0
        for n in lengths:
            piece = T.narrow(flat, 0, offset, int(n))
            if n < t_max:
                pad = T.constant(np.zeros((t_max - int(n), d), dtype=flat.data.dtype))
                piece = T.concat([piece, pad], axis=0)
            rows.append(T.reshape(piece, (1, t_max, d)))
            offset += int(n)
        E3 = T.concat(rows, axis=0) if len(rows) > 1 else rows[0]
        if self.attention is None:
            return E3, lengths
        A3, _ = self.attention.attend_batch(E3, lengths, training)
        return self.gate.fuse(A3, E3), lengths

    def loss(self, utts: Sequence[Utterance], training: bool = True) -> Tensor:
        """Mean CRF negative log-likelihood over a batch of utterances."""
        if not utts:
            raise ContractError("loss: empty batch")
        H3, lengths = self.features_batch(utts, training)
        t_max = int(lengths.max())
        gold = np.zeros((len(utts), t_max), dtype=np.int64)
        for b, u in enumerate(utts):
            gold[b, : len(u.tokens)] = bio_from_spans(u, self.tagset)
        return T.reduce_mean(crf_nll_batch(H3, gold, lengths, self.crf))

    def nll(self, utt: Utterance) -> Tensor:
        return T.reshape(crf_nll(self.features(utt), bio_from_spans(utt, self.tagset), self.crf), ())

    # ------------------------------------------------------------------
    # decoding

    def predict_tags(self, utt: Utterance) -> list[int]:
        em = self.crf.emission(self.features(utt, training=False)).data
        tags, _ = viterbi_decode(em, self.crf.transitions.data, self.crf.start.data, self.crf.end.data)
        return tags

    def predict(self, utt: Utterance) -> list[SlotSpan]:
        return spans_from_bio(self.predict_tags(utt), self.tagset)

    def predict_batch(self, utts: Sequence[Utterance]) -> list[list[SlotSpan]]:
        if not utts:
            return []
        H3, lengths = self.features_batch(utts, training=False)
        em3 = self.crf.emission(H3).data
        out = []
        for b, n in enumerate(lengths):
            tags, _ = viterbi_decode(
                em3[b, : int(n)], self.crf.transitions.data, self.crf.start.data, self.crf.end.data
            )
            out.append(spans_from_bio(tags, self.tagset))
        return out


# ---------------------------------------------------------------------------
# parameter accounting (pure arithmetic, mirrors SlotModel construction)


def count_parameters(config: ModelConfig, char_vocab_size: int, num_tags: int) -> dict[str, int]:
    """Stored-trainable counts per component plus 'total'.

    With use_block_dense, the large kernels (both LSTM kernels, the attention
    query/key/value/output projections, and the gate) store 1/num_blocks of
    their full weights; the word projection and the CRF emission stay full.
    """
    k = config.num_blocks if config.use_block_dense else 1

    def kernel(in_dim: int, out_dim: int, blocked: bool) -> int:
        if not blocked or k == 1:
            return in_dim * out_dim
        if in_dim % k or out_dim % k:
            raise ConfigError(f"kernel ({in_dim}, {out_dim}) not divisible by num_blocks={k}")
        return in_dim * out_dim // k

    e, h, d = config.char_embed_dim, config.lstm_units, config.d_model
    width = config.num_heads * config.head_size
    counts = {
        "char_embed": char_vocab_size * e,
        "char_lstm": kernel(e, 4 * h, True) + kernel(h, 4 * h, True) + 4 * h,
        "word_proj": h * d + d,
    }
    if config.variant == "none":
        counts["attention"] = 0
        counts["gate"] = 0
    else:
        attn = kernel(d, width, True) * 2 + kernel(width, d, True)
        if config.variant == "abstract_rel":
            attn += config.num_heads * config.head_size
        else:
            attn += kernel(d, width, True)
        if config.variant in ("abstract_rel", "self_rel"):
            attn += (2 * config.max_relative_distance + 1) * config.head_size
        counts["attention"] = attn
        counts["gate"] = kernel(2 * d, d, True) + d
    counts["crf"] = d * num_tags + num_tags + num_tags * num_tags + 2 * num_tags
    counts["total"] = sum(counts.values())
    return counts


def parameter_reduction(config: ModelConfig, char_vocab_size: int, num_tags: int) -> tuple[int, int, float]:
    """(full-dense total, block-dense total, reduction factor)."""
    full = count_parameters(
        ModelConfig.from_dict({**config.to_dict(), "use_block_dense": False}), char_vocab_size, num_tags
    )["total"]
    blocked = count_parameters(
        ModelConfig.from_dict({**config.to_dict(), "use_block_dense": True}), char_vocab_size, num_tags
    )["total"]
    return full, blocked, full / blocked


# ---------------------------------------------------------------------------
# checkpoints: a JSON manifest plus one little-endian binary blob


class Checkpoint:
    """Bit-exact persisted model: config, vocab, tagset, parameter arrays."""

    def __init__(self, config: ModelConfig, vocab: CharVocab, tagset: TagSet, arrays: dict[str, np.ndarray]):
        self.config = config
        self.vocab = vocab
        self.tagset = tagset
        self.arrays = dict(arrays)

    @classmethod
    def from_model(cls, model: SlotModel) -> "Checkpoint":
        return cls(model.config, model.vocab, model.tagset, model.store.snapshot())

    def build_model(self) -> SlotModel:
        model = SlotModel(self.config, self.vocab, self.tagset)
        model.store.restore(self.arrays)
        return model

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        dtype_code = "<f4" if self.config.dtype == "f32" else "<f8"
        index = []
        offset = 0
        chunks = []
        for name, arr in self.arrays.items():
            raw = np.ascontiguousarray(arr).astype(dtype_code, copy=False).tobytes()
            index.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": self.config.dtype})
            chunks.append(raw)
            offset += len(raw)
        manifest = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "endianness": "little",
            "blob_file": "params.bin",
            "config": self.config.to_dict(),
            "tagset": self.tagset.tags,
            "char_vocab": self.vocab.chars,
            "params": index,
        }
        with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, ensure_ascii=False)
        with open(directory / "params.bin", "wb") as fh:
            fh.write(b"".join(chunks))

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        directory = Path(directory)
        with open(directory / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format_version {manifest.get('format_version')!r}")
        config = ModelConfig.from_dict(manifest["config"])
        blob = (directory / manifest.get("blob_file", "params.bin")).read_bytes()
        dtype_code = "<f4" if config.dtype == "f32" else "<f8"
        itemsize = 4 if config.dtype == "f32" else 8
        arrays = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            arr = np.frombuffer(blob, dtype=dtype_code, count=n, offset=start).reshape(shape)
            arrays[entry["name"]] = arr.astype(np.float32 if config.dtype == "f32" else np.float64)
            if itemsize * n + start > len(blob):
                raise ConfigError(f"checkpoint blob truncated at parameter {entry['name']!r}")
        return cls(config, CharVocab(manifest["char_vocab"]), TagSet(manifest["tagset"]), arrays)


def predict(utt: Utterance, checkpoint: Checkpoint) -> list[SlotSpan]:
    """One-shot prediction; build the model once via build_model for batches."""
    return checkpoint.build_model().predict(utt)
