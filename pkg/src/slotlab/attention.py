"""Multi-head context attention with a shared trainable query, plus variants.

The default variant scores each key position with one trainable query vector
per head against the projected token plus a learned clipped relative-distance
embedding, then masks the current position so a token's own identity cannot
leak into its attention output. Ablation variants swap the shared query for a
per-position query projection (self_rel), and additionally drop the relative
embeddings in favour of sinusoidal absolute positions (self_abs). A sigmoid
gate blends the attention output with the word embedding afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .layers import dropout, make_dense
from .params import ParameterStore, glorot_uniform
from .tensor import ConfigError, DimensionError, Tensor

VARIANTS = ("abstract_rel", "self_rel", "self_abs", "none")


@dataclass
class AttentionConfig:
    num_heads: int = 4
    head_size: int = 128
    d_model: int = 256
    max_relative_distance: int = 8
    attention_dropout: float = 0.1
    variant: str = "abstract_rel"
    mask_current: bool | None = None  # None: on for abstract_rel, off otherwise

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown attention variant {self.variant!r}")
        for field in ("num_heads", "head_size", "d_model", "max_relative_distance"):
            if getattr(self, field) < 1:
                raise ConfigError(f"{field} must be positive")

    @property
    def masks_current(self) -> bool:
        if self.mask_current is None:
            return self.variant == "abstract_rel"
        return self.mask_current


def relative_index(i: int, j: int, max_distance: int) -> int:
    """Bucket of the signed offset j - i, clipped to [-R, R], shifted to [0, 2R]."""
    return int(np.clip(j - i, -max_distance, max_distance)) + max_distance


@lru_cache(maxsize=256)
def _bucket_matrix(length: int, max_distance: int) -> np.ndarray:
    offs = np.arange(length)
    return np.clip(offs[None, :] - offs[:, None], -max_distance, max_distance) + max_distance


@lru_cache(maxsize=64)
def sinusoid_table(length: int, dim: int) -> np.ndarray:
    """Standard fixed sin/cos position encodings, [length, dim]."""
    pos = np.arange(length)[:, None].astype(np.float64)
    idx = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / dim)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table


class ContextAttention:
    """Attention over word embeddings [*, T, d_model]; see module docstring."""

    def __init__(self, store: ParameterStore, cfg: AttentionConfig, num_blocks: int = 1, prefix: str = "attention"):
        self.store = store
        self.cfg = cfg
        self.prefix = prefix
        if cfg.variant == "none":
            return
        width = cfg.num_heads * cfg.head_size
        rng = store.rng(prefix + ".init")
        if cfg.variant == "abstract_rel":
            self.query = store.create(prefix + ".query", glorot_uniform(rng, (cfg.num_heads, cfg.head_size)))
        else:
            self.query_proj = make_dense(
                store, prefix + ".query_proj", cfg.d_model, width, use_bias=False, num_blocks=num_blocks
            )
        self.key_proj = make_dense(store, prefix + ".key", cfg.d_model, width, use_bias=False, num_blocks=num_blocks)
        self.value_proj = make_dense(
            store, prefix + ".value", cfg.d_model, width, use_bias=False, num_blocks=num_blocks
        )
        self.out_proj = make_dense(store, prefix + ".out", width, cfg.d_model, use_bias=False, num_blocks=num_blocks)
        if cfg.variant in ("abstract_rel", "self_rel"):
            scale = 1.0 / np.sqrt(cfg.head_size)
            self.rel_embed = store.create(
                prefix + ".rel_embed",
                rng.uniform(-scale, scale, size=(2 * cfg.max_relative_distance + 1, cfg.head_size)),
            )

    def _mask(self, batch: int, length: int, lengths: np.ndarray, dtype) -> np.ndarray:
        """Additive mask [batch, 1, length, length]: -inf on padded keys and,
        when configured, on the current position."""
        cols = np.arange(length)
        pad = cols[None, None, None, :] >= lengths[:, None, None, None]
        m = np.where(pad, -np.inf, 0.0).astype(dtype)
        if self.cfg.masks_current:
            diag = np.where(np.eye(length, dtype=bool), -np.inf, 0.0).astype(dtype)
            m = m + diag
        return m

    def attend_batch(self, E: Tensor, lengths: np.ndarray, training: bool = False) -> tuple[Tensor, Tensor]:
        """E [B, T, d_model] padded -> (A [B, T, d_model], probs [B, heads, T, T])."""
        cfg = self.cfg
        B, length, _ = E.shape
        if cfg.variant == "none":
            zeros = T.constant(np.zeros((B, length, cfg.d_model), dtype=E.data.dtype))
            probs = T.constant(np.zeros((B, cfg.num_heads, length, length), dtype=E.data.dtype))
            return zeros, probs

        h, d = cfg.num_heads, cfg.head_size
        if cfg.variant == "self_abs":
            E = E + T.constant(sinusoid_table(length, cfg.d_model).astype(E.data.dtype))
        K4 = T.reshape(self.key_proj(E), (B, length, h, d))
        V4 = T.reshape(self.value_proj(E), (B, length, h, d))

        if cfg.variant == "abstract_rel":
            content = T.reshape(T.einsum2("bjhd,hd->bhj", K4, self.query.value), (B, h, 1, length))
            rel_by_head = T.transpose(T.einsum2("rd,hd->hr", self.rel_embed.value, self.query.value), (1, 0))
            gathered = T.reshape(
                T.take_rows(rel_by_head, _bucket_matrix(length, cfg.max_relative_distance).ravel()),
                (length, length, h),
            )
            scores = content + T.transpose(gathered, (2, 0, 1))
        else:
            Q4 = T.reshape(self.query_proj(E), (B, length, h, d))
            scores = T.einsum2("bihd,bjhd->bhij", Q4, K4)
            if cfg.variant == "self_rel":
                rel = T.reshape(
                    T.take_rows(self.rel_embed.value, _bucket_matrix(length, cfg.max_relative_distance).ravel()),
                    (length, length, d),
                )
                scores = scores + T.einsum2("bihd,ijd->bhij", Q4, rel)

        scores = scores * (1.0 / np.sqrt(d))
        scores = scores + T.constant(self._mask(B, length, lengths, E.data.dtype))
        probs = T.softmax_lastdim(scores, all_masked_ok=True)
        used = dropout(probs, cfg.attention_dropout, training, self.store.rng(self.prefix + ".dropout"))
        ctx = T.reshape(T.einsum2("bhij,bjhd->bihd", used, V4), (B, length, h * d))
        return self.out_proj(ctx), probs

    def attend(self, E: Tensor, training: bool = False) -> tuple[Tensor, Tensor]:
        """E [T, d_model] -> (A [T, d_model], probs [heads, T, T])."""
        length = E.shape[0]
        E3 = T.reshape(E, (1,) + E.shape)
        A3, probs = self.attend_batch(E3, np.array([length]), training)
        return T.reshape(A3, E.shape), T.reshape(probs, probs.shape[1:])


class FusionGate:
    """Sigmoid gate g = dense([A; E]); output g*E + (1-g)*A."""

    def __init__(self, store: ParameterStore, d_model: int, num_blocks: int = 1, prefix: str = "gate"):
        self.d_model = d_model
        self.layer = make_dense(store, prefix, 2 * d_model, d_model, activation="sigmoid", num_blocks=num_blocks)

    def fuse(self, A: Tensor, E: Tensor) -> Tensor:
        if A.shape != E.shape:
            raise DimensionError(f"gate_fuse: shapes differ, {A.shape} vs {E.shape}")
        g = self.layer(T.concat([A, E], axis=-1))
        return g * E + (1.0 - g) * A


def gate_fuse(A: Tensor, E: Tensor, gate: FusionGate) -> Tensor:
    return gate.fuse(A, E)
