"""Dense, block-diagonal dense, and dropout layers.

The block-diagonal layer stores only the diagonal blocks of its kernel
(1/num_blocks of the full weight count) and computes the forward pass as a
batched per-block contraction over the feature axis split into contiguous
chunks, which is exactly multiplication by the expanded block-diagonal
matrix.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParameterStore, glorot_uniform
from .tensor import ConfigError, Tensor

ACTIVATIONS = {
    "none": lambda x: x,
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
    "relu": T.relu,
}


def _check_activation(activation: str) -> None:
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")


class DenseLayer:
    """Affine map x @ kernel + bias followed by an optional activation."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_dim: int,
        out_dim: int,
        activation: str = "none",
        use_bias: bool = True,
    ):
        _check_activation(activation)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.kernel = store.create(name + ".kernel", glorot_uniform(store.rng(name + ".kernel"), (in_dim, out_dim)))
        self.bias = store.create(name + ".bias", np.zeros(out_dim)) if use_bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise T.DimensionError(f"dense: input last dim {x.shape} does not match kernel {self.kernel.shape}")
        out = T.matmul(x, self.kernel.value)
        if self.bias is not None:
            out = out + self.bias.value
        return ACTIVATIONS[self.activation](out)

    @property
    def param_count(self) -> int:
        return self.kernel.count + (self.bias.count if self.bias is not None else 0)


class BlockDiagonalDenseLayer:
    """Dense layer whose kernel is nonzero only in num_blocks diagonal blocks.

    The input feature axis is split into num_blocks contiguous chunks; chunk i
    is multiplied by block kernel i and the outputs are laid out contiguously
    again, so the result equals x @ expand(blocks) + bias where expand places
    the blocks on the diagonal of an otherwise-zero [in_dim, out_dim] matrix.
    Only the blocks are stored: in_dim*out_dim/num_blocks kernel weights.
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_dim: int,
        out_dim: int,
        num_blocks: int,
        activation: str = "none",
        use_bias: bool = True,
    ):
        _check_activation(activation)
        if num_blocks < 1:
            raise ConfigError(f"num_blocks must be positive, got {num_blocks}")
        if in_dim % num_blocks or out_dim % num_blocks:
            raise ConfigError(
                f"block dense {name!r}: dims ({in_dim}, {out_dim}) not divisible by num_blocks={num_blocks}"
            )
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.num_blocks = num_blocks
        self.activation = activation
        m, n = in_dim // num_blocks, out_dim // num_blocks
        rng = store.rng(name + ".kernel")
        blocks = np.stack([glorot_uniform(rng, (m, n)) for _ in range(num_blocks)])
        self.block_kernels = store.create(name + ".blocks", blocks)
        self.bias = store.create(name + ".bias", np.zeros(out_dim)) if use_bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise T.DimensionError(f"block dense: input last dim {x.shape} does not match in_dim {self.in_dim}")
        lead = x.shape[:-1]
        k = self.num_blocks
        if k == 1:
            out = T.matmul(x, T.reshape(self.block_kernels.value, (self.in_dim, self.out_dim)))
        else:
            flat = T.reshape(x, (-1, k, self.in_dim // k))
            out = T.einsum2("bkm,kmn->bkn", flat, self.block_kernels.value)
            out = T.reshape(out, lead + (self.out_dim,))
        if self.bias is not None:
            out = out + self.bias.value
        return ACTIVATIONS[self.activation](out)

    @property
    def param_count(self) -> int:
        return self.block_kernels.count + (self.bias.count if self.bias is not None else 0)


def make_dense(
    store: ParameterStore,
    name: str,
    in_dim: int,
    out_dim: int,
    activation: str = "none",
    use_bias: bool = True,
    num_blocks: int = 1,
) -> DenseLayer | BlockDiagonalDenseLayer:
    """Dense or block-diagonal dense, selected by num_blocks > 1."""
    if num_blocks > 1:
        return BlockDiagonalDenseLayer(store, name, in_dim, out_dim, num_blocks, activation, use_bias)
    return DenseLayer(store, name, in_dim, out_dim, activation, use_bias)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: identity at inference, kept units scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * T.constant(keep, like=x)
