"""Named trainable parameters, deterministic initialization, and grad checks."""

from __future__ import annotations

import hashlib
from typing import Callable, Iterator

import numpy as np

from .tensor import ContractError, NumericError, Tensor, backward, np_dtype


def _named_seed(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class Parameter:
    """A named tensor with a persistent gradient accumulator."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, array: np.ndarray):
        self.name = name
        self.value = Tensor(array, requires_grad=True)

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def grad(self) -> np.ndarray:
        return self.value.grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def count(self) -> int:
        return self.value.size

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


class ParameterStore:
    """Ordered name -> Parameter map plus the run's split-by-name RNG.

    Iteration order is insertion order, so two identically configured builds
    produce identical parameter layouts and identical checkpoints.
    """

    def __init__(self, seed: int = 0, dtype: str = "f64"):
        self.seed = seed
        self.dtype = dtype
        self._params: dict[str, Parameter] = {}
        self._rngs: dict[str, np.random.Generator] = {}

    def create(self, name: str, array: np.ndarray) -> Parameter:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        p = Parameter(name, np.ascontiguousarray(array, dtype=np_dtype(self.dtype)))
        self._params[name] = p
        return p

    def rng(self, name: str) -> np.random.Generator:
        """Stateful generator split off the store seed by name, cached."""
        if name not in self._rngs:
            self._rngs[name] = _named_seed(self.seed, name)
        return self._rngs[name]

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def total_count(self) -> int:
        return sum(p.count for p in self)

    def zero_grads(self) -> None:
        for p in self:
            p.value.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self}

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self:
            src = arrays[p.name]
            if src.shape != p.shape:
                raise ContractError(f"restore: shape mismatch for {p.name}: {src.shape} vs {p.shape}")
            p.data[...] = src


# ---------------------------------------------------------------------------
# initializers


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Orthogonal columns via QR; for non-square, rows of a larger square."""
    n = max(shape)
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q[: shape[0], : shape[1]]


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(
    f: Callable[[ParameterStore], Tensor],
    store: ParameterStore,
    eps: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    Checks every coordinate of every parameter in the store, so callers use
    desk-scale stores. `f` must be deterministic given the store (dropout off).
    """
    store.zero_grads()
    out = f(store)
    if out.data.size != 1:
        raise ContractError(f"grad_check: f must return a scalar, got shape {out.shape}")
    backward(out)
    analytic = {p.name: p.grad.copy() for p in store}

    worst = 0.0
    for p in store:
        if np.isnan(analytic[p.name]).any():
            raise NumericError(f"grad_check: NaN in analytic gradient of {p.name!r}")
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f(store).data)
            flat[i] = orig - eps
            f_minus = float(f(store).data)
            flat[i] = orig
            if np.isnan(f_plus) or np.isnan(f_minus):
                raise NumericError(f"grad_check: NaN while perturbing {p.name!r}[{i}]")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[p.name].reshape(-1)[i]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            if rel > worst:
                worst = rel
    return worst
