"""Linear-chain CRF head: emissions, forward-algorithm NLL, Viterbi, spans.

Scores decompose as start[y0] + sum_t emission[t, yt] + sum_t
transition[y_{t-1}, yt] + end[y_last]; the partition function is computed in
log space. No transitions are structurally forbidden; BIO inconsistencies in
decoded paths are repaired when spans are extracted (a dangling I-x opens a
new x span).
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import SlotSpan
from .layers import make_dense
from .params import ParameterStore
from .tensor import ContractError, Tensor


class TagSet:
    """Ordered BIO tags: index 0 is "O", then B-x, I-x per slot type."""

    def __init__(self, tags: Sequence[str]):
        tags = list(tags)
        if not tags or tags[0] != "O":
            raise ContractError("tagset must start with 'O'")
        btags = {t[2:] for t in tags if t.startswith("B-")}
        for t in tags[1:]:
            if not (t.startswith("B-") or t.startswith("I-")):
                raise ContractError(f"invalid tag {t!r}")
            if t.startswith("I-") and t[2:] not in btags:
                raise ContractError(f"tag {t!r} has no matching B- tag")
        self.tags = tags
        self._index = {t: i for i, t in enumerate(tags)}
        if len(self._index) != len(tags):
            raise ContractError("duplicate tags")

    @classmethod
    def from_slot_types(cls, slot_types: Sequence[str]) -> "TagSet":
        tags = ["O"]
        for s in sorted(set(slot_types)):
            tags += ["B-" + s, "I-" + s]
        return cls(tags)

    @property
    def size(self) -> int:
        return len(self.tags)

    @property
    def slot_types(self) -> list[str]:
        return sorted({t[2:] for t in self.tags if t.startswith("B-")})

    def index(self, tag: str) -> int:
        if tag not in self._index:
            raise ContractError(f"unknown tag {tag!r}")
        return self._index[tag]

    def tag(self, index: int) -> str:
        return self.tags[index]

    def to_json(self) -> str:
        return json.dumps({"tags": self.tags})

    @classmethod
    def from_json(cls, text: str) -> "TagSet":
        return cls(json.loads(text)["tags"])

    def __eq__(self, other) -> bool:
        return isinstance(other, TagSet) and self.tags == other.tags


class CrfHead:
    """Emission projection plus transition/start/end scores."""

    def __init__(self, store: ParameterStore, d_model: int, num_tags: int, prefix: str = "crf"):
        self.num_tags = num_tags
        self.emission = make_dense(store, prefix + ".emission", d_model, num_tags)
        self.transitions = store.create(prefix + ".transitions", np.zeros((num_tags, num_tags)))
        self.start = store.create(prefix + ".start", np.zeros(num_tags))
        self.end = store.create(prefix + ".end", np.zeros(num_tags))


def _validate_gold(gold: np.ndarray, lengths: np.ndarray, num_tags: int) -> None:
    for b, n in enumerate(lengths):
        row = gold[b, :n]
        if row.min() < 0 or row.max() >= num_tags:
            raise ContractError(f"gold tag index out of range in sequence {b}: {row.tolist()}")


def crf_nll_batch(H: Tensor, gold: np.ndarray, lengths: np.ndarray, head: CrfHead) -> Tensor:
    """Per-sequence negative log-likelihood for padded features.

    H is [B, Tmax, d_model]; gold is int [B, Tmax] (entries past each length
    are ignored and must still be valid indices, 0 is fine); returns [B].
    """
    B, Tmax, _ = H.shape
    K = head.num_tags
    if gold.shape != (B, Tmax):
        raise ContractError(f"gold shape {gold.shape} does not match features {(B, Tmax)}")
    if lengths.min() < 1:
        raise ContractError("crf_nll: every sequence needs at least one step")
    _validate_gold(gold, lengths, K)
    dtype = H.data.dtype

    em = head.emission(H)  # [B, Tmax, K]
    step_mask = (np.arange(Tmax)[None, :] < lengths[:, None]).astype(dtype)

    # gold path score
    flat_rows = (np.arange(B)[:, None] * Tmax + np.arange(Tmax)[None, :]) * K + gold
    picked = T.reshape(T.take_rows(T.reshape(em, (B * Tmax * K,)), flat_rows.ravel()), (B, Tmax))
    score = T.reduce_sum(picked * T.constant(step_mask), axis=1)
    score = score + T.take_rows(head.start.value, gold[:, 0])
    score = score + T.take_rows(head.end.value, gold[np.arange(B), lengths - 1])
    if Tmax > 1:
        tr_idx = gold[:, :-1] * K + gold[:, 1:]
        tr_mask = (np.arange(1, Tmax)[None, :] < lengths[:, None]).astype(dtype)
        picked_tr = T.reshape(T.take_rows(T.reshape(head.transitions.value, (K * K,)), tr_idx.ravel()), (B, Tmax - 1))
        score = score + T.reduce_sum(picked_tr * T.constant(tr_mask), axis=1)

    # partition function by the forward algorithm in log space
    alpha = T.reshape(T.narrow(em, 1, 0, 1), (B, K)) + head.start.value
    for t in range(1, Tmax):
        prev = T.reshape(alpha, (B, K, 1))
        inner = T.logsumexp_lastdim(T.transpose(prev + head.transitions.value, (0, 2, 1)))
        alpha_new = inner + T.reshape(T.narrow(em, 1, t, 1), (B, K))
        active = step_mask[:, t : t + 1]
        if active.all():
            alpha = alpha_new
        else:
            keep = T.constant(active)
            alpha = keep * alpha_new + T.constant(1.0 - active) * alpha
    log_z = T.logsumexp_lastdim(alpha + head.end.value)
    return log_z - score


def crf_nll(H: Tensor, gold: Sequence[int], head: CrfHead) -> Tensor:
    """Scalar NLL of a gold tag sequence for features H [T, d_model]."""
    n = H.shape[0]
    if len(gold) != n:
        raise ContractError(f"gold length {len(gold)} does not match {n} steps")
    H3 = T.reshape(H, (1,) + H.shape)
    losses = crf_nll_batch(H3, np.asarray([gold], dtype=np.int64), np.array([n]), head)
    return T.reshape(losses, ())


def viterbi_decode(
    emissions: np.ndarray, transitions: np.ndarray, start: np.ndarray, end: np.ndarray
) -> tuple[list[int], float]:
    """Max-scoring path; ties resolve to the lowest tag index at every step."""
    n, num_tags = emissions.shape
    delta = start + emissions[0]
    back = np.zeros((n, num_tags), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + transitions
        best_from = cand.argmax(axis=0)  # argmax returns the lowest index on ties
        back[t] = best_from
        delta = cand[best_from, np.arange(num_tags)] + emissions[t]
    delta = delta + end
    last = int(delta.argmax())
    path = [last]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, float(delta[last])


def viterbi(H: Tensor, head: CrfHead) -> tuple[list[int], float]:
    """Decode features [T, d_model] to (tags, path score)."""
    em = head.emission(H).data
    return viterbi_decode(em, head.transitions.data, head.start.data, head.end.data)


def spans_from_bio(tags: Sequence[int], tagset: TagSet) -> list[SlotSpan]:
    """Maximal B-x (I-x)* runs; a dangling I-x is repaired as B-x."""
    spans: list[SlotSpan] = []
    cur_type: str | None = None
    cur_start = 0
    for t, tid in enumerate(tags):
        tag = tagset.tag(tid)
        if tag == "O":
            if cur_type is not None:
                spans.append(SlotSpan(cur_start, t - 1, cur_type))
                cur_type = None
        elif tag.startswith("B-") or tag[2:] != cur_type:
            if cur_type is not None:
                spans.append(SlotSpan(cur_start, t - 1, cur_type))
            cur_type, cur_start = tag[2:], t
    if cur_type is not None:
        spans.append(SlotSpan(cur_start, len(tags) - 1, cur_type))
    return spans
