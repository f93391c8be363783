"""Dataset ingestion, canonical JSONL/CoNLL storage, BIO codec, and protocols.

Canonical JSONL: one object per line, {"text": str, "spans": [{"start_char",
"end_char", "slot"}], "lang"?}; char offsets are half-open and must align
with token boundaries. CoNLL: "token<TAB>tag" lines, blank line between
utterances, tags O / B-x / I-x. Both formats are UTF-8.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

_PUNCT = set(string.punctuation)


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


class Token(NamedTuple):
    surface: str
    start: int  # char offset into text
    end: int  # exclusive


@dataclass(frozen=True, order=True)
class SlotSpan:
    start_token: int
    end_token: int  # inclusive
    slot_type: str


@dataclass
class Utterance:
    text: str
    tokens: list[Token]
    spans: list[SlotSpan]
    lang: str = ""

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class DatasetManifest:
    """Enough provenance to re-derive any reported number."""

    name: str
    split_sizes: dict[str, int]
    slot_types: list[str]
    fraction: str = "1"
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "split_sizes": dict(self.split_sizes),
            "slot_types": list(self.slot_types),
            "fraction": self.fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_utterances(cls, name: str, splits: dict[str, list["Utterance"]], fraction: str = "1", seed: int = 0):
        slots = sorted({sp.slot_type for utts in splits.values() for u in utts for sp in u.spans})
        return cls(name, {k: len(v) for k, v in splits.items()}, slots, fraction, seed)


# ---------------------------------------------------------------------------
# tokenization


def tokenize(text: str) -> list[Token]:
    """Whitespace split, then peel leading/trailing punctuation into own tokens."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        a, b = i, j
        lead: list[Token] = []
        while b - a > 1 and text[a] in _PUNCT:
            lead.append(Token(text[a], a, a + 1))
            a += 1
        trail: list[Token] = []
        while b - a > 1 and text[b - 1] in _PUNCT:
            trail.append(Token(text[b - 1], b - 1, b))
            b -= 1
        tokens.extend(lead)
        tokens.append(Token(text[a:b], a, b))
        tokens.extend(reversed(trail))
        i = j
    return tokens


def _check_spans(spans: Sequence[SlotSpan], n_tokens: int, where: str) -> list[SlotSpan]:
    ordered = sorted(spans)
    for sp in ordered:
        if not (0 <= sp.start_token <= sp.end_token < n_tokens):
            raise DataError(f"{where}: span {sp} outside token range [0, {n_tokens})")
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start_token <= prev.end_token:
            raise DataError(f"{where}: overlapping spans {prev} and {cur}")
    return ordered


def utterance_from_text(text: str, char_spans: Sequence[tuple[int, int, str]], lang: str = "", where: str = "utterance") -> Utterance:
    """Tokenize and convert half-open char spans to inclusive token spans."""
    tokens = tokenize(text)
    starts = {t.start: k for k, t in enumerate(tokens)}
    ends = {t.end: k for k, t in enumerate(tokens)}
    spans = []
    for s, e, slot in char_spans:
        if s not in starts or e not in ends or starts[s] > ends[e]:
            raise DataError(f"{where}: span [{s}, {e}) of type {slot!r} does not align with token boundaries")
        spans.append(SlotSpan(starts[s], ends[e], slot))
    return Utterance(text, tokens, _check_spans(spans, len(tokens), where), lang)


def utterance_from_words(words: Sequence[str], spans: Sequence[SlotSpan], lang: str = "", where: str = "utterance") -> Utterance:
    """Build an utterance from pre-tokenized words joined by single spaces."""
    tokens = []
    pos = 0
    for w in words:
        if not w or any(ch.isspace() for ch in w):
            raise DataError(f"{where}: invalid token {w!r}")
        tokens.append(Token(w, pos, pos + len(w)))
        pos += len(w) + 1
    text = " ".join(words)
    return Utterance(text, tokens, _check_spans(spans, len(tokens), where), lang)


# ---------------------------------------------------------------------------
# canonical formats


def load_jsonl(path) -> list[Utterance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                text = obj["text"]
                raw = [(sp["start_char"], sp["end_char"], sp["slot"]) for sp in obj.get("spans", [])]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path} line {ln}: malformed record ({exc})") from exc
            out.append(utterance_from_text(text, raw, obj.get("lang", ""), where=f"{path} line {ln}"))
    return out


def save_jsonl(utterances: Iterable[Utterance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in utterances:
            spans = [
                {"start_char": u.tokens[sp.start_token].start, "end_char": u.tokens[sp.end_token].end, "slot": sp.slot_type}
                for sp in u.spans
            ]
            rec: dict = {"text": u.text, "spans": spans}
            if u.lang:
                rec["lang"] = u.lang
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_conll(path) -> list[Utterance]:
    """token<TAB>tag blocks; I- tags without an open span are repaired as B-."""
    from .crf import TagSet, spans_from_bio

    blocks: list[list[tuple[str, str]]] = [[]]
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                if blocks[-1]:
                    blocks.append([])
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{path}: cannot parse line {line!r}")
            blocks[-1].append((parts[0], parts[1]))
    if blocks and not blocks[-1]:
        blocks.pop()

    all_tags = {tag for block in blocks for _, tag in block}
    for bi, block in enumerate(blocks):
        for _, tag in block:
            if tag != "O" and not (tag.startswith("B-") or tag.startswith("I-")):
                raise DataError(f"{path} block {bi}: unknown tag prefix in {tag!r}")
    types = sorted({t[2:] for t in all_tags if t != "O"})
    tagset = TagSet.from_slot_types(types)

    out = []
    for bi, block in enumerate(blocks):
        words = [tok for tok, _ in block]
        ids = [tagset.index(tag) for _, tag in block]
        spans = spans_from_bio(ids, tagset)
        out.append(utterance_from_words(words, spans, where=f"{path} block {bi}"))
    return out


def save_conll(utterances: Iterable[Utterance], path) -> None:
    from .crf import TagSet

    utts = list(utterances)
    types = sorted({sp.slot_type for u in utts for sp in u.spans})
    tagset = TagSet.from_slot_types(types)
    with open(path, "w", encoding="utf-8") as fh:
        for u in utts:
            tags = bio_from_spans(u, tagset)
            for tok, tid in zip(u.tokens, tags):
                fh.write(f"{tok.surface}\t{tagset.tag(tid)}\n")
            fh.write("\n")


# ---------------------------------------------------------------------------
# BIO encoding (the decoder lives next to the CRF)


def bio_from_spans(utt: Utterance, tagset) -> list[int]:
    """Exact BIO tag ids for an utterance's non-overlapping spans."""
    _check_spans(utt.spans, len(utt.tokens), "bio_from_spans")
    tags = [0] * len(utt.tokens)
    for sp in utt.spans:
        tags[sp.start_token] = tagset.index("B-" + sp.slot_type)
        for t in range(sp.start_token + 1, sp.end_token + 1):
            tags[t] = tagset.index("I-" + sp.slot_type)
    return tags


# ---------------------------------------------------------------------------
# few-shot fraction protocol


def fraction_split(items: Sequence, denominator: int, seed: int) -> list:
    """Deterministic 1/denominator subset: one seeded shuffle, prefix take.

    Subsets with the same seed nest: the 1/2d subset is a prefix of the 1/d
    subset, so learning curves are monotone in data.
    """
    if denominator < 1 or denominator > 256 or denominator & (denominator - 1):
        raise DataError(f"denominator must be a power of two in [1, 256], got {denominator}")
    n = len(items) // denominator
    if n == 0:
        raise DataError(f"fraction 1/{denominator} of {len(items)} items is empty")
    perm = np.random.default_rng(seed).permutation(len(items))
    return [items[int(i)] for i in perm[:n]]


# ---------------------------------------------------------------------------
# unseen-entity substitution


def _span_surface(utt: Utterance, sp: SlotSpan) -> str:
    return " ".join(utt.words[sp.start_token : sp.end_token + 1])


def substitute_entities(
    dataset: Sequence[Utterance],
    slot_type: str,
    replacements: Sequence[str],
    seed: int,
    training_surfaces: set[str] | None = None,
) -> list[Utterance]:
    """Replace every span of `slot_type` with a sampled replacement value.

    Replacement surfaces are retokenized, span boundaries and all other span
    indices shift accordingly. `training_surfaces` is the set of surface forms
    the replacements must avoid; by default the surfaces of `slot_type` found
    in `dataset` are used.
    """
    if not replacements:
        raise DataError("substitute_entities: empty replacement list")
    if training_surfaces is None:
        training_surfaces = {
            _span_surface(u, sp) for u in dataset for sp in u.spans if sp.slot_type == slot_type
        }
    collisions = sorted(set(replacements) & training_surfaces)
    if collisions:
        raise DataError(f"substitute_entities: replacements collide with known surfaces: {collisions}")

    rng = np.random.default_rng(seed)
    out = []
    for utt in dataset:
        targets = sorted(sp for sp in utt.spans if sp.slot_type == slot_type)
        if not targets:
            out.append(utt)
            continue
        others = [sp for sp in utt.spans if sp.slot_type != slot_type]
        new_words: list[str] = []
        new_index: dict[int, int] = {}
        new_spans: list[SlotSpan] = []
        ti = 0
        old_i = 0
        while old_i < len(utt.tokens):
            if ti < len(targets) and old_i == targets[ti].start_token:
                choice = replacements[int(rng.integers(len(replacements)))]
                rep_words = [t.surface for t in tokenize(choice)]
                start = len(new_words)
                new_words.extend(rep_words)
                new_spans.append(SlotSpan(start, start + len(rep_words) - 1, slot_type))
                old_i = targets[ti].end_token + 1
                ti += 1
            else:
                new_index[old_i] = len(new_words)
                new_words.append(utt.words[old_i])
                old_i += 1
        for sp in others:
            new_spans.append(SlotSpan(new_index[sp.start_token], new_index[sp.end_token], sp.slot_type))
        out.append(utterance_from_words(new_words, sorted(new_spans), utt.lang))
    return out
