"""Permission segmentation, vocabulary building and fixed-length encoding."""

from __future__ import annotations

import json
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import BadMaxLen, EmptyCorpus

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
N_SPECIAL = len(SPECIAL_TOKENS)

WHOLE = "whole"
SPLIT = "split"

_SPLIT_RE = re.compile(r"[._]")


def segment(permission: str, mode: str = SPLIT) -> list[str]:
    """``android.permission.SEND_SMS`` -> ``[android, permission, send, sms]`` (split)
    or ``[android.permission.send_sms]`` (whole)."""
    s = permission.lower()
    if mode == WHOLE:
        return [s] if s else []
    if mode != SPLIT:
        raise ValueError(f"unknown segmentation mode {mode!r}")
    return [t for t in _SPLIT_RE.split(s) if t]


def tokenize(text: str, mode: str = SPLIT) -> list[str]:
    out = []
    for perm in text.split():
        out.extend(segment(perm, mode))
    return out


@dataclass
class Vocabulary:
    tokens: list[str]
    mode: str = SPLIT
    min_count: int = 1
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.tokens[:N_SPECIAL] != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def save(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"mode": self.mode, "min_count": self.min_count, "tokens": self.tokens}, fh,
                      indent=1)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d["tokens"], d["mode"], d["min_count"])


def build_vocab(texts: Iterable, mode: str = SPLIT, min_count: int = 1) -> Vocabulary:
    """Vocabulary over ``texts`` (strings or objects with ``.text``).

    Ids follow descending frequency, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    n = 0
    for t in texts:
        n += 1
        counts.update(tokenize(getattr(t, "text", t), mode))
    if n == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    kept = sorted((tok for tok, c in counts.items() if c >= min_count and tok not in SPECIAL_TOKENS),
                  key=lambda tok: (-counts[tok], tok))
    return Vocabulary(SPECIAL_TOKENS + kept, mode, min_count)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    mask: tuple[int, ...]
    true_length: int

    @property
    def empty(self) -> bool:
        """True for an app that requested no permissions ([CLS][SEP] only)."""
        return self.true_length == 2


def encode(text: str, vocab: Vocabulary, max_len: int = 256, truncation: str = "head") -> TokenSequence:
    if max_len < 3:
        raise BadMaxLen(f"max_len must be >= 3, got {max_len}")
    if truncation not in ("head", "tail"):
        raise ValueError(f"truncation must be 'head' or 'tail', got {truncation!r}")
    ids = [vocab[t] for t in tokenize(text, vocab.mode)]
    room = max_len - 2
    if len(ids) > room:
        ids = ids[:room] if truncation == "head" else ids[-room:]
    seq = [CLS] + ids + [SEP]
    n = len(seq)
    return TokenSequence(tuple(seq + [PAD] * (max_len - n)), tuple([1] * n + [0] * (max_len - n)), n)


def decode(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    return [vocab.tokens[i] for i in seq.ids[1:seq.true_length - 1]]


def encode_batch(texts: Sequence[str], vocab: Vocabulary, max_len: int,
                 truncation: str = "head") -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``(ids, mask)`` int arrays of shape (n, max_len)."""
    ids = np.zeros((len(texts), max_len), dtype=np.int64)
    mask = np.zeros((len(texts), max_len), dtype=np.int64)
    for i, t in enumerate(texts):
        s = encode(t, vocab, max_len, truncation)
        ids[i] = s.ids
        mask[i] = s.mask
    return ids, mask
