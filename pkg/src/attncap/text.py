"""Caption normalization, vocabulary and index encoding."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ContractError, DataError

PAD, START, END, UNK = "<pad>", "<start>", "<end>", "<unk>"
RESERVED = (PAD, START, END, UNK)
PAD_ID, START_ID, END_ID, UNK_ID = 0, 1, 2, 3

DEFAULT_MAX_CAPTION_LEN = 20

_NON_ALPHA = re.compile(r"[^a-zA-Z ]")


def normalize_tokenize(raw: str) -> list[str]:
    """Replace non-letters with spaces, lowercase, split on whitespace."""
    return _NON_ALPHA.sub(" ", raw).lower().split()


@dataclass(frozen=True)
class Vocabulary:
    """Word/index bijection. Indices 0-3 are the reserved tokens."""

    words: tuple[str, ...]
    counts: tuple[int, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.words[:4]) != RESERVED:
            raise ContractError(f"vocabulary must start with {RESERVED}")
        if len(self.counts) != len(self.words):
            raise ContractError("one count per word required")
        index = {w: i for i, w in enumerate(self.words)}
        if len(index) != len(self.words):
            raise ContractError("duplicate words in vocabulary")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        return self.index.get(word, UNK_ID)

    def word(self, i: int) -> str:
        return self.words[i]

    def to_lines(self) -> list[str]:
        return [f"{i}\t{w}\t{c}" for i, (w, c) in enumerate(zip(self.words, self.counts))]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words, counts = [], []
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read vocabulary {path}: {exc}") from exc
        for lineno, line in enumerate(lines):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or int(parts[0]) != len(words):
                raise DataError(f"{path}:{lineno + 1}: malformed vocabulary line {line!r}")
            words.append(parts[1])
            counts.append(int(parts[2]))
        return cls(tuple(words), tuple(counts))


def build_vocab(corpus: Sequence[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens with frequency >= min_count.

    Ordered by descending frequency, ties broken alphabetically, after the
    four reserved tokens.
    """
    if not corpus:
        raise ContractError("build_vocab needs a nonempty corpus")
    if min_count < 1:
        raise ContractError(f"min_count must be >= 1, got {min_count}")
    freq = Counter(w for sentence in corpus for w in sentence)
    for tok in RESERVED:
        freq.pop(tok, None)
    kept = sorted((w for w, c in freq.items() if c >= min_count), key=lambda w: (-freq[w], w))
    return Vocabulary(RESERVED + tuple(kept), (0, 0, 0, 0) + tuple(freq[w] for w in kept))


def encode(
    words: Iterable[str], vocab: Vocabulary, max_caption_len: int = DEFAULT_MAX_CAPTION_LEN
) -> list[int]:
    """Index sequence ``<start> w1 ... wn <end>`` with n <= max_caption_len.

    Over-long captions lose their tail words; ``<end>`` is always kept.
    """
    if max_caption_len < 1:
        raise ContractError(f"max_caption_len must be >= 1, got {max_caption_len}")
    ids = [vocab.id(w) for w in words][:max_caption_len]
    return [START_ID, *ids, END_ID]


def decode(tokens: Iterable[int], vocab: Vocabulary) -> str:
    """Join the non-reserved words of an index sequence, stopping at ``<end>``."""
    out = []
    for t in tokens:
        t = int(t)
        if t == END_ID:
            break
        if t >= len(RESERVED):
            out.append(vocab.word(t))
    return " ".join(out)


def check_caption(tokens: Sequence[int], vocab_size: int) -> None:
    if len(tokens) < 2 or tokens[0] != START_ID:
        raise ContractError(f"caption must start with <start> and contain <end>: {list(tokens)}")
    try:
        end = list(tokens).index(END_ID)
    except ValueError:
        raise ContractError(f"caption has no <end> token: {list(tokens)}") from None
    if any(t != PAD_ID for t in tokens[end + 1:]):
        raise ContractError(f"only <pad> may follow <end>: {list(tokens)}")
    if any(not 0 <= t < vocab_size for t in tokens):
        raise ContractError(f"token outside [0, {vocab_size}): {list(tokens)}")
