"""Character-level vocabulary: construction, encoding, decoding, file I/O.

Ids 0-4 are the five specials; everything after is a single codepoint.  The
7 punctuation marks are always present regardless of corpus frequency, so a
model can always emit them under the constrained decoder.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .errors import SchemaError
from .textcore import MARKS

PAD, BOS, EOS, UNK, SEP = 0, 1, 2, 3, 4
SPECIAL_TOKENS: tuple[str, ...] = ("<pad>", "<bos>", "<eos>", "<unk>", "<sep>")
NUM_SPECIALS = len(SPECIAL_TOKENS)


class EmptyCorpus(SchemaError):
    """The corpus stream yielded no codepoints."""


class UnknownId(SchemaError):
    """Token id outside the vocabulary range."""


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]          # index = id
    id_of: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        """One id per codepoint; out-of-vocabulary codepoints map to UNK."""
        get = self.id_of.get
        return [get(c, UNK) for c in text]

    def decode(self, ids: Iterable[int]) -> str:
        """Inverse of encode for in-vocabulary text; specials render empty."""
        out: list[str] = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise UnknownId(f"id {i} outside vocabulary of size {len(self.tokens)}")
            if i >= NUM_SPECIALS:
                out.append(self.tokens[i])
        return "".join(out)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of


def _from_tokens(tokens: list[str]) -> Vocabulary:
    id_of = {t: i for i, t in enumerate(tokens)}
    if len(id_of) != len(tokens):
        raise SchemaError("duplicate token in vocabulary")
    return Vocabulary(tuple(tokens), id_of)


def build_vocab(corpus_stream: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count codepoints and assign ids by descending frequency.

    The vocabulary always contains the 5 specials and the 7 marks; any other
    codepoint needs frequency >= min_count.  Ties break by codepoint value
    ascending, so identical corpora give byte-identical vocabularies.
    """
    if min_count < 0:
        raise ValueError(f"min_count must be >= 0, got {min_count}")
    counts: Counter[str] = Counter()
    saw_text = False
    for chunk in corpus_stream:
        if chunk:
            saw_text = True
            counts.update(chunk)
    if not saw_text:
        raise EmptyCorpus("corpus stream yielded no text")

    kept = {c for c, n in counts.items() if n >= min_count}
    kept.update(MARKS)
    ordered = sorted(kept, key=lambda c: (-counts[c], ord(c)))
    return _from_tokens(list(SPECIAL_TOKENS) + ordered)


def save_vocab(v: Vocabulary, path: str) -> None:
    """One token per line, line number = id.

    A literal newline token is written as an empty line (its own codepoint
    doubles as the separator); no other token can be empty, so reading is
    unambiguous.
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        for t in v.tokens:
            f.write("" if t == "\n" else t)
            f.write("\n")


def load_vocab(path: str) -> Vocabulary:
    with open(path, "r", encoding="utf-8", newline="") as f:
        content = f.read()
    if content.endswith("\n"):
        content = content[:-1]
    lines = content.split("\n")
    tokens = ["\n" if line == "" else line for line in lines]
    if tuple(tokens[:NUM_SPECIALS]) != SPECIAL_TOKENS:
        raise SchemaError(f"{path}: first {NUM_SPECIALS} lines must be the special tokens")
    for t in tokens[NUM_SPECIALS:]:
        if len(t) != 1:
            raise SchemaError(f"{path}: non-special token {t!r} is not a single codepoint")
    return _from_tokens(tokens)
