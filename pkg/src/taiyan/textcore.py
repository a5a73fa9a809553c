"""Codepoint-level text primitives.

The scored punctuation inventory is the fixed 7-mark set used throughout the
pipeline; everything else (quotes, brackets, middle dots, Latin letters) is
ordinary text.  `PunctuationAlignment` is the common currency between the
constrained decoder and the scoring code: a mark-free character sequence plus
a map from boundary index to the single mark sitting at that boundary
(boundary i is the position right after character i; boundary 0 is before the
first character).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import SchemaError

# Fixed inventory, fixed order.
MARKS: tuple[str, ...] = ("，", "。", "！", "？", "；", "：", "、")
MARK_SET: frozenset[str] = frozenset(MARKS)


class MalformedPunctuation(SchemaError):
    """A leading mark or a run of two or more consecutive marks."""


@dataclass(frozen=True)
class PunctuationAlignment:
    chars: str
    boundary_marks: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.chars)
        for b, m in self.boundary_marks.items():
            if not 0 <= b <= n:
                raise ValueError(f"boundary {b} outside 0..{n}")
            if m not in MARK_SET:
                raise ValueError(f"{m!r} is not a scored punctuation mark")
        if any(m in MARK_SET for m in self.chars):
            raise ValueError("chars must not contain punctuation marks")


def strip_marks(text: str) -> str:
    """Remove the 7 scored marks; every other codepoint passes through."""
    return "".join(c for c in text if c not in MARK_SET)


def contains_mark(text: str) -> bool:
    return any(c in MARK_SET for c in text)


def align(punctuated: str) -> PunctuationAlignment:
    """Split punctuated text into characters plus per-boundary marks.

    Rejects text that begins with a mark or contains two consecutive marks;
    with at most one mark per boundary the alignment is unambiguous and
    interleaving reproduces the input exactly.
    """
    chars: list[str] = []
    marks: dict[int, str] = {}
    prev_was_mark = False
    for pos, c in enumerate(punctuated):
        if c in MARK_SET:
            if pos == 0:
                raise MalformedPunctuation(f"leading mark {c!r}")
            if prev_was_mark:
                raise MalformedPunctuation(
                    f"mark run at position {pos}: {punctuated[pos - 1]}{c}")
            marks[len(chars)] = c
            prev_was_mark = True
        else:
            chars.append(c)
            prev_was_mark = False
    return PunctuationAlignment("".join(chars), marks)


def render(a: PunctuationAlignment) -> str:
    """Interleave characters with boundary marks (inverse of `align`)."""
    parts: list[str] = []
    m0 = a.boundary_marks.get(0)
    if m0:
        parts.append(m0)
    for i, ch in enumerate(a.chars, start=1):
        parts.append(ch)
        m = a.boundary_marks.get(i)
        if m:
            parts.append(m)
    return "".join(parts)
