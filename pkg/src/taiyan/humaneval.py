"""Rating-experiment aggregation: anonymized bundles, mean scores,
tie-sharing win rates, and rank-correlation consistency."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import SchemaError

WORD_SCALE = frozenset({0.0, 0.5, 1.0})
TRANSLATION_SCALE = frozenset({1.0, 2.0, 3.0, 4.0, 5.0})
_SCALES: dict[str, frozenset[float]] = {"word": WORD_SCALE, "translation": TRANSLATION_SCALE}


class MissingAnswer(SchemaError):
    """An item lacks an answer for some system."""


class DegenerateInput(SchemaError):
    """Rank correlation undefined (too short or constant input)."""


# ---------------------------------------------------------------------------
# the rating matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatingMatrix:
    """Complete scores over items x systems x evaluators.

    Index tuples keep first-appearance order from the source so derived
    reports are stable across runs.
    """

    items: tuple[str, ...]
    systems: tuple[str, ...]
    evaluators: tuple[str, ...]
    score: Mapping[tuple[str, str, str], float]

    def __post_init__(self) -> None:
        expected = len(self.items) * len(self.systems) * len(self.evaluators)
        if not expected:
            raise SchemaError("rating matrix has an empty axis")
        if len(self.score) != expected:
            raise SchemaError(
                f"rating matrix incomplete: {len(self.score)} scores for {expected} cells"
            )
        for item in self.items:
            for system in self.systems:
                for evaluator in self.evaluators:
                    if (item, system, evaluator) not in self.score:
                        raise SchemaError(f"missing score for {(item, system, evaluator)}")

    @classmethod
    def from_csv(cls, path: str, scale: Optional[str] = None) -> "RatingMatrix":
        """Load `item,system,evaluator,score` rows; optionally enforce the
        word {0, 0.5, 1} or translation {1..5} scale."""
        allowed = None
        if scale is not None:
            if scale not in _SCALES:
                raise SchemaError(f"unknown scale {scale!r} (choose word or translation)")
            allowed = _SCALES[scale]
        items: list[str] = []
        systems: list[str] = []
        evaluators: list[str] = []
        score: dict[tuple[str, str, str], float] = {}
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["item", "system", "evaluator", "score"]:
                raise SchemaError(f"expected header item,system,evaluator,score, got {header}")
            for line_no, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 4:
                    raise SchemaError(f"line {line_no}: expected 4 fields, got {len(row)}")
                item, system, evaluator, raw = (field.strip() for field in row)
                try:
                    value = float(raw)
                except ValueError:
                    raise SchemaError(f"line {line_no}: score {raw!r} is not a number")
                if allowed is not None and value not in allowed:
                    raise SchemaError(f"line {line_no}: score {value} outside the {scale} scale")
                key = (item, system, evaluator)
                if key in score:
                    raise SchemaError(f"line {line_no}: duplicate rating for {key}")
                score[key] = value
                if item not in items:
                    items.append(item)
                if system not in systems:
                    systems.append(system)
                if evaluator not in evaluators:
                    evaluators.append(evaluator)
        return cls(tuple(items), tuple(systems), tuple(evaluators), score)


def mean_scores(m: RatingMatrix) -> dict[str, float]:
    """Per-system mean over all items and evaluators."""
    out: dict[str, float] = {}
    denom = len(m.items) * len(m.evaluators)
    for system in m.systems:
        total = sum(m.score[(i, system, e)] for i in m.items for e in m.evaluators)
        out[system] = total / denom
    return out


def win_rate(m: RatingMatrix) -> dict[str, float]:
    """Fraction of (item, evaluator) pairs where a system holds rank 1.

    Every system tied at the top score of a pair shares rank 1, so rates can
    sum to more than 1.
    """
    wins = {system: 0 for system in m.systems}
    for item in m.items:
        for evaluator in m.evaluators:
            scores = {s: m.score[(item, s, evaluator)] for s in m.systems}
            top = max(scores.values())
            for system, value in scores.items():
                if value == top:
                    wins[system] += 1
    denom = len(m.items) * len(m.evaluators)
    return {system: wins[system] / denom for system in m.systems}


# ---------------------------------------------------------------------------
# rank correlation
# ---------------------------------------------------------------------------

def _average_ranks(values: Sequence[float]) -> np.ndarray:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-tie ranks.

    Tie-free inputs go through the exact rank-difference formula in rational
    arithmetic, so textbook cases land on their textbook values.
    """
    if len(x) != len(y):
        raise SchemaError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise DegenerateInput("need at least 2 observations")
    if len(set(x)) == 1 or len(set(y)) == 1:
        raise DegenerateInput("constant input has no rank order")
    if len(set(x)) == n and len(set(y)) == n:
        rx = {v: r for r, v in enumerate(sorted(x), start=1)}
        ry = {v: r for r, v in enumerate(sorted(y), start=1)}
        d2 = sum((rx[a] - ry[b]) ** 2 for a, b in zip(x, y))
        return float(1 - Fraction(6 * d2, n * (n * n - 1)))
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = float(np.sqrt(np.sum(rx * rx) * np.sum(ry * ry)))
    return float(np.sum(rx * ry)) / denom


@dataclass(frozen=True)
class ConsistencyResult:
    """Mean pairwise rank correlation across evaluators."""

    value: float
    pairs_used: int
    skipped: tuple[tuple[str, str], ...]


def inter_rater_consistency(m: RatingMatrix) -> ConsistencyResult:
    """Mean spearman over evaluator pairs, each on the flattened
    item-by-system score vector; undefined pairs are skipped and reported."""
    if len(m.evaluators) < 2:
        raise DegenerateInput("need at least 2 evaluators")
    vectors = {
        e: [m.score[(i, s, e)] for i in m.items for s in m.systems] for e in m.evaluators
    }
    values: list[float] = []
    skipped: list[tuple[str, str]] = []
    for e1, e2 in combinations(m.evaluators, 2):
        try:
            values.append(spearman(vectors[e1], vectors[e2]))
        except DegenerateInput:
            skipped.append((e1, e2))
    if not values:
        raise DegenerateInput("no evaluator pair has a defined rank correlation")
    return ConsistencyResult(
        value=sum(values) / len(values),
        pairs_used=len(values),
        skipped=tuple(skipped),
    )


# ---------------------------------------------------------------------------
# anonymized bundles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bundle:
    """One item's answers in shuffled slot order, provenance withheld."""

    item: str
    answers: tuple[str, ...]


def make_bundles(
    answers: Mapping[str, Mapping[str, str]], seed: int
) -> tuple[list[Bundle], dict[str, dict[int, str]]]:
    """Shuffle each item's answers; returns (bundles, sealed key).

    The key maps item -> slot -> system and is the only way back.  Items and
    systems are processed in sorted order so a seed fully determines the
    permutations.
    """
    if not answers:
        raise SchemaError("no items to bundle")
    systems = sorted({s for per_item in answers.values() for s in per_item})
    rng = np.random.default_rng(seed)
    bundles: list[Bundle] = []
    key: dict[str, dict[int, str]] = {}
    for item in sorted(answers):
        per_item = answers[item]
        missing = [s for s in systems if s not in per_item]
        if missing:
            raise MissingAnswer(f"item {item!r} lacks answers from {missing}")
        perm = rng.permutation(len(systems))
        ordered = [systems[j] for j in perm]
        bundles.append(Bundle(item=item, answers=tuple(per_item[s] for s in ordered)))
        key[item] = {slot: system for slot, system in enumerate(ordered)}
    return bundles, key


def unshuffle(
    bundles: Sequence[Bundle], key: Mapping[str, Mapping[int, str]]
) -> dict[str, dict[str, str]]:
    """Invert make_bundles using the sealed key."""
    out: dict[str, dict[str, str]] = {}
    for bundle in bundles:
        slots = key.get(bundle.item)
        if slots is None:
            raise SchemaError(f"key has no entry for item {bundle.item!r}")
        if len(slots) != len(bundle.answers):
            raise SchemaError(f"key arity mismatch for item {bundle.item!r}")
        out[bundle.item] = {slots[slot]: answer for slot, answer in enumerate(bundle.answers)}
    return out
