"""Diachronic sense tracking.

Concordance a keyword over a period-tagged corpus, gloss each hit (with the
model or a precomputed gloss file), cluster the glosses by string similarity,
and chart how sense frequencies move across the eight periods.
"""

from __future__ import annotations

import csv
import os
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import SchemaError
from .metrics import jaro_winkler

PERIODS: tuple[str, ...] = (
    "Pre-Qin",
    "Han",
    "Wei-Jin-NS",
    "Tang",
    "Song",
    "Yuan",
    "Ming",
    "Qing",
)

DEFAULT_THETA = 0.85
DEFAULT_WINDOW = 10


@dataclass(frozen=True)
class PeriodCorpus:
    """Documents keyed by period; period order is fixed and canonical."""

    documents: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        unknown = set(self.documents) - set(PERIODS)
        if unknown:
            raise SchemaError(f"unknown periods {sorted(unknown)}; expected {PERIODS}")

    def docs(self, period: str) -> tuple[str, ...]:
        return self.documents.get(period, ())


def load_period_corpus(root: str) -> PeriodCorpus:
    """Load one subdirectory of UTF-8 .txt per period; absent periods are
    empty, but at least one period directory must exist."""
    if not os.path.isdir(root):
        raise FileNotFoundError(f"corpus directory not found: {root}")
    documents: dict[str, tuple[str, ...]] = {}
    for period in PERIODS:
        pdir = os.path.join(root, period)
        if not os.path.isdir(pdir):
            continue
        docs = []
        for name in sorted(os.listdir(pdir)):
            if not name.endswith(".txt"):
                continue
            with open(os.path.join(pdir, name), encoding="utf-8") as f:
                text = f.read().strip()
            if text:
                docs.append(text)
        documents[period] = tuple(docs)
    if not documents:
        raise SchemaError(f"no period directories under {root}; expected names like {PERIODS[0]}")
    return PeriodCorpus(documents)


@dataclass(frozen=True)
class Hit:
    """One keyword occurrence with its clipped context."""

    period: str
    snippet: str


def concordance(corpus: PeriodCorpus, keyword: str, window: int = DEFAULT_WINDOW) -> list[Hit]:
    """Non-overlapping left-to-right occurrences, keyword plus window chars of
    context each side, clipped at document bounds."""
    if not keyword:
        raise SchemaError("keyword must be nonempty")
    if window < 0:
        raise SchemaError("window must be nonnegative")
    hits: list[Hit] = []
    for period in PERIODS:
        for doc in corpus.docs(period):
            pos = 0
            while True:
                idx = doc.find(keyword, pos)
                if idx < 0:
                    break
                snippet = doc[max(0, idx - window) : idx + len(keyword) + window]
                hits.append(Hit(period=period, snippet=snippet))
                pos = idx + len(keyword)
    return hits


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SenseCluster:
    """Glosses grouped under the first member's gloss as representative."""

    representative: str
    members: tuple[tuple[str, str, str], ...]  # (gloss, period, snippet)
    count_by_period: dict[str, int]


def cluster_glosses(
    glosses: Sequence[tuple[str, str, str]], theta: float = DEFAULT_THETA
) -> list[SenseCluster]:
    """Greedy first-fit: each gloss joins the first cluster whose
    representative is at least theta similar, else founds its own.

    Returned sorted by total count descending; ties keep founding order.
    Deterministic given input order and theta.
    """
    if not (0.0 < theta <= 1.0):
        raise SchemaError(f"theta must be in (0, 1], got {theta}")
    reps: list[str] = []
    members: list[list[tuple[str, str, str]]] = []
    for entry in glosses:
        gloss = entry[0]
        if not gloss:
            raise SchemaError("empty gloss")
        for c, rep in enumerate(reps):
            if jaro_winkler(gloss, rep) >= theta:
                members[c].append(tuple(entry))
                break
        else:
            reps.append(gloss)
            members.append([tuple(entry)])
    clusters = [
        SenseCluster(
            representative=reps[c],
            members=tuple(members[c]),
            count_by_period=dict(Counter(period for _, period, _ in members[c])),
        )
        for c in range(len(reps))
    ]
    clusters.sort(key=lambda cl: -len(cl.members))
    return clusters


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Relative frequency of the top clusters per period.

    frequency[(representative, period)] is cluster hits in the period over
    all keyword hits there; zero_periods lists periods with no hits at all
    (their frequencies read 0 and carry no evidence).
    """

    representatives: tuple[str, ...]
    frequency: dict[tuple[str, str], float]
    period_totals: dict[str, int]
    zero_periods: tuple[str, ...]


def sense_trajectory(clusters: Sequence[SenseCluster], top_k: int) -> Trajectory:
    if top_k < 1:
        raise SchemaError("top_k must be >= 1")
    totals = {period: 0 for period in PERIODS}
    for cluster in clusters:
        for period, count in cluster.count_by_period.items():
            totals[period] += count
    top = clusters[:top_k]
    frequency: dict[tuple[str, str], float] = {}
    for cluster in top:
        for period in PERIODS:
            count = cluster.count_by_period.get(period, 0)
            frequency[(cluster.representative, period)] = (
                count / totals[period] if totals[period] else 0.0
            )
    return Trajectory(
        representatives=tuple(c.representative for c in top),
        frequency=frequency,
        period_totals=totals,
        zero_periods=tuple(p for p in PERIODS if totals[p] == 0),
    )


def write_trajectory_csv(trajectory: Trajectory, path: str) -> None:
    """Rows are cluster-major, periods in canonical order; byte-stable."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["period", "cluster_representative", "frequency"])
        for rep in trajectory.representatives:
            for period in PERIODS:
                writer.writerow([period, rep, repr(trajectory.frequency[(rep, period)])])


# ---------------------------------------------------------------------------
# chart
# ---------------------------------------------------------------------------

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 20, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_trajectory_svg(trajectory: Trajectory, path: str) -> None:
    """Deterministic hand-built line chart: one polyline per cluster, periods
    left to right, frequency 0..1 on the vertical axis."""
    inner_w = _W - _ML - _MR
    inner_h = _H - _MT - _MB
    n = len(PERIODS)

    def x_at(i: int) -> float:
        return _ML + (inner_w * i / (n - 1) if n > 1 else inner_w / 2)

    def y_at(freq: float) -> float:
        return _MT + inner_h * (1.0 - freq)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_at(tick)
        parts.append(f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end">{tick:g}</text>'
        )
    for i, period in enumerate(PERIODS):
        x = x_at(i)
        parts.append(
            f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" y2="{_H - _MB + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{_H - _MB + 18}" text-anchor="middle">{_esc(period)}</text>'
        )
    for c, rep in enumerate(trajectory.representatives):
        color = _COLORS[c % len(_COLORS)]
        points = " ".join(
            f"{x_at(i):.1f},{y_at(trajectory.frequency[(rep, period)]):.1f}"
            for i, period in enumerate(PERIODS)
        )
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = _MT + 16 * (c + 1)
        parts.append(
            f'<line x1="{_W - _MR - 150}" y1="{ly - 4}" x2="{_W - _MR - 130}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{_W - _MR - 124}" y="{ly}">{_esc(rep)}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(parts) + "\n")


def emit_chart(trajectory: Trajectory, out_prefix: str) -> tuple[str, str]:
    """Write PREFIX.csv and PREFIX.svg; returns their paths."""
    if not trajectory.representatives:
        raise SchemaError("empty trajectory")
    csv_path = out_prefix + ".csv"
    svg_path = out_prefix + ".svg"
    write_trajectory_csv(trajectory, csv_path)
    write_trajectory_svg(trajectory, svg_path)
    return csv_path, svg_path
