"""Quantitative evaluation: text error, boundary F1, allusion scores,
character BLEU, CHRF, and Jaro-Winkler similarity."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError
from .kernels import jaro_winkler as _jw_kernel
from .textcore import align, strip_marks


class TextMismatch(SchemaError):
    """Boundary F1 requested on a pair whose stripped texts differ."""


class LengthMismatch(SchemaError):
    """Corpus metric called with unequal gold/prediction counts."""


@dataclass(frozen=True)
class PRF:
    """Precision/recall/F1 with their raw counts.

    By convention a zero denominator gives 0, not 1: an empty prediction set
    earns no precision credit.
    """

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(tp=tp, fp=fp, fn=fn, precision=p, recall=r, f1=f1)


# ---------------------------------------------------------------------------
# text error and boundary F1
# ---------------------------------------------------------------------------

def text_error(original: str, predicted: str) -> bool:
    """True iff the two texts differ once marks are stripped."""
    return strip_marks(original) != strip_marks(predicted)


def text_error_rate(originals: Sequence[str], predictions: Sequence[str]) -> float:
    if len(originals) != len(predictions):
        raise LengthMismatch(f"{len(originals)} originals vs {len(predictions)} predictions")
    if not originals:
        raise SchemaError("empty corpus")
    errors = sum(1 for o, p in zip(originals, predictions) if text_error(o, p))
    return errors / len(originals)


def _boundary_counts(gold: dict[int, str], pred: dict[int, str], typed: bool) -> tuple[int, int, int]:
    if typed:
        tp = sum(1 for b, m in pred.items() if gold.get(b) == m)
    else:
        tp = len(gold.keys() & pred.keys())
    return tp, len(pred) - tp, len(gold) - tp


def seg_punct_f1(gold: str, pred: str) -> tuple[PRF, PRF]:
    """Exact-boundary scores for one pair.

    Segmentation ignores mark type; punctuation requires it to match.  Both
    texts must strip to the same source.
    """
    if text_error(gold, pred):
        raise TextMismatch("gold and prediction differ in text content")
    gm = align(gold).boundary_marks
    pm = align(pred).boundary_marks
    seg = PRF.from_counts(*_boundary_counts(gm, pm, typed=False))
    punct = PRF.from_counts(*_boundary_counts(gm, pm, typed=True))
    return seg, punct


@dataclass(frozen=True)
class CorpusSegPunct:
    """Micro-aggregated boundary scores plus per-sample macro means."""

    seg: PRF
    punct: PRF
    macro_seg_f1: float
    macro_punct_f1: float
    n_samples: int


def corpus_seg_punct(golds: Sequence[str], preds: Sequence[str]) -> CorpusSegPunct:
    """Aggregate over pairs; every pair must pass the text-match precondition.

    Callers wanting the skip-on-mismatch behavior filter pairs first (see the
    eval command) so that the text-error rate stays a separate, visible
    number.
    """
    if len(golds) != len(preds):
        raise LengthMismatch(f"{len(golds)} golds vs {len(preds)} predictions")
    if not golds:
        raise SchemaError("empty corpus")
    seg_tp = seg_fp = seg_fn = 0
    p_tp = p_fp = p_fn = 0
    macro_seg = []
    macro_punct = []
    for gold, pred in zip(golds, preds):
        seg, punct = seg_punct_f1(gold, pred)
        seg_tp += seg.tp
        seg_fp += seg.fp
        seg_fn += seg.fn
        p_tp += punct.tp
        p_fp += punct.fp
        p_fn += punct.fn
        macro_seg.append(seg.f1)
        macro_punct.append(punct.f1)
    return CorpusSegPunct(
        seg=PRF.from_counts(seg_tp, seg_fp, seg_fn),
        punct=PRF.from_counts(p_tp, p_fp, p_fn),
        macro_seg_f1=sum(macro_seg) / len(macro_seg),
        macro_punct_f1=sum(macro_punct) / len(macro_punct),
        n_samples=len(golds),
    )


# ---------------------------------------------------------------------------
# allusion scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AllusionGold:
    """Gold annotation: presence flag plus the set of allusion labels."""

    text: str
    has_allusion: bool
    allusion_ids: frozenset[str]

    def __post_init__(self) -> None:
        if self.has_allusion != bool(self.allusion_ids):
            raise SchemaError("has_allusion must agree with allusion_ids being nonempty")


@dataclass(frozen=True)
class AllusionReport:
    detection_acc: float
    identification: PRF
    no_positives: bool


def allusion_scores(
    golds: Sequence[AllusionGold], preds: Sequence[tuple[bool, Iterable[str]]]
) -> AllusionReport:
    """Detection accuracy over booleans; identification micro-PRF over
    (sample, label) pairs.  no_positives flags the degenerate all-empty case."""
    if len(golds) != len(preds):
        raise LengthMismatch(f"{len(golds)} golds vs {len(preds)} predictions")
    if not golds:
        raise SchemaError("empty corpus")
    correct = 0
    tp = fp = fn = 0
    for gold, (pred_has, pred_labels) in zip(golds, preds):
        labels = set(pred_labels)
        if gold.has_allusion == bool(pred_has):
            correct += 1
        tp += len(gold.allusion_ids & labels)
        fp += len(labels - gold.allusion_ids)
        fn += len(gold.allusion_ids - labels)
    return AllusionReport(
        detection_acc=correct / len(golds),
        identification=PRF.from_counts(tp, fp, fn),
        no_positives=(tp == 0 and fp == 0 and fn == 0),
    )


# ---------------------------------------------------------------------------
# character BLEU
# ---------------------------------------------------------------------------

_BLEU_ORDER = 4


def _ngram_counts(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def bleu(refs: Sequence[str], hyps: Sequence[str], smoothing: bool = False) -> float:
    """Corpus-level character 4-gram BLEU in [0, 100].

    Modified precisions with clipping, uniform 1/4 weights, brevity penalty
    exp(1 - r/c) when the hypotheses run short.  Without smoothing, any order
    with a zero corpus-level numerator zeroes the score; with it, every
    order's precision becomes (numerator + 1) / (denominator + 1).
    """
    if len(refs) != len(hyps):
        raise LengthMismatch(f"{len(refs)} refs vs {len(hyps)} hyps")
    if not refs:
        raise SchemaError("empty corpus")
    num = [0] * _BLEU_ORDER
    den = [0] * _BLEU_ORDER
    ref_len = 0
    hyp_len = 0
    for ref, hyp in zip(refs, hyps):
        ref_len += len(ref)
        hyp_len += len(hyp)
        for n in range(1, _BLEU_ORDER + 1):
            hyp_counts = _ngram_counts(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref, n)
            den[n - 1] += sum(hyp_counts.values())
            num[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    if hyp_len == 0 or any(d == 0 for d in den):
        return 0.0
    if smoothing:
        precisions = [(num[i] + 1) / (den[i] + 1) for i in range(_BLEU_ORDER)]
    else:
        if any(x == 0 for x in num):
            return 0.0
        precisions = [num[i] / den[i] for i in range(_BLEU_ORDER)]
    log_mean = sum(math.log(p) for p in precisions) / _BLEU_ORDER
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_mean)


# ---------------------------------------------------------------------------
# CHRF
# ---------------------------------------------------------------------------

_CHRF_MAX_ORDER = 6
_CHRF_BETA = 2.0


def chrf(refs: Sequence[str], hyps: Sequence[str]) -> float:
    """Character n-gram F-score, orders 1..6, recall-weighted with beta = 2.

    Counts aggregate over the corpus per order; an order is skipped only when
    neither side has any n-gram of that length anywhere, so a one-sided empty
    order still drags the average down.
    """
    if len(refs) != len(hyps):
        raise LengthMismatch(f"{len(refs)} refs vs {len(hyps)} hyps")
    if not refs:
        raise SchemaError("empty corpus")
    match = [0] * _CHRF_MAX_ORDER
    hyp_total = [0] * _CHRF_MAX_ORDER
    ref_total = [0] * _CHRF_MAX_ORDER
    for ref, hyp in zip(refs, hyps):
        for n in range(1, _CHRF_MAX_ORDER + 1):
            ref_counts = _ngram_counts(ref, n)
            hyp_counts = _ngram_counts(hyp, n)
            ref_total[n - 1] += sum(ref_counts.values())
            hyp_total[n - 1] += sum(hyp_counts.values())
            match[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    precisions = []
    recalls = []
    for i in range(_CHRF_MAX_ORDER):
        if hyp_total[i] == 0 and ref_total[i] == 0:
            continue
        precisions.append(match[i] / hyp_total[i] if hyp_total[i] else 0.0)
        recalls.append(match[i] / ref_total[i] if ref_total[i] else 0.0)
    if not precisions:
        return 0.0
    avg_p = sum(precisions) / len(precisions)
    avg_r = sum(recalls) / len(recalls)
    b2 = _CHRF_BETA * _CHRF_BETA
    denom = b2 * avg_p + avg_r
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + b2) * avg_p * avg_r / denom


# ---------------------------------------------------------------------------
# string similarity
# ---------------------------------------------------------------------------

def jaro_winkler(a: str, b: str) -> float:
    """Jaro similarity with the 0.1-per-char prefix bonus, prefix capped at 4."""
    u = np.asarray([ord(c) for c in a], dtype=np.int32)
    v = np.asarray([ord(c) for c in b], dtype=np.int32)
    return float(_jw_kernel(u, v))
