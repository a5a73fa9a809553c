"""Constrained punctuation decoding.

The decoder walks a small state machine over the source text: at every step
the model may emit only the next source character or (where the grammar
permits) one of the seven marks, so the stripped output always equals the
input no matter what the parameters contain.  Out-of-vocabulary characters
are force-advanced through their UNK encoding and written back verbatim.

Batched decoding left-aligns nothing: prompts are padded on the left so the
relative-distance position bias is untouched, rows are bucketed by length,
and stretches where every row's choice is forced are pushed through the model
in blocks instead of one token at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import SchemaError
from .model.config import ModelConfig
from .model.net import DecodeSession
from .model.params import Parameters
from .sft import TaskKind, instruction_for, prompt_ids
from .textcore import MARKS, MARK_SET, MalformedPunctuation, align, contains_mark
from .vocab import BOS, EOS, PAD, SEP, UNK, Vocabulary

# Per-bucket bound on batch_rows * (prompt + decode budget).  Small buckets
# win twice over: less left-pad for the shorter rows to drag through every
# attention step, and tighter equal-length spans after the prefill split.
ROW_BUDGET = 4096

_FORCED_LOOKAHEAD = 64


class EmptyInput(SchemaError):
    """punctuate called on an empty text."""


class AlignmentMismatch(SchemaError):
    """Two punctuated texts disagree once marks are stripped."""


@dataclass
class DecodeState:
    """Progress through one source text."""

    source: str
    cursor: int = 0
    last_was_mark: bool = False
    finished: bool = False


def allowed_tokens(state: DecodeState, vocab: Vocabulary) -> set[int]:
    """The token ids the model may emit next; never empty.

    No mark may open the text, follow another mark, or fail to close it; an
    out-of-vocabulary next character admits only its UNK encoding so the
    cursor must advance.
    """
    if state.finished:
        raise SchemaError("allowed_tokens on a finished state")
    n = len(state.source)
    if state.cursor < n:
        next_id = vocab.id_of.get(state.source[state.cursor], UNK)
        if next_id == UNK:
            return {UNK}
        if state.cursor == 0 or state.last_was_mark:
            return {next_id}
        return {next_id} | {vocab.id_of[m] for m in MARKS}
    if state.last_was_mark:
        return {EOS}
    return {vocab.id_of[m] for m in MARKS}


def advance_state(state: DecodeState, token_id: int, vocab: Vocabulary) -> str:
    """Apply one chosen token; returns the emitted text (possibly empty).

    A mark id emits the mark; anything else advances the cursor and emits the
    original source character, which keeps out-of-vocabulary text intact.
    """
    if token_id == EOS:
        state.finished = True
        return ""
    surface = vocab.tokens[token_id]
    if surface in MARK_SET:
        state.last_was_mark = True
        return surface
    emitted = state.source[state.cursor]
    state.cursor += 1
    state.last_was_mark = False
    return emitted


def _forced_run(state: DecodeState, vocab: Vocabulary, limit: int) -> list[int]:
    """Longest upcoming stretch whose mask is a singleton at every step."""
    sim = DecodeState(state.source, state.cursor, state.last_was_mark, state.finished)
    run: list[int] = []
    while not sim.finished and len(run) < limit:
        allowed = allowed_tokens(sim, vocab)
        if len(allowed) != 1:
            break
        token = next(iter(allowed))
        advance_state(sim, token, vocab)
        run.append(token)
    return run


def _decode_cap(n_chars: int) -> int:
    # prompt (BOS + text + newline + instruction + SEP) plus the worst-case
    # output (a mark at every boundary) plus the fed EOS
    instr = len(instruction_for(TaskKind.PUNCTUATION))
    return 3 * n_chars + instr + 5


def _chunk_chars(cfg: ModelConfig) -> int:
    instr = len(instruction_for(TaskKind.PUNCTUATION))
    return max(1, (cfg.max_seq_len - instr - 5) // 3)


def punctuate_batch(
    params: Parameters,
    cfg: ModelConfig,
    vocab: Vocabulary,
    texts: Sequence[str],
    row_budget: int = ROW_BUDGET,
) -> list[str]:
    """Punctuate many texts; output order matches input order.

    Texts longer than one model window are split into windows, decoded, and
    concatenated; every window closes with a mark, so the joined result still
    satisfies the output grammar.
    """
    for i, text in enumerate(texts):
        if not text:
            raise EmptyInput(f"text {i} is empty")
        if contains_mark(text):
            raise MalformedPunctuation(f"text {i} already contains punctuation marks")

    limit = _chunk_chars(cfg)
    pieces: list[str] = []
    owner: list[int] = []
    for i, text in enumerate(texts):
        for start in range(0, len(text), limit):
            pieces.append(text[start : start + limit])
            owner.append(i)

    order = sorted(range(len(pieces)), key=lambda j: -len(pieces[j]))
    results: list[Optional[str]] = [None] * len(pieces)
    bucket: list[int] = []
    for j in order:
        cap = _decode_cap(len(pieces[bucket[0] if bucket else j]))
        if bucket and (len(bucket) + 1) * cap > row_budget:
            _decode_bucket(params, cfg, vocab, pieces, bucket, results)
            bucket = [j]
        else:
            bucket.append(j)
    if bucket:
        _decode_bucket(params, cfg, vocab, pieces, bucket, results)

    out: list[str] = ["" for _ in texts]
    for j, piece_result in enumerate(results):
        assert piece_result is not None
        out[owner[j]] += piece_result
    return out


def _decode_bucket(
    params: Parameters,
    cfg: ModelConfig,
    vocab: Vocabulary,
    pieces: Sequence[str],
    rows: Sequence[int],
    results: list,
) -> None:
    texts = [pieces[j] for j in rows]
    prompts = [prompt_ids(vocab, TaskKind.PUNCTUATION, t) for t in texts]
    max_new = max(2 * len(t) + 2 for t in texts)
    session = DecodeSession(params, cfg, prompts, max_new, pad_id=PAD)

    # The bucket arrives sorted by length, so equal-length texts sit in a
    # contiguous span and (free choices aside) finish in lockstep.  Decoding
    # each span on a row view of the shared prefill avoids stepping rows that
    # are already done and avoids stalling the whole bucket whenever one row
    # faces a free choice.
    start = 0
    for stop in range(1, len(texts) + 1):
        if stop < len(texts) and len(texts[stop]) == len(texts[start]):
            continue
        outputs = _run_span(session.row_slice(start, stop), vocab, texts[start:stop])
        for k, text_out in enumerate(outputs):
            results[rows[start + k]] = text_out
        start = stop


def _run_span(
    session: DecodeSession, vocab: Vocabulary, texts: Sequence[str]
) -> list[str]:
    states = [DecodeState(t) for t in texts]
    outputs: list[list[str]] = [[] for _ in texts]
    b = len(texts)

    while True:
        live = [i for i in range(b) if not states[i].finished]
        if not live:
            break
        allowed = {i: sorted(allowed_tokens(states[i], vocab)) for i in live}
        if all(len(allowed[i]) == 1 for i in live):
            runs = {i: _forced_run(states[i], vocab, _FORCED_LOOKAHEAD) for i in live}
            t = min(len(r) for r in runs.values())
            block = np.full((b, t), PAD, dtype=np.int64)
            for i in live:
                for k in range(t):
                    token = runs[i][k]
                    block[i, k] = token
                    outputs[i].append(advance_state(states[i], token, vocab))
            session.advance_block(block)
            continue
        kmax = max(len(allowed[i]) for i in live)
        id_mat = np.full((b, kmax), PAD, dtype=np.int64)
        for i in live:
            ids = allowed[i]
            id_mat[i, : len(ids)] = ids
            id_mat[i, len(ids):] = ids[0]
        values = session.subset_logits(id_mat)
        next_ids = np.full(b, PAD, dtype=np.int64)
        for i in live:
            ids = allowed[i]
            token = ids[int(np.argmax(values[i, : len(ids)]))] if len(ids) > 1 else ids[0]
            next_ids[i] = token
            outputs[i].append(advance_state(states[i], token, vocab))
        session.advance(next_ids)

    return ["".join(out) for out in outputs]


def punctuate(params: Parameters, cfg: ModelConfig, vocab: Vocabulary, text: str) -> str:
    """Punctuate one text; strip_marks(result) == text by construction."""
    return punctuate_batch(params, cfg, vocab, [text])[0]


def punctuation_mask_fn(vocab: Vocabulary, text: str):
    """Adapter for generate(): replays the generated ids through the state
    machine and returns the allowed set for the next step."""

    def mask_fn(generated: list[int]) -> set[int]:
        state = DecodeState(text)
        for token in generated:
            advance_state(state, token, vocab)
        return allowed_tokens(state, vocab)

    return mask_fn


# ---------------------------------------------------------------------------
# reviewing a manuscript against the model
# ---------------------------------------------------------------------------

_CONTEXT = 5


@dataclass(frozen=True)
class DisagreementSpan:
    """One boundary where gold and model punctuation differ."""

    boundary: int
    kind: str
    gold_mark: str
    model_mark: str
    before: str
    after: str


def post_edit_flags(original_punctuated: str, model_punctuated: str) -> list[DisagreementSpan]:
    """Boundaries where mark presence or type differs, with nearby context.

    Both sides must strip to the same source text; otherwise the comparison
    is meaningless and AlignmentMismatch is raised.
    """
    gold = align(original_punctuated)
    pred = align(model_punctuated)
    if gold.chars != pred.chars:
        raise AlignmentMismatch("texts disagree after stripping marks")
    chars = gold.chars
    spans: list[DisagreementSpan] = []
    for b in sorted(set(gold.boundary_marks) | set(pred.boundary_marks)):
        gm = gold.boundary_marks.get(b, "")
        pm = pred.boundary_marks.get(b, "")
        if gm == pm:
            continue
        if gm and pm:
            kind = f"type mismatch {gm}/{pm}"
        elif pm:
            kind = f"insertion {pm}"
        else:
            kind = f"omission {gm}"
        spans.append(
            DisagreementSpan(
                boundary=b,
                kind=kind,
                gold_mark=gm,
                model_mark=pm,
                before=chars[max(0, b - _CONTEXT) : b],
                after=chars[b : b + _CONTEXT],
            )
        )
    return spans
