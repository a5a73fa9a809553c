"""Constrained punctuation decoding: the reconstruction guarantee."""

import random

import numpy as np
import pytest

from taiyan.decode import (
    DecodeState,
    DisagreementSpan,
    EmptyInput,
    advance_state,
    allowed_tokens,
    post_edit_flags,
    punctuate,
    punctuate_batch,
    punctuation_mask_fn,
)
from taiyan.errors import SchemaError
from taiyan.model.config import ModelConfig
from taiyan.model.generate import generate
from taiyan.model.params import init_parameters
from taiyan.sft import TaskKind, prompt_ids
from taiyan.textcore import MARK_SET, MARKS, MalformedPunctuation, align, strip_marks
from taiyan.vocab import EOS, UNK, build_vocab
from tests.conftest import rand_cjk


@pytest.fixture(scope="module")
def small_lm():
    """Random-init model over a 30-char vocabulary, instruction included."""
    from taiyan.sft import instruction_for

    base = "".join(chr(0x4E00 + i) for i in range(30))
    vocab = build_vocab([base + "。，！？；：、\n" + instruction_for(TaskKind.PUNCTUATION)])
    cfg = ModelConfig(
        n_layers=2, d_model=32, n_heads=2, d_ff=64,
        vocab_size=vocab.size, max_seq_len=256,
    )
    params = init_parameters(cfg, seed=3)
    return params, cfg, vocab


def _grammar_ok(text: str) -> bool:
    if not text or text[0] in MARK_SET:
        return False
    for a, b in zip(text, text[1:]):
        if a in MARK_SET and b in MARK_SET:
            return False
    return text[-1] in MARK_SET


# ---------------------------------------------------------------------------
# the state machine
# ---------------------------------------------------------------------------

def test_allowed_tokens_shapes(small_lm):
    _, _, vocab = small_lm
    mark_ids = {vocab.id_of[m] for m in MARKS}
    state = DecodeState("一丁")
    assert allowed_tokens(state, vocab) == {vocab.id_of["一"]}  # no leading mark
    advance_state(state, vocab.id_of["一"], vocab)
    assert allowed_tokens(state, vocab) == {vocab.id_of["丁"]} | mark_ids
    advance_state(state, vocab.id_of["。"], vocab)
    assert allowed_tokens(state, vocab) == {vocab.id_of["丁"]}  # no mark run
    advance_state(state, vocab.id_of["丁"], vocab)
    assert allowed_tokens(state, vocab) == mark_ids  # must close with a mark
    advance_state(state, vocab.id_of["。"], vocab)
    assert allowed_tokens(state, vocab) == {EOS}
    advance_state(state, EOS, vocab)
    assert state.finished
    with pytest.raises(SchemaError):
        allowed_tokens(state, vocab)


def test_allowed_tokens_oov_forces_unk(small_lm):
    _, _, vocab = small_lm
    state = DecodeState("一\U0002070E丁")  # middle char far outside the vocab
    advance_state(state, vocab.id_of["一"], vocab)
    assert allowed_tokens(state, vocab) == {UNK}
    # the emitted surface is the original character, not the UNK token
    assert advance_state(state, UNK, vocab) == "\U0002070E"
    assert state.cursor == 2


def test_state_machine_never_offers_empty_set(small_lm):
    _, _, vocab = small_lm
    rng = random.Random(40)
    for _ in range(50):
        text = rand_cjk(rng, rng.randint(1, 30))
        state = DecodeState(text)
        guard = 0
        while not state.finished:
            allowed = allowed_tokens(state, vocab)
            assert allowed
            advance_state(state, rng.choice(sorted(allowed)), vocab)
            guard += 1
            assert guard < 200


def test_random_walk_emits_valid_punctuation(small_lm):
    _, _, vocab = small_lm
    rng = random.Random(41)
    for _ in range(50):
        text = rand_cjk(rng, rng.randint(1, 30))
        state = DecodeState(text)
        out = []
        while not state.finished:
            allowed = sorted(allowed_tokens(state, vocab))
            out.append(advance_state(state, rng.choice(allowed), vocab))
        result = "".join(out)
        assert strip_marks(result) == text
        assert _grammar_ok(result)
        align(result)  # must not raise


# ---------------------------------------------------------------------------
# model-driven decoding
# ---------------------------------------------------------------------------

def test_punctuate_reconstructs_source(small_lm):
    params, cfg, vocab = small_lm
    rng = random.Random(42)
    texts = [rand_cjk(rng, rng.randint(1, 60)) for _ in range(25)]
    outs = punctuate_batch(params, cfg, vocab, texts)
    for text, out in zip(texts, outs):
        assert strip_marks(out) == text
        assert _grammar_ok(out)


def test_punctuate_handles_pure_oov(small_lm):
    params, cfg, vocab = small_lm
    text = "".join(chr(0x20000 + i) for i in range(12))  # nothing in vocab
    out = punctuate(params, cfg, vocab, text)
    assert strip_marks(out) == text
    assert _grammar_ok(out)


def test_punctuate_single_char(small_lm):
    params, cfg, vocab = small_lm
    out = punctuate(params, cfg, vocab, "甲")
    assert strip_marks(out) == "甲"
    assert len(out) == 2 and out[1] in MARK_SET


def test_punctuate_chunks_long_text(small_lm):
    params, cfg, vocab = small_lm
    rng = random.Random(43)
    text = rand_cjk(rng, 300)  # far beyond one max_seq_len=256 window
    out = punctuate(params, cfg, vocab, text)
    assert strip_marks(out) == text
    assert _grammar_ok(out)


def test_punctuate_batch_matches_singles(small_lm):
    params, cfg, vocab = small_lm
    rng = random.Random(44)
    texts = [rand_cjk(rng, rng.randint(1, 20)) for _ in range(8)]
    batch = punctuate_batch(params, cfg, vocab, texts)
    singles = [punctuate(params, cfg, vocab, t) for t in texts]
    assert batch == singles


def test_punctuate_input_guards(small_lm):
    params, cfg, vocab = small_lm
    with pytest.raises(EmptyInput):
        punctuate(params, cfg, vocab, "")
    with pytest.raises(MalformedPunctuation):
        punctuate(params, cfg, vocab, "甲，乙")
    with pytest.raises(EmptyInput):
        punctuate_batch(params, cfg, vocab, ["甲", ""])


def test_mask_fn_path_agrees_with_punctuate(small_lm):
    """generate() with the mask adapter lands on the same constrained output."""
    params, cfg, vocab = small_lm
    rng = random.Random(45)
    for _ in range(5):
        text = rand_cjk(rng, rng.randint(2, 15))
        prompt = prompt_ids(vocab, TaskKind.PUNCTUATION, text)
        ids = generate(
            params, cfg, prompt, max_new=3 * len(text) + 4,
            mask_fn=punctuation_mask_fn(vocab, text),
        )
        state = DecodeState(text)
        out = "".join(advance_state(state, t, vocab) for t in ids)
        assert out == punctuate(params, cfg, vocab, text)


# ---------------------------------------------------------------------------
# disagreement review
# ---------------------------------------------------------------------------

def test_post_edit_flags_kinds():
    gold = "天地玄黃，宇宙洪荒。日月盈昃。"
    pred = "天地玄黃。宇宙洪荒日月，盈昃。"
    flags = post_edit_flags(gold, pred)
    kinds = {f.boundary: f.kind for f in flags}
    assert kinds[4] == "type mismatch ，/。"
    assert kinds[8] == "omission 。"
    assert kinds[10] == "insertion ，"
    for f in flags:
        assert isinstance(f, DisagreementSpan)
        assert len(f.before) <= 5 and len(f.after) <= 5
        assert f.before == strip_marks(gold)[max(0, f.boundary - 5):f.boundary]


def test_post_edit_flags_identical_is_clean():
    assert post_edit_flags("甲乙。", "甲乙。") == []


def test_post_edit_flags_requires_same_source():
    from taiyan.decode import AlignmentMismatch

    with pytest.raises(AlignmentMismatch):
        post_edit_flags("甲乙。", "甲丙。")
