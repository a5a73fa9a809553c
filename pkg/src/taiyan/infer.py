"""One-shot task inference over a checkpointed model.

Punctuation goes through the constrained decoder, so its reconstruction
guarantee carries over; the other three tasks decode greedily until EOS.
"""

from __future__ import annotations

from typing import Optional

from .decode import punctuate
from .errors import SchemaError
from .model.config import ModelConfig
from .model.generate import generate
from .model.params import Parameters
from .sft import TaskKind, prompt_ids
from .vocab import Vocabulary

DEFAULT_MAX_NEW = 256


class WordNotInText(SchemaError):
    """Word explanation asked about a word absent from the input."""


def infer_task(
    params: Parameters,
    cfg: ModelConfig,
    vocab: Vocabulary,
    task: TaskKind,
    text: str,
    word: Optional[str] = None,
    max_new: int = DEFAULT_MAX_NEW,
) -> str:
    """Run one task on one input text and return the model's answer."""
    if not text:
        raise SchemaError("empty input text")
    if task is TaskKind.PUNCTUATION:
        return punctuate(params, cfg, vocab, text)
    if task is TaskKind.WORD_EXPLANATION:
        if not word:
            raise SchemaError("word explanation requires a word")
        if word not in text:
            raise WordNotInText(f"word {word!r} does not occur in the input text")
    prompt = prompt_ids(vocab, task, text, word)
    room = cfg.max_seq_len - len(prompt)
    if room < 1:
        raise SchemaError(
            f"prompt of {len(prompt)} tokens leaves no room under max_seq_len {cfg.max_seq_len}"
        )
    out = generate(params, cfg, prompt, max_new=min(max_new, room))
    return vocab.decode(out)
