"""Greedy generation with an optional per-step token mask."""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import SchemaError
from ..vocab import EOS
from .config import ModelConfig
from .net import DecodeSession
from .params import Parameters

MaskFn = Callable[[list[int]], Iterable[int]]


class EmptyMask(SchemaError):
    """mask_fn returned no allowed tokens."""


class EmptyPrompt(SchemaError):
    """generate requires a nonempty prompt."""


def generate(
    params: Parameters,
    cfg: ModelConfig,
    prompt: Sequence[int],
    max_new: int,
    mask_fn: Optional[MaskFn] = None,
    pad_id: int = 0,
    eos_id: int = EOS,
) -> list[int]:
    """Greedy argmax decoding; ties break toward the lowest token id.

    mask_fn, when given, maps the tokens generated so far to the allowed set
    for the next step.  Returns the generated ids, including the terminating
    EOS when one is produced.  Deterministic for fixed parameters and prompt.
    """
    if len(prompt) == 0:
        raise EmptyPrompt("prompt must be nonempty")
    if max_new < 1:
        raise SchemaError("max_new must be >= 1")
    session = DecodeSession(params, cfg, [list(prompt)], max_new, pad_id=pad_id)
    out: list[int] = []
    for _ in range(max_new):
        if mask_fn is not None:
            allowed = sorted(set(mask_fn(out)))
            if not allowed:
                raise EmptyMask("mask_fn returned an empty allowed set")
            if len(allowed) == 1:
                choice = allowed[0]
            else:
                values = session.subset_logits(np.asarray([allowed]))[0]
                choice = allowed[int(np.argmax(values))]
        else:
            choice = int(np.argmax(session.full_logits()[0]))
        out.append(choice)
        if choice == eos_id:
            break
        if session.pos < session.cap:
            session.advance(np.asarray([choice]))
        else:
            break
    return out
