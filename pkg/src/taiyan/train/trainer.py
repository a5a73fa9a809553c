"""Data preparation and the training loop."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..errors import NumericError, SchemaError
from ..model.config import ModelConfig
from ..model.net import backward_batch, forward_batch
from ..model.params import Parameters
from ..vocab import EOS, PAD, Vocabulary
from .config import TrainConfig
from .loss import loss_and_dlogits
from .optim import AdamW
from .schedule import cosine_lr


class NonFiniteLoss(NumericError):
    """Training aborted because the loss left the reals."""

    def __init__(self, step: int, value: float) -> None:
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


@dataclass(frozen=True)
class Row:
    """One training row: shifted inputs/targets plus the loss mask."""

    inputs: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray


@dataclass(frozen=True)
class LossRecord:
    step: int
    lr: float
    loss: float


def load_text_dir(path: str) -> list[str]:
    """Read every .txt file under a directory, sorted by name, one document
    per file."""
    if not os.path.isdir(path):
        raise FileNotFoundError(f"corpus directory not found: {path}")
    docs = []
    for name in sorted(os.listdir(path)):
        if not name.endswith(".txt"):
            continue
        with open(os.path.join(path, name), encoding="utf-8") as f:
            text = f.read().strip()
        if text:
            docs.append(text)
    if not docs:
        raise SchemaError(f"no nonempty .txt documents under {path}")
    return docs


def pack_documents(docs: Sequence[str], vocab: Vocabulary, seq_len: int) -> list[Row]:
    """Concatenate documents with EOS separators and cut next-token windows.

    Windows stride by seq_len so every stream token is a prediction target
    exactly once; the final short window is PAD-filled with its mask off.
    """
    stream: list[int] = []
    for doc in docs:
        stream.extend(vocab.encode(doc))
        stream.append(EOS)
    if len(stream) < 2:
        raise SchemaError("corpus too small to form one training window")
    arr = np.asarray(stream, dtype=np.int64)
    rows = []
    for start in range(0, len(arr) - 1, seq_len):
        window = arr[start : start + seq_len + 1]
        w = len(window)
        inputs = np.full(seq_len, PAD, dtype=np.int64)
        targets = np.full(seq_len, PAD, dtype=np.int64)
        mask = np.zeros(seq_len, dtype=bool)
        inputs[: w - 1] = window[: w - 1]
        targets[: w - 1] = window[1:w]
        mask[: w - 1] = True
        rows.append(Row(inputs, targets, mask))
    return rows


def sft_row(prompt_ids: Sequence[int], target_ids: Sequence[int], seq_len: int) -> Row | None:
    """Build one fine-tuning row; loss covers only the target span.

    Returns None when prompt plus target exceed seq_len.
    """
    full = list(prompt_ids) + list(target_ids)
    if len(full) > seq_len + 1:
        return None
    inputs = np.full(seq_len, PAD, dtype=np.int64)
    targets = np.full(seq_len, PAD, dtype=np.int64)
    mask = np.zeros(seq_len, dtype=bool)
    inputs[: len(full) - 1] = full[:-1]
    targets[: len(full) - 1] = full[1:]
    lp = len(prompt_ids)
    mask[lp - 1 : len(full) - 1] = True
    return Row(inputs, targets, mask)


def _batches(
    n_rows: int, cfg: TrainConfig
) -> Iterator[np.ndarray]:
    """Deterministic epoch-reshuffled batch index stream."""
    for epoch in range(cfg.repeat_factor):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n_rows)
        for start in range(0, n_rows, cfg.batch_size):
            yield order[start : start + cfg.batch_size]


def train(
    params: Parameters,
    model_cfg: ModelConfig,
    rows: Sequence[Row],
    cfg: TrainConfig,
) -> list[LossRecord]:
    """Run the optimizer over the rows; mutates params in place.

    Visits the data repeat_factor times with a fresh shuffle each pass, keyed
    by [seed, epoch]; stops early once total_steps updates have been applied.
    Returns the per-step loss log.  Deterministic given seed and thread count
    one; raises NonFiniteLoss with the offending step index on divergence.
    """
    if not rows:
        raise SchemaError("no training rows")
    if cfg.seq_len > model_cfg.max_seq_len:
        raise SchemaError(
            f"cfg.seq_len {cfg.seq_len} exceeds model max_seq_len {model_cfg.max_seq_len}"
        )
    opt = AdamW(params)
    log: list[LossRecord] = []
    step = 0
    for batch_idx in _batches(len(rows), cfg):
        if step >= cfg.total_steps:
            break
        inputs = np.stack([rows[i].inputs for i in batch_idx])
        targets = np.stack([rows[i].targets for i in batch_idx])
        mask = np.stack([rows[i].loss_mask for i in batch_idx])
        lr = cosine_lr(step, cfg)
        logits, cache, _ = forward_batch(params, model_cfg, inputs, want_cache=True)
        loss, dlogits = loss_and_dlogits(logits, targets, mask)
        if not np.isfinite(loss):
            raise NonFiniteLoss(step, loss)
        grads = backward_batch(params, model_cfg, inputs, cache, dlogits)
        opt.step(params, grads, lr)
        log.append(LossRecord(step=step, lr=lr, loss=loss))
        step += 1
    return log
