"""Masked next-token cross entropy."""

from __future__ import annotations

import numpy as np

from ..errors import SchemaError
from ..kernels import softmax_xent


class AllMasked(SchemaError):
    """Loss requested but no position carries loss."""


def _select(logits: np.ndarray, targets: np.ndarray, loss_mask: np.ndarray):
    v = logits.shape[-1]
    flat_logits = np.ascontiguousarray(logits.reshape(-1, v))
    flat_targets = np.asarray(targets).reshape(-1)
    flat_mask = np.asarray(loss_mask, dtype=bool).reshape(-1)
    if flat_logits.shape[0] != flat_targets.shape[0] or flat_targets.shape[0] != flat_mask.shape[0]:
        raise SchemaError("logits, targets, and loss_mask disagree on position count")
    idx = np.flatnonzero(flat_mask)
    if idx.size == 0:
        raise AllMasked("loss_mask leaves no position to score")
    return flat_logits, flat_targets, idx


def cross_entropy_loss(logits: np.ndarray, targets: np.ndarray, loss_mask: np.ndarray) -> float:
    """Mean of -log softmax(logits)[target] over mask-true positions.

    Positions where the mask is false never touch the result, so perturbing
    their logits leaves the loss bit-identical.
    """
    flat_logits, flat_targets, idx = _select(logits, targets, loss_mask)
    nll, _ = softmax_xent(flat_logits[idx], flat_targets[idx], want_grad=False)
    return float(np.mean(nll))


def loss_and_dlogits(
    logits: np.ndarray, targets: np.ndarray, loss_mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the logits (zero off-mask)."""
    flat_logits, flat_targets, idx = _select(logits, targets, loss_mask)
    nll, dsel = softmax_xent(flat_logits[idx], flat_targets[idx], want_grad=True)
    dlogits = np.zeros_like(flat_logits)
    dlogits[idx] = dsel / np.asarray(idx.size, dtype=dsel.dtype)
    return float(np.mean(nll)), dlogits.reshape(logits.shape)
