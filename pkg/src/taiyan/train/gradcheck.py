"""Finite-difference verification of the backward pass."""

from __future__ import annotations

import numpy as np

from ..errors import SchemaError
from ..model.config import ModelConfig
from ..model.net import backward_batch, forward_batch
from ..model.params import Parameters
from .loss import cross_entropy_loss, loss_and_dlogits

MAX_LAYERS = 2
MAX_D_MODEL = 16


def gradient_check(
    params: Parameters,
    cfg: ModelConfig,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss_mask: np.ndarray,
    step: float = 1e-4,
) -> float:
    """Worst per-tensor relative error between analytic and central
    finite-difference gradients of the masked cross entropy.

    Runs the whole pipeline in float64; the step size would drown in float32
    rounding.  Restricted to tiny configs so the elementwise sweep stays
    cheap.
    """
    if cfg.n_layers > MAX_LAYERS or cfg.d_model > MAX_D_MODEL:
        raise SchemaError(
            f"gradient_check wants a tiny config (<= {MAX_LAYERS} layers, "
            f"d_model <= {MAX_D_MODEL})"
        )
    p64: Parameters = {k: v.astype(np.float64) for k, v in params.items()}
    inputs = np.asarray(inputs)

    logits, cache, _ = forward_batch(p64, cfg, inputs, want_cache=True)
    _, dlogits = loss_and_dlogits(logits, targets, loss_mask)
    analytic = backward_batch(p64, cfg, inputs, cache, dlogits)

    def loss_at() -> float:
        out, _, _ = forward_batch(p64, cfg, inputs)
        return cross_entropy_loss(out, targets, loss_mask)

    worst = 0.0
    for name, tensor in p64.items():
        fd = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_at()
            flat[i] = orig - step
            lo = loss_at()
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * step)
        a_norm = float(np.linalg.norm(analytic[name]))
        f_norm = float(np.linalg.norm(fd))
        diff = float(np.linalg.norm(analytic[name] - fd))
        denom = max(a_norm, f_norm, 1e-12)
        rel = diff / denom
        if rel > worst:
            worst = rel
    return worst
