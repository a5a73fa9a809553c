"""First/second-moment optimizer with decoupled weight decay."""

from __future__ import annotations

import math

import numpy as np

from ..model.params import Parameters


class AdamW:
    """Adam with bias correction, decoupled weight decay, and global norm clip.

    Decay applies only to matrices (ndim >= 2); normalization gains are left
    undecayed.  Moment state is float32 like the parameters, so repeated runs
    from the same seed update bit-identically on one thread.
    """

    def __init__(
        self,
        params: Parameters,
        beta1: float = 0.9,
        beta2: float = 0.95,
        eps: float = 1e-8,
        weight_decay: float = 0.1,
        clip_norm: float = 1.0,
    ) -> None:
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Parameters, grads: Parameters, lr: float) -> None:
        """Apply one in-place update at the given learning rate."""
        total_sq = 0.0
        for g in grads.values():
            total_sq += float(np.sum(np.square(g, dtype=np.float64)))
        norm = math.sqrt(total_sq)
        scale = self.clip_norm / norm if norm > self.clip_norm else 1.0

        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name] * scale if scale != 1.0 else grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and p.ndim >= 2:
                update = update + self.weight_decay * p
            p -= lr * update
