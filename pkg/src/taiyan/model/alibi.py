"""Linear attention biases that encode position through relative distance."""

from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")


def alibi_slopes(n_heads: int) -> np.ndarray:
    """Per-head slopes 2^(-8h/n_heads) for h = 1..n_heads, strictly decreasing."""
    if n_heads < 1:
        raise ValueError("n_heads must be >= 1")
    h = np.arange(1, n_heads + 1, dtype=np.float64)
    return np.power(2.0, -8.0 * h / n_heads)


def alibi_bias(n_heads: int, seq_len: int) -> np.ndarray:
    """Bias tensor [n_heads, seq_len, seq_len].

    Entry [h, i, j] is -slope_h * (i - j) for j <= i and -inf above the
    diagonal, so adding it to attention scores applies both the position
    penalty and the causal mask.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    slopes = alibi_slopes(n_heads)
    i = np.arange(seq_len)
    dist = i[:, None] - i[None, :]
    bias = -slopes[:, None, None] * dist[None, :, :]
    bias[:, dist < 0] = NEG_INF
    return bias
