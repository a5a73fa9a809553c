"""NumPy reference implementations of the hot kernels.

Semantics here are the contract; the compiled extension in `_ext.pyx` is an
exact-math reimplementation (same operations, fused loops).  Anything cheap
or shape-irregular stays in the calling modules.
"""

from __future__ import annotations

import numpy as np

# bias+mask matrices keyed by (n_heads, seq_len, slopes bytes, dtype)
_BIAS_CACHE: dict = {}


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _causal_linear_bias(n_heads: int, seq_len: int, slopes: np.ndarray, dtype) -> np.ndarray:
    key = (n_heads, seq_len, slopes.tobytes(), np.dtype(dtype).str)
    cached = _BIAS_CACHE.get(key)
    if cached is not None:
        return cached
    idx = np.arange(seq_len)
    dist = idx[:, None] - idx[None, :]                       # i - j
    bias = np.where(dist >= 0,
                    -slopes.astype(np.float64)[:, None, None] * dist,
                    -np.inf).astype(dtype)
    if len(_BIAS_CACHE) > 64:
        _BIAS_CACHE.clear()
    _BIAS_CACHE[key] = bias
    return bias


def attn_probs(scores: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """Fused linear position bias + causal mask + row softmax.

    scores: [B, H, L, L] raw scaled dot products.  Returns probabilities with
    probs[b,h,i,j] = 0 for j > i and softmax over j <= i of
    scores[b,h,i,j] - slopes[h] * (i - j).
    """
    B, H, L, _ = scores.shape
    bias = _causal_linear_bias(H, L, slopes, scores.dtype)
    z = scores + bias[None]
    z -= z.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def attn_probs_grad(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Softmax backward: masked positions have probs == 0, so dscores == 0 there."""
    inner = np.sum(dprobs * probs, axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def swiglu_gate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise swish(a) * b with swish(z) = z * sigmoid(z)."""
    return a * _stable_sigmoid(a) * b


def swiglu_gate_grad(a: np.ndarray, b: np.ndarray, dout: np.ndarray):
    """Returns (da, db) for out = swish(a) * b."""
    s = _stable_sigmoid(a)
    swish = a * s
    dswish = s * (1.0 + a * (1.0 - s))
    return dout * b * dswish, dout * swish


def softmax_xent(logits: np.ndarray, targets: np.ndarray, want_grad: bool = True):
    """Row-wise -log softmax(logits)[target] and (optionally) its gradient.

    logits: [N, V]; targets: [N] int.  Returns (nll [N] float64, dlogits or
    None) where dlogits = softmax(logits) - onehot(targets), unscaled.
    """
    N = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    e = np.exp(shifted)
    denom = e.sum(axis=1, keepdims=True)
    rows = np.arange(N)
    nll = (np.log(denom[:, 0]) - shifted[rows, targets]).astype(np.float64)
    if not want_grad:
        return nll, None
    dlogits = e / denom
    dlogits[rows, targets] -= 1.0
    return nll, dlogits


def jaro_winkler(u: np.ndarray, v: np.ndarray) -> float:
    """Jaro-Winkler similarity on codepoint arrays (prefix bonus 0.1, cap 4)."""
    lu, lv = len(u), len(v)
    if lu == 0 and lv == 0:
        return 1.0
    if lu == 0 or lv == 0:
        return 0.0
    if lu == lv and bool(np.array_equal(u, v)):
        return 1.0

    window = max(max(lu, lv) // 2 - 1, 0)
    u_match = np.zeros(lu, dtype=bool)
    v_match = np.zeros(lv, dtype=bool)
    matches = 0
    for i in range(lu):
        lo = max(0, i - window)
        hi = min(i + window + 1, lv)
        for j in range(lo, hi):
            if not v_match[j] and u[i] == v[j]:
                u_match[i] = True
                v_match[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0

    half_transpositions = 0
    k = 0
    for i in range(lu):
        if not u_match[i]:
            continue
        while not v_match[k]:
            k += 1
        if u[i] != v[k]:
            half_transpositions += 1
        k += 1
    t = half_transpositions // 2

    m = float(matches)
    jaro = (m / lu + m / lv + (m - t) / m) / 3.0

    prefix = 0
    for i in range(min(4, lu, lv)):
        if u[i] != v[i]:
            break
        prefix += 1
    return jaro + prefix * 0.1 * (1.0 - jaro)
