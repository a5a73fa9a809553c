"""Forward pass, backward pass, and incremental decoding.

Everything here is plain NumPy plus the kernel functions from
``taiyan.kernels``.  Arrays keep whatever float dtype the parameters carry:
float32 in normal operation, float64 inside gradient checking.  All reductions
run on one thread so repeated runs are bit-identical.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import SchemaError
from ..kernels import attn_probs, attn_probs_grad, swiglu_gate, swiglu_gate_grad
from .alibi import NEG_INF, alibi_slopes
from .config import ModelConfig
from .params import Parameters

RMS_EPS = 1e-5

# Large finite penalty for masked-out padding keys; -inf is reserved for the
# causal mask so that a fully padded query row still softmaxes without NaNs.
PAD_PENALTY = -1e30


class SequenceTooLong(SchemaError):
    """Token sequence exceeds the model's max_seq_len."""


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _rmsnorm_fwd(x: np.ndarray, gain: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ms = np.mean(np.square(x), axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(ms + RMS_EPS)
    return x * inv * gain, inv


def _rmsnorm_bwd(
    x: np.ndarray, gain: np.ndarray, inv: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    d = x.shape[-1]
    dgain = np.sum(dy * x * inv, axis=tuple(range(x.ndim - 1)))
    s = np.sum(dy * gain * x, axis=-1, keepdims=True)
    dx = inv * (dy * gain) - (inv**3 / d) * x * s
    return dx, dgain


def rmsnorm(x: np.ndarray, gain: np.ndarray) -> np.ndarray:
    """Root-mean-square normalization with a learned gain and no bias."""
    return _rmsnorm_fwd(x, gain)[0]


def swiglu(x: np.ndarray, w: np.ndarray, v: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """W2 @ (swish1(W x) * (V x)) in the row-vector convention x @ W."""
    return swiglu_gate(x @ w, x @ v) @ w2


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, l, d = x.shape
    return np.ascontiguousarray(
        x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)
    )


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, l, hd = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, l, h * hd)


def _check_tokens(cfg: ModelConfig, tokens: np.ndarray) -> None:
    if tokens.size == 0 or tokens.shape[-1] == 0:
        raise SchemaError("token sequence must be nonempty")
    if tokens.shape[-1] > cfg.max_seq_len:
        raise SequenceTooLong(
            f"sequence length {tokens.shape[-1]} exceeds max_seq_len {cfg.max_seq_len}"
        )
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise SchemaError("token id out of vocabulary range")


# ---------------------------------------------------------------------------
# training-shape forward and backward (full square attention, no padding mask)
# ---------------------------------------------------------------------------

def forward_batch(
    params: Parameters,
    cfg: ModelConfig,
    tokens: np.ndarray,
    want_cache: bool = False,
    want_scores: bool = False,
):
    """Run the stack over tokens [B, L].

    Returns (logits, cache, scores): logits [B, L, vocab_size]; cache is the
    per-layer intermediate tuple list when want_cache, else None; scores is
    the per-layer biased pre-softmax attention tensor list when want_scores,
    else None.  Rows are assumed right-padded if ragged: causality keeps
    leading real positions independent of trailing padding.
    """
    tokens = np.asarray(tokens)
    _check_tokens(cfg, tokens)
    slopes = alibi_slopes(cfg.n_heads)
    scale = 1.0 / np.sqrt(cfg.head_dim)

    x = params["tok_emb"][tokens]
    dtype = x.dtype
    cache = [] if want_cache else None
    scores_out = [] if want_scores else None

    for i in range(cfg.n_layers):
        p = f"layer{i}."
        x_in = x
        xn, inv1 = _rmsnorm_fwd(x_in, params[p + "attn_norm"])
        qh = _split_heads(xn @ params[p + "wq"], cfg.n_heads)
        kh = _split_heads(xn @ params[p + "wk"], cfg.n_heads)
        vh = _split_heads(xn @ params[p + "wv"], cfg.n_heads)
        scores = np.matmul(qh, kh.transpose(0, 1, 3, 2)) * np.asarray(scale, dtype=dtype)
        probs = attn_probs(scores, slopes)
        if want_scores:
            scores_out.append(_biased_scores(scores, slopes, dtype))
        ctxm = _merge_heads(np.matmul(probs, vh))
        x_mid = x_in + ctxm @ params[p + "wo"]

        xn2, inv2 = _rmsnorm_fwd(x_mid, params[p + "ffn_norm"])
        a = xn2 @ params[p + "ffn_w"]
        b = xn2 @ params[p + "ffn_v"]
        g = swiglu_gate(a, b)
        x = x_mid + g @ params[p + "ffn_w2"]
        if want_cache:
            cache.append((x_in, xn, inv1, qh, kh, vh, probs, ctxm, x_mid, xn2, inv2, a, b, g))

    xf, invf = _rmsnorm_fwd(x, params["final_norm"])
    logits = xf @ params["tok_emb"].T
    if want_cache:
        cache.append((x, xf, invf))
    return logits, cache, scores_out


def _biased_scores(scores: np.ndarray, slopes: np.ndarray, dtype) -> np.ndarray:
    l = scores.shape[-1]
    idx = np.arange(l)
    dist = idx[:, None] - idx[None, :]
    bias = (-slopes[:, None, None] * dist[None, :, :]).astype(dtype)
    out = scores + bias
    out[:, :, dist < 0] = NEG_INF
    return out


def forward(
    params: Parameters,
    cfg: ModelConfig,
    tokens: Sequence[int],
    want_scores: bool = False,
):
    """Single-sequence forward: logits [len, vocab_size].

    With want_scores, also returns the per-layer biased attention scores
    [n_heads, len, len]."""
    arr = np.asarray(list(tokens), dtype=np.int64)[None, :]
    logits, _, scores = forward_batch(params, cfg, arr, want_scores=want_scores)
    if want_scores:
        return logits[0], [s[0] for s in scores]
    return logits[0]


def backward_batch(
    params: Parameters,
    cfg: ModelConfig,
    tokens: np.ndarray,
    cache: list,
    dlogits: np.ndarray,
) -> Parameters:
    """Gradients of a scalar loss with upstream dlogits [B, L, vocab_size].

    The cache must come from forward_batch(want_cache=True) on the same
    tokens.  Returns a dict with one gradient array per parameter name.
    """
    tokens = np.asarray(tokens)
    d = cfg.d_model
    scale = 1.0 / np.sqrt(cfg.head_dim)
    dtype = dlogits.dtype
    grads: Parameters = {}

    x_last, xf, invf = cache[-1]
    dl2 = dlogits.reshape(-1, cfg.vocab_size)
    xf2 = xf.reshape(-1, d)
    d_emb = dl2.T @ xf2
    dxf = dlogits @ params["tok_emb"]
    dx, grads["final_norm"] = _rmsnorm_bwd(x_last, params["final_norm"], invf, dxf)

    for i in reversed(range(cfg.n_layers)):
        p = f"layer{i}."
        x_in, xn, inv1, qh, kh, vh, probs, ctxm, x_mid, xn2, inv2, a, b, g = cache[i]

        # FFN block: x = x_mid + g @ w2
        dg = dx @ params[p + "ffn_w2"].T
        grads[p + "ffn_w2"] = g.reshape(-1, cfg.d_ff).T @ dx.reshape(-1, d)
        da, db = swiglu_gate_grad(a, b, dg)
        dxn2 = da @ params[p + "ffn_w"].T + db @ params[p + "ffn_v"].T
        xn2_2 = xn2.reshape(-1, d)
        grads[p + "ffn_w"] = xn2_2.T @ da.reshape(-1, cfg.d_ff)
        grads[p + "ffn_v"] = xn2_2.T @ db.reshape(-1, cfg.d_ff)
        dmid, grads[p + "ffn_norm"] = _rmsnorm_bwd(x_mid, params[p + "ffn_norm"], inv2, dxn2)
        dx = dx + dmid

        # attention block: x_mid = x_in + ctxm @ wo
        grads[p + "wo"] = ctxm.reshape(-1, d).T @ dx.reshape(-1, d)
        dctx = _split_heads(dx @ params[p + "wo"].T, cfg.n_heads)
        dprobs = np.matmul(dctx, vh.transpose(0, 1, 3, 2))
        dvh = np.matmul(probs.transpose(0, 1, 3, 2), dctx)
        dscores = attn_probs_grad(probs, np.ascontiguousarray(dprobs))
        sc = np.asarray(scale, dtype=dtype)
        dqh = np.matmul(dscores, kh) * sc
        dkh = np.matmul(dscores.transpose(0, 1, 3, 2), qh) * sc
        dq = _merge_heads(dqh)
        dk = _merge_heads(dkh)
        dv = _merge_heads(dvh)
        xn_2 = xn.reshape(-1, d)
        grads[p + "wq"] = xn_2.T @ dq.reshape(-1, d)
        grads[p + "wk"] = xn_2.T @ dk.reshape(-1, d)
        grads[p + "wv"] = xn_2.T @ dv.reshape(-1, d)
        dxn = (
            dq @ params[p + "wq"].T
            + dk @ params[p + "wk"].T
            + dv @ params[p + "wv"].T
        )
        din, grads[p + "attn_norm"] = _rmsnorm_bwd(x_in, params[p + "attn_norm"], inv1, dxn)
        dx = dx + din

    np.add.at(d_emb, tokens.reshape(-1), dx.reshape(-1, d))
    grads["tok_emb"] = d_emb
    return grads


# ---------------------------------------------------------------------------
# incremental decoding
# ---------------------------------------------------------------------------

class DecodeSession:
    """Batched greedy decoding state over left-padded prompts.

    Prompts of unequal length are aligned to the right so every row's final
    prompt token sits at the same absolute index; the linear position bias
    depends only on relative distance, so the left padding shifts nothing.
    Padding keys are suppressed with a large finite penalty per row.  A single
    step path serves both the prefill block and each one-token extension.
    """

    def __init__(
        self,
        params: Parameters,
        cfg: ModelConfig,
        prompts: Sequence[Sequence[int]],
        max_new: int,
        pad_id: int,
    ) -> None:
        if not prompts:
            raise SchemaError("DecodeSession needs at least one prompt")
        lens = [len(p) for p in prompts]
        if min(lens) == 0:
            raise SchemaError("prompts must be nonempty")
        if max(lens) > cfg.max_seq_len:
            raise SequenceTooLong(
                f"prompt length {max(lens)} exceeds max_seq_len {cfg.max_seq_len}"
            )
        self.params = params
        self.cfg = cfg
        self.slopes = alibi_slopes(cfg.n_heads)
        self.scale = 1.0 / np.sqrt(cfg.head_dim)
        b = len(prompts)
        l0 = max(lens)
        self.cap = min(l0 + max_new, cfg.max_seq_len)
        self.pos = 0
        dtype = params["tok_emb"].dtype
        self.kcache = [
            np.zeros((b, cfg.n_heads, self.cap, cfg.head_dim), dtype=dtype)
            for _ in range(cfg.n_layers)
        ]
        self.vcache = [np.zeros_like(k) for k in self.kcache]

        block = np.full((b, l0), pad_id, dtype=np.int64)
        for row, prompt in enumerate(prompts):
            block[row, l0 - lens[row]:] = list(prompt)
        self.valid_from = np.asarray([l0 - n for n in lens], dtype=np.int64)
        self._vmax = int(self.valid_from.max())
        pad_bias = np.zeros((b, 1, 1, self._vmax), dtype=dtype)
        for row in range(b):
            pad_bias[row, 0, 0, : self.valid_from[row]] = PAD_PENALTY
        self._pad_bias = pad_bias
        idx = np.arange(self.cap)
        dist = idx[:, None] - idx[None, :]
        causal = (-self.slopes[:, None, None] * dist[None, :, :]).astype(dtype)
        causal[:, dist < 0] = NEG_INF
        self._causal_bias = causal
        self.last_hidden = self.advance_block(block)

    def _step(self, block: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        p0, t = self.pos, block.shape[1]
        k_len = p0 + t
        if k_len > self.cap:
            raise SequenceTooLong("decode session capacity exhausted")
        params = self.params
        bias = self._causal_bias[:, p0:k_len, :k_len]
        b, d = block.shape[0], cfg.d_model
        vmax = min(self._vmax, k_len)

        # Projections run as one flat [B*T, d] GEMM per weight; the stacked
        # 3-D form would dispatch B separate small GEMMs instead.
        x = params["tok_emb"][block]
        for i in range(cfg.n_layers):
            p = f"layer{i}."
            xn, _ = _rmsnorm_fwd(x, params[p + "attn_norm"])
            flat = xn.reshape(-1, d)
            qh = _split_heads((flat @ params[p + "wq"]).reshape(b, t, d), cfg.n_heads)
            qh *= self.scale
            self.kcache[i][:, :, p0:k_len] = _split_heads(
                (flat @ params[p + "wk"]).reshape(b, t, d), cfg.n_heads
            )
            self.vcache[i][:, :, p0:k_len] = _split_heads(
                (flat @ params[p + "wv"]).reshape(b, t, d), cfg.n_heads
            )
            keys = self.kcache[i][:, :, :k_len]
            vals = self.vcache[i][:, :, :k_len]
            scores = np.matmul(qh, keys.transpose(0, 1, 3, 2))
            scores += bias[None]
            if vmax:
                scores[:, :, :, :vmax] += self._pad_bias[:, :, :, :vmax]
            scores -= scores.max(axis=-1, keepdims=True)
            np.exp(scores, out=scores)
            scores /= scores.sum(axis=-1, keepdims=True)
            ctx = _merge_heads(np.matmul(scores, vals)).reshape(-1, d)
            x += (ctx @ params[p + "wo"]).reshape(b, t, d)
            xn2, _ = _rmsnorm_fwd(x, params[p + "ffn_norm"])
            flat2 = xn2.reshape(-1, d)
            g = swiglu_gate(flat2 @ params[p + "ffn_w"], flat2 @ params[p + "ffn_v"])
            x += (g @ params[p + "ffn_w2"]).reshape(b, t, d)

        xf, _ = _rmsnorm_fwd(x, params["final_norm"])
        self.pos = k_len
        self.last_hidden = np.ascontiguousarray(xf[:, -1])
        return self.last_hidden

    def advance(self, next_ids: np.ndarray) -> np.ndarray:
        """Append one token per row; returns the new last hidden state [B, d]."""
        block = np.asarray(next_ids, dtype=np.int64).reshape(-1, 1)
        return self._step(block)

    # Attention scratch for a T-token block is [B, H, T, K]; chunking T keeps
    # it bounded while the matmuls stay large enough to be efficient.
    _CHUNK = 64

    def advance_block(self, block: np.ndarray) -> np.ndarray:
        """Append several tokens per row at once (used for prefill and for
        runs where the mask forces every choice)."""
        block = np.asarray(block, dtype=np.int64)
        for start in range(0, block.shape[1], self._CHUNK):
            self._step(block[:, start : start + self._CHUNK])
        return self.last_hidden

    def row_slice(self, start: int, stop: int) -> "DecodeSession":
        """A child session over rows [start, stop) of this one.

        The child shares the parent's cache memory (row views), so rows that
        finish in lockstep can be advanced without stepping the rest of the
        batch.  Children own disjoint rows; the parent must not be advanced
        after slicing.
        """
        if not 0 <= start < stop <= self.valid_from.shape[0]:
            raise SchemaError(f"bad row slice [{start}, {stop})")
        child = object.__new__(DecodeSession)
        child.params = self.params
        child.cfg = self.cfg
        child.slopes = self.slopes
        child.scale = self.scale
        child.cap = self.cap
        child.pos = self.pos
        child.kcache = [k[start:stop] for k in self.kcache]
        child.vcache = [v[start:stop] for v in self.vcache]
        child.valid_from = self.valid_from[start:stop]
        child._vmax = int(child.valid_from.max())
        child._pad_bias = self._pad_bias[start:stop, :, :, : child._vmax]
        child._causal_bias = self._causal_bias
        child.last_hidden = self.last_hidden[start:stop]
        return child

    def full_logits(self) -> np.ndarray:
        """Logits over the whole vocabulary at the current position [B, V]."""
        return self.last_hidden @ self.params["tok_emb"].T

    def subset_logits(self, id_matrix: np.ndarray) -> np.ndarray:
        """Logits for a small per-row candidate set [B, k].

        Rows may repeat an id to fill the rectangle; the caller tracks which
        columns are real."""
        emb = self.params["tok_emb"][id_matrix]
        return np.einsum("bd,bkd->bk", self.last_hidden, emb)
