# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: fused loops matching taiyan.kernels.fallback.

Single-threaded on purpose; run-to-run determinism matters more here than
another core.  Float32 and float64 specializations come from the fused type.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expf, log, logf

cnp.import_array()

ctypedef fused floating:
    float
    double


# ---------------------------------------------------------------------------
# attention: linear position bias + causal mask + softmax
# ---------------------------------------------------------------------------

def attn_probs(floating[:, :, :, ::1] scores, double[::1] slopes):
    cdef Py_ssize_t B = scores.shape[0], H = scores.shape[1], L = scores.shape[2]
    cdef Py_ssize_t b, h, i, j
    cdef floating m, z, s, inv, bias
    cdef double slope

    if floating is float:
        out_arr = np.zeros((B, H, L, L), dtype=np.float32)
    else:
        out_arr = np.zeros((B, H, L, L), dtype=np.float64)
    cdef floating[:, :, :, ::1] out = out_arr

    with nogil:
        for b in range(B):
            for h in range(H):
                slope = slopes[h]
                for i in range(L):
                    m = scores[b, h, i, 0] - <floating>(slope * i)
                    for j in range(i + 1):
                        z = scores[b, h, i, j] + <floating>(-slope * (i - j))
                        out[b, h, i, j] = z
                        if z > m:
                            m = z
                    s = 0
                    for j in range(i + 1):
                        if floating is float:
                            z = expf(out[b, h, i, j] - m)
                        else:
                            z = exp(out[b, h, i, j] - m)
                        out[b, h, i, j] = z
                        s += z
                    inv = 1 / s
                    for j in range(i + 1):
                        out[b, h, i, j] *= inv
    return out_arr


def attn_probs_grad(floating[:, :, :, ::1] probs, floating[:, :, :, ::1] dprobs):
    cdef Py_ssize_t B = probs.shape[0], H = probs.shape[1], L = probs.shape[2]
    cdef Py_ssize_t b, h, i, j
    cdef floating inner

    if floating is float:
        out_arr = np.empty((B, H, L, L), dtype=np.float32)
    else:
        out_arr = np.empty((B, H, L, L), dtype=np.float64)
    cdef floating[:, :, :, ::1] out = out_arr

    with nogil:
        for b in range(B):
            for h in range(H):
                for i in range(L):
                    inner = 0
                    for j in range(L):
                        inner += dprobs[b, h, i, j] * probs[b, h, i, j]
                    for j in range(L):
                        out[b, h, i, j] = probs[b, h, i, j] * (dprobs[b, h, i, j] - inner)
    return out_arr


# ---------------------------------------------------------------------------
# gated feed-forward activation
# ---------------------------------------------------------------------------

cdef inline floating _sigmoid(floating x) nogil:
    cdef floating e
    if x >= 0:
        if floating is float:
            return 1 / (1 + expf(-x))
        else:
            return 1 / (1 + exp(-x))
    else:
        if floating is float:
            e = expf(x)
        else:
            e = exp(x)
        return e / (1 + e)


def _swiglu_flat(floating[::1] a, floating[::1] b, floating[::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef floating s
    with nogil:
        for i in range(n):
            s = _sigmoid(a[i])
            out[i] = a[i] * s * b[i]


def _swiglu_grad_flat(floating[::1] a, floating[::1] b, floating[::1] dout,
                      floating[::1] da, floating[::1] db):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef floating s, swish, dswish
    with nogil:
        for i in range(n):
            s = _sigmoid(a[i])
            swish = a[i] * s
            dswish = s * (1 + a[i] * (1 - s))
            da[i] = dout[i] * b[i] * dswish
            db[i] = dout[i] * swish


def swiglu_gate(a, b):
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    out = np.empty_like(a)
    _swiglu_flat(a.reshape(-1), b.reshape(-1), out.reshape(-1))
    return out


def swiglu_gate_grad(a, b, dout):
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    dout = np.ascontiguousarray(dout)
    da = np.empty_like(a)
    db = np.empty_like(b)
    _swiglu_grad_flat(a.reshape(-1), b.reshape(-1), dout.reshape(-1),
                      da.reshape(-1), db.reshape(-1))
    return da, db


# ---------------------------------------------------------------------------
# cross entropy
# ---------------------------------------------------------------------------

def _softmax_xent_impl(floating[:, ::1] logits, long[::1] targets,
                       double[::1] nll, floating[:, ::1] dlogits, bint want_grad):
    cdef Py_ssize_t N = logits.shape[0], V = logits.shape[1]
    cdef Py_ssize_t i, j, t
    cdef floating m, s, e, inv
    with nogil:
        for i in range(N):
            t = targets[i]
            m = logits[i, 0]
            for j in range(1, V):
                if logits[i, j] > m:
                    m = logits[i, j]
            s = 0
            for j in range(V):
                if floating is float:
                    e = expf(logits[i, j] - m)
                else:
                    e = exp(logits[i, j] - m)
                if want_grad:
                    dlogits[i, j] = e
                s += e
            if floating is float:
                nll[i] = <double>(logf(s) - (logits[i, t] - m))
            else:
                nll[i] = log(s) - (logits[i, t] - m)
            if want_grad:
                inv = 1 / s
                for j in range(V):
                    dlogits[i, j] *= inv
                dlogits[i, t] -= 1


def softmax_xent(logits, targets, bint want_grad=True):
    logits = np.ascontiguousarray(logits)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    cdef Py_ssize_t N = logits.shape[0]
    nll = np.empty(N, dtype=np.float64)
    dlogits = np.empty_like(logits) if want_grad else np.empty((0, 0), dtype=logits.dtype)
    _softmax_xent_impl(logits, targets, nll, dlogits, want_grad)
    return nll, (dlogits if want_grad else None)


# ---------------------------------------------------------------------------
# string similarity
# ---------------------------------------------------------------------------

def jaro_winkler(u, v):
    cdef cnp.int32_t[::1] a = np.ascontiguousarray(u, dtype=np.int32)
    cdef cnp.int32_t[::1] b = np.ascontiguousarray(v, dtype=np.int32)
    cdef Py_ssize_t lu = a.shape[0], lv = b.shape[0]
    cdef Py_ssize_t i, j, k, lo, hi, window
    cdef Py_ssize_t matches = 0, half_t = 0, prefix = 0, cap
    cdef double m, jaro
    cdef bint equal

    if lu == 0 and lv == 0:
        return 1.0
    if lu == 0 or lv == 0:
        return 0.0
    if lu == lv:
        equal = True
        for i in range(lu):
            if a[i] != b[i]:
                equal = False
                break
        if equal:
            return 1.0

    window = (lu if lu > lv else lv) // 2 - 1
    if window < 0:
        window = 0
    u_match = np.zeros(lu, dtype=np.uint8)
    v_match = np.zeros(lv, dtype=np.uint8)
    cdef unsigned char[::1] um = u_match
    cdef unsigned char[::1] vm = v_match

    for i in range(lu):
        lo = i - window
        if lo < 0:
            lo = 0
        hi = i + window + 1
        if hi > lv:
            hi = lv
        for j in range(lo, hi):
            if vm[j] == 0 and a[i] == b[j]:
                um[i] = 1
                vm[j] = 1
                matches += 1
                break
    if matches == 0:
        return 0.0

    k = 0
    for i in range(lu):
        if um[i] == 0:
            continue
        while vm[k] == 0:
            k += 1
        if a[i] != b[k]:
            half_t += 1
        k += 1

    m = <double>matches
    jaro = (m / lu + m / lv + (m - (half_t // 2)) / m) / 3.0

    cap = 4
    if lu < cap:
        cap = lu
    if lv < cap:
        cap = lv
    for i in range(cap):
        if a[i] != b[i]:
            break
        prefix += 1
    return jaro + prefix * 0.1 * (1.0 - jaro)
