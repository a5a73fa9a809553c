"""Micro-benchmark of the compiled kernels against the NumPy fallback.

Imports both backends side by side and times the six shared functions at
desk-scale shapes (batch 8, 4 heads, 80-token rows, d_ff 344).  Run as

    python3 -m benchmarks.bench_kernels [--scale N] [--seed S]

`--scale` multiplies the iteration counts for steadier numbers on fast
machines.  When the extension is not built, only the fallback column is
reported.
"""

import argparse
import time

import numpy as np

from taiyan.kernels import fallback
from taiyan.model.alibi import alibi_slopes

try:
    from taiyan.kernels import _ext
except ImportError:
    _ext = None


def _best_seconds(fn, args, iters: int, repeats: int = 5) -> float:
    """Best-of-repeats mean seconds per call; one warmup call first."""
    fn(*args)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(iters):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / iters)
    return best


def _cases(rng: np.random.Generator):
    B, H, L = 8, 4, 80
    d_ff, vocab = 344, 4096
    scores = rng.standard_normal((B, H, L, L)).astype(np.float32)
    slopes = alibi_slopes(H)
    probs = fallback.attn_probs(scores, slopes)
    dprobs = rng.standard_normal(probs.shape).astype(np.float32)
    a = rng.standard_normal((B * L, d_ff)).astype(np.float32)
    b = rng.standard_normal((B * L, d_ff)).astype(np.float32)
    dout = rng.standard_normal((B * L, d_ff)).astype(np.float32)
    logits = rng.standard_normal((B * L, vocab)).astype(np.float32)
    targets = rng.integers(0, vocab, size=B * L)
    u = rng.integers(0x4E00, 0x9FFF, size=12).astype(np.int64)
    v = np.concatenate([u[:6], rng.integers(0x4E00, 0x9FFF, size=6)]).astype(np.int64)

    yield "attn_probs", f"[{B},{H},{L},{L}] f32", (scores, slopes), 20
    yield "attn_probs_grad", f"[{B},{H},{L},{L}] f32", (probs, dprobs), 20
    yield "swiglu_gate", f"[{B * L},{d_ff}] f32", (a, b), 50
    yield "swiglu_gate_grad", f"[{B * L},{d_ff}] f32", (a, b, dout), 50
    yield "softmax_xent", f"[{B * L},{vocab}] f32", (logits, targets), 20
    yield "jaro_winkler", "2x12 codepoints", (u, v), 2000


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scale", type=int, default=1, help="iteration multiplier")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"numpy {np.__version__}, extension {'built' if _ext else 'NOT BUILT'}")
    header = f"{'kernel':<18} {'shape':<20} {'numpy us':>10} {'ext us':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, shape, call_args, iters in _cases(rng):
        iters *= args.scale
        t_np = _best_seconds(getattr(fallback, name), call_args, iters)
        if _ext is None:
            print(f"{name:<18} {shape:<20} {t_np * 1e6:>10.1f} {'-':>10} {'-':>8}")
            continue
        t_ext = _best_seconds(getattr(_ext, name), call_args, iters)
        print(
            f"{name:<18} {shape:<20} {t_np * 1e6:>10.1f} "
            f"{t_ext * 1e6:>10.1f} {t_np / t_ext:>7.2f}x"
        )


if __name__ == "__main__":
    main()
