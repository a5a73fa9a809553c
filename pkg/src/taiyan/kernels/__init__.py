"""Kernel backend selection.

Two interchangeable implementations of the numeric hot loops live here: a
compiled extension (``_ext``, built from Cython) and a pure-NumPy fallback.
The backend is picked once at import time from the ``TAIYAN_KERNELS``
environment variable:

    auto    use the extension if it imported, else the fallback (default)
    ext     require the extension; raise if it is missing
    numpy   force the fallback even when the extension is available

Both backends expose the same six functions with identical semantics; the
test suite cross-checks them against each other.
"""

import os

from . import fallback as _fallback

_choice = os.environ.get("TAIYAN_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "ext", "numpy"):
    raise ValueError(
        f"TAIYAN_KERNELS must be 'auto', 'ext', or 'numpy', got {_choice!r}"
    )

_impl = None
if _choice in ("auto", "ext"):
    try:
        from . import _ext as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "ext":
            raise ImportError(
                "TAIYAN_KERNELS=ext but the compiled extension is not available; "
                "reinstall with a C compiler or set TAIYAN_KERNELS=numpy"
            )
if _impl is None:
    _impl = _fallback

BACKEND: str = "ext" if _impl is not _fallback else "numpy"

attn_probs = _impl.attn_probs
attn_probs_grad = _impl.attn_probs_grad
swiglu_gate = _impl.swiglu_gate
swiglu_gate_grad = _impl.swiglu_gate_grad
softmax_xent = _impl.softmax_xent
jaro_winkler = _impl.jaro_winkler

__all__ = [
    "BACKEND",
    "attn_probs",
    "attn_probs_grad",
    "swiglu_gate",
    "swiglu_gate_grad",
    "softmax_xent",
    "jaro_winkler",
]
