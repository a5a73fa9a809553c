"""taiyan: a desk-scale classical Chinese language model toolkit.

Character-level decoder-only transformer with linear position biases and a
gated feed-forward, trained and evaluated entirely on CPU.  The package
covers the full loop: vocabulary construction, pretraining and instruction
tuning, constrained punctuation decoding that reproduces the source text
exactly, automatic and human evaluation, and diachronic sense tracking.

Numeric work happens in NumPy with an optional compiled kernel core; see
``taiyan.kernels``.  Importing this top-level package stays cheap so the
command line can pin thread environment variables before NumPy loads.
"""

from .errors import NumericError, SchemaError, TaiyanError

__version__ = "0.1.0"

__all__ = ["TaiyanError", "SchemaError", "NumericError", "__version__"]
