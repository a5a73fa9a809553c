"""Parameter storage: a flat name-to-array dict with a fixed layout.

Names are stable and sort cleanly, which the checkpoint format relies on:

    tok_emb                     [vocab_size, d_model]
    layer{i}.attn_norm          [d_model]
    layer{i}.wq / wk / wv / wo  [d_model, d_model]
    layer{i}.ffn_norm           [d_model]
    layer{i}.ffn_w / ffn_v      [d_model, d_ff]
    layer{i}.ffn_w2             [d_ff, d_model]
    final_norm                  [d_model]

The output projection is the transpose of tok_emb; no separate tensor exists,
and no positional embedding table exists.
"""

from __future__ import annotations

import numpy as np

from ..errors import SchemaError
from .config import ModelConfig

Parameters = dict[str, np.ndarray]

_INIT_STD = 0.02


class BadParameters(SchemaError):
    """Parameter dict does not match the config's declared shapes."""


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape map, in draw order."""
    d, f = cfg.d_model, cfg.d_ff
    shapes: dict[str, tuple[int, ...]] = {"tok_emb": (cfg.vocab_size, d)}
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        shapes[p + "attn_norm"] = (d,)
        shapes[p + "wq"] = (d, d)
        shapes[p + "wk"] = (d, d)
        shapes[p + "wv"] = (d, d)
        shapes[p + "wo"] = (d, d)
        shapes[p + "ffn_norm"] = (d,)
        shapes[p + "ffn_w"] = (d, f)
        shapes[p + "ffn_v"] = (d, f)
        shapes[p + "ffn_w2"] = (f, d)
    shapes["final_norm"] = (d,)
    return shapes


def _is_gain(name: str) -> bool:
    return name.endswith("_norm")


def _is_residual_out(name: str) -> bool:
    return name.endswith(".wo") or name.endswith(".ffn_w2")


def init_parameters(cfg: ModelConfig, seed: int) -> Parameters:
    """Normal(0, 0.02) init, scaled down by sqrt(2 * n_layers) on the two
    projections that write into the residual stream; gains start at 1."""
    rng = np.random.default_rng(seed)
    resid_std = _INIT_STD / np.sqrt(2.0 * cfg.n_layers)
    params: Parameters = {}
    for name, shape in param_shapes(cfg).items():
        if _is_gain(name):
            params[name] = np.ones(shape, dtype=np.float32)
        else:
            std = resid_std if _is_residual_out(name) else _INIT_STD
            params[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
    return params


def zeros_parameters(cfg: ModelConfig) -> Parameters:
    """All-zero weights with unit gains; handy for tie-break and shape tests."""
    params: Parameters = {}
    for name, shape in param_shapes(cfg).items():
        if _is_gain(name):
            params[name] = np.ones(shape, dtype=np.float32)
        else:
            params[name] = np.zeros(shape, dtype=np.float32)
    return params


def validate_parameters(params: Parameters, cfg: ModelConfig) -> None:
    """Raise BadParameters on shape mismatch, missing or extra tensors, or
    non-finite values."""
    expected = param_shapes(cfg)
    missing = expected.keys() - params.keys()
    extra = params.keys() - expected.keys()
    if missing or extra:
        raise BadParameters(
            f"parameter names do not match config (missing {sorted(missing)}, "
            f"unexpected {sorted(extra)})"
        )
    for name, shape in expected.items():
        arr = params[name]
        if tuple(arr.shape) != shape:
            raise BadParameters(f"{name}: expected shape {shape}, got {tuple(arr.shape)}")
        if not np.all(np.isfinite(arr)):
            raise BadParameters(f"{name}: contains non-finite values")
