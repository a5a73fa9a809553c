"""Model hyperparameters and the parameter-count formula."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SchemaError


class BadConfig(SchemaError):
    """A ModelConfig field violates its invariant."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for the decoder stack.

    All fields are at least 1 and n_heads must divide d_model evenly.
    """

    n_layers: int
    d_model: int
    n_heads: int
    d_ff: int
    vocab_size: int
    max_seq_len: int

    def __post_init__(self) -> None:
        for name in ("n_layers", "d_model", "n_heads", "d_ff", "vocab_size", "max_seq_len"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise BadConfig(f"{name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads != 0:
            raise BadConfig(
                f"n_heads ({self.n_heads}) must divide d_model ({self.d_model})"
            )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def default_d_ff(d_model: int) -> int:
    """Gated feed-forward width: round(8/3 * d_model) taken up to a multiple of 8."""
    base = round(8 * d_model / 3)
    return ((base + 7) // 8) * 8


def param_count(cfg: ModelConfig) -> int:
    """Exact parameter count; the output projection is tied and not re-counted."""
    per_layer = 4 * cfg.d_model * cfg.d_model + 3 * cfg.d_model * cfg.d_ff + 2 * cfg.d_model
    return cfg.vocab_size * cfg.d_model + cfg.n_layers * per_layer + cfg.d_model


def desk_config(vocab_size: int, max_seq_len: int = 1024) -> ModelConfig:
    """The small preset used for everything that runs on one desk CPU."""
    d_model = 128
    return ModelConfig(
        n_layers=4,
        d_model=d_model,
        n_heads=4,
        d_ff=default_d_ff(d_model),
        vocab_size=vocab_size,
        max_seq_len=max_seq_len,
    )


_FULL_LAYERS = 52
_FULL_TARGET = 1_800_000_000
_HEAD_DIM = 64


def full_scale_config(vocab_size: int, max_seq_len: int = 1024) -> ModelConfig:
    """The 52-layer preset sized to roughly 1.8e9 parameters.

    Only the depth and total size are fixed; d_model is solved from the count
    formula over multiples of the conventional 64-wide head, picking the width
    whose count lands closest to the target.
    """
    best: ModelConfig | None = None
    best_gap = None
    d = _HEAD_DIM
    while True:
        cfg = ModelConfig(
            n_layers=_FULL_LAYERS,
            d_model=d,
            n_heads=d // _HEAD_DIM,
            d_ff=default_d_ff(d),
            vocab_size=vocab_size,
            max_seq_len=max_seq_len,
        )
        gap = abs(param_count(cfg) - _FULL_TARGET)
        if best_gap is None or gap < best_gap:
            best, best_gap = cfg, gap
        elif param_count(cfg) > _FULL_TARGET:
            break
        d += _HEAD_DIM
    assert best is not None
    return best
