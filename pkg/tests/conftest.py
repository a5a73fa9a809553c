"""Shared fixtures: tiny model configs and deterministic corpora."""

import random

import numpy as np
import pytest

from taiyan.model.config import ModelConfig
from taiyan.model.params import init_parameters


@pytest.fixture
def tiny_cfg():
    return ModelConfig(
        n_layers=2, d_model=32, n_heads=2, d_ff=64, vocab_size=60, max_seq_len=128
    )


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_parameters(tiny_cfg, seed=0)


def rand_cjk(rng: random.Random, n: int) -> str:
    """n random codepoints from the unified CJK block."""
    return "".join(chr(rng.randrange(0x4E00, 0x9FFF)) for _ in range(n))


def make_rng(*key: int) -> np.ndarray:
    return np.random.default_rng(list(key))
