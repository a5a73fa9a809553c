"""Pretraining and supervised fine-tuning."""

from .config import PRETRAIN_MAX_LR, SFT_MAX_LR, BadTrainConfig, TrainConfig, default_warmup
from .gradcheck import gradient_check
from .loss import AllMasked, cross_entropy_loss, loss_and_dlogits
from .optim import AdamW
from .schedule import StepOutOfRange, cosine_lr
from .trainer import (
    LossRecord,
    NonFiniteLoss,
    Row,
    load_text_dir,
    pack_documents,
    sft_row,
    train,
)

__all__ = [
    "TrainConfig",
    "BadTrainConfig",
    "PRETRAIN_MAX_LR",
    "SFT_MAX_LR",
    "default_warmup",
    "cosine_lr",
    "StepOutOfRange",
    "cross_entropy_loss",
    "loss_and_dlogits",
    "AllMasked",
    "AdamW",
    "Row",
    "LossRecord",
    "NonFiniteLoss",
    "load_text_dir",
    "pack_documents",
    "sft_row",
    "train",
    "gradient_check",
]
