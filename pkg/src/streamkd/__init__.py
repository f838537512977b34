"""Layer-wise knowledge distillation from a non-streaming teacher into a
chunk-wise streaming Transducer student, on a numpy autodiff core."""

from .autodiff import Tensor, backward, grad_check, no_grad
from .data import Dataset, ToyTaskSpec, make_toy_dataset
from .encoder import Encoder, EncoderConfig, TapPlan
from .losses import LossWeights, apc_loss, dis_loss, kld_loss, total_loss
from .masks import chunk_streaming_mask, full_mask, future_gap_mask
from .trainer import TrainConfig, evaluate, train_student_kd, train_teacher
from .transducer import transducer_loss

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Encoder", "EncoderConfig", "LossWeights", "TapPlan", "Tensor", "ToyTaskSpec", "TrainConfig",
    "apc_loss", "backward", "chunk_streaming_mask", "dis_loss", "evaluate", "full_mask", "future_gap_mask",
    "grad_check", "kld_loss", "make_toy_dataset", "no_grad", "total_loss", "train_student_kd",
    "train_teacher", "transducer_loss",
]
