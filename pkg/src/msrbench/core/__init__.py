from . import autodiff as ad
from .autodiff import Tensor, get_dtype, precision, set_precision
from .gradcheck import GradCheckReport, NonFiniteError, grad_check, kink_margin
from .optim import AdamState, adam_step, collect_grads
from .params import (CheckpointError, ParameterStore, init_array, load_checkpoint,
                     save_checkpoint)

__all__ = [
    "ad", "Tensor", "get_dtype", "precision", "set_precision", "GradCheckReport",
    "NonFiniteError", "grad_check", "kink_margin", "AdamState", "adam_step", "collect_grads",
    "CheckpointError", "ParameterStore", "init_array", "load_checkpoint", "save_checkpoint",
]
