from .tensor import (
    Tensor,
    GradTape,
    ShapeError,
    GradientError,
    as_tensor,
    precision,
    tensor_op,
    active_tape,
    default_dtype,
    record_branches,
)
from . import ops, conv
from .flops import FlopReport, FlopScopeError, flop_counter
from .optim import OptimizerState, sgd_step, clip_grad_norm, learning_rate_at
from .gradcheck import gradcheck
from .rng import make_rng, split
