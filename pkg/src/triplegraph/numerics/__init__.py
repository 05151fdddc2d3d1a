"""Dense float64 tensors, reverse-mode gradients, Adam, seeded sampling."""
from . import ops
from .ops import (
    LAYER_NORM_EPS,
    affine,
    concat,
    exp,
    hadamard,
    layer_norm,
    log,
    matmul,
    mean,
    norm,
    sigmoid,
    softmax,
    sqrt,
    square,
    stack,
    tanh,
)
from .optim import Adam, AdamState, adam_step
from .rng import SeededRng, gaussian_vector
from .tensor import (
    ContractError,
    NumericError,
    Parameter,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    grad,
    grad_mode,
    is_grad_enabled,
    no_grad,
)
