from .functional import (
    ACTIVATIONS,
    activation,
    batchnorm,
    conv1d_temporal,
    conv2d_depthwise,
    dropout,
    linear,
    maxpool_spatial,
)
from .gradcheck import gradcheck, numerical_gradient, relative_error
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    astensor,
    backward,
    concatenate,
    div,
    exp,
    getitem,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    stack,
    sub,
    tensor_sum,
    transpose,
    zero_grad,
)
