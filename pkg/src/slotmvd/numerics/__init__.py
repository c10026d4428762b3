from slotmvd.numerics.assignment import brute_force_assignment, linear_assignment
from slotmvd.numerics.checkpoint import (
    decode_json,
    encode_json,
    read_container,
    write_container,
)
from slotmvd.numerics.gradcheck import GradCheckReport, finite_diff_check
from slotmvd.numerics.params import ParamStore
from slotmvd.numerics.tensor import (
    Tensor,
    as_tensor,
    backward,
    concat,
    constant,
    conv2d,
    gelu,
    grad_enabled,
    group_norm,
    layer_norm,
    log_softmax,
    no_grad,
    silu,
    softmax,
    upsample_nearest2x,
    where,
)

__all__ = [
    "Tensor",
    "ParamStore",
    "as_tensor",
    "backward",
    "brute_force_assignment",
    "concat",
    "constant",
    "conv2d",
    "decode_json",
    "encode_json",
    "finite_diff_check",
    "GradCheckReport",
    "gelu",
    "grad_enabled",
    "group_norm",
    "layer_norm",
    "linear_assignment",
    "log_softmax",
    "no_grad",
    "read_container",
    "silu",
    "softmax",
    "upsample_nearest2x",
    "where",
    "write_container",
]
