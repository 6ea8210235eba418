"""Minimal reverse-mode differentiation over float64 arrays."""
from .check import grad_check
from .optim import AdamState, adam_step
from .special import digamma as digamma_np, trigamma as trigamma_np
from .tensor import (
    ComputationTape, Tensor, absolute, add, as_tensor, backward, broadcast_to, clamp, concat,
    debug_mode, digamma, div, erf, exp, expand_dims, getitem, log, log_softmax, logsumexp,
    make_op, matmul, maximum, mean, minimum, mul, neg, no_grad, normal_cdf, normal_pdf, power,
    reduce_sum, reshape, sigmoid, softmax, softplus, spd_solve, sqrt, square, stack, sub, tanh,
    transpose, where,
)

forward_primitives = (
    "add", "sub", "mul", "div", "neg", "power", "square", "sqrt", "matmul", "exp", "log",
    "logsumexp", "sigmoid", "tanh", "softplus", "digamma", "erf", "normal_pdf", "normal_cdf",
    "abs", "clamp", "minimum", "maximum", "where", "sum", "mean", "reshape", "transpose",
    "getitem", "concat", "stack", "broadcast_to", "spd_solve",
)
