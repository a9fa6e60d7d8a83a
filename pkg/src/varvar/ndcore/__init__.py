"""Minimal dense reverse-mode autodiff, special functions, Adam and MLP layers."""
from . import special
from .nn import MLP, BatchNorm, Dense, activation
from .optim import ParamStore, adam_step
from .tensor import (
    DivergenceError,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    concatenate,
    digamma,
    div,
    elu,
    exp,
    expand_dims,
    forward_op,
    getitem,
    identity,
    lgamma,
    log,
    log1p,
    log_softmax,
    log_sum_exp,
    make_node,
    matmul,
    maximum,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    softplus,
    softplus_np,
    sqrt,
    square,
    stop_gradient,
    sub,
    sum_,
    tanh,
    transpose,
)
