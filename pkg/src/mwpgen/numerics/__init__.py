from .tensor import (
    ContractError,
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    add,
    add_const,
    backward,
    concat,
    embed_lookup,
    exp,
    log,
    matmul,
    mean_rows,
    mul,
    scale,
    sigmoid,
    slice_,
    softmax,
    sub,
    sum_all,
    tanh,
    transpose,
)
from .rng import Xoshiro256
from .optim import AdamState, adam_step
from .checkpoint import load_arrays, save_arrays


def init_normal(shape, std, seed):
    """Seeded tensor with i.i.d. N(0, std^2) entries."""
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    return Tensor(Xoshiro256(seed).normal_array(shape, std))
