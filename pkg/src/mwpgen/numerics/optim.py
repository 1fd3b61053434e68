"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np


class AdamState:
    """Per-parameter first/second moments and a shared step counter."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"Adam lr must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, grads, state):
    """Apply one Adam update in place.

    ``params`` maps name -> Parameter; ``grads`` maps name -> gradient array.
    Parameters without a gradient this step only have their moments decayed.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(param.data)
        elif not np.all(np.isfinite(g)):
            raise FloatingPointError(f"NaN/Inf gradient for parameter '{name}'")
        if g.shape != param.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter '{name}' {param.data.shape}"
            )
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(param.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
