"""Adam optimizer with bias correction over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError

DEFAULT_LR = 5.0e-5


@dataclass
class AdamState:
    """First/second moment buffers plus hyperparameters.

    `step` counts completed updates and increases by exactly one per call
    to adam_step. `weight_decay` is decoupled (applied directly to the
    parameter, not through the moments).
    """

    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam_state(params, lr=DEFAULT_LR, beta1=0.9, beta2=0.999, eps=1e-8,
                    weight_decay=0.0):
    """Zero moment buffers shaped like each named parameter."""
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                      weight_decay=weight_decay)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params, grads, state, lr_scale=1.0):
    """One in-place Adam update; returns the mutated state.

    `params` maps names to Tensors, `grads` maps names to arrays; a
    missing gradient counts as zero (its moments still decay).
    `lr_scale` multiplies the learning rate for this step only (warmup).
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    lr = state.lr * lr_scale
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' shape {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        if m.shape != p.data.shape:
            raise ShapeError(
                f"moment shape {m.shape} does not match parameter "
                f"'{name}' shape {p.data.shape}"
            )
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        if state.weight_decay:
            p.data -= lr * state.weight_decay * p.data
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
