"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np


def finite_difference_check(fn, tensors, h=1e-5, max_elements=None, seed=0):
    """Max relative error between analytic and central-difference gradients.

    `fn` is a zero-argument callable returning a scalar Tensor built from
    `tensors` (the leaves to check). Each leaf element is perturbed by +/-h
    and the loss re-evaluated; the analytic gradient comes from one
    backward() call. When `max_elements` is set, a seeded subsample of
    elements is checked per tensor.
    """
    for t in tensors:
        t.zero_grad()
    loss = fn()
    loss.backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
        for t in tensors
    ]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        gflat = grad.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = rng.choice(flat.size, size=max_elements, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            up = fn().item()
            flat[i] = keep - h
            down = fn().item()
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(1e-6, abs(gflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
