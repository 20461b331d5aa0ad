"""Pre-norm transformer building blocks on the autodiff Tensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor

LAYER_NORM_EPS = 1e-12


@dataclass
class TransformerBlockParams:
    """Weights of one pre-norm block: multi-head self-attention + GELU MLP.

    All projections are bias-free; only layer norms carry a shift. `dim`
    must be divisible by `heads`.
    """

    ln1_scale: Tensor
    ln1_shift: Tensor
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ln2_scale: Tensor
    ln2_shift: Tensor
    ff1: Tensor
    ff2: Tensor
    heads: int

    @property
    def dim(self):
        return self.wq.shape[0]

    def tensors(self):
        return [
            self.ln1_scale, self.ln1_shift, self.wq, self.wk, self.wv,
            self.wo, self.ln2_scale, self.ln2_shift, self.ff1, self.ff2,
        ]


def trunc_normal(rng, shape, std=0.02):
    """Normal(0, std) clipped at two standard deviations."""
    return np.clip(rng.normal(0.0, std, size=shape), -2.0 * std, 2.0 * std)


def init_block_params(rng, dim, heads, std=0.02):
    if dim % heads != 0:
        raise ShapeError(f"dim {dim} not divisible by heads {heads}")
    return TransformerBlockParams(
        ln1_scale=Tensor(np.ones(dim), requires_grad=True),
        ln1_shift=Tensor(np.zeros(dim), requires_grad=True),
        wq=Tensor(trunc_normal(rng, (dim, dim), std), requires_grad=True),
        wk=Tensor(trunc_normal(rng, (dim, dim), std), requires_grad=True),
        wv=Tensor(trunc_normal(rng, (dim, dim), std), requires_grad=True),
        wo=Tensor(trunc_normal(rng, (dim, dim), std), requires_grad=True),
        ln2_scale=Tensor(np.ones(dim), requires_grad=True),
        ln2_shift=Tensor(np.zeros(dim), requires_grad=True),
        ff1=Tensor(trunc_normal(rng, (dim, 4 * dim), std), requires_grad=True),
        ff2=Tensor(trunc_normal(rng, (4 * dim, dim), std), requires_grad=True),
        heads=heads,
    )


def layer_norm(x, scale, shift, eps=LAYER_NORM_EPS):
    """Per-row standardization followed by learned scale and shift."""
    return x.standardize(axis=-1, eps=eps) * scale + shift


def multi_head_attention(x, p):
    """Self-attention over (B, L, D); returns (B, L, D)."""
    b, length, dim = x.shape
    heads = p.heads
    dh = dim // heads
    q = (x @ p.wq).reshape(b, length, heads, dh).transpose(0, 2, 1, 3)
    k = (x @ p.wk).reshape(b, length, heads, dh).transpose(0, 2, 1, 3)
    v = (x @ p.wv).reshape(b, length, heads, dh).transpose(0, 2, 1, 3)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    weights = scores.softmax(axis=-1)
    ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(b, length, dim)
    return ctx @ p.wo


def attention_weights(x, p):
    """Attention probabilities (B, H, L, L) for inspection; no projection out."""
    b, length, dim = x.shape
    heads = p.heads
    dh = dim // heads
    q = (x @ p.wq).reshape(b, length, heads, dh).transpose(0, 2, 1, 3)
    k = (x @ p.wk).reshape(b, length, heads, dh).transpose(0, 2, 1, 3)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    return scores.softmax(axis=-1)


def transformer_block(x, p):
    """One pre-norm block; output shape equals input shape.

    Accepts (L, D) or (B, L, D).
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    if x.shape[-1] != p.dim:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match block width {p.dim}"
        )
    h = x + multi_head_attention(layer_norm(x, p.ln1_scale, p.ln1_shift), p)
    out = h + (layer_norm(h, p.ln2_scale, p.ln2_shift) @ p.ff1).gelu() @ p.ff2
    if squeeze:
        out = out.reshape(*out.shape[1:])
    return out
