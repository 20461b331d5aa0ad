"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a contiguous row-major float64 ndarray, remembers the
operations that produced it, and can backpropagate from a scalar loss to
every reachable leaf. Broadcasting follows numpy semantics; gradients of
broadcast operands are summed back to the operand's shape.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..errors import ContractError, ShapeError

_GRAD_ENABLED = True

_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accumulate(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _is_fancy_key(key):
    if isinstance(key, (np.ndarray, list)):
        return True
    if isinstance(key, tuple):
        return any(isinstance(k, (np.ndarray, list)) for k in key)
    return False


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # ndarray <op> Tensor must defer to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            # ascontiguousarray would promote 0-d arrays to shape (1,)
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- bookkeeping ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Backpropagate from this scalar to every reachable leaf.

        Leaves that do not influence this value keep grad=None.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar; got shape {self.data.shape}"
            )
        # Iterative DFS: parents are ordered tuples, so the visit order (and
        # therefore gradient accumulation order) is identical across runs.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- elementwise arithmetic ----------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data)
        if _GRAD_ENABLED and (self.requires_grad or other.requires_grad):
            out.requires_grad = True
            out._parents = (self, other)

            def _bw():
                if self.requires_grad:
                    _accumulate(self, _unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    _accumulate(other, _unbroadcast(out.grad, other.data.shape))

            out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data)
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                _accumulate(self, -out.grad)

            out._backward = _bw
        return out

    def __sub__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data - other.data)
        if _GRAD_ENABLED and (self.requires_grad or other.requires_grad):
            out.requires_grad = True
            out._parents = (self, other)

            def _bw():
                if self.requires_grad:
                    _accumulate(self, _unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    _accumulate(other, _unbroadcast(-out.grad, other.data.shape))

            out._backward = _bw
        return out

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data)
        if _GRAD_ENABLED and (self.requires_grad or other.requires_grad):
            out.requires_grad = True
            out._parents = (self, other)

            def _bw():
                if self.requires_grad:
                    _accumulate(
                        self, _unbroadcast(out.grad * other.data, self.data.shape)
                    )
                if other.requires_grad:
                    _accumulate(
                        other, _unbroadcast(out.grad * self.data, other.data.shape)
                    )

            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data)
        if _GRAD_ENABLED and (self.requires_grad or other.requires_grad):
            out.requires_grad = True
            out._parents = (self, other)

            def _bw():
                if self.requires_grad:
                    _accumulate(
                        self, _unbroadcast(out.grad / other.data, self.data.shape)
                    )
                if other.requires_grad:
                    g = -out.grad * self.data / (other.data * other.data)
                    _accumulate(other, _unbroadcast(g, other.data.shape))

            out._backward = _bw
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise ContractError("only scalar exponents are supported")
        c = float(exponent)
        out = Tensor(self.data**c)
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                _accumulate(self, out.grad * c * self.data ** (c - 1.0))

            out._backward = _bw
        return out

    # -- transcendental ------------------------------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data))
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                _accumulate(self, out.grad * out.data)

            out._backward = _bw
        return out

    def log(self):
        out = Tensor(np.log(self.data))
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                _accumulate(self, out.grad / self.data)

            out._backward = _bw
        return out

    def sigmoid(self):
        # exp formulation keeps both tails stable in float64
        x = self.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                            np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = Tensor(out_data)
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                _accumulate(self, out.grad * out.data * (1.0 - out.data))

            out._backward = _bw
        return out

    def gelu(self):
        """Exact Gaussian error linear unit: x * Phi(x)."""
        x = self.data
        cdf = 0.5 * (1.0 + erf(x / _SQRT_2))
        out = Tensor(x * cdf)
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
                _accumulate(self, out.grad * (cdf + x * pdf))

            out._backward = _bw
        return out

    def clamp(self, lo, hi):
        """Clip to [lo, hi]; gradient passes through the interior only."""
        out = Tensor(np.clip(self.data, lo, hi))
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                inside = (self.data >= lo) & (self.data <= hi)
                _accumulate(self, out.grad * inside)

            out._backward = _bw
        return out

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims))
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                g = out.grad
                if axis is not None and not keepdims:
                    axes = axis if isinstance(axis, tuple) else (axis,)
                    g = np.expand_dims(g, axes)
                _accumulate(self, np.broadcast_to(g, self.data.shape).copy())

            out._backward = _bw
        return out

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- shape manipulation ----------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape))
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                _accumulate(self, out.grad.reshape(self.data.shape))

            out._backward = _bw
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        out = Tensor(self.data.transpose(axes))
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)
            inverse = tuple(np.argsort(axes))

            def _bw():
                _accumulate(self, out.grad.transpose(inverse))

            out._backward = _bw
        return out

    def broadcast_to(self, shape):
        out = Tensor(np.broadcast_to(self.data, shape).copy())
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                _accumulate(self, _unbroadcast(out.grad, self.data.shape))

            out._backward = _bw
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key])
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)
            fancy = _is_fancy_key(key)

            def _bw():
                buf = np.zeros_like(self.data)
                if fancy:
                    np.add.at(buf, key, out.grad)
                else:
                    buf[key] += out.grad
                _accumulate(self, buf)

            out._backward = _bw
        return out

    # -- linear algebra --------------------------------------------------------

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(
                f"matmul requires operands with ndim >= 2; got {a.shape} @ {b.shape}"
            )
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(
                f"matmul inner dimensions disagree: {a.shape} @ {b.shape}"
            )
        out = Tensor(a @ b)
        if _GRAD_ENABLED and (self.requires_grad or other.requires_grad):
            out.requires_grad = True
            out._parents = (self, other)

            def _bw():
                g = out.grad
                if self.requires_grad:
                    ga = g @ b.swapaxes(-1, -2)
                    _accumulate(self, _unbroadcast(ga, a.shape))
                if other.requires_grad:
                    gb = a.swapaxes(-1, -2) @ g
                    _accumulate(other, _unbroadcast(gb, b.shape))

            out._backward = _bw
        return out

    # -- structured ops ----------------------------------------------------------

    def softmax(self, axis=-1):
        """Numerically stable softmax along `axis`; rows sum to one."""
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(y)
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                g = out.grad
                dot = (g * y).sum(axis=axis, keepdims=True)
                _accumulate(self, y * (g - dot))

            out._backward = _bw
        return out

    def standardize(self, axis=-1, eps=1e-6):
        """Shift/scale along `axis` to zero mean and unit variance."""
        mu = self.data.mean(axis=axis, keepdims=True)
        var = self.data.var(axis=axis, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (self.data - mu) * inv
        out = Tensor(y)
        if _GRAD_ENABLED and self.requires_grad:
            out.requires_grad = True
            out._parents = (self,)

            def _bw():
                g = out.grad
                gm = g.mean(axis=axis, keepdims=True)
                gy = (g * y).mean(axis=axis, keepdims=True)
                _accumulate(self, (g - gm - y * gy) * inv)

            out._backward = _bw
        return out


def as_tensor(value):
    """Wrap arrays and scalars as constants; pass Tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def concat(tensors, axis=0):
    """Concatenate along `axis`, splitting the gradient back to each input."""
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    if _GRAD_ENABLED and any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tuple(tensors)
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def _bw():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis] = slice(lo, hi)
                    _accumulate(t, out.grad[tuple(idx)])

        out._backward = _bw
    return out


def take_rows(t, indices):
    """Gather rows: out[..., k, :] = t[..., indices[..., k], :].

    `t` is (N, D) with `indices` (K,), or (B, N, D) with `indices` (B, K).
    The gradient scatter-adds, so repeated indices accumulate.
    """
    t = as_tensor(t)
    indices = np.asarray(indices, dtype=np.intp)
    if t.data.ndim == 2 and indices.ndim == 1:
        out_data = t.data[indices]
        key = indices
    elif t.data.ndim == 3 and indices.ndim == 2:
        if indices.shape[0] != t.data.shape[0]:
            raise ShapeError(
                f"batch sizes disagree: {t.data.shape} vs indices {indices.shape}"
            )
        out_data = np.take_along_axis(t.data, indices[:, :, None], axis=1)
        key = (np.arange(t.data.shape[0])[:, None], indices)
    else:
        raise ShapeError(
            f"take_rows supports (N,D)/(K,) or (B,N,D)/(B,K); "
            f"got {t.data.shape} and {indices.shape}"
        )
    out = Tensor(out_data)
    if _GRAD_ENABLED and t.requires_grad:
        out.requires_grad = True
        out._parents = (t,)

        def _bw():
            buf = np.zeros_like(t.data)
            np.add.at(buf, key, out.grad)
            _accumulate(t, buf)

        out._backward = _bw
    return out


def matmul(a, b):
    return as_tensor(a) @ as_tensor(b)
