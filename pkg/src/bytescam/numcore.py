"""Dense float64 primitives with hand-derived backward passes.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Each forward op
has a ``*_backward`` counterpart mapping the upstream gradient to gradients
of its inputs. Randomness comes from numpy's PCG64 bit generator, seeded
explicitly; no global state is touched.
"""

import numpy as np

from .errors import ShapeMismatch


def make_rng(seed, *stream):
    """PCG64 generator for ``seed``; extra ints select independent child streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def _as_tensor(x):
    return np.asarray(x, dtype=np.float64)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    return a @ b


def matmul_backward(a, b, grad):
    """Gradients of ``sum(grad * (a @ b))`` wrt ``a`` and ``b`` (2-D operands)."""
    return grad @ b.T, a.T @ grad


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op} {a.shape} vs {b.shape}") from None


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    return a + b


def add_backward(a, b, grad):
    return _unbroadcast(grad, np.shape(a)), _unbroadcast(grad, np.shape(b))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    return a * b


def mul_backward(a, b, grad):
    return _unbroadcast(grad * b, np.shape(a)), _unbroadcast(grad * a, np.shape(b))


def sigmoid(x):
    x = _as_tensor(x)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_backward(out, grad):
    """Takes the forward *output*."""
    return grad * out * (1.0 - out)


def tanh(x):
    return np.tanh(_as_tensor(x))


def tanh_backward(out, grad):
    return grad * (1.0 - out * out)


def softmax(scores, mask=None, axis=-1):
    """Softmax along ``axis``; positions where ``mask`` is False get weight 0.

    Every slice must keep at least one unmasked entry.
    """
    scores = _as_tensor(scores)
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(probs, grad, axis=-1):
    return probs * (grad - (probs * grad).sum(axis=axis, keepdims=True))


def glorot_limit(shape):
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    return np.sqrt(6.0 / (fan_in + fan_out))


def init_uniform(shape, rng, limit=None):
    """Uniform draws in ``±limit``; the default limit is the Glorot bound."""
    shape = tuple(shape)
    if limit is None:
        limit = glorot_limit(shape)
    return rng.uniform(-limit, limit, size=shape)
