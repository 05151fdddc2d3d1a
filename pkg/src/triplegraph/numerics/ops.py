"""Differentiable operations.

Backward closures are expressed with these same operations so that second
derivatives come for free when the backward pass records a graph.
Broadcasting follows numpy; gradients are summed back to operand shapes.
"""
import numpy as np

from .. import kernels
from .tensor import ShapeError, NumericError, Tensor, as_tensor, is_grad_enabled, make_node

LAYER_NORM_EPS = 1e-5


def _shape_error(op, a, b):
    return ShapeError(f"{op}: shapes {tuple(a)} and {tuple(b)} do not conform")


def _binary(op, a, b, ufunc):
    try:
        return ufunc(a.data, b.data)
    except ValueError:
        raise _shape_error(op, a.shape, b.shape) from None


# --- shape plumbing -------------------------------------------------------


def sum_to(x, shape):
    """Sum ``x`` down to ``shape`` (inverse of broadcasting)."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True)
    data = data.reshape(shape)
    in_shape = x.shape

    def backward(g):
        return (broadcast_to(g, in_shape),)

    return make_node(data, (x,), backward, "sum_to")


def broadcast_to(x, shape):
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = np.broadcast_to(x.data, shape)
    in_shape = x.shape

    def backward(g):
        return (sum_to(g, in_shape),)

    return make_node(np.ascontiguousarray(data), (x,), backward, "broadcast_to")


def reshape(x, shape):
    in_shape = x.shape
    data = x.data.reshape(shape)

    def backward(g):
        return (reshape(g, in_shape),)

    return make_node(data, (x,), backward, "reshape")


def swapaxes(x):
    """Swap the last two axes."""

    def backward(g):
        return (swapaxes(g),)

    return make_node(np.swapaxes(x.data, -1, -2), (x,), backward, "swapaxes")


def expand_dims(x, axis):
    shape = list(x.shape)
    axis = axis if axis >= 0 else len(shape) + 1 + axis
    shape.insert(axis, 1)
    return reshape(x, tuple(shape))


def index(x, idx):
    data = x.data[idx]
    in_shape = x.shape

    def backward(g):
        return (scatter(g, idx, in_shape),)

    return make_node(np.array(data, dtype=np.float64), (x,), backward, "index")


def _is_basic(idx):
    """True when ``idx`` selects each element at most once (no arrays)."""
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice)) or i is Ellipsis or i is None for i in parts)


def scatter(x, idx, shape):
    """Zeros of ``shape`` with ``x`` added at ``idx`` (adjoint of indexing)."""
    data = np.zeros(shape)
    if _is_basic(idx):
        data[idx] = x.data
    else:
        np.add.at(data, idx, x.data)

    def backward(g):
        return (index(g, idx),)

    return make_node(data, (x,), backward, "scatter")


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    data = np.concatenate([x.data for x in xs], axis=axis)
    ax = axis if axis >= 0 else data.ndim + axis
    bounds = np.cumsum([0] + [x.shape[ax] for x in xs])

    def backward(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(int(lo), int(hi))
            out.append(index(g, tuple(sl)))
        return tuple(out)

    return make_node(data, tuple(xs), backward, "concat")


def stack(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    return concat([expand_dims(x, axis) for x in xs], axis=axis)


# --- elementwise arithmetic ----------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return sum_to(g, sa), sum_to(g, sb)

    return make_node(_binary("add", a, b, np.add), (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return sum_to(g, sa), sum_to(neg(g), sb)

    return make_node(_binary("sub", a, b, np.subtract), (a, b), backward, "sub")


def neg(a):
    a = as_tensor(a)
    def backward(g):
        return (neg(g),)

    return make_node(-a.data, (a,), backward, "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = sum_to(mul(g, b), sa) if a.requires_grad else None
        gb = sum_to(mul(g, a), sb) if b.requires_grad else None
        return ga, gb

    return make_node(_binary("mul", a, b, np.multiply), (a, b), backward, "mul")


def hadamard(a, b):
    """Elementwise product of equal-shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise _shape_error("hadamard", a.shape, b.shape)
    return mul(a, b)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    out = None

    def backward(g):
        ga = sum_to(div(g, b), sa) if a.requires_grad else None
        gb = sum_to(neg(mul(g, div(out, b))), sb) if b.requires_grad else None
        return ga, gb

    out = make_node(_binary("div", a, b, np.divide), (a, b), backward, "div")
    return out


def square(a):
    a = as_tensor(a)
    def backward(g):
        return (mul(g, mul(a, 2.0)),)

    return make_node(a.data * a.data, (a,), backward, "square")


def sqrt(a):
    a = as_tensor(a)
    out = None

    def backward(g):
        return (div(mul(g, 0.5), out),)

    out = make_node(np.sqrt(a.data), (a,), backward, "sqrt")
    return out


def exp(a):
    a = as_tensor(a)
    out = None

    def backward(g):
        return (mul(g, out),)

    out = make_node(np.exp(a.data), (a,), backward, "exp")
    return out


def log(a):
    a = as_tensor(a)
    def backward(g):
        return (div(g, a),)

    return make_node(np.log(a.data), (a,), backward, "log")


def tanh(a):
    a = as_tensor(a)
    out = None

    def backward(g):
        return (mul(g, sub(1.0, square(out))),)

    out = make_node(np.tanh(a.data), (a,), backward, "tanh")
    return out


def _sigmoid_np(x):
    # tanh form cannot overflow
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def sigmoid(a):
    a = as_tensor(a)
    out = None

    def backward(g):
        return (mul(g, mul(out, sub(1.0, out))),)

    out = make_node(_sigmoid_np(a.data), (a,), backward, "sigmoid")
    return out


# --- reductions -------------------------------------------------------------


def sum(x, axis=None, keepdims=False):  # noqa: A001
    if axis is None:
        kshape = (1,) * x.ndim
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % x.ndim for a in axes)
        kshape = tuple(1 if i in axes else n for i, n in enumerate(x.shape))
    out = sum_to(x, kshape)
    if keepdims:
        return out
    final = () if axis is None else tuple(n for i, n in enumerate(x.shape) if i not in axes)
    return reshape(out, final)


def mean(x, axis=None, keepdims=False):
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def norm(x, axis=-1):
    """Euclidean norm along ``axis``."""
    return sqrt(sum(square(x), axis=axis))


# --- linear algebra -----------------------------------------------------------


def matmul(a, b):
    """``a @ b`` with ``b`` two-dimensional and ``a`` of any rank >= 1."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    n, m = b.shape

    def backward(g):
        ga = matmul(g, swapaxes(b)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = matmul(swapaxes(reshape(a, (-1, n))), reshape(g, (-1, m)))
        return ga, gb

    return make_node(a.data @ b.data, (a, b), backward, "matmul")


def affine(W, x, b=None):
    """``W x + b`` for ``W`` of shape (m, n), ``x`` of shape (..., n), ``b`` of shape (m,) or None."""
    W, x = as_tensor(W), as_tensor(x)
    if W.ndim != 2 or x.ndim < 1 or x.shape[-1] != W.shape[1]:
        raise _shape_error("affine", W.shape, x.shape)
    m, n = W.shape
    data = x.data @ W.data.T
    if b is None:
        parents = (W, x)
    else:
        b = as_tensor(b)
        if b.shape != (m,):
            raise _shape_error("affine", W.shape, b.shape)
        data = data + b.data
        parents = (W, x, b)

    def backward(g):
        gW = gx = gb = None
        if W.requires_grad:
            gW = matmul(swapaxes(reshape(g, (-1, m))), reshape(x, (-1, n)))
        if x.requires_grad:
            gx = matmul(g, W)
        if b is not None and b.requires_grad:
            gb = sum_to(g, (m,))
        return gW, gx, gb

    return make_node(data, parents, backward, "affine")


# --- normalizations -------------------------------------------------------------


def softmax(x):
    """Softmax along the last axis."""
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise NumericError("softmax input contains NaN")
    out = None

    def backward(g):
        gy = mul(g, out)
        return (sub(gy, mul(out, sum(gy, axis=-1, keepdims=True))),)

    out = make_node(kernels.softmax_lastaxis(x.data), (x,), backward, "softmax")
    return out


def _layer_norm_stats(x, eps):
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(square(centered), axis=-1, keepdims=True)
    rstd = div(1.0, sqrt(add(var, eps)))
    return mul(centered, rstd), rstd


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """``gain * (x - mean) / sqrt(var + eps) + bias``, normalizing the last axis.

    ``gain`` and ``bias`` match the trailing axes of ``x``: shape (k,) for one
    set per row, or e.g. (gates, k) for separate sets per gate.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    k = x.shape[-1]
    tail = x.shape[x.ndim - gain.ndim:] if gain.ndim <= x.ndim else None
    if gain.ndim < 1 or gain.shape != tail or bias.shape != gain.shape:
        raise _shape_error("layer_norm", x.shape, gain.shape)
    if gain.ndim == 1:
        data, xhat_np, rstd_np = kernels.layer_norm_lastaxis(x.data, gain.data, bias.data, eps)
    else:
        _, xhat_np, rstd_np = kernels.layer_norm_lastaxis(x.data, np.ones(k), np.zeros(k), eps)
        data = xhat_np * gain.data + bias.data
    pshape = gain.shape

    def backward(g):
        if is_grad_enabled():
            xhat, rstd = _layer_norm_stats(x, eps)
        else:
            xhat, rstd = Tensor(xhat_np), Tensor(rstd_np)
        ggain = sum_to(mul(g, xhat), pshape) if gain.requires_grad else None
        gbias = sum_to(g, pshape) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gxh = mul(g, gain)
            gx = mul(
                rstd,
                sub(
                    sub(gxh, mean(gxh, axis=-1, keepdims=True)),
                    mul(xhat, mean(mul(gxh, xhat), axis=-1, keepdims=True)),
                ),
            )
        return gx, ggain, gbias

    return make_node(data, (x, gain, bias), backward, "layer_norm")
