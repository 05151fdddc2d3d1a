"""Dense float64 tensors with tape-based reverse-mode differentiation.

The tape is rebuilt on every forward pass. Each recorded node keeps its
parents and a closure mapping the output gradient to parent gradients.
Those closures are written with the same differentiable operations, so a
backward pass run with ``create_graph=True`` records its own tape and can be
differentiated again (needed for the gradient penalty).
"""
import contextlib
import threading

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericError(FloatingPointError):
    """A NaN or infinity reached a place that requires finite values."""


class ContractError(RuntimeError):
    """A precondition on how the engine is driven was violated."""


_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def grad_mode(enabled):
    prev = is_grad_enabled()
    _state.enabled = bool(enabled)
    try:
        yield
    finally:
        _state.enabled = prev


def no_grad():
    return grad_mode(False)


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.op = None

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
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def is_finite(self):
        return bool(np.isfinite(self.data).all())

    def check_finite(self, what="tensor"):
        if not self.is_finite():
            raise NumericError(f"non-finite values in {what}")
        return self

    def __repr__(self):
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, index):
        return ops.index(self, index)

    def sum(self, axis=None, keepdims=False):
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


class Parameter(Tensor):
    """A trainable leaf: value plus an accumulated gradient of the same shape."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name=""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward, op):
    """Wrap a forward result, recording it on the tape when needed."""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out.op = op
    return out


def _topological(roots):
    order = []
    seen = set()
    stack = [(r, False) for r in roots if r.requires_grad]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _run(outputs, grad_outputs, create_graph):
    """Reverse sweep; returns ``{id(leaf): (leaf, grad Tensor)}`` for all leaves."""
    grads = {}
    for out, g in zip(outputs, grad_outputs):
        if out.requires_grad:
            key = id(out)
            grads[key] = grads[key] + g if key in grads else g
    leaves = {}
    order = _topological(outputs)
    with grad_mode(create_graph):
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                leaves[id(node)] = (node, g)
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = grads[key] + pg if key in grads else pg
    return leaves


def backward(loss):
    """Accumulate d(loss)/d(param) into ``.grad`` of every reachable Parameter."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    seed = Tensor(np.ones_like(loss.data))
    for leaf, g in _run([loss], [seed], create_graph=False).values():
        if isinstance(leaf, Parameter):
            leaf.grad += g.data


def grad(outputs, inputs, grad_outputs=None, create_graph=False):
    """Gradients of ``outputs`` with respect to ``inputs`` as Tensors.

    Inputs that do not influence the outputs get zero gradients. With
    ``create_graph`` the returned tensors are themselves on the tape.
    """
    if isinstance(outputs, Tensor):
        outputs = [outputs]
    if grad_outputs is None:
        for o in outputs:
            if o.size != 1:
                raise ContractError(f"grad needs scalar outputs or grad_outputs, got {o.shape}")
        grad_outputs = [Tensor(np.ones_like(o.data)) for o in outputs]
    else:
        grad_outputs = [as_tensor(g) for g in grad_outputs]
    # Mark requested inputs as leaves even if they are interior nodes.
    saved = []
    for x in inputs:
        saved.append((x, x._backward))
        x._backward = None
    try:
        leaves = _run(outputs, grad_outputs, create_graph)
    finally:
        for x, bw in saved:
            x._backward = bw
    result = []
    for x in inputs:
        hit = leaves.get(id(x))
        result.append(hit[1] if hit is not None else Tensor(np.zeros_like(x.data)))
    return result


from . import ops  # noqa: E402  (circular: ops imports Tensor)
