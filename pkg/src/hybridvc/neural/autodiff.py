"""Minimal reverse-mode automatic differentiation over numpy arrays.

Ops build a DAG of :class:`Tensor` nodes; calling :func:`backward` on a
scalar loss walks the graph in reverse topological order and accumulates
gradients into every tensor created with ``requires_grad=True``. Graph
construction can be switched off with :func:`no_grad` for inference, which
also keeps large intermediate buffers from being retained.
"""

import contextvars
from contextlib import contextmanager

import numpy as np

from ..errors import ValidationError

# Context variable rather than a module global: frame restoration may run in
# worker threads, and a shared flag would race between their no_grad scopes.
_grad_enabled = contextvars.ContextVar("hybridvc_grad_enabled", default=True)


@contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled():
    return _grad_enabled.get()


class Tensor:
    """A numpy array plus the graph edges needed to differentiate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # Convenience arithmetic; heavy ops live in hybridvc.neural.ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def node(data, parents, vjp) -> Tensor:
    """Result tensor wired to ``parents`` through ``vjp(gradient) -> tuple``."""
    out = Tensor(data)
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def backward(loss: Tensor, seed=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if not loss.requires_grad:
        raise ValidationError("loss does not require grad; nothing to differentiate")
    if seed is None:
        seed = np.ones_like(loss.data)

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.asarray(seed, dtype=loss.data.dtype)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t._vjp is None:
            # Leaf: accumulate into the public gradient slot.
            t.grad = g if t.grad is None else t.grad + g
            continue
        parent_grads = t._vjp(g)
        for p, pg in zip(t._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p._vjp is None:
                p.grad = pg if p.grad is None else p.grad + pg
            else:
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg
