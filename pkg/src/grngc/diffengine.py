"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every backward rule is itself built out of the primitives in this module, so
gradients are ordinary graph nodes and can be differentiated again (double
backprop). Broadcasting is restricted to scalar-vs-tensor; any other shape
mixing is an error.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class DiffError(Exception):
    """Base class for differentiation-engine errors."""


class ShapeMismatch(DiffError):
    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {', '.join(map(str, shapes))}")
        self.op = op
        self.shapes = shapes


class NonScalarRoot(DiffError):
    def __init__(self, shape):
        super().__init__(f"backward root must be scalar, got shape {shape}")


class GraphFreed(DiffError):
    def __init__(self):
        super().__init__(
            "backward already ran on this graph without create_graph; "
            "intermediates were freed"
        )


class NonFiniteValue(DiffError):
    pass


class Node:
    """A value in the differentiation graph.

    `vjp`, when present, maps an upstream gradient node to one gradient node
    (or None) per parent. Rules are compositions of primitives, never opaque
    numeric closures, which is what makes second-order differentiation work.
    """

    __slots__ = ("value", "parents", "vjp", "requires_grad", "op", "_freed", "_cache")

    def __init__(self, value, parents=(), vjp=None, requires_grad=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents: tuple[Node, ...] = tuple(parents)
        self.vjp: Callable | None = vjp
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._freed = False
        self._cache = None  # memo for derived nodes (e.g. spline bases)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.value.shape})"


def variable(value) -> Node:
    return Node(value, requires_grad=True, op="var")


def constant(value) -> Node:
    return Node(value, requires_grad=False, op="const")


def _check_elementwise(op: str, a: Node, b: Node):
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeMismatch(op, a.shape, b.shape)


def _unbroadcast(g: Node, shape) -> Node:
    # gradient flowing into a scalar operand of a broadcasted op
    if shape == () and g.shape != ():
        return reduce_sum(g)
    return g


def add(a: Node, b: Node) -> Node:
    _check_elementwise("add", a, b)
    return Node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        op="add",
    )


def sub(a: Node, b: Node) -> Node:
    _check_elementwise("sub", a, b)
    return Node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(scale(g, -1.0), b.shape)),
        op="sub",
    )


def mul(a: Node, b: Node) -> Node:
    _check_elementwise("mul", a, b)
    return Node(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(mul(g, b), a.shape), _unbroadcast(mul(g, a), b.shape)),
        op="mul",
    )


def scale(x: Node, s: float) -> Node:
    s = float(s)
    return Node(x.value * s, (x,), lambda g: (scale(g, s),), op="scale")


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    return Node(
        a.value @ b.value,
        (a, b),
        lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)),
        op="matmul",
    )


def transpose(x: Node) -> Node:
    if x.value.ndim != 2:
        raise ShapeMismatch("transpose", x.shape)
    return Node(x.value.T, (x,), lambda g: (transpose(g),), op="transpose")


def reshape(x: Node, shape) -> Node:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.value.size:
        raise ShapeMismatch("reshape", x.shape, shape)
    old = x.shape
    return Node(x.value.reshape(shape), (x,), lambda g: (reshape(g, old),), op="reshape")


def reduce_sum(x: Node, axis: int | None = None) -> Node:
    if axis is None:
        return Node(
            np.sum(x.value),
            (x,),
            lambda g: (mul(constant(np.ones(x.shape)), g),),
            op="sum",
        )
    n = x.shape[axis]
    ax = axis
    return Node(
        np.sum(x.value, axis=ax),
        (x,),
        lambda g: (expand(g, ax, n),),
        op="sum",
    )


def reduce_mean(x: Node, axis: int | None = None) -> Node:
    n = x.value.size if axis is None else x.shape[axis]
    return scale(reduce_sum(x, axis), 1.0 / n)


def expand(x: Node, axis: int, n: int) -> Node:
    """Insert a new axis of length n by repetition; adjoint of reduce_sum."""
    return Node(
        np.repeat(np.expand_dims(x.value, axis), n, axis=axis),
        (x,),
        lambda g: (reduce_sum(g, axis=axis),),
        op="expand",
    )


def absval(x: Node) -> Node:
    # subgradient sign(0) = 0; the sign is frozen, so the second derivative
    # contribution of |.| itself is exactly zero
    sign = constant(np.sign(x.value))
    return Node(np.abs(x.value), (x,), lambda g: (mul(g, sign),), op="abs")


def square(x: Node) -> Node:
    return Node(x.value * x.value, (x,), lambda g: (mul(g, scale(x, 2.0)),), op="square")


def exp(x: Node) -> Node:
    out = Node(np.exp(x.value), (x,), None, op="exp")
    out.vjp = lambda g: (mul(g, out),)
    return out


def sigmoid(x: Node) -> Node:
    out = Node(1.0 / (1.0 + np.exp(-x.value)), (x,), None, op="sigmoid")
    out.vjp = lambda g: (mul(g, mul(out, sub(constant(1.0), out))),)
    return out


def silu(x: Node) -> Node:
    """x * sigmoid(x); composed from primitives so all orders come for free."""
    return mul(x, sigmoid(x))


def concat(nodes: Sequence[Node], axis: int = 0) -> Node:
    nodes = list(nodes)
    ndim = nodes[0].value.ndim
    for n in nodes[1:]:
        if n.value.ndim != ndim:
            raise ShapeMismatch("concat", nodes[0].shape, n.shape)
    sizes = [n.shape[axis] for n in nodes]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def vjp(g):
        return tuple(
            narrow(g, axis, int(offsets[i]), sizes[i]) for i in range(len(sizes))
        )

    return Node(np.concatenate([n.value for n in nodes], axis=axis), nodes, vjp, op="concat")


def narrow(x: Node, axis: int, start: int, length: int) -> Node:
    """Contiguous slice along one axis."""
    if start < 0 or start + length > x.shape[axis]:
        raise ShapeMismatch("narrow", x.shape, (axis, start, length))
    idx = [slice(None)] * x.value.ndim
    idx[axis] = slice(start, start + length)
    total = x.shape[axis]
    return Node(
        x.value[tuple(idx)],
        (x,),
        lambda g: (pad_zeros(g, axis, start, total - start - length),),
        op="narrow",
    )


def pad_zeros(x: Node, axis: int, before: int, after: int) -> Node:
    pad = [(0, 0)] * x.value.ndim
    pad[axis] = (before, after)
    length = x.shape[axis]
    return Node(
        np.pad(x.value, pad),
        (x,),
        lambda g: (narrow(g, axis, before, length),),
        op="pad",
    )


def add_rowvec(m: Node, v: Node) -> Node:
    """Add a length-n vector to every row of a (batch, n) matrix."""
    if m.value.ndim != 2 or v.value.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeMismatch("add_rowvec", m.shape, v.shape)
    return Node(
        m.value + v.value[None, :],
        (m, v),
        lambda g: (g, reduce_sum(g, axis=0)),
        op="add_rowvec",
    )


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node, wrt: Sequence[Node], create_graph: bool = False) -> list[Node]:
    """Gradients of a scalar root with respect to each node in `wrt`.

    With create_graph=True the returned nodes are differentiable and the graph
    is retained; without it the results are detached constants and a second
    backward on the same root raises GraphFreed. Nodes unreachable from the
    root get exact zero gradients.
    """
    if root.value.shape != ():
        raise NonScalarRoot(root.value.shape)
    if root._freed:
        raise GraphFreed()

    order = _toposort(root)
    grads: dict[int, Node] = {id(root): constant(1.0)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.vjp is None or not node.requires_grad:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else add(prev, pg)

    results = []
    for w in wrt:
        g = grads.get(id(w))
        if g is None:
            g = constant(np.zeros(w.shape))
        results.append(g)

    if not create_graph:
        results = [constant(g.value) for g in results]
        root._freed = True
    return results


def finite_difference(f: Callable[[np.ndarray], float], at, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function; test oracle."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    at = np.asarray(at, dtype=np.float64)
    grad = np.zeros_like(at)
    flat = at.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(at))
        flat[i] = orig - step
        lo = float(f(at))
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteValue(f"non-finite function value at coordinate {i}")
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad
