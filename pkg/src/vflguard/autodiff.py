"""Define-by-run reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied to its :class:`Node` objects.
Calling :meth:`Tape.backward` walks the record in reverse and returns a
:class:`GradientMap` with one entry per trainable parameter and per input
flagged ``requires_grad``.

The primitive set is deliberately small (add, sub, mul, matmul, relu,
sigmoid, sqrt, log, exp, sum, mean, broadcast, transpose, concat, slice);
every loss in the package is composed from these.  The gradient of relu at
exactly zero is taken to be 0.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

GradientMap = Dict[str, np.ndarray]


class ShapeError(ValueError):
    """Operands of a primitive have incompatible shapes."""


class TapeError(RuntimeError):
    """Misuse of a tape (backward before forward, foreign nodes, ...)."""


def as_tensor(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"tensor dimensions must be >= 1, got shape {arr.shape}")
    return arr


class Node:
    __slots__ = (
        "tape", "index", "value", "parents", "vjp", "op",
        "name", "trainable", "needs_grad", "blocked",
    )

    def __init__(self, tape, index, value, parents, vjp, op, name=None,
                 trainable=False, needs_grad=False):
        self.tape = tape
        self.index = index
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.name = name
        self.trainable = trainable
        self.needs_grad = needs_grad
        self.blocked = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = self.name or self.op
        return f"Node({label}, shape={self.value.shape})"

    # operator sugar; all of it lowers onto the primitives below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Record of primitive applications for a single forward/backward pass.

    Tapes are cheap and meant to be rebuilt for every batch.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}
        self.inputs: dict[str, Node] = {}
        self.root: Optional[Node] = None
        self._blocking = 0

    # -- leaves -----------------------------------------------------------
    def _leaf(self, value, name=None, trainable=False, requires_grad=False):
        node = Node(self, len(self.nodes), as_tensor(value), (), None, "leaf",
                    name=name, trainable=trainable,
                    needs_grad=trainable or requires_grad)
        self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        return self._leaf(value)

    def parameter(self, name: str, value: np.ndarray) -> Node:
        """Bind a trainable array. Re-binding the same name returns the same leaf."""
        node = self.params.get(name)
        if node is not None:
            if node.value is not value and not np.array_equal(node.value, value):
                raise TapeError(f"parameter {name!r} already bound to a different array")
            return node
        node = self._leaf(value, name=name, trainable=True)
        self.params[name] = node
        return node

    def variable(self, name: str, value, requires_grad: bool = False) -> Node:
        if name in self.inputs or name in self.params:
            raise TapeError(f"name {name!r} already bound on this tape")
        node = self._leaf(value, name=name, requires_grad=requires_grad)
        self.inputs[name] = node
        return node

    def lift(self, x) -> Node:
        if isinstance(x, Node):
            if x.tape is not self:
                raise TapeError("node belongs to a different tape")
            return x
        return self.constant(x)

    # -- recording --------------------------------------------------------
    def record(self, op: str, value, parents: Sequence[Node], vjp: Callable) -> Node:
        needs = any(p.needs_grad for p in parents)
        node = Node(self, len(self.nodes), value, tuple(parents), vjp, op, needs_grad=needs)
        if self._blocking:
            node.blocked = True
        self.nodes.append(node)
        return node

    @contextmanager
    def blocking(self):
        """Nodes recorded inside this block pass gradient to their operands
        but never to the trainable parameters they consume directly."""
        self._blocking += 1
        try:
            yield self
        finally:
            self._blocking -= 1

    # -- passes -----------------------------------------------------------
    def forward(self, fn: Callable[..., Node], inputs: dict, requires_grad: Iterable[str] = ()) -> np.ndarray:
        """Bind named inputs, run ``fn(tape, **nodes)`` and remember its result as root."""
        flagged = set(requires_grad)
        nodes = {k: self.variable(k, v, requires_grad=k in flagged) for k, v in inputs.items()}
        root = fn(self, **nodes)
        if not isinstance(root, Node) or root.tape is not self:
            raise TapeError("forward function must return a node of this tape")
        self.root = root
        return root.value

    def backward(self, seed=None, root: Optional[Node] = None) -> GradientMap:
        root = root if root is not None else self.root
        if root is None:
            raise TapeError("backward called before forward: no root node on tape")
        if root.tape is not self:
            raise TapeError("root node belongs to a different tape")
        if seed is None:
            seed = np.ones_like(root.value)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != root.value.shape:
            raise ShapeError(f"seed shape {seed.shape} != root shape {root.value.shape}")

        adj: list = [None] * (root.index + 1)
        adj[root.index] = seed
        for i in range(root.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.vjp is None:
                continue
            grads = node.vjp(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.needs_grad:
                    continue
                if node.blocked and parent.trainable:
                    continue
                j = parent.index
                adj[j] = pg if adj[j] is None else adj[j] + pg

        out: GradientMap = {}
        for name, node in self.params.items():
            g = adj[node.index] if node.index <= root.index else None
            out[name] = np.zeros_like(node.value) if g is None else np.asarray(g, dtype=np.float64)
        for name, node in self.inputs.items():
            if node.needs_grad:
                g = adj[node.index] if node.index <= root.index else None
                out[name] = np.zeros_like(node.value) if g is None else np.asarray(g, dtype=np.float64)
        return out


def block_parameter_gradients(tape: Tape, subgraph: Iterable[Node]) -> Tape:
    """Mark ``subgraph`` so backward skips its parameter contributions."""
    for node in subgraph:
        if not isinstance(node, Node) or node.tape is not tape or node.index >= len(tape.nodes) \
                or tape.nodes[node.index] is not node:
            raise TapeError(f"unknown node in subgraph: {node!r}")
        node.blocked = True
    return tape


# ---------------------------------------------------------------------------
# primitives


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TapeError("at least one operand must be a tape node")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(op, a, b):
    tape = _tape_of(a, b)
    a, b = tape.lift(a), tape.lift(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None
    return tape, a, b


def add(a, b) -> Node:
    tape, a, b = _binary("add", a, b)
    sa, sb = a.shape, b.shape
    return tape.record("add", a.value + b.value, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Node:
    tape, a, b = _binary("sub", a, b)
    sa, sb = a.shape, b.shape
    return tape.record("sub", a.value - b.value, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Node:
    tape, a, b = _binary("mul", a, b)
    av, bv = a.value, b.value
    return tape.record("mul", av * bv, (a, b),
                       lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def matmul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = tape.lift(a), tape.lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return tape.record("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def relu(x: Node) -> Node:
    mask = x.value > 0
    return x.tape.record("relu", np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Node) -> Node:
    v = x.value
    # split by sign so exp never overflows
    e = np.exp(-np.abs(v))
    s = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return x.tape.record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def sqrt(x: Node) -> Node:
    if np.any(x.value < 0):
        raise ValueError("sqrt: negative operand")
    s = np.sqrt(x.value)
    return x.tape.record("sqrt", s, (x,), lambda g: (g * 0.5 / s,))


def log(x: Node) -> Node:
    if np.any(x.value <= 0):
        raise ValueError("log: non-positive operand")
    v = x.value
    return x.tape.record("log", np.log(v), (x,), lambda g: (g / v,))


def exp(x: Node) -> Node:
    e = np.exp(x.value)
    return x.tape.record("exp", e, (x,), lambda g: (g * e,))


def sum_(x: Node, axis=None, keepdims: bool = False) -> Node:
    shape = x.shape
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return x.tape.record("sum", np.asarray(out), (x,), vjp)


def mean(x: Node, axis=None, keepdims: bool = False) -> Node:
    shape = x.shape
    count = x.value.size if axis is None else int(np.prod([shape[a] for a in np.atleast_1d(axis)]))
    out = x.value.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return x.tape.record("mean", np.asarray(out), (x,), vjp)


def broadcast(x: Node, shape) -> Node:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.value, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {x.shape} to {shape}") from None
    src = x.shape
    return x.tape.record("broadcast", out, (x,), lambda g: (_unbroadcast(g, src),))


def transpose(x: Node) -> Node:
    if x.value.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {x.shape}")
    return x.tape.record("transpose", x.value.T.copy(), (x,), lambda g: (g.T,))


def concat(xs: Sequence[Node], axis: int = 1) -> Node:
    tape = _tape_of(*xs)
    xs = [tape.lift(x) for x in xs]
    try:
        out = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tape.record("concat", out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_(x: Node, key) -> Node:
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, key, g)
        return (full,)

    return x.tape.record("slice", np.array(x.value[key], dtype=np.float64), (x,), vjp)


# ---------------------------------------------------------------------------
# test oracle


def finite_difference_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of grad f at ``x``."""
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
