"""Minimal reverse-mode autodiff over float64 numpy arrays.

Each forward op records its parents and a backward closure on the returned
node; ``backward(loss)`` walks the recorded graph once in reverse topological
order and accumulates gradients into leaf nodes. The model family here is
small and fixed-topology, so this deliberately stays far simpler than a
general framework.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeMismatch


class Node:
    """One value in the recorded computation graph."""

    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward

    def add_grad(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g


def constant(x) -> Node:
    return Node(x)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def backward(root: Node) -> None:
    """Populate .grad on every node reachable from root (a scalar)."""
    _check(root.value.ndim == 0, f"backward root must be scalar, got {root.value.shape}")
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.array(1.0)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# --- ops ---

def linear(x: Node, W: Node, b: Node | None = None) -> Node:
    """y = x @ W (+ b). x is a vector (din,) or a batch (n, din)."""
    _check(W.value.ndim == 2, f"W must be 2-D, got {W.value.shape}")
    _check(x.value.shape[-1] == W.value.shape[0],
           f"linear: {x.value.shape} @ {W.value.shape}")
    y = x.value @ W.value
    if b is not None:
        _check(b.value.shape == (W.value.shape[1],),
               f"bias shape {b.value.shape} != ({W.value.shape[1]},)")
        y = y + b.value

    def bwd(dy):
        if x.value.ndim == 1:
            W.add_grad(np.outer(x.value, dy))
            x.add_grad(W.value @ dy)
            if b is not None:
                b.add_grad(dy)
        else:
            W.add_grad(x.value.T @ dy)
            x.add_grad(dy @ W.value.T)
            if b is not None:
                b.add_grad(dy.sum(axis=0))

    parents = (x, W) if b is None else (x, W, b)
    return Node(y, parents, bwd)


def relu(x: Node) -> Node:
    mask = x.value > 0

    def bwd(dy):
        x.add_grad(dy * mask)

    return Node(np.where(mask, x.value, 0.0), (x,), bwd)


def leaky_relu(x: Node, slope: float = 0.2) -> Node:
    mask = x.value > 0

    def bwd(dy):
        x.add_grad(dy * np.where(mask, 1.0, slope))

    return Node(np.where(mask, x.value, slope * x.value), (x,), bwd)


def add(a: Node, b: Node) -> Node:
    _check(a.value.shape == b.value.shape, f"add: {a.value.shape} vs {b.value.shape}")

    def bwd(dy):
        a.add_grad(dy)
        b.add_grad(dy)

    return Node(a.value + b.value, (a, b), bwd)


def sub(a: Node, b: Node) -> Node:
    _check(a.value.shape == b.value.shape, f"sub: {a.value.shape} vs {b.value.shape}")

    def bwd(dy):
        a.add_grad(dy)
        b.add_grad(-dy)

    return Node(a.value - b.value, (a, b), bwd)


def mul(a: Node, b: Node) -> Node:
    _check(a.value.shape == b.value.shape, f"mul: {a.value.shape} vs {b.value.shape}")

    def bwd(dy):
        a.add_grad(dy * b.value)
        b.add_grad(dy * a.value)

    return Node(a.value * b.value, (a, b), bwd)


def add_const(x: Node, c: float) -> Node:
    def bwd(dy):
        x.add_grad(dy)

    return Node(x.value + c, (x,), bwd)


def smul(s, x: Node) -> Node:
    """Scalar times tensor; the scalar may be a trainable 0-d node or a float."""
    if isinstance(s, Node):
        _check(s.value.ndim == 0, f"smul scalar must be 0-d, got {s.value.shape}")

        def bwd(dy):
            s.add_grad(np.sum(dy * x.value))
            x.add_grad(dy * s.value)

        return Node(s.value * x.value, (s, x), bwd)

    sv = float(s)

    def bwd_const(dy):
        x.add_grad(dy * sv)

    return Node(sv * x.value, (x,), bwd_const)


def concat(parts: Sequence[Node]) -> Node:
    for p in parts:
        _check(p.value.ndim == 1, f"concat expects vectors, got {p.value.shape}")
    sizes = [p.value.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(dy):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p.add_grad(dy[lo:hi])

    return Node(np.concatenate([p.value for p in parts]), tuple(parts), bwd)


def dot(a: Node, b: Node) -> Node:
    _check(a.value.shape == b.value.shape and a.value.ndim == 1,
           f"dot: {a.value.shape} vs {b.value.shape}")

    def bwd(dy):
        a.add_grad(dy * b.value)
        b.add_grad(dy * a.value)

    return Node(np.dot(a.value, b.value), (a, b), bwd)


def stack(scalars: Sequence[Node]) -> Node:
    for s in scalars:
        _check(s.value.ndim == 0, f"stack expects scalars, got {s.value.shape}")

    def bwd(dy):
        for i, s in enumerate(scalars):
            s.add_grad(dy[i])

    return Node(np.array([s.value for s in scalars]), tuple(scalars), bwd)


def index(x: Node, i: int) -> Node:
    _check(x.value.ndim == 1, f"index expects a vector, got {x.value.shape}")

    def bwd(dy):
        g = np.zeros_like(x.value)
        g[i] = dy
        x.add_grad(g)

    return Node(x.value[i], (x,), bwd)


def vsum(x: Node) -> Node:
    def bwd(dy):
        x.add_grad(np.full_like(x.value, float(dy)))

    return Node(x.value.sum(), (x,), bwd)


def square(x: Node) -> Node:
    def bwd(dy):
        x.add_grad(dy * 2.0 * x.value)

    return Node(x.value * x.value, (x,), bwd)


def softmax(x: Node) -> Node:
    """Stable softmax over a vector (max-subtraction)."""
    _check(x.value.ndim == 1, f"softmax expects a vector, got {x.value.shape}")
    z = x.value - x.value.max()
    e = np.exp(z)
    y = e / e.sum()

    def bwd(dy):
        x.add_grad(y * (dy - np.dot(dy, y)))

    return Node(y, (x,), bwd)


def l2_normalize(x: Node, eps: float = 1e-12) -> Node:
    _check(x.value.ndim == 1, f"l2_normalize expects a vector, got {x.value.shape}")
    norm = np.linalg.norm(x.value)
    if norm < eps:
        return Node(np.zeros_like(x.value), (x,), lambda dy: None)
    y = x.value / norm

    def bwd(dy):
        x.add_grad((dy - y * np.dot(y, dy)) / norm)

    return Node(y, (x,), bwd)


def cosine(a: Node, b: Node, eps: float = 1e-12) -> Node:
    """Cosine similarity of two vectors; 0 with zero grads when degenerate."""
    _check(a.value.shape == b.value.shape and a.value.ndim == 1,
           f"cosine: {a.value.shape} vs {b.value.shape}")
    na = np.linalg.norm(a.value)
    nb = np.linalg.norm(b.value)
    if na < eps or nb < eps:
        return Node(0.0, (a, b), lambda dy: None)
    c = np.dot(a.value, b.value) / (na * nb)

    def bwd(dy):
        a.add_grad(dy * (b.value / (na * nb) - c * a.value / (na * na)))
        b.add_grad(dy * (a.value / (na * nb) - c * b.value / (nb * nb)))

    return Node(c, (a, b), bwd)


def addn(nodes: Sequence[Node]) -> Node:
    """Sum of same-shape nodes (accumulated left to right)."""
    out = nodes[0]
    for n in nodes[1:]:
        out = add(out, n)
    return out


def mean_scalars(scalars: Sequence[Node]) -> Node:
    return smul(1.0 / len(scalars), addn(list(scalars)))
