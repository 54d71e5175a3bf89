"""Reverse-mode differentiation on a closed set of array primitives.

The gradient pass builds new graph nodes instead of raw arrays, and every
primitive's vector-Jacobian rule is itself written in these primitives, so
gradients can be differentiated again. The package relies on this up to
third order: the denoiser applies one backward pass inside its forward map,
the training loss differentiates through that, and the spectral penalty
differentiates a Hessian-vector product.

Network activations use (batch, channels, height, width) layout; convolution
is periodic cross-correlation with an explicit center tap. All values are
float64 numpy arrays.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Node:
    """One value in the computation graph.

    ``parents`` and ``vjp`` describe how to push a cotangent back: vjp maps
    the cotangent node to one gradient node (or None) per parent.
    """

    __slots__ = ("value", "parents", "vjp")

    def __init__(self, value, parents: tuple = (), vjp: Callable | None = None):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape


def leaf(value) -> Node:
    """A graph input (trainable weight or differentiation point)."""
    return Node(np.asarray(value, dtype=np.float64))


def constant(value) -> Node:
    """A node no gradient flows into (stop-gradient)."""
    return Node(np.asarray(value, dtype=np.float64))


# ---------------------------------------------------------------- arithmetic


def add(a: Node, b: Node) -> Node:
    return Node(a.value + b.value, (a, b), lambda c: (c, c))


def sub(a: Node, b: Node) -> Node:
    return Node(a.value - b.value, (a, b), lambda c: (c, neg(c)))


def neg(a: Node) -> Node:
    return Node(-a.value, (a,), lambda c: (neg(c),))


def mul(a: Node, b: Node) -> Node:
    """Elementwise product of same-shape nodes."""
    return Node(a.value * b.value, (a, b), lambda c: (mul(c, b), mul(c, a)))


def smul(s: float, a: Node) -> Node:
    """Product with a python scalar (no gradient into s)."""
    s = float(s)
    return Node(s * a.value, (a,), lambda c: (smul(s, c),))


def scalar_mul(s: Node, a: Node) -> Node:
    """Product of a 0-d scalar node with a tensor node."""
    return Node(s.value * a.value, (s, a), lambda c: (dot(c, a), scalar_mul(s, c)))


def dot(a: Node, b: Node) -> Node:
    """Full inner product <a, b> as a 0-d scalar node."""
    val = np.asarray(np.vdot(a.value, b.value))
    return Node(val, (a, b), lambda c: (scalar_mul(c, b), scalar_mul(c, a)))


def total_sum(a: Node) -> Node:
    val = np.asarray(a.value.sum())

    def vjp(c: Node):
        return (scalar_mul(c, constant(np.ones_like(a.value))),)

    return Node(val, (a,), vjp)


def max_const(a: Node, floor: float) -> Node:
    """max(a, floor) for a scalar node; passes the cotangent through on the
    branch a >= floor, zero otherwise."""
    active = bool(a.value >= floor)
    val = np.asarray(a.value if active else np.float64(floor))

    def vjp(c: Node):
        return (c if active else smul(0.0, c),)

    return Node(val, (a,), vjp)


# ---------------------------------------------------------------- activations
#
# Elementwise families closed under differentiation: entry k of a family is
# the k-th derivative of entry 0. ELU is C^1 (its second and higher
# derivatives are the a.e. values); Softplus is smooth.


def _elu_fn(order: int, x: np.ndarray) -> np.ndarray:
    pos = x > 0
    ex = np.exp(np.where(pos, 0.0, x))
    if order == 0:
        return np.where(pos, x, ex - 1.0)
    if order == 1:
        return np.where(pos, 1.0, ex)
    return np.where(pos, 0.0, ex)


def _softplus_fn(order: int, x: np.ndarray) -> np.ndarray:
    if order == 0:
        return np.logaddexp(0.0, x)
    s = 1.0 / (1.0 + np.exp(-x))
    if order == 1:
        return s
    if order == 2:
        return s * (1.0 - s)
    if order == 3:
        return s * (1.0 - s) * (1.0 - 2.0 * s)
    if order == 4:
        return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)
    raise NotImplementedError(f"softplus derivative of order {order} not implemented")


_FAMILIES = {"elu": _elu_fn, "softplus": _softplus_fn}


def elementwise(kind: str, order: int, a: Node) -> Node:
    fn = _FAMILIES[kind]
    val = fn(order, a.value)

    def vjp(c: Node):
        return (mul(c, elementwise(kind, order + 1, a)),)

    return Node(val, (a,), vjp)


# ---------------------------------------------------------------- channels


def concat_channel_const(a: Node, extra: np.ndarray) -> Node:
    """Append constant channels (e.g. a noise-level map) after a's channels."""
    extra = np.asarray(extra, dtype=np.float64)
    val = np.concatenate([a.value, extra], axis=1)
    nc = a.value.shape[1]

    def vjp(c: Node):
        return (slice_channels(c, 0, nc),)

    return Node(val, (a,), vjp)


def slice_channels(a: Node, lo: int, hi: int) -> Node:
    total = a.value.shape[1]
    val = a.value[:, lo:hi].copy()

    def vjp(c: Node):
        return (embed_channels(c, lo, total),)

    return Node(val, (a,), vjp)


def embed_channels(a: Node, lo: int, total: int) -> Node:
    b, nc, h, w = a.value.shape
    val = np.zeros((b, total, h, w))
    val[:, lo : lo + nc] = a.value

    def vjp(c: Node):
        return (slice_channels(c, lo, lo + nc),)

    return Node(val, (a,), vjp)


# ---------------------------------------------------------------- convolution
#
# y[b,o,p] = bias[o] + sum_{i,t} w[o,i,t] * x[b,i,p + t - center], indices
# periodic. The input adjoint and weight adjoint below are the two transposed
# contractions of the same trilinear form; the trio is closed under
# differentiation (each vjp is again one of the three).


def _windows(x: np.ndarray, kh: int, kw: int, cr: int, cc: int) -> np.ndarray:
    pad = np.pad(x, ((0, 0), (0, 0), (cr, kh - 1 - cr), (cc, kw - 1 - cc)), mode="wrap")
    return np.lib.stride_tricks.sliding_window_view(pad, (kh, kw), axis=(2, 3))


def conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None, center: tuple[int, int]) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    win = _windows(x, kh, kw, center[0], center[1])
    y = np.einsum("bihwkl,oikl->bohw", win, w, optimize=True)
    if bias is not None:
        y += bias[None, :, None, None]
    return y


def conv_input_adjoint_forward(u: np.ndarray, w: np.ndarray, center: tuple[int, int]) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    wf = w[:, :, ::-1, ::-1]
    win = _windows(u, kh, kw, kh - 1 - center[0], kw - 1 - center[1])
    return np.einsum("bohwkl,oikl->bihw", win, wf, optimize=True)


def conv_weight_adjoint_forward(x: np.ndarray, u: np.ndarray, kshape: tuple[int, int], center: tuple[int, int]) -> np.ndarray:
    kh, kw = kshape
    win = _windows(x, kh, kw, center[0], center[1])
    return np.einsum("bihwkl,bohw->oikl", win, u, optimize=True)


def conv(x: Node, w: Node, bias: Node | None, center: tuple[int, int]) -> Node:
    val = conv_forward(x.value, w.value, None if bias is None else bias.value, center)
    if bias is None:

        def vjp(c: Node):
            return (conv_input_adjoint(c, w, center), conv_weight_adjoint(x, c, w.value.shape[2:], center))

        return Node(val, (x, w), vjp)

    def vjp_b(c: Node):
        return (
            conv_input_adjoint(c, w, center),
            conv_weight_adjoint(x, c, w.value.shape[2:], center),
            channel_sum(c),
        )

    return Node(val, (x, w, bias), vjp_b)


def conv_input_adjoint(u: Node, w: Node, center: tuple[int, int]) -> Node:
    val = conv_input_adjoint_forward(u.value, w.value, center)

    def vjp(c: Node):
        return (conv(c, w, None, center), conv_weight_adjoint(c, u, w.value.shape[2:], center))

    return Node(val, (u, w), vjp)


def conv_weight_adjoint(x: Node, u: Node, kshape: tuple[int, int], center: tuple[int, int]) -> Node:
    val = conv_weight_adjoint_forward(x.value, u.value, kshape, center)

    def vjp(c: Node):
        return (conv_input_adjoint(u, c, center), conv(x, c, None, center))

    return Node(val, (x, u), vjp)


def channel_sum(u: Node) -> Node:
    """Reduce (B, C, H, W) to per-channel sums (C,); adjoint of bias broadcast."""
    val = u.value.sum(axis=(0, 2, 3))

    def vjp(c: Node):
        return (bias_expand(c, u.value.shape),)

    return Node(val, (u,), vjp)


def bias_expand(bvec: Node, shape: tuple) -> Node:
    val = np.broadcast_to(bvec.value[None, :, None, None], shape).copy()

    def vjp(c: Node):
        return (channel_sum(c),)

    return Node(val, (bvec,), vjp)


# ---------------------------------------------------------------- backward


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
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


def gradients(output: Node, wrt: Sequence[Node], seed: Node | None = None) -> list[Node]:
    """Cotangent of ``output`` pulled back to each node in ``wrt``.

    ``seed`` defaults to ones (for a 0-d output this is d(output)/d(wrt)).
    The returned nodes are themselves differentiable. Unreachable inputs get
    zero nodes of the right shape.
    """
    if seed is None:
        seed = constant(np.ones_like(output.value))
    if seed.value.shape != output.value.shape:
        raise ValueError(f"seed shape {seed.value.shape} does not match output {output.value.shape}")
    order = _toposort(output)
    cot: dict[int, Node] = {id(output): seed}
    for node in reversed(order):
        c = cot.get(id(node))
        if c is None or node.vjp is None:
            continue
        for parent, g in zip(node.parents, node.vjp(c)):
            if g is None:
                continue
            prev = cot.get(id(parent))
            cot[id(parent)] = g if prev is None else add(prev, g)
    out = []
    for wnode in wrt:
        g = cot.get(id(wnode))
        out.append(g if g is not None else constant(np.zeros_like(wnode.value)))
    return out
