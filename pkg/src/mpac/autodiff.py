"""A small reverse-mode differentiation tape over numpy arrays.

Only the handful of operations the probability network needs are provided:
sparse convolution, ReLU, addition, softplus, column slicing, an affine map
and the discretised-Laplace code length.  Each op records a closure that
maps the output gradient to input gradients.
"""
from __future__ import annotations

import contextlib

import numba as nb
import numpy as np

from . import laplace

_state = {"record": True}


@contextlib.contextmanager
def no_grad():
    prev = _state["record"]
    _state["record"] = False
    try:
        yield
    finally:
        _state["record"] = prev


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = value
        self.grad = None
        self.parents = parents if _state["record"] else ()
        self.backward_fn = backward_fn if _state["record"] else None

    def accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    def __repr__(self):
        shape = getattr(self.value, "shape", ())
        return f"Var(shape={shape})"


def backward(out: Var) -> None:
    """Populate ``.grad`` on every Var reachable from the scalar ``out``."""
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node.parents)
    out.grad = np.ones_like(out.value, dtype=np.float64)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


# --- sparse convolution kernels ------------------------------------------------

@nb.njit(parallel=True, cache=True)
def conv_forward(x, indptr, slots, srcs, w, bias):
    """``out[i] = bias + sum over (slot, j) in row i of x[j] @ w[slot]``.

    Rows are independent and each is summed in a fixed order, so the result
    does not depend on the number of threads.
    """
    n = len(indptr) - 1
    cin = w.shape[1]
    cout = w.shape[2]
    out = np.empty((n, cout))
    for i in nb.prange(n):
        for c in range(cout):
            out[i, c] = bias[c]
        for p in range(indptr[i], indptr[i + 1]):
            o = slots[p]
            j = srcs[p]
            for a in range(cin):
                xa = x[j, a]
                if xa != 0.0:
                    for c in range(cout):
                        out[i, c] += xa * w[o, a, c]
    return out


@nb.njit(cache=True)
def conv_weight_grad(x, g, indptr, slots, srcs, nslots):
    cin = x.shape[1]
    cout = g.shape[1]
    dw = np.zeros((nslots, cin, cout))
    for i in range(len(indptr) - 1):
        for p in range(indptr[i], indptr[i + 1]):
            o = slots[p]
            j = srcs[p]
            for a in range(cin):
                xa = x[j, a]
                if xa != 0.0:
                    for c in range(cout):
                        dw[o, a, c] += xa * g[i, c]
    return dw


@nb.njit(cache=True)
def conv_input_grad(g, indptr, slots, srcs, w, nsrc):
    """Transpose of :func:`conv_forward`: scatter ``g[i] @ w[slot].T`` back to the sources."""
    cin = w.shape[1]
    cout = w.shape[2]
    dx = np.zeros((nsrc, cin))
    for i in range(len(indptr) - 1):
        for p in range(indptr[i], indptr[i + 1]):
            o = slots[p]
            j = srcs[p]
            for a in range(cin):
                acc = 0.0
                for c in range(cout):
                    acc += g[i, c] * w[o, a, c]
                dx[j, a] += acc
    return dx


def sconv(x: Var, w: Var, bias: Var, nbr) -> Var:
    """Sparse convolution over the neighbor table ``nbr`` (kernel ``w.shape[0] == K**3``)."""
    out = conv_forward(x.value, nbr.indptr, nbr.slots, nbr.srcs, w.value, bias.value)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if needs_grad(x):
            x.accumulate(conv_input_grad(g, nbr.indptr, nbr.slots, nbr.srcs, w.value, len(x.value)))
        w.accumulate(conv_weight_grad(x.value, g, nbr.indptr, nbr.slots, nbr.srcs, w.value.shape[0]))
        bias.accumulate(g.sum(axis=0))

    return Var(out, (x, w, bias), bwd)


class Param(Var):
    """A leaf Var that always receives gradients."""

    __slots__ = ()

    def __init__(self, value):
        super().__init__(np.asarray(value, dtype=np.float64))


def needs_grad(v: Var) -> bool:
    return isinstance(v, Param) or v.backward_fn is not None


def relu(x: Var) -> Var:
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), (x,), lambda g: x.accumulate(g * mask))


def add(x: Var, y: Var) -> Var:
    def bwd(g):
        x.accumulate(g)
        y.accumulate(g)
    return Var(x.value + y.value, (x, y), bwd)


def softplus(x: Var) -> Var:
    v = x.value
    out = np.logaddexp(0.0, v)
    sig = 0.5 * (1.0 + np.tanh(0.5 * v))
    return Var(out, (x,), lambda g: x.accumulate(g * sig))


def affine(x: Var, scale, shift) -> Var:
    """``x * scale + shift`` with constant (broadcastable) scale and shift."""
    scale = np.asarray(scale, dtype=np.float64)
    return Var(x.value * scale + shift, (x,), lambda g: x.accumulate(g * scale))


def columns(x: Var, cols) -> Var:
    cols = list(cols)

    def bwd(g):
        full = np.zeros_like(x.value)
        full[:, cols] = g
        x.accumulate(full)
    return Var(x.value[:, cols], (x,), bwd)


def rows(x: Var, idx) -> Var:
    idx = np.asarray(idx, dtype=np.int64)

    def bwd(g):
        full = np.zeros_like(x.value)
        np.add.at(full, idx, g)
        x.accumulate(full)
    return Var(x.value[idx], (x,), bwd)


def laplace_bits(mu: Var, b: Var, targets, lo: int, hi: int, pass_through: bool = False) -> Var:
    """Total ``-log2 p`` of ``targets`` (1-D) under per-row Laplace(mu, b)."""
    nll, g_mu, g_b = laplace.nll_and_grads(mu.value, b.value, targets, lo, hi, pass_through)

    def bwd(g):
        mu.accumulate(g * g_mu.reshape(mu.value.shape))
        b.accumulate(g * g_b.reshape(b.value.shape))
    return Var(np.float64(nll.sum()), (mu, b), bwd)


def total(terms) -> Var:
    terms = list(terms)

    def bwd(g):
        for t in terms:
            t.accumulate(g)
    return Var(np.float64(sum(t.value for t in terms)), tuple(terms), bwd)
