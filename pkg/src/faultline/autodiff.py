"""Reverse-mode automatic differentiation for scalar objectives.

Every differentiable quantity in this package (simulator costs, prior
log-densities, sampling targets) is a scalar function of one or more real
vectors.  This module provides a small tape-free reverse-mode engine for
exactly that case: operations build an expression DAG of :class:`Node`
objects, and :func:`value_and_grad` runs one backward sweep over it.

The op functions below accept either :class:`Node` operands or plain
numpy arrays / scalars.  With no ``Node`` operand they evaluate eagerly in
numpy and return a plain value, so the same code path doubles as a fast
gradient-free evaluator (used by random-walk sampling and stress testing).

There is no global tape: the graph lives in the nodes themselves, so
independent evaluations may run concurrently from many threads.

Simulators may define fused primitives (a whole rollout as one node) by
constructing ``Node(value, parents, vjp)`` directly; see
``envs/search.py`` for an example.  ``vjp`` receives the output cotangent
and must return one cotangent (or ``None``) per parent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AutodiffError(RuntimeError):
    """Base class for differentiation failures."""


class NonFiniteError(AutodiffError):
    """An operation produced a non-finite intermediate (names the op)."""


class DegenerateEigenvaluesError(AutodiffError):
    """Gradient requested through a repeated symmetric eigenvalue."""


#: Operations the engine supports with exact derivative rules.  Anything
#: else fails loudly at graph-construction time (e.g. ``np.sin(node)``
#: raises a TypeError) -- never a silent zero gradient.
SUPPORTED_OPS = frozenset({
    "add", "sub", "mul", "div", "neg", "pow", "exp", "log", "tanh",
    "sigmoid", "sqrt", "hinge", "minimum", "maximum", "amin", "amax",
    "logsumexp", "sum", "dot", "norm", "matvec", "matmul",
    "sym_eigenvalues", "solve", "reshape", "transpose", "concat", "stack",
    "getitem",
})


def supported_operations() -> frozenset[str]:
    """The elementary-operation contract: op names with exact vjp rules."""
    return SUPPORTED_OPS


class Node:
    """One value in the expression DAG.

    ``parents`` may mix nodes and plain constants; ``vjp`` maps the output
    cotangent to one cotangent per parent (``None`` for constants).
    """

    __slots__ = ("value", "parents", "vjp")

    # Refuse numpy ufunc dispatch: np.sin(node) etc. must fail loudly.
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Node(value={self.value!r})"

    def __float__(self):
        raise TypeError(
            "cannot collapse a graph Node to float mid-expression; "
            "use value_and_grad / .value explicitly"
        )

    def __bool__(self):
        raise TypeError("graph Node has no truth value (would hide a branch from the tape)")

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)


@dataclass
class GradientResult:
    """Scalar value and its gradient with respect to one input vector."""

    value: float
    gradient: np.ndarray


def _val(x):
    return x.value if type(x) is Node else x


def _is_node(x):
    return type(x) is Node


def _unbroadcast(g, shape):
    """Sum cotangent ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_finite(value, op):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite result in op '{op}'")
    return value


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    out = _val(a) + _val(b)
    if not (_is_node(a) or _is_node(b)):
        return out
    sa, sb = np.shape(_val(a)), np.shape(_val(b))
    return Node(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    out = _val(a) - _val(b)
    if not (_is_node(a) or _is_node(b)):
        return out
    sa, sb = np.shape(_val(a)), np.shape(_val(b))
    return Node(out, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    if not (_is_node(a) or _is_node(b)):
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return Node(out, (a, b),
                lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)))


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    if not (_is_node(a) or _is_node(b)):
        return out
    _check_finite(out, "div")
    sa, sb = np.shape(av), np.shape(bv)
    return Node(out, (a, b),
                lambda g: (_unbroadcast(g / bv, sa),
                           _unbroadcast(-g * av / (bv * bv), sb)))


def neg(a):
    out = -_val(a)
    if not _is_node(a):
        return out
    return Node(out, (a,), lambda g: (-np.asarray(g),))


def power(a, p):
    """Elementwise ``a ** p`` for a constant real exponent ``p``."""
    if _is_node(p):
        raise TypeError("power: exponent must be a constant, not a graph Node")
    av = _val(a)
    out = av ** p
    if not _is_node(a):
        return out
    _check_finite(out, "pow")
    return Node(out, (a,), lambda g: (np.asarray(g) * p * av ** (p - 1),))


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def exp(a):
    out = np.exp(_val(a))
    if not _is_node(a):
        return out
    _check_finite(out, "exp")
    return Node(out, (a,), lambda g: (np.asarray(g) * out,))


def log(a):
    av = _val(a)
    if np.any(np.asarray(av) <= 0):
        raise NonFiniteError("log of non-positive value in op 'log'")
    out = np.log(av)
    if not _is_node(a):
        return out
    return Node(out, (a,), lambda g: (np.asarray(g) / av,))


def sqrt(a):
    av = _val(a)
    if np.any(np.asarray(av) < 0):
        raise NonFiniteError("sqrt of negative value in op 'sqrt'")
    out = np.sqrt(av)
    if not _is_node(a):
        return out
    return Node(out, (a,), lambda g: (np.asarray(g) * 0.5 / out,))


def tanh(a):
    out = np.tanh(_val(a))
    if not _is_node(a):
        return out
    return Node(out, (a,), lambda g: (np.asarray(g) * (1.0 - out * out),))


def _sigmoid_raw(x):
    x = np.asarray(x, dtype=float)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def sigmoid(a):
    out = _sigmoid_raw(_val(a))
    if not _is_node(a):
        return out
    return Node(out, (a,), lambda g: (np.asarray(g) * out * (1.0 - out),))


def hinge(a):
    """``max(a, 0)`` elementwise; at the tie the derivative follows the
    first argument of the max, i.e. d/da = 1 at a = 0."""
    av = _val(a)
    out = np.maximum(av, 0.0)
    if not _is_node(a):
        return out
    mask = np.asarray(av) >= 0.0
    return Node(out, (a,), lambda g: (np.asarray(g) * mask,))


# ---------------------------------------------------------------------------
# min / max (elementwise and reductions); ties resolve to the first argument
# (binary forms) or the first attaining index (reductions)


def maximum(a, b):
    av, bv = _val(a), _val(b)
    out = np.maximum(av, bv)
    if not (_is_node(a) or _is_node(b)):
        return out
    mask = np.asarray(av) >= np.asarray(bv)
    sa, sb = np.shape(av), np.shape(bv)
    return Node(out, (a, b),
                lambda g: (_unbroadcast(np.asarray(g) * mask, sa),
                           _unbroadcast(np.asarray(g) * ~mask, sb)))


def minimum(a, b):
    av, bv = _val(a), _val(b)
    out = np.minimum(av, bv)
    if not (_is_node(a) or _is_node(b)):
        return out
    mask = np.asarray(av) <= np.asarray(bv)
    sa, sb = np.shape(av), np.shape(bv)
    return Node(out, (a, b),
                lambda g: (_unbroadcast(np.asarray(g) * mask, sa),
                           _unbroadcast(np.asarray(g) * ~mask, sb)))


def amin(a, axis=None):
    av = np.asarray(_val(a))
    out = av.min(axis=axis)
    if not _is_node(a):
        return out

    def vjp(g):
        grad = np.zeros_like(av)
        if axis is None:
            grad.flat[np.argmin(av)] = g
        else:
            idx = np.expand_dims(np.argmin(av, axis=axis), axis)
            np.put_along_axis(grad, idx, np.expand_dims(np.asarray(g), axis), axis)
        return (grad,)

    return Node(out, (a,), vjp)


def amax(a, axis=None):
    av = np.asarray(_val(a))
    out = av.max(axis=axis)
    if not _is_node(a):
        return out

    def vjp(g):
        grad = np.zeros_like(av)
        if axis is None:
            grad.flat[np.argmax(av)] = g
        else:
            idx = np.expand_dims(np.argmax(av, axis=axis), axis)
            np.put_along_axis(grad, idx, np.expand_dims(np.asarray(g), axis), axis)
        return (grad,)

    return Node(out, (a,), vjp)


# ---------------------------------------------------------------------------
# reductions


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming on purpose
    av = np.asarray(_val(a))
    out = av.sum(axis=axis)
    if not _is_node(a):
        return out

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(np.asarray(g), av.shape),)
        return (np.broadcast_to(np.expand_dims(np.asarray(g), axis), av.shape),)

    return Node(out, (a,), vjp)


def logsumexp(a, axis=None):
    """Numerically stable ``log(sum(exp(a)))`` along ``axis``."""
    av = np.asarray(_val(a), dtype=float)
    m = av.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = np.exp(av - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out_keep = np.log(total) + m
    out = out_keep.reshape(()) if axis is None else np.squeeze(out_keep, axis=axis)
    if not _is_node(a):
        return out

    soft = shifted / total

    def vjp(g):
        if axis is None:
            return (np.asarray(g) * soft,)
        return (np.expand_dims(np.asarray(g), axis) * soft,)

    return Node(out, (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra


def dot(a, b):
    av, bv = _val(a), _val(b)
    out = np.dot(av, bv)
    if not (_is_node(a) or _is_node(b)):
        return out
    if np.ndim(av) != 1 or np.ndim(bv) != 1:
        raise TypeError("dot: expects 1-D vectors (use matvec/matmul otherwise)")
    return Node(out, (a, b), lambda g: (np.asarray(g) * bv, np.asarray(g) * av))


def norm(a):
    """Euclidean norm of the flattened input; subgradient 0 at the origin."""
    av = np.asarray(_val(a), dtype=float)
    out = np.sqrt((av * av).sum())
    if not _is_node(a):
        return out

    def vjp(g):
        if out == 0.0:
            return (np.zeros_like(av),)
        return (np.asarray(g) * av / out,)

    return Node(out, (a,), vjp)


def matvec(a, x):
    av, xv = _val(a), _val(x)
    out = av @ xv
    if not (_is_node(a) or _is_node(x)):
        return out
    if np.ndim(av) != 2 or np.ndim(xv) != 1:
        raise TypeError("matvec: expects a 2-D matrix and a 1-D vector")
    return Node(out, (a, x),
                lambda g: (np.outer(np.asarray(g), xv), av.T @ np.asarray(g)))


def matmul(a, b):
    av, bv = _val(a), _val(b)
    out = av @ bv
    if not (_is_node(a) or _is_node(b)):
        return out
    if np.ndim(av) != 2 or np.ndim(bv) != 2:
        raise TypeError("matmul: expects 2-D matrices")
    return Node(out, (a, b),
                lambda g: (np.asarray(g) @ bv.T, av.T @ np.asarray(g)))


def sym_eigenvalues(a, gap_tol=1e-9):
    """Eigenvalues (ascending) of symmetric matrices, batched over leading dims.

    The reverse rule for eigenvalue k is the quadratic form v_k v_k^T; it is
    only valid for simple eigenvalues, so the backward pass raises
    :class:`DegenerateEigenvaluesError` when a gradient is requested through
    an eigenvalue whose gap to a neighbor is below ``gap_tol``.  Forward
    evaluation works for any symmetric matrix (repeated eigenvalues included).
    """
    av = np.asarray(_val(a), dtype=float)
    if av.ndim < 2 or av.shape[-1] != av.shape[-2]:
        raise TypeError("sym_eigenvalues: expects (..., n, n) matrices")
    if not np.allclose(av, np.swapaxes(av, -1, -2), atol=1e-8):
        raise AutodiffError("sym_eigenvalues: input matrix is not symmetric")
    if not _is_node(a):
        return np.linalg.eigvalsh(av)
    w, v = np.linalg.eigh(av)

    def vjp(g):
        g = np.asarray(g)
        used = np.abs(g) > 0
        if np.any(used):
            gaps = np.diff(w, axis=-1)
            n = w.shape[-1]
            lo = np.concatenate([np.full(w.shape[:-1] + (1,), np.inf), gaps], axis=-1)
            hi = np.concatenate([gaps, np.full(w.shape[:-1] + (1,), np.inf)], axis=-1)
            min_gap = np.minimum(lo, hi)
            if np.any(used & (min_gap < gap_tol)):
                raise DegenerateEigenvaluesError(
                    f"gradient through a repeated eigenvalue (gap < {gap_tol:g}) "
                    "in op 'sym_eigenvalues'"
                )
        return (np.einsum("...k,...ik,...jk->...ij", g, v, v),)

    return Node(w, (a,), vjp)


def solve(a, b):
    """Solve ``A z = b``; the reverse rule solves with ``A^T`` for the cotangent."""
    av, bv = _val(a), _val(b)
    z = np.linalg.solve(av, bv)
    if not (_is_node(a) or _is_node(b)):
        return z
    if np.ndim(bv) != 1:
        raise TypeError("solve: expects a 1-D right-hand side")
    _check_finite(z, "solve")

    def vjp(g):
        gb = np.linalg.solve(av.T, np.asarray(g))
        return (-np.outer(gb, z), gb)

    return Node(z, (a, b), vjp)


# ---------------------------------------------------------------------------
# structural ops


def reshape(a, shape):
    av = np.asarray(_val(a))
    out = av.reshape(shape)
    if not _is_node(a):
        return out
    return Node(out, (a,), lambda g: (np.asarray(g).reshape(av.shape),))


def transpose(a, axes=None):
    av = np.asarray(_val(a))
    out = np.transpose(av, axes)
    if not _is_node(a):
        return out
    inv = None if axes is None else np.argsort(axes)

    def vjp(g):
        return (np.transpose(np.asarray(g), inv),)

    return Node(out, (a,), vjp)


def getitem(a, idx):
    av = np.asarray(_val(a))
    out = av[idx]
    if not _is_node(a):
        return out

    def vjp(g):
        grad = np.zeros_like(av)
        grad[idx] = g
        return (grad,)

    return Node(out, (a,), vjp)


def concat(parts, axis=0):
    vals = [np.asarray(_val(p)) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if not any(_is_node(p) for p in parts):
        return out
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(np.asarray(g), splits, axis=axis))

    return Node(out, tuple(parts), vjp)


def stack(parts, axis=0):
    vals = [np.asarray(_val(p)) for p in parts]
    out = np.stack(vals, axis=axis)
    if not any(_is_node(p) for p in parts):
        return out

    def vjp(g):
        g = np.asarray(g)
        return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))

    return Node(out, tuple(parts), vjp)


# ---------------------------------------------------------------------------
# backward sweep


def _topo_order(out):
    # postorder DFS; a node is marked seen when first expanded (not when
    # pushed), so shared subgraphs are emitted after all their dependents
    order = []
    seen = set()
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
        for p in node.parents:
            if type(p) is Node and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out, seed=1.0):
    """Cotangents of ``out`` w.r.t. every node in its graph, keyed by id."""
    grads = {id(out): np.asarray(seed, dtype=float)}
    for node in reversed(_topo_order(out)):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for p, pg in zip(node.parents, parent_grads):
            if type(p) is not Node or pg is None:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = np.asarray(pg) if acc is None else acc + pg
    return grads


def value_and_grad(f, x) -> GradientResult:
    """Evaluate scalar ``f`` at vector ``x`` and return value plus gradient.

    ``f`` must be composed of this module's operations (or fused primitives
    built on :class:`Node`).  A target that ignores ``x`` entirely gets a
    zero gradient.  Non-finite values or gradients raise
    :class:`NonFiniteError`.
    """
    xv = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xv)):
        raise NonFiniteError("value_and_grad: input is not finite")
    leaf = Node(xv)
    out = f(leaf)
    if type(out) is not Node:
        value = float(out)
        if not np.isfinite(value):
            raise NonFiniteError("value_and_grad: target value is not finite")
        return GradientResult(value, np.zeros_like(xv))
    if np.size(out.value) != 1:
        raise TypeError("value_and_grad: target must be scalar-valued")
    value = float(out.value)
    if not np.isfinite(value):
        raise NonFiniteError("value_and_grad: target value is not finite")
    grads = backward(out)
    grad = grads.get(id(leaf))
    grad = np.zeros_like(xv) if grad is None else np.asarray(grad, dtype=float)
    grad = grad.reshape(xv.shape)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("value_and_grad: gradient is not finite")
    return GradientResult(value, grad)
