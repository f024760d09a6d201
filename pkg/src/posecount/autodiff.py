"""Reverse-mode automatic differentiation over a small set of array primitives.

Every primitive below accepts plain ``numpy`` arrays or :class:`Node` objects.
With plain arrays it simply computes the forward value (the fast inference
path); as soon as one operand is a ``Node`` it records the operation so that
:func:`backward` can later accumulate gradients. Gradient correctness is
checked against :func:`finite_difference_gradient`, the independent oracle.

Scope is deliberately narrow: 1-D/2-D float64 tensors, no broadcasting beyond
row-wise bias addition, no higher-order derivatives. The dispatch in each
primitive is written with bare ``type`` checks: these functions run hundreds
of times per frame, so they stay lean.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError

_ZERO_NORM_EPS = 1e-12


class Node:
    """One value in the computation graph.

    ``parents`` holds ``(node, vjp)`` pairs where ``vjp`` maps the gradient
    of this node onto the gradient contribution for that parent. Leaves have
    no parents; their ``grad`` is what :func:`backward` ultimately fills in.
    """

    __slots__ = ("value", "op", "parents", "grad", "_spent")

    def __init__(self, value, op: str = "leaf", parents=()):
        self.value = value
        self.op = op
        self.parents = parents
        self.grad = None
        self._spent = False

    @property
    def inputs(self) -> tuple:
        return tuple(p for p, _ in self.parents)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={np.shape(self.value)})"


def leaf(value) -> Node:
    """Wrap an array as a differentiable graph leaf."""
    return Node(np.asarray(value, dtype=np.float64))


def value_of(x):
    """The underlying float64 array of a Node, or the array itself."""
    if type(x) is Node:
        return x.value
    return np.asarray(x, dtype=np.float64)


def _val(x):
    t = type(x)
    if t is Node:
        return x.value
    if t is np.ndarray:
        return x
    return np.asarray(x, dtype=np.float64)


class Tape:
    """Topological ordering of every node reachable from one output.

    Construction is iterative so graph depth is not limited by the Python
    recursion limit. Invariant: each node's inputs appear before it.
    """

    def __init__(self, root: Node):
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
            for parent, _ in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.nodes = order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into ``grad`` for every reachable node.

    ``loss`` must be scalar. Calling backward twice on the same node is an
    error: gradients are not resettable, build a fresh graph instead.
    """
    if type(loss) is not Node:
        raise TypeError("backward expects a Node")
    if np.size(loss.value) != 1:
        raise NumericError(f"backward requires a scalar loss, got shape {np.shape(loss.value)}")
    if loss._spent:
        raise RuntimeError("backward already ran on this node; rebuild the graph")
    loss._spent = True

    tape = Tape(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            contribution = vjp(g)
            if parent.grad is None:
                parent.grad = contribution
            else:
                parent.grad = parent.grad + contribution


def grad_or_zero(node: Node) -> np.ndarray:
    """Gradient of a leaf after backward; zeros when the leaf was unused."""
    if node.grad is None:
        return np.zeros_like(node.value)
    return node.grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a, b):
    a_node = type(a) is Node
    b_node = type(b) is Node
    av = a.value if a_node else a
    bv = b.value if b_node else b
    if av.ndim not in (1, 2) or bv.ndim != 2 or av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {av.shape} @ {bv.shape}")
    out = av @ bv
    if not (a_node or b_node):
        return out
    parents = []
    if av.ndim == 1:
        if a_node:
            parents.append((a, lambda g: bv @ g))
        if b_node:
            parents.append((b, lambda g: np.outer(av, g)))
    else:
        if a_node:
            parents.append((a, lambda g: g @ bv.T))
        if b_node:
            parents.append((b, lambda g: av.T @ g))
    return Node(out, "matmul", parents)


def add(a, b):
    """Elementwise sum; also supports (n, m) + (m,) row-wise bias."""
    a_node = type(a) is Node
    b_node = type(b) is Node
    av = a.value if a_node else _val(a)
    bv = b.value if b_node else _val(b)
    if av.shape == bv.shape:
        out = av + bv
        if not (a_node or b_node):
            return out
        parents = []
        if a_node:
            parents.append((a, lambda g: g))
        if b_node:
            parents.append((b, lambda g: g))
        return Node(out, "add", parents)
    if av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]:
        out = av + bv
        if not (a_node or b_node):
            return out
        parents = []
        if a_node:
            parents.append((a, lambda g: g))
        if b_node:
            parents.append((b, lambda g: g.sum(axis=0)))
        return Node(out, "add", parents)
    raise ShapeError(f"add: incompatible shapes {av.shape} + {bv.shape}")


def sub(a, b):
    a_node = type(a) is Node
    b_node = type(b) is Node
    av = a.value if a_node else _val(a)
    bv = b.value if b_node else _val(b)
    if av.shape != bv.shape:
        raise ShapeError(f"sub: incompatible shapes {av.shape} - {bv.shape}")
    out = av - bv
    if not (a_node or b_node):
        return out
    parents = []
    if a_node:
        parents.append((a, lambda g: g))
    if b_node:
        parents.append((b, lambda g: -g))
    return Node(out, "sub", parents)


def mul(a, b):
    a_node = type(a) is Node
    b_node = type(b) is Node
    av = a.value if a_node else _val(a)
    bv = b.value if b_node else _val(b)
    if av.shape != bv.shape:
        raise ShapeError(f"mul: incompatible shapes {av.shape} * {bv.shape}")
    out = av * bv
    if not (a_node or b_node):
        return out
    parents = []
    if a_node:
        parents.append((a, lambda g: g * bv))
    if b_node:
        parents.append((b, lambda g: g * av))
    return Node(out, "mul", parents)


def scale(a, c: float):
    """Multiply by a non-differentiated python scalar."""
    if type(a) is Node:
        return Node(a.value * c, "scale", [(a, lambda g: g * c)])
    return _val(a) * c


def relu(a):
    """max(x, 0). The subgradient at exactly 0 is 0."""
    if type(a) is Node:
        av = a.value
        mask = av > 0.0
        return Node(np.maximum(av, 0.0), "relu", [(a, lambda g: g * mask)])
    return np.maximum(_val(a), 0.0)


# The hinge in the triplet loss is the same function under another name.
maximum0 = relu


def sigmoid_value(av):
    out = np.empty_like(av)
    pos = av >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    ex = np.exp(av[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    if type(a) is Node:
        out = sigmoid_value(a.value)
        return Node(out, "sigmoid", [(a, lambda g: g * out * (1.0 - out))])
    return sigmoid_value(_val(a))


def log(a):
    av = a.value if type(a) is Node else _val(a)
    if np.any(av <= 0.0):
        raise NumericError("log: non-positive input")
    out = np.log(av)
    if type(a) is Node:
        return Node(out, "log", [(a, lambda g: g / av)])
    return out


def clip(a, lo: float, hi: float):
    """Clamp into [lo, hi]; gradient passes only strictly inside the interval."""
    if type(a) is Node:
        av = a.value
        mask = (av > lo) & (av < hi)
        return Node(np.clip(av, lo, hi), "clip", [(a, lambda g: g * mask)])
    return np.clip(_val(a), lo, hi)


def softmax_value(av):
    shifted = av - av.max(axis=-1, keepdims=True)
    ex = np.exp(shifted, out=shifted)
    ex /= ex.sum(axis=-1, keepdims=True)
    return ex


def softmax(a):
    """Row-wise softmax over the last axis (1-D input is a single row)."""
    if type(a) is Node:
        out = softmax_value(a.value)

        def vjp(g):
            # Full Jacobian-vector product: y * (g - <g, y>) per row.
            inner = (g * out).sum(axis=-1, keepdims=True)
            return out * (g - inner)

        return Node(out, "softmax", [(a, vjp)])
    return softmax_value(_val(a))


def _layernorm_stats(xv, eps):
    inv_d = 1.0 / xv.shape[1]
    mu = xv.sum(axis=1, keepdims=True) * inv_d
    centered = xv - mu
    var = (centered * centered).sum(axis=1, keepdims=True) * inv_d
    inv_std = 1.0 / np.sqrt(var + eps)
    return centered * inv_std, inv_std, inv_d


def layernorm_value(xv, gv, bv, eps: float = 1e-5):
    """Plain-array layer norm; the inference path shares this exact math."""
    xhat, _, _ = _layernorm_stats(xv, eps)
    return xhat * gv + bv


def layernorm(x, gamma, beta, eps: float = 1e-5):
    """Normalize each row of a 2-D input to zero mean / unit variance, then
    apply the learned elementwise scale and shift."""
    x_node = type(x) is Node
    g_node = type(gamma) is Node
    b_node = type(beta) is Node
    xv = x.value if x_node else _val(x)
    gv = gamma.value if g_node else _val(gamma)
    bv = beta.value if b_node else _val(beta)
    if xv.ndim != 2 or gv.shape != (xv.shape[1],) or bv.shape != gv.shape:
        raise ShapeError(
            f"layernorm: incompatible shapes x={xv.shape} gamma={gv.shape} beta={bv.shape}"
        )
    xhat, inv_std, inv_d = _layernorm_stats(xv, eps)
    out = xhat * gv + bv
    if not (x_node or g_node or b_node):
        return out

    parents = []
    if x_node:

        def vjp_x(g):
            dxhat = g * gv
            # Mean and variance both depend on x, hence the two correction terms.
            m1 = dxhat.sum(axis=1, keepdims=True) * inv_d
            m2 = (dxhat * xhat).sum(axis=1, keepdims=True) * inv_d
            return inv_std * (dxhat - m1 - xhat * m2)

        parents.append((x, vjp_x))
    if g_node:
        parents.append((gamma, lambda g: (g * xhat).sum(axis=0)))
    if b_node:
        parents.append((beta, lambda g: g.sum(axis=0)))
    return Node(out, "layernorm", parents)


def flatten(a):
    """Row-major flattening to 1-D."""
    if type(a) is Node:
        av = a.value
        shape = av.shape
        return Node(av.reshape(-1), "flatten", [(a, lambda g: g.reshape(shape))])
    return _val(a).reshape(-1)


def transpose(a):
    av = a.value if type(a) is Node else _val(a)
    if av.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D, got shape {av.shape}")
    if type(a) is Node:
        return Node(av.T, "transpose", [(a, lambda g: g.T)])
    return av.T


def concat_cols(parts):
    """Concatenate 2-D blocks with equal row counts along columns."""
    parts = list(parts)
    values = [p.value if type(p) is Node else _val(p) for p in parts]
    rows = {v.shape[0] for v in values}
    if any(v.ndim != 2 for v in values) or len(rows) != 1:
        raise ShapeError(f"concat: incompatible shapes {[v.shape for v in values]}")
    out = np.concatenate(values, axis=1)
    if not any(type(p) is Node for p in parts):
        return out
    parents = []
    offset = 0
    for part, v in zip(parts, values):
        lo, hi = offset, offset + v.shape[1]
        if type(part) is Node:
            parents.append((part, lambda g, lo=lo, hi=hi: g[:, lo:hi]))
        offset = hi
    return Node(out, "concat", parents)


def mean(a):
    """Mean over all elements, as a 0-d scalar."""
    av = a.value if type(a) is Node else _val(a)
    n = av.size
    out = np.asarray(av.sum() / n)
    if type(a) is Node:
        shape = av.shape
        return Node(out, "mean", [(a, lambda g: np.full(shape, float(g) / n))])
    return out


def dot(u, v):
    u_node = type(u) is Node
    v_node = type(v) is Node
    uv = u.value if u_node else _val(u)
    vv = v.value if v_node else _val(v)
    if uv.ndim != 1 or uv.shape != vv.shape:
        raise ShapeError(f"dot: incompatible shapes {uv.shape} . {vv.shape}")
    out = np.asarray(uv @ vv)
    if not (u_node or v_node):
        return out
    parents = []
    if u_node:
        parents.append((u, lambda g: g * vv))
    if v_node:
        parents.append((v, lambda g: g * uv))
    return Node(out, "dot", parents)


def l2_normalize(v):
    """v / ||v|| for a 1-D vector; zero-norm input is an error."""
    vv = v.value if type(v) is Node else _val(v)
    if vv.ndim != 1:
        raise ShapeError(f"l2_normalize: expected 1-D, got shape {vv.shape}")
    norm = float(np.linalg.norm(vv))
    if norm < _ZERO_NORM_EPS:
        raise NumericError("l2_normalize: zero-norm vector")
    out = vv / norm
    if type(v) is not Node:
        return out

    def vjp(g):
        return (g - out * (g @ out)) / norm

    return Node(out, "l2_normalize", [(v, vjp)])


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

def finite_difference_gradient(
    f: Callable,
    params,
    rel_step: float = 1e-4,
):
    """Central-difference gradient of a scalar function, coordinate by coordinate.

    ``params`` is either a single float64 array or a dict of named float64
    arrays; ``f(params)`` must return a scalar and be deterministic. Arrays
    are perturbed in place (step ``rel_step * max(|theta|, 1)``) and restored
    exactly, so ``f`` may simply close over them.
    """
    single = isinstance(params, np.ndarray)
    tree = {"": params} if single else params
    grads = {}
    for name, arr in tree.items():
        if not isinstance(arr, np.ndarray) or arr.dtype != np.float64:
            raise TypeError(f"finite differences require float64 arrays, got {name!r}")
        g = np.zeros_like(arr)
        for i in range(arr.size):
            orig = arr.flat[i]
            h = rel_step * max(abs(orig), 1.0)
            arr.flat[i] = orig + h
            f_plus = float(f(params))
            arr.flat[i] = orig - h
            f_minus = float(f(params))
            arr.flat[i] = orig
            g.flat[i] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g
    if single:
        return grads[""]
    return grads
