"""Minimal reverse-mode automatic differentiation on numpy arrays.

A :class:`Tape` records one operation per node; :func:`backward` replays it in
reverse with fixed ordering, so gradients are exact and bit-deterministic.
Forward-mode derivatives use :class:`Dual` numbers whose tangent expressions
are themselves built from the same primitives, which makes a forward-mode
sweep differentiable in reverse mode (needed to train through the encoder's
velocity chain rule).

All primitives dispatch on their argument types: plain ndarrays evaluate
eagerly with no recording, :class:`Var` arguments record onto their tape, and
:class:`Dual` arguments propagate (primal, tangent) pairs.  A ``None`` tangent
means structurally zero.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "Dual",
    "backward",
    "add", "sub", "mul", "div", "neg", "matmul",
    "tanh", "sigmoid", "sin", "cos", "exp", "log", "sqrt",
    "sum_", "mean_", "concat", "reshape",
]


class Tape:
    """Linear record of operations; node i depends only on nodes < i."""

    __slots__ = ("parents", "vjps")

    def __init__(self):
        self.parents = []
        self.vjps = []

    def leaf(self, value):
        return _record(self, np.asarray(value, dtype=float), (), ())


def _record(tape, value, parents, vjps):
    slot = len(tape.parents)
    tape.parents.append(tuple(p.slot for p in parents))
    tape.vjps.append(tuple(vjps))
    return Var(np.asarray(value, dtype=float), tape, slot)


class Var:
    """A tracked array value on a tape."""

    __slots__ = ("value", "tape", "slot")

    def __init__(self, value, tape, slot):
        self.value = value
        self.tape = tape
        self.slot = slot

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, slot={self.slot})"


class Dual:
    """Forward-mode pair; ``tangent`` may be None for a structural zero."""

    __slots__ = ("primal", "tangent")

    def __init__(self, primal, tangent):
        self.primal = primal
        self.tangent = tangent

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _is_dual(*args):
    return any(isinstance(a, Dual) for a in args)


def _is_var(*args):
    return any(isinstance(a, Var) for a in args)


def _parts(x):
    if isinstance(x, Dual):
        return x.primal, x.tangent
    return x, None


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    raise TypeError("no Var argument")


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, (gi, si) in enumerate(zip(g.shape, shape)) if si == 1 and gi != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(out: Var, seed=None):
    """Reverse sweep; returns a list of gradients indexed by tape slot."""
    tape = out.tape
    grads = [None] * len(tape.parents)
    grads[out.slot] = np.ones_like(out.value) if seed is None else np.asarray(seed, float)
    for slot in range(out.slot, -1, -1):
        g = grads[slot]
        if g is None:
            continue
        for parent, vjp in zip(tape.parents[slot], tape.vjps[slot]):
            contrib = vjp(g)
            grads[parent] = contrib if grads[parent] is None else grads[parent] + contrib
    return grads


# ------------------------------------------------------------- arithmetic

def add(a, b):
    if _is_dual(a, b):
        ap, at = _parts(a)
        bp, bt = _parts(b)
        if at is None:
            tang = bt
        elif bt is None:
            tang = at
        else:
            tang = add(at, bt)
        return Dual(add(ap, bp), tang)
    if _is_var(a, b):
        av, bv = _val(a), _val(b)
        parents, vjps = [], []
        if isinstance(a, Var):
            parents.append(a)
            vjps.append(lambda g: _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            parents.append(b)
            vjps.append(lambda g: _unbroadcast(g, bv.shape))
        return _record(_tape_of(a, b), av + bv, parents, vjps)
    return np.add(a, b)


def sub(a, b):
    if _is_dual(a, b):
        ap, at = _parts(a)
        bp, bt = _parts(b)
        if bt is None:
            tang = at
        elif at is None:
            tang = neg(bt)
        else:
            tang = sub(at, bt)
        return Dual(sub(ap, bp), tang)
    if _is_var(a, b):
        av, bv = _val(a), _val(b)
        parents, vjps = [], []
        if isinstance(a, Var):
            parents.append(a)
            vjps.append(lambda g: _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            parents.append(b)
            vjps.append(lambda g: _unbroadcast(-g, bv.shape))
        return _record(_tape_of(a, b), av - bv, parents, vjps)
    return np.subtract(a, b)


def neg(a):
    if isinstance(a, Dual):
        return Dual(neg(a.primal), None if a.tangent is None else neg(a.tangent))
    if isinstance(a, Var):
        return _record(a.tape, -a.value, [a], [lambda g: -g])
    return -a


def mul(a, b):
    if _is_dual(a, b):
        ap, at = _parts(a)
        bp, bt = _parts(b)
        terms = []
        if at is not None:
            terms.append(mul(at, bp))
        if bt is not None:
            terms.append(mul(ap, bt))
        tang = None if not terms else (terms[0] if len(terms) == 1 else add(*terms))
        return Dual(mul(ap, bp), tang)
    if _is_var(a, b):
        av, bv = _val(a), _val(b)
        parents, vjps = [], []
        if isinstance(a, Var):
            parents.append(a)
            vjps.append(lambda g: _unbroadcast(g * bv, av.shape))
        if isinstance(b, Var):
            parents.append(b)
            vjps.append(lambda g: _unbroadcast(g * av, bv.shape))
        return _record(_tape_of(a, b), av * bv, parents, vjps)
    return np.multiply(a, b)


def div(a, b):
    if _is_dual(a, b):
        ap, at = _parts(a)
        bp, bt = _parts(b)
        prim = div(ap, bp)
        terms = []
        if at is not None:
            terms.append(div(at, bp))
        if bt is not None:
            terms.append(neg(div(mul(prim, bt), bp)))
        tang = None if not terms else (terms[0] if len(terms) == 1 else add(*terms))
        return Dual(prim, tang)
    if _is_var(a, b):
        av, bv = _val(a), _val(b)
        parents, vjps = [], []
        if isinstance(a, Var):
            parents.append(a)
            vjps.append(lambda g: _unbroadcast(g / bv, av.shape))
        if isinstance(b, Var):
            parents.append(b)
            vjps.append(lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape))
        return _record(_tape_of(a, b), av / bv, parents, vjps)
    return np.divide(a, b)


def matmul(a, b):
    ap = a.primal if isinstance(a, Dual) else a
    bp = b.primal if isinstance(b, Dual) else b
    if _ndim(ap) == 1 and _ndim(bp) == 1:
        return sum_(mul(a, b))
    if _ndim(ap) == 1:
        out = matmul(reshape(a, (1, _shape(ap)[0])), b)
        return reshape(out, _shape_of_matvec(out))
    if _ndim(bp) == 1:
        out = matmul(a, reshape(b, (_shape(bp)[0], 1)))
        return reshape(out, _shape(out)[:-1])
    if _is_dual(a, b):
        ap, at = _parts(a)
        bp, bt = _parts(b)
        terms = []
        if at is not None:
            terms.append(matmul(at, bp))
        if bt is not None:
            terms.append(matmul(ap, bt))
        tang = None if not terms else (terms[0] if len(terms) == 1 else add(*terms))
        return Dual(matmul(ap, bp), tang)
    if _is_var(a, b):
        av, bv = _val(a), _val(b)
        parents, vjps = [], []
        if isinstance(a, Var):
            parents.append(a)
            vjps.append(lambda g: _unbroadcast(g @ bv.swapaxes(-1, -2), av.shape))
        if isinstance(b, Var):
            parents.append(b)
            vjps.append(lambda g: _unbroadcast(av.swapaxes(-1, -2) @ g, bv.shape))
        return _record(_tape_of(a, b), av @ bv, parents, vjps)
    return np.matmul(a, b)


def _ndim(x):
    return np.ndim(x.value if isinstance(x, Var) else x)


def _shape(x):
    if isinstance(x, (Var, Dual)):
        v = x.primal if isinstance(x, Dual) else x
        return _val(v).shape
    return np.shape(x)


def _shape_of_matvec(out):
    shape = _shape(out)
    return shape[:-2] + (shape[-1],)


# ------------------------------------------------------------ elementwise

def _elementwise(np_fn, deriv_builder):
    """Build an op from its numpy function and a tangent/vjp rule.

    ``deriv_builder(out_value, in_value)`` returns the pointwise derivative.
    """

    def op(x):
        if isinstance(x, Dual):
            prim = op(x.primal)
            if x.tangent is None:
                return Dual(prim, None)
            return Dual(prim, mul(_deriv_expr(prim, x.primal), x.tangent))
        if isinstance(x, Var):
            out = np_fn(x.value)
            d = deriv_builder(out, x.value)
            return _record(x.tape, out, [x], [lambda g: g * d])
        return np_fn(x)

    def _deriv_expr(out_expr, in_expr):
        # derivative expressed with primitives so reverse mode can follow it
        return deriv_exprs[np_fn](out_expr, in_expr)

    return op


def _sigmoid_np(x):
    out = np.empty_like(np.asarray(x, dtype=float))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


deriv_exprs = {
    np.tanh: lambda out, x: sub(1.0, mul(out, out)),
    _sigmoid_np: lambda out, x: mul(out, sub(1.0, out)),
    np.sin: lambda out, x: cos(x),
    np.cos: lambda out, x: neg(sin(x)),
    np.exp: lambda out, x: out,
    np.log: lambda out, x: div(1.0, x),
    np.sqrt: lambda out, x: div(0.5, out),
}

tanh = _elementwise(np.tanh, lambda out, x: 1.0 - out * out)
sigmoid = _elementwise(_sigmoid_np, lambda out, x: out * (1.0 - out))
sin = _elementwise(np.sin, lambda out, x: np.cos(x))
cos = _elementwise(np.cos, lambda out, x: -np.sin(x))
exp = _elementwise(np.exp, lambda out, x: out)
log = _elementwise(np.log, lambda out, x: 1.0 / x)
sqrt = _elementwise(np.sqrt, lambda out, x: 0.5 / out)


# ------------------------------------------------------------- reductions

def sum_(x, axis=None, keepdims=False):
    if isinstance(x, Dual):
        return Dual(
            sum_(x.primal, axis, keepdims),
            None if x.tangent is None else sum_(x.tangent, axis, keepdims),
        )
    if isinstance(x, Var):
        out = x.value.sum(axis=axis, keepdims=keepdims)
        shape = x.value.shape

        def vjp(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return _record(x.tape, np.asarray(out, dtype=float), [x], [vjp])
    return np.sum(x, axis=axis, keepdims=keepdims)


def mean_(x, axis=None, keepdims=False):
    shape = _shape(x)
    count = np.prod(shape) if axis is None else np.prod(
        [shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(sum_(x, axis, keepdims), 1.0 / float(count))


# ------------------------------------------------------------- structural

def concat(parts, axis=-1):
    parts = list(parts)
    if any(isinstance(p, Dual) for p in parts):
        prims = [p.primal if isinstance(p, Dual) else p for p in parts]
        tangents = [p.tangent if isinstance(p, Dual) else None for p in parts]
        if all(t is None for t in tangents):
            return Dual(concat(prims, axis), None)
        filled = [
            t if t is not None else np.zeros(_shape(p))
            for t, p in zip(tangents, prims)
        ]
        return Dual(concat(prims, axis), concat(filled, axis))
    if any(isinstance(p, Var) for p in parts):
        tape = _tape_of(*parts)
        vals = [_val(p) for p in parts]
        out = np.concatenate(vals, axis=axis)
        ax = axis if axis >= 0 else out.ndim + axis
        offsets = np.cumsum([0] + [v.shape[ax] for v in vals])
        parents, vjps = [], []
        for i, p in enumerate(parts):
            if not isinstance(p, Var):
                continue
            lo, hi = offsets[i], offsets[i + 1]

            def vjp(g, lo=lo, hi=hi):
                index = [slice(None)] * g.ndim
                index[ax] = slice(lo, hi)
                return g[tuple(index)]

            parents.append(p)
            vjps.append(vjp)
        return _record(tape, out, parents, vjps)
    return np.concatenate([np.asarray(p, dtype=float) for p in parts], axis=axis)


def reshape(x, shape):
    if isinstance(x, Dual):
        return Dual(
            reshape(x.primal, shape),
            None if x.tangent is None else reshape(x.tangent, shape),
        )
    if isinstance(x, Var):
        old = x.value.shape
        return _record(
            x.tape, x.value.reshape(shape), [x], [lambda g: g.reshape(old)]
        )
    return np.reshape(x, shape)


def getitem(x, idx):
    if isinstance(x, Dual):
        return Dual(
            getitem(x.primal, idx),
            None if x.tangent is None else getitem(x.tangent, idx),
        )
    if isinstance(x, Var):
        shape = x.value.shape

        def vjp(g):
            full = np.zeros(shape)
            full[idx] = g
            return full

        return _record(x.tape, x.value[idx], [x], [vjp])
    return np.asarray(x)[idx]
