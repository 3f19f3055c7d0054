"""Second-order forward jets in (x, t) with a reverse tape for parameter gradients.

A :class:`Jet` packages a value with its first and second partial derivatives
with respect to the two inputs ``x`` and ``t``.  Fields are numpy arrays that
broadcast against ``v``; a field stored as ``None`` is identically zero, which
keeps constants, parameters and singly-seeded inputs cheap to propagate.

While a :class:`Tape` is active every jet operation touching a recorded jet is
appended to it.  :func:`grad` then sweeps the tape in reverse, carrying
adjoints for all six fields, so parameters that only reach the loss through a
derivative channel (``u_x``, ``u_xx`` ...) still receive exact gradients.
"""

from __future__ import annotations

import threading
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ._fastmath import sincos

FIELDS = ("v", "dx", "dt", "dxx", "dxt", "dtt")
DERIV_FIELDS = FIELDS[1:]

EXP_CLAMP = 700.0
DIV_GUARD = 1e-300


class JetDomainError(ArithmeticError):
    """Raised for arithmetic outside an operation's domain (e.g. division by ~0)."""

    def __init__(self, message: str, value=None):
        super().__init__(message)
        self.value = value


class TapeStructureError(RuntimeError):
    """Raised for dangling node handles or jets recorded on a foreign tape."""


# --- zero-aware helpers (None means an identically-zero field) -------------

def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _sub(a, b):
    if b is None:
        return a
    if a is None:
        return -b
    return a - b


def _mul(a, b):
    if a is None or b is None:
        return None
    return a * b


def _neg(a):
    return None if a is None else -a


def _sum(*terms):
    out = None
    for term in terms:
        out = _add(out, term)
    return out


def _unbroadcast(adj, shape):
    """Sum ``adj`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if adj is None:
        return None
    adj = np.asarray(adj)
    if adj.shape == tuple(shape):
        return adj
    extra = adj.ndim - len(shape)
    if extra > 0:
        adj = adj.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and adj.shape[i] != 1)
    if axes:
        adj = adj.sum(axis=axes, keepdims=True)
    return np.broadcast_to(adj, shape) if adj.shape != tuple(shape) else adj


def _full(a, shape):
    return None if a is None else np.broadcast_to(a, shape)


# --- tracked-field mask ----------------------------------------------------------

_local = threading.local()

_REQUIRES = {"dxx": ("dx",), "dtt": ("dt",), "dxt": ("dx", "dt")}


def _mask():
    return getattr(_local, "mask", None)


def _on(name: str) -> bool:
    m = getattr(_local, "mask", None)
    return m is None or name in m


@contextmanager
def tracking(*fields: str):
    """Only propagate the listed derivative fields (plus the first-order ones they need).

    Untracked fields are dropped to zero; e.g. a heat residual needs only
    ``dt`` and ``dxx``, so ``dxt`` and ``dtt`` need not be carried.
    """
    want = set()
    for f in fields:
        if f not in DERIV_FIELDS:
            raise ValueError(f"unknown jet field {f!r}")
        want.add(f)
        want.update(_REQUIRES.get(f, ()))
    prev = _mask()
    _local.mask = frozenset(want)
    try:
        yield
    finally:
        _local.mask = prev


# --- the jet -------------------------------------------------------------------

class Jet:
    """Value plus first/second partials in (x, t); ``None`` fields are zero."""

    __slots__ = ("v", "dx", "dt", "dxx", "dxt", "dtt", "tape", "node")
    __array_priority__ = 1000

    def __init__(self, v, dx=None, dt=None, dxx=None, dxt=None, dtt=None):
        self.v = np.asarray(v, dtype=float)
        m = getattr(_local, "mask", None)
        if m is not None:
            dx = dx if "dx" in m else None
            dt = dt if "dt" in m else None
            dxx = dxx if "dxx" in m else None
            dxt = dxt if "dxt" in m else None
            dtt = dtt if "dtt" in m else None
        self.dx = dx
        self.dt = dt
        self.dxx = dxx
        self.dxt = dxt
        self.dtt = dtt
        self.tape = None
        self.node = None

    @classmethod
    def const(cls, value) -> "Jet":
        return cls(value)

    @property
    def shape(self):
        return self.v.shape

    @property
    def is_flat(self) -> bool:
        """True when every derivative field is zero (constants, parameters)."""
        return all(getattr(self, f) is None for f in DERIV_FIELDS)

    def get(self, name: str) -> np.ndarray:
        """Field ``name`` as a dense array of ``v``'s shape."""
        val = getattr(self, name)
        if val is None:
            return np.zeros(self.v.shape)
        return np.broadcast_to(np.asarray(val, dtype=float), self.v.shape).copy()

    def as_tuple(self):
        return tuple(self.get(f) for f in FIELDS)

    def __repr__(self):
        parts = ", ".join(f"{f}={getattr(self, f)!r}" for f in FIELDS if getattr(self, f) is not None)
        return f"Jet({parts})"

    # arithmetic sugar; all of it funnels through jet_op
    def __add__(self, other):
        return jet_op("add", self, other)

    def __radd__(self, other):
        return jet_op("add", other, self)

    def __sub__(self, other):
        return jet_op("sub", self, other)

    def __rsub__(self, other):
        return jet_op("sub", other, self)

    def __mul__(self, other):
        return jet_op("mul", self, other)

    def __rmul__(self, other):
        return jet_op("mul", other, self)

    def __truediv__(self, other):
        return jet_op("div", self, other)

    def __rtruediv__(self, other):
        return jet_op("div", other, self)

    def __neg__(self):
        return jet_op("neg", self)

    def __pow__(self, p):
        return jet_op("pow", self, p)

    def __getitem__(self, index):
        return _record("index", _op_index, (self,), index=index)

    def sin(self):
        return jet_op("sin", self)

    def cos(self):
        return jet_op("cos", self)

    def exp(self):
        return jet_op("exp", self)

    def tanh(self):
        return jet_op("tanh", self)


def as_jet(value) -> Jet:
    return value if isinstance(value, Jet) else Jet(value)


def jet_seed(x, t) -> tuple[Jet, Jet]:
    """Lift inputs: x gets dx = 1, t gets dt = 1, every other partial zero."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    one = np.float64(1.0)
    return Jet(x, dx=one), Jet(t, dt=one)


# --- tape ----------------------------------------------------------------------

@dataclass
class Node:
    kind: str
    inputs: tuple[int, ...]
    out: Jet
    fn: Callable | None = None  # pure forward, used by replay
    vjp: Callable | None = None
    name: str | None = None


def active_tape() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Append-only record of jet operations; single writer, one per thread."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.variables: dict[str, int] = {}
        self.mask = _mask()

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @staticmethod
    @contextmanager
    def suspended():
        """Evaluate without recording, even inside an active tape."""
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(None)
        try:
            yield
        finally:
            _local.stack.pop()

    def _append(self, node: Node) -> int:
        self.nodes.append(node)
        idx = len(self.nodes) - 1
        if node.kind != "const":
            node.out.tape = self
            node.out.node = idx
        return idx

    def variable(self, name: str, value) -> Jet:
        """Leaf jet for a trainable array; repeated names return the same leaf."""
        if name in self.variables:
            return self.nodes[self.variables[name]].out
        jet = Jet(np.asarray(value, dtype=float))
        idx = self._append(Node("var", (), jet, name=name))
        self.variables[name] = idx
        return jet

    def _index_of(self, jet: Jet) -> int:
        if jet.tape is None:
            return self._append(Node("const", (), jet))
        if jet.tape is not self:
            raise TapeStructureError("jet was recorded on a different tape")
        if jet.node is None or jet.node >= len(self.nodes):
            raise TapeStructureError(f"dangling node handle {jet.node}")
        return jet.node

    def replay(self, values: Mapping[str, np.ndarray] | None = None) -> list[Jet]:
        """Re-run every recorded op in order; ``values`` may override variables."""
        outs: list[Jet] = []
        prev = _mask()
        _local.mask = self.mask
        try:
            self._replay(outs, values)
        finally:
            _local.mask = prev
        return outs

    def _replay(self, outs, values):
        for node in self.nodes:
            if node.kind == "var":
                val = node.out.v if values is None or node.name not in values else values[node.name]
                outs.append(Jet(np.array(val, dtype=float)))
            elif node.kind == "const":
                outs.append(node.out)
            else:
                out, _ = node.fn(*(outs[i] for i in node.inputs))
                outs.append(out)


def _record(kind: str, impl: Callable, operands: Sequence, **static) -> Jet:
    operands = tuple(as_jet(o) for o in operands)
    out, vjp = impl(*operands, **static)
    tape = active_tape()
    if tape is None:
        return out
    tracked = [o for o in operands if o.tape is not None]
    if not tracked:
        return out
    idx = tuple(tape._index_of(o) for o in operands)

    def fn(*ins, _impl=impl, _static=static):
        return _impl(*ins, **_static)

    tape._append(Node(kind, idx, out, fn=fn, vjp=vjp))
    return out


# --- primitive implementations: each returns (out, vjp) ----------------------
# vjp maps the output adjoint (tuple of six fields, None = zero) to a tuple of
# operand adjoints, each already reduced to the operand's shape.

def _fields(j: Jet):
    return j.v, j.dx, j.dt, j.dxx, j.dxt, j.dtt


def _reduce(adj, jet: Jet):
    return tuple(_unbroadcast(a, jet.v.shape) for a in adj)


def _op_add(a: Jet, b: Jet, sign: float = 1.0):
    if sign > 0:
        out = Jet(*(_add(p, q) if i else p + q for i, (p, q) in enumerate(zip(_fields(a), _fields(b)))))
    else:
        out = Jet(*(_sub(p, q) if i else p - q for i, (p, q) in enumerate(zip(_fields(a), _fields(b)))))

    def vjp(g):
        return _reduce(g, a), _reduce(g if sign > 0 else tuple(_neg(x) for x in g), b)

    return out, vjp


def _op_neg(a: Jet):
    out = Jet(*(_neg(f) for f in _fields(a)))
    return out, lambda g: (tuple(_neg(x) for x in g),)


def _mul_adjoint(g, b: Jet):
    """Adjoint of a in y = a*b (the transpose of jet multiplication by b)."""
    gv, gx, gt, gxx, gxt, gtt = g
    bv, bx, bt, bxx, bxt, btt = _fields(b)
    av = _sum(_mul(gv, bv), _mul(gx, bx), _mul(gt, bt), _mul(gxx, bxx), _mul(gxt, bxt), _mul(gtt, btt))
    ax = _sum(_mul(gx, bv), _mul(_mul(gxx, bx), 2.0), _mul(gxt, bt))
    at = _sum(_mul(gt, bv), _mul(_mul(gtt, bt), 2.0), _mul(gxt, bx))
    return av, ax, at, _mul(gxx, bv), _mul(gxt, bv), _mul(gtt, bv)


def _op_mul(a: Jet, b: Jet):
    av, ax, at, axx, axt, att = _fields(a)
    bv, bx, bt, bxx, bxt, btt = _fields(b)
    out = Jet(
        av * bv,
        _add(_mul(ax, bv), _mul(av, bx)),
        _add(_mul(at, bv), _mul(av, bt)),
        _sum(_mul(axx, bv), _mul(_mul(ax, bx), 2.0), _mul(av, bxx)) if _on("dxx") else None,
        _sum(_mul(axt, bv), _mul(ax, bt), _mul(at, bx), _mul(av, bxt)) if _on("dxt") else None,
        _sum(_mul(att, bv), _mul(_mul(at, bt), 2.0), _mul(av, btt)) if _on("dtt") else None,
    )

    def vjp(g):
        a_adj = _reduce(_mul_adjoint(g, b), a) if a.tape is not None else (None,) * 6
        b_adj = _reduce(_mul_adjoint(g, a), b) if b.tape is not None else (None,) * 6
        return a_adj, b_adj

    return out, vjp


def _op_unary(a: Jet, derivs: Callable):
    """Chain rule for y = f(a) given f, f', f'', f''' at a.v."""
    f0, f1, f2, f3 = derivs(a.v)
    av, ax, at, axx, axt, att = _fields(a)
    dx = _mul(f1, ax)
    dt = _mul(f1, at)
    dxx = _add(_mul(f2, _mul(ax, ax)), _mul(f1, axx)) if _on("dxx") else None
    dxt = _add(_mul(f2, _mul(ax, at)), _mul(f1, axt)) if _on("dxt") else None
    dtt = _add(_mul(f2, _mul(at, at)), _mul(f1, att)) if _on("dtt") else None
    out = Jet(f0, dx, dt, dxx, dxt, dtt)

    def vjp(g):
        gv, gx, gt, gxx, gxt, gtt = g
        bar_x = _sum(_mul(gx, f1), _mul(_mul(gxx, ax), 2.0 * f2), _mul(_mul(gxt, at), f2))
        bar_t = _sum(_mul(gt, f1), _mul(_mul(gtt, at), 2.0 * f2), _mul(_mul(gxt, ax), f2))
        second = _sum(_mul(gx, ax), _mul(gt, at), _mul(gxx, axx), _mul(gxt, axt), _mul(gtt, att))
        third = _sum(_mul(gxx, _mul(ax, ax)), _mul(gxt, _mul(ax, at)), _mul(gtt, _mul(at, at)))
        bar_v = _sum(_mul(gv, f1), _mul(second, f2), _mul(third, f3))
        adj = (bar_v, bar_x, bar_t, _mul(gxx, f1), _mul(gxt, f1), _mul(gtt, f1))
        return (_reduce(adj, a),)

    return out, vjp


def _d_sin(v):
    s, c = sincos(v)
    return s, c, -s, -c


def _d_cos(v):
    s, c = sincos(v)
    return c, -s, -c, s


def _d_exp(v):
    if np.any(v > EXP_CLAMP):
        warnings.warn(f"exp argument {np.max(v):.6g} clamped at {EXP_CLAMP}", RuntimeWarning, stacklevel=4)
        v = np.minimum(v, EXP_CLAMP)
    e = np.exp(v)
    return e, e, e, e


def _d_tanh(v):
    y = np.tanh(v)
    s = 1.0 - y * y
    return y, s, -2.0 * y * s, s * (6.0 * y * y - 2.0)


def _d_recip(v):
    small = np.abs(v) <= DIV_GUARD
    if np.any(small):
        bad = np.asarray(v)[small].ravel()[0]
        raise JetDomainError(f"division by near-zero value {bad!r}", value=float(bad))
    r = 1.0 / v
    r2 = r * r
    return r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2


def _d_abs(v):
    return np.abs(v), np.sign(v), 0.0, 0.0


def _d_pow(p: float):
    def derivs(v):
        if p == int(p) and p >= 0:
            k = int(p)
            pw = [v ** max(k - i, 0) if k - i >= 0 else 0.0 for i in range(4)]
        else:
            if np.any(v <= 0):
                raise JetDomainError("non-integer power of a non-positive value", value=float(np.min(v)))
            pw = [v ** (p - i) for i in range(4)]
        return pw[0], p * pw[1], p * (p - 1) * pw[2], p * (p - 1) * (p - 2) * pw[3]

    return derivs


_UNARY = {"sin": _d_sin, "cos": _d_cos, "exp": _d_exp, "tanh": _d_tanh, "recip": _d_recip, "abs": _d_abs}


def _op_linear(a: Jet, w: Jet, b: Jet | None = None):
    """y = a @ w.T (+ b); ``w`` and ``b`` must be flat (parameters)."""
    if not w.is_flat or (b is not None and not b.is_flat):
        raise TapeStructureError("linear() weights must carry no input derivatives")
    shape = a.v.shape
    W = w.v
    wt = W.T if W.ndim == 2 else W
    outs = [None if f is None else np.broadcast_to(f, shape) @ wt for f in _fields(a)]
    if b is not None:
        outs[0] = outs[0] + b.v
    out = Jet(*outs)

    def vjp(g):
        if W.ndim == 2:
            a_adj = tuple(None if gf is None else gf @ W for gf in g)
        else:
            a_adj = tuple(None if gf is None else np.multiply.outer(gf, W) for gf in g)
        w_bar = None
        if w.tape is not None:
            for af, gf in zip(_fields(a), g):
                if af is None or gf is None:
                    continue
                af = np.broadcast_to(af, shape)
                w_bar = _add(w_bar, gf.T @ af if W.ndim == 2 else af.T @ gf)
        res = [_reduce(a_adj, a), (w_bar, None, None, None, None, None)]
        if b is not None:
            res.append((_unbroadcast(g[0], b.v.shape),) + (None,) * 5)
        return tuple(res)

    return out, vjp


def _op_index(a: Jet, index):
    out = Jet(*(None if f is None else f if np.ndim(f) == 0 else np.broadcast_to(f, a.v.shape)[index]
                for f in _fields(a)))

    def vjp(g):
        adj = []
        for gf in g:
            if gf is None:
                adj.append(None)
                continue
            z = np.zeros(a.v.shape)
            np.add.at(z, index, gf)
            adj.append(z)
        return (tuple(adj),)

    return out, vjp


def _op_reshape(a: Jet, shape):
    full = a.v.shape
    out = Jet(*(None if f is None else f if np.ndim(f) == 0 else np.broadcast_to(f, full).reshape(shape)
                for f in _fields(a)))
    return out, lambda g: (tuple(None if gf is None else np.reshape(gf, full) for gf in g),)


def _op_concat(*jets: Jet, axis: int = -1):
    shapes = [j.v.shape for j in jets]
    fields = []
    for k in range(6):
        parts = [getattr(j, FIELDS[k]) for j in jets]
        if all(p is None for p in parts):
            fields.append(None)
        else:
            fields.append(np.concatenate(
                [np.zeros(s) if p is None else np.broadcast_to(p, s) for p, s in zip(parts, shapes)], axis=axis))
    out = Jet(*fields)
    sizes = np.cumsum([s[axis] for s in shapes])[:-1]

    def vjp(g):
        split = [np.split(gf, sizes, axis=axis) if gf is not None else [None] * len(jets) for gf in g]
        return tuple(tuple(split[k][i] for k in range(6)) for i in range(len(jets)))

    return out, vjp


def _op_sum(a: Jet, axis=None, mean: bool = False):
    shape = a.v.shape
    n = a.v.size if axis is None else shape[axis]
    scale = 1.0 / n if mean else 1.0
    out = Jet(*(None if f is None else np.broadcast_to(f, shape).sum(axis=axis) * scale for f in _fields(a)))

    def vjp(g):
        adj = []
        for gf in g:
            if gf is None:
                adj.append(None)
            else:
                gf = np.asarray(gf) * scale
                if axis is not None:
                    gf = np.expand_dims(gf, axis)
                adj.append(np.broadcast_to(gf, shape))
        return (tuple(adj),)

    return out, vjp


def _op_field(a: Jet, name: str):
    """Promote one derivative channel of ``a`` to the value of a flat jet."""
    k = FIELDS.index(name)
    src = getattr(a, name)
    out = Jet(np.zeros(a.v.shape) if src is None else np.broadcast_to(src, a.v.shape).copy())

    def vjp(g):
        adj = [None] * 6
        adj[k] = g[0]
        return (_reduce(adj, a),)

    return out, vjp


# --- public op surface -----------------------------------------------------------

def jet_op(kind: str, a, b=None) -> Jet:
    """Apply a primitive: add, sub, mul, div, sin, cos, exp, tanh, pow, neg, abs."""
    if kind == "add":
        return _record("add", _op_add, (a, b))
    if kind == "sub":
        return _record("sub", _op_add, (a, b), sign=-1.0)
    if kind == "mul":
        return _record("mul", _op_mul, (a, b))
    if kind == "div":
        if not isinstance(b, Jet):
            if np.any(np.abs(np.asarray(b, dtype=float)) <= DIV_GUARD):
                raise JetDomainError(f"division by near-zero value {b!r}", value=b)
            return _record("mul", _op_mul, (a, 1.0 / np.asarray(b, dtype=float)))
        return jet_op("mul", a, jet_op("recip", b))
    if kind == "neg":
        return _record("neg", _op_neg, (a,))
    if kind == "pow":
        p = float(b)
        if p == 2.0:
            return _record("mul", _op_mul, (a, a))
        return _record("pow", _op_unary, (a,), derivs=_d_pow(p))
    if kind in _UNARY:
        return _record(kind, _op_unary, (a,), derivs=_UNARY[kind])
    raise ValueError(f"unknown jet operation {kind!r}")


def sin(a):
    return jet_op("sin", a)


def cos(a):
    return jet_op("cos", a)


def exp(a):
    return jet_op("exp", a)


def tanh(a):
    return jet_op("tanh", a)


def jabs(a):
    return jet_op("abs", a)


def square(a):
    return jet_op("mul", a, a)


def linear(a: Jet, w, b=None) -> Jet:
    """Affine map ``a @ w.T + b`` over the last axis; 1-D ``w`` gives a dot product."""
    ops = (a, w) if b is None else (a, w, b)
    return _record("linear", _op_linear, ops)


def reshape(a: Jet, shape) -> Jet:
    return _record("reshape", _op_reshape, (a,), shape=tuple(shape))


def concat(jets: Sequence[Jet], axis: int = -1) -> Jet:
    return _record("concat", _op_concat, tuple(jets), axis=axis)


def jsum(a: Jet, axis=None) -> Jet:
    return _record("sum", _op_sum, (a,), axis=axis)


def jmean(a: Jet, axis=None) -> Jet:
    return _record("mean", _op_sum, (a,), axis=axis, mean=True)


def take_field(a: Jet, name: str) -> Jet:
    return _record("field", _op_field, (a,), name=name)


def custom(kind: str, impl: Callable, operands: Sequence, **static) -> Jet:
    """Record a hand-written op; ``impl(*jets, **static)`` returns ``(out, vjp)``."""
    return _record(kind, impl, operands, **static)


def tracked(name: str) -> bool:
    """Whether derivative field ``name`` is propagated under the current mask."""
    return _on(name)


# --- parameters --------------------------------------------------------------------

@dataclass
class ParamVector:
    """Flat parameter storage with a stable ``name -> (slice, shape)`` index map."""

    values: np.ndarray
    index: dict[str, tuple[slice, tuple[int, ...]]] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> "ParamVector":
        items = list(arrays.items()) if isinstance(arrays, Mapping) else list(arrays)
        index, chunks, pos = {}, [], 0
        for name, arr in items:
            arr = np.asarray(arr, dtype=float)
            index[name] = (slice(pos, pos + arr.size), arr.shape)
            chunks.append(arr.ravel())
            pos += arr.size
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(values, index)

    def __len__(self):
        return self.values.size

    def __getitem__(self, name: str) -> np.ndarray:
        sl, shape = self.index[name]
        return self.values[sl].reshape(shape)

    def names(self) -> list[str]:
        return list(self.index)

    def with_values(self, values) -> "ParamVector":
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise TapeStructureError(f"parameter length {values.size} != {self.values.size}")
        return ParamVector(values, self.index)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.index)

    def lift(self) -> dict[str, Jet]:
        """Jets for every entry: tape variables when a tape is active, else constants."""
        tape = active_tape()
        if tape is None:
            return {name: Jet(self[name]) for name in self.index}
        return {name: tape.variable(name, self[name]) for name in self.index}


# --- reverse sweep -------------------------------------------------------------------

def backward(loss: Jet) -> dict[int, tuple]:
    """Reverse sweep from a scalar loss; returns adjoints keyed by node index."""
    tape = loss.tape
    if tape is None or loss.node is None:
        raise TapeStructureError("loss is not recorded on any tape")
    if loss.node >= len(tape.nodes) or tape.nodes[loss.node].out is not loss:
        raise TapeStructureError(f"dangling node handle {loss.node}")
    if loss.v.size != 1:
        raise ValueError("grad() needs a scalar loss")
    adj: dict[int, list] = {loss.node: [np.ones(loss.v.shape)] + [None] * 5}
    for idx in range(loss.node, -1, -1):
        g = adj.pop(idx, None)
        if g is None:
            continue
        node = tape.nodes[idx]
        if node.kind in ("var", "const"):
            adj[idx] = g
            continue
        parts = node.vjp(tuple(g))
        for src, part in zip(node.inputs, parts):
            if tape.nodes[src].kind == "const":
                continue
            cur = adj.get(src)
            if cur is None:
                adj[src] = list(part)
            else:
                adj[src] = [_add(c, p) for c, p in zip(cur, part)]
    return adj


def grad(loss: Jet, params: ParamVector) -> np.ndarray:
    """Gradient of ``loss`` w.r.t. every entry of ``params`` (flat, same order)."""
    adj = backward(loss)
    tape = loss.tape
    out = np.zeros_like(params.values)
    for name, (sl, shape) in params.index.items():
        idx = tape.variables.get(name)
        if idx is None or idx not in adj:
            continue
        gv = adj[idx][0]
        if gv is not None:
            out[sl] = np.broadcast_to(gv, shape).ravel()
    return out


def value_and_grad(f: Callable[[ParamVector], Jet], params: ParamVector) -> tuple[float, np.ndarray]:
    with Tape():
        loss = f(params)
        return float(loss.v), grad(loss, params)


def check_gradient(f: Callable[[ParamVector], Jet], params: ParamVector, step: float = 1e-5,
                   floor: float = 1e-6) -> float:
    """Max relative deviation between tape gradients and central differences.

    ``f`` maps a :class:`ParamVector` to a scalar jet and is expected to read
    parameters through :meth:`ParamVector.lift`.  Deviations are measured
    relative to ``max(|tape|, |fd|, floor)``.
    """
    if not 1e-8 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-8, 1e-3]")
    _, g = value_and_grad(f, params)
    worst = 0.0
    base = params.values
    for i in range(base.size):
        hi = base.copy()
        lo = base.copy()
        hi[i] += step
        lo[i] -= step
        fd = (float(f(params.with_values(hi)).v) - float(f(params.with_values(lo)).v)) / (2 * step)
        dev = abs(g[i] - fd) / max(abs(g[i]), abs(fd), floor)
        worst = max(worst, dev)
    return worst
