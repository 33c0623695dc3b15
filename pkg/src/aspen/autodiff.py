"""Reverse-mode differentiation over a recorded tape, with coordinate jets.

A :class:`Var` is an array-valued node on a :class:`Tape`.  A :class:`Jet`
bundles a value with its partial derivatives with respect to the input
coordinates (x, t); the slots live on a leading axis of a single node so that
every jet operation is one fused tape entry with a hand-written adjoint.
Parameter gradients therefore flow through u_t, u_xx, ... exactly as through
plain values.

Operations on plain ``numpy`` arrays (no Var involved) are evaluated eagerly
and return arrays, which gives a no-grad evaluation path for free.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

VALUE = ("val",)
ORDER2 = ("val", "dx", "dxx", "dt")
ORDER3 = ("val", "dx", "dxx", "dxxx", "dt")


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or inf."""


def _check_finite(value, op: str):
    # a single reduction is cheaper than isfinite().all(); overflow of the sum
    # is itself a divergence signal
    s = np.sum(value)
    if not math.isfinite(float(np.real(s))) or not math.isfinite(float(np.imag(s))):
        raise NonFiniteError(f"non-finite value produced by op '{op}'")
    return value


class Param:
    """A trainable array with a gradient accumulator.

    ``offset`` is the position of the first entry in the flattened parameter
    vector of the owning model, which makes the identifier stable.
    """

    def __init__(self, value, name: str = "", offset: int = 0):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.offset = offset

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


class Var:
    """A node on a tape holding an array value."""

    __slots__ = ("value", "tape", "idx")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, value, tape: "Tape", idx: int):
        self.value = value
        self.tape = tape
        self.idx = idx

    @property
    def shape(self):
        return np.shape(self.value)

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
        return scale(self, -1.0)

    def __getitem__(self, key):
        return index(self, key)

    def __repr__(self) -> str:
        return f"Var(idx={self.idx}, shape={self.shape})"


class Tape:
    """Append-only record of operations supporting one reverse sweep."""

    def __init__(self):
        self._parents: list[tuple] = []
        self._vjps: list[Callable | None] = []
        self._watched: dict[int, Var] = {}
        self._consumed = False
        self._n_consumed = 0

    def __len__(self) -> int:
        return self._n_consumed if self._consumed else len(self._vjps)

    def record(self, value, parents: Sequence, vjp: Callable | None, op: str = "") -> Var:
        if self._consumed:
            raise RuntimeError("tape already consumed by backward(); build a new tape")
        _check_finite(value, op)
        self._parents.append(tuple(parents))
        self._vjps.append(vjp)
        return Var(value, self, len(self._vjps) - 1)

    def watch(self, p: Param) -> Var:
        """Leaf node for a parameter; its adjoint accumulates into ``p.grad``."""
        v = self._watched.get(id(p))
        if v is None:

            def vjp(g, p=p):
                p.grad += g
                return ()

            v = self.record(p.value, (), vjp, op="param")
            self._watched[id(p)] = v
        return v

    def constant(self, value) -> Var:
        return self.record(np.asarray(value, dtype=np.float64), (), None, op="const")

    def backward(self, loss: Var) -> None:
        """Reverse sweep from a scalar node, writing gradients into watched Params."""
        if self._consumed:
            raise RuntimeError("backward() already ran on this tape")
        if loss.tape is not self:
            raise ValueError("loss node belongs to a different tape")
        if np.size(loss.value) != 1:
            raise ValueError("backward() requires a scalar loss")
        self._consumed = True
        adj: list = [None] * len(self._vjps)
        adj[loss.idx] = np.ones_like(loss.value)
        for i in range(loss.idx, -1, -1):
            g = adj[i]
            if g is None:
                continue
            vjp = self._vjps[i]
            if vjp is None:
                continue
            grads = vjp(g)
            for parent, pg in zip(self._parents[i], grads):
                if parent is None or pg is None:
                    continue
                j = parent.idx
                if j >= i:
                    raise RuntimeError("tape order violated (cycle?)")
                if adj[j] is None:
                    adj[j] = pg
                else:
                    adj[j] = adj[j] + pg
            adj[i] = None
        # drop closures so intermediate arrays are released without waiting for gc
        self._n_consumed = len(self._vjps)
        self._parents, self._vjps, self._watched = [], [], {}


def backward(loss: Var) -> None:
    loss.tape.backward(loss)


# --------------------------------------------------------------------------
# plain array-level operations

def _val(a):
    return a.value if isinstance(a, Var) else a


def _tape_of(*args) -> Tape | None:
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _node(a):
    return a if isinstance(a, Var) else None


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    out = _val(a) + _val(b)
    tape = _tape_of(a, b)
    if tape is None:
        return _check_finite(out, "add")
    sa, sb = np.shape(_val(a)), np.shape(_val(b))
    return tape.record(out, (_node(a), _node(b)),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    out = _val(a) - _val(b)
    tape = _tape_of(a, b)
    if tape is None:
        return _check_finite(out, "sub")
    sa, sb = np.shape(_val(a)), np.shape(_val(b))
    return tape.record(out, (_node(a), _node(b)),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    va, vb = _val(a), _val(b)
    out = va * vb
    tape = _tape_of(a, b)
    if tape is None:
        return _check_finite(out, "mul")
    sa, sb = np.shape(va), np.shape(vb)

    def vjp(g):
        ga = _unbroadcast(g * vb, sa) if isinstance(a, Var) else None
        gb = _unbroadcast(g * va, sb) if isinstance(b, Var) else None
        return ga, gb

    return tape.record(out, (_node(a), _node(b)), vjp, "mul")


def scale(a, s: float):
    out = _val(a) * s
    if not isinstance(a, Var):
        return _check_finite(out, "scale")
    return a.tape.record(out, (a,), lambda g: (g * s,), "scale")


def square(a):
    va = _val(a)
    out = va * va
    if not isinstance(a, Var):
        return _check_finite(out, "square")
    return a.tape.record(out, (a,), lambda g: (2.0 * g * va,), "square")


def tanh(a):
    y = np.tanh(_val(a))
    if not isinstance(a, Var):
        return _check_finite(y, "tanh")
    return a.tape.record(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sin(a):
    va = _val(a)
    out = np.sin(va)
    if not isinstance(a, Var):
        return _check_finite(out, "sin")
    return a.tape.record(out, (a,), lambda g: (g * np.cos(va),), "sin")


def cos(a):
    va = _val(a)
    out = np.cos(va)
    if not isinstance(a, Var):
        return _check_finite(out, "cos")
    return a.tape.record(out, (a,), lambda g: (-g * np.sin(va),), "cos")


def total(a):
    """Sum of all entries."""
    va = _val(a)
    out = np.sum(va)
    if not isinstance(a, Var):
        return _check_finite(out, "sum")
    shape = np.shape(va)
    return a.tape.record(out, (a,), lambda g: (np.broadcast_to(g, shape),), "sum")


def mean(a):
    n = np.size(_val(a))
    return scale(total(a), 1.0 / n)


def index(a, key):
    va = _val(a)
    out = va[key]
    if not isinstance(a, Var):
        return out
    shape = np.shape(va)

    def vjp(g):
        full = np.zeros(shape)
        full[key] += g
        return (full,)

    return a.tape.record(out, (a,), vjp, "index")


# --------------------------------------------------------------------------
# coordinate jets

class Jet:
    """Value of a quantity plus its partials with respect to (x, t).

    ``data`` has shape ``(len(slots), ...)``; it is either a plain array or a
    :class:`Var` on a tape.
    """

    __slots__ = ("data", "slots")

    def __init__(self, data, slots: tuple[str, ...]):
        self.data = data
        self.slots = tuple(slots)

    def _slot(self, name: str):
        try:
            k = self.slots.index(name)
        except ValueError:
            raise KeyError(f"jet does not carry slot '{name}' (has {self.slots})") from None
        return index(self.data, k)

    @property
    def val(self):
        return self._slot("val")

    @property
    def dx(self):
        return self._slot("dx")

    @property
    def dxx(self):
        return self._slot("dxx")

    @property
    def dxxx(self):
        return self._slot("dxxx")

    @property
    def dt(self):
        return self._slot("dt")

    def slot(self, name: str):
        return self._slot(name)

    def numpy(self) -> np.ndarray:
        return np.asarray(_val(self.data))

    def as_tuple(self) -> tuple:
        """Values of (val, dx, dxx, dxxx, dt); absent slots read as 0."""
        arr = self.numpy()
        return tuple(arr[self.slots.index(s)] if s in self.slots else 0.0 * arr[0]
                     for s in ORDER3)

    def __repr__(self) -> str:
        return f"Jet(slots={self.slots}, shape={np.shape(_val(self.data))[1:]})"


def _check_slots(slots):
    if "dxx" in slots and "dx" not in slots:
        raise ValueError("dxx slot requires dx")
    if "dxxx" in slots and "dxx" not in slots:
        raise ValueError("dxxx slot requires dxx")
    if slots[0] != "val":
        raise ValueError("first slot must be val")


def jet_lift_coordinate(which: str, value, slots: tuple[str, ...] = ORDER3,
                        scale_factor: float = 1.0) -> Jet:
    """Seed jet for an input coordinate.

    ``scale_factor`` is d(value)/d(coordinate), used when the coordinate is
    affinely rescaled before entering a network.
    """
    _check_slots(slots)
    value = np.asarray(value, dtype=np.float64)
    data = np.zeros((len(slots),) + value.shape)
    data[0] = value
    if which == "x":
        if "dx" in slots:
            data[slots.index("dx")] = scale_factor
    elif which == "t":
        if "dt" in slots:
            data[slots.index("dt")] = scale_factor
    else:
        raise ValueError(f"unknown coordinate {which!r}")
    return Jet(data, slots)


def _jet_record(out, parents, vjp, op):
    tape = _tape_of(*parents)
    if tape is None:
        return _check_finite(out, op)
    return tape.record(out, tuple(_node(p) for p in parents), vjp, op)


def jet_add(a: Jet, b: Jet) -> Jet:
    _same_slots(a, b)
    return Jet(add(a.data, b.data), a.slots)


def jet_sub(a: Jet, b: Jet) -> Jet:
    _same_slots(a, b)
    return Jet(sub(a.data, b.data), a.slots)


def jet_scale(a: Jet, s: float) -> Jet:
    return Jet(scale(a.data, s), a.slots)


def _same_slots(a: Jet, b: Jet):
    if a.slots != b.slots:
        raise ValueError(f"slot mismatch {a.slots} vs {b.slots}")


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Leibniz rule."""
    _same_slots(a, b)
    slots = a.slots
    A, B = _val(a.data), _val(b.data)
    S = {s: i for i, s in enumerate(slots)}
    out = np.empty(np.broadcast_shapes(A.shape, B.shape))
    a0, b0 = A[0], B[0]
    out[0] = a0 * b0
    if "dx" in S:
        i = S["dx"]
        out[i] = a0 * B[i] + A[i] * b0
    if "dxx" in S:
        i, j = S["dx"], S["dxx"]
        out[j] = a0 * B[j] + 2.0 * A[i] * B[i] + A[j] * b0
    if "dxxx" in S:
        i, j, k = S["dx"], S["dxx"], S["dxxx"]
        out[k] = a0 * B[k] + 3.0 * (A[i] * B[j] + A[j] * B[i]) + A[k] * b0
    if "dt" in S:
        i = S["dt"]
        out[i] = a0 * B[i] + A[i] * b0

    def partial(G, X):
        # adjoint w.r.t. one factor given the other factor's slots X
        R = np.empty(np.broadcast_shapes(G.shape, X.shape))
        R[0] = G[0] * X[0]
        for s, i in S.items():
            if s != "val":
                R[0] += G[i] * X[i]
        if "dx" in S:
            i = S["dx"]
            R[i] = G[i] * X[0]
            if "dxx" in S:
                R[i] += 2.0 * G[S["dxx"]] * X[i]
            if "dxxx" in S:
                R[i] += 3.0 * G[S["dxxx"]] * X[S["dxx"]]
        if "dxx" in S:
            j = S["dxx"]
            R[j] = G[j] * X[0]
            if "dxxx" in S:
                R[j] += 3.0 * G[S["dxxx"]] * X[S["dx"]]
        if "dxxx" in S:
            k = S["dxxx"]
            R[k] = G[k] * X[0]
        if "dt" in S:
            i = S["dt"]
            R[i] = G[i] * X[0]
        return R

    def vjp(G):
        ga = _unbroadcast(partial(G, B), A.shape) if isinstance(a.data, Var) else None
        gb = _unbroadcast(partial(G, A), B.shape) if isinstance(b.data, Var) else None
        return ga, gb

    return Jet(_jet_record(out, (a.data, b.data), vjp, "jet_mul"), slots)


def _unary_forward(Z, f, S):
    out = np.empty_like(Z)
    out[0] = f[0]
    zx = Z[S["dx"]] if "dx" in S else None
    zxx = Z[S["dxx"]] if "dxx" in S else None
    if "dx" in S:
        out[S["dx"]] = f[1] * zx
    if "dxx" in S:
        out[S["dxx"]] = f[2] * zx * zx + f[1] * zxx
    if "dxxx" in S:
        out[S["dxxx"]] = f[3] * zx * zx * zx + 3.0 * f[2] * zx * zxx + f[1] * Z[S["dxxx"]]
    if "dt" in S:
        out[S["dt"]] = f[1] * Z[S["dt"]]
    return out


def _unary_adjoint(G, Z, f, S):
    R = np.empty_like(Z)
    zx = Z[S["dx"]] if "dx" in S else None
    zxx = Z[S["dxx"]] if "dxx" in S else None
    g0 = G[0] * f[1]
    if "dx" in S:
        i = S["dx"]
        g0 = g0 + G[i] * f[2] * zx
        R[i] = G[i] * f[1]
    if "dxx" in S:
        j = S["dxx"]
        g0 = g0 + G[j] * (f[3] * zx * zx + f[2] * zxx)
        R[S["dx"]] += 2.0 * G[j] * f[2] * zx
        R[j] = G[j] * f[1]
    if "dxxx" in S:
        k = S["dxxx"]
        Gk = G[k]
        g0 = g0 + Gk * (f[4] * zx * zx * zx + 3.0 * f[3] * zx * zxx + f[2] * Z[k])
        R[S["dx"]] += Gk * (3.0 * f[3] * zx * zx + 3.0 * f[2] * zxx)
        R[S["dxx"]] += Gk * 3.0 * f[2] * zx
        R[k] = Gk * f[1]
    if "dt" in S:
        i = S["dt"]
        g0 = g0 + G[i] * f[2] * Z[i]
        R[i] = G[i] * f[1]
    R[0] = g0
    return R


def _tower_order(S, grad: bool) -> int:
    order = ("dx" in S) + ("dxx" in S) + ("dxxx" in S)
    # the adjoint needs one derivative more than the forward pass
    return max(order, 1) + (1 if grad else 0)


def _jet_unary(a: Jet, tower: Callable, op: str) -> Jet:
    """Faa di Bruno propagation of a scalar function with derivative ``tower``.

    ``tower(z, n)`` returns [f, f', ..., f^(n)] evaluated at z.
    """
    S = {s: i for i, s in enumerate(a.slots)}
    Z = _val(a.data)
    grad = isinstance(a.data, Var)
    f = tower(Z[0], _tower_order(S, grad))
    out = _unary_forward(Z, f, S)
    if not grad:
        return Jet(_check_finite(out, op), a.slots)
    vjp = lambda G: (_unary_adjoint(G, Z, f, S),)
    return Jet(a.data.tape.record(out, (a.data,), vjp, op), a.slots)


def _tanh_tower(z, n):
    y = np.tanh(z)
    f1 = 1.0 - y * y
    out = [y, f1]
    if n >= 2:
        f2 = -2.0 * y * f1
        out.append(f2)
    if n >= 3:
        f3 = -2.0 * (f1 * f1 + y * f2)
        out.append(f3)
    if n >= 4:
        out.append(-2.0 * (3.0 * f1 * f2 + y * f3))
    return out


def _sin_tower(z, n):
    s, c = np.sin(z), np.cos(z)
    return [s, c, -s, -c, s][: n + 1]


def _cos_tower(z, n):
    s, c = np.sin(z), np.cos(z)
    return [c, -s, -c, s, c][: n + 1]


def _square_tower(z, n):
    zero = np.zeros_like(z)
    return [z * z, 2.0 * z, 2.0 + zero, zero, zero][: n + 1]


def jet_tanh(a: Jet) -> Jet:
    return _jet_unary(a, _tanh_tower, "jet_tanh")


def jet_sin(a: Jet) -> Jet:
    return _jet_unary(a, _sin_tower, "jet_sin")


def jet_cos(a: Jet) -> Jet:
    return _jet_unary(a, _cos_tower, "jet_cos")


def jet_square(a: Jet) -> Jet:
    return _jet_unary(a, _square_tower, "jet_square")


def jet_op(kind: str, *args, **kwargs) -> Jet:
    """Dispatch by name: add, sub, mul, scale, tanh, sin, cos, square."""
    table = {
        "add": jet_add, "sub": jet_sub, "mul": jet_mul, "scale": jet_scale,
        "tanh": jet_tanh, "sin": jet_sin, "cos": jet_cos, "square": jet_square,
    }
    try:
        fn = table[kind]
    except KeyError:
        raise ValueError(f"unknown jet op {kind!r}") from None
    return fn(*args, **kwargs)


def jet_linear(a: Jet, weight, bias=None) -> Jet:
    """Affine map ``a @ weight.T + bias`` on the last axis.

    The bias only enters the value slot; every derivative slot is linear.
    ``weight``/``bias`` may be Vars (watched Params) or plain arrays.
    """
    Z = _val(a.data)
    W = _val(weight)
    S, rest, n_in = Z.shape[0], Z.shape[1:-1], Z.shape[-1]
    flat = Z.reshape(-1, n_in)
    out = (flat @ W.T).reshape((S,) + rest + (W.shape[0],))
    if bias is not None:
        out[0] += _val(bias)

    def vjp(G):
        Gf = G.reshape(-1, W.shape[0])
        ga = (Gf @ W).reshape(Z.shape) if isinstance(a.data, Var) else None
        gw = Gf.T @ flat if isinstance(weight, Var) else None
        gb = None
        if isinstance(bias, Var):
            gb = G[0].reshape(-1, W.shape[0]).sum(axis=0)
        return ga, gw, gb

    return Jet(_jet_record(out, (a.data, weight, bias), vjp, "jet_linear"), a.slots)


def jet_concat(parts: Sequence[Jet]) -> Jet:
    """Concatenate jets along the last axis."""
    slots = parts[0].slots
    for p in parts[1:]:
        _same_slots(parts[0], p)
    vals = [_val(p.data) for p in parts]
    out = np.concatenate(vals, axis=-1)
    bounds = np.cumsum([0] + [v.shape[-1] for v in vals])

    def vjp(G):
        return tuple(G[..., bounds[i]:bounds[i + 1]] if isinstance(p.data, Var) else None
                     for i, p in enumerate(parts))

    return Jet(_jet_record(out, tuple(p.data for p in parts), vjp, "jet_concat"), slots)


def jet_column(a: Jet, k: int) -> Jet:
    """Select entry ``k`` of the last axis."""
    return Jet(index(a.data, (Ellipsis, k)), a.slots)


def jet_cos_sin(a: Jet) -> Jet:
    """``[cos(a), sin(a)]`` concatenated on the last axis, sharing one evaluation."""
    S = {s: i for i, s in enumerate(a.slots)}
    Z = _val(a.data)
    grad = isinstance(a.data, Var)
    s, c = np.sin(Z[0]), np.cos(Z[0])
    n = _tower_order(S, grad) + 1
    ctow = [c, -s, -c, s, c][:n]
    stow = [s, c, -s, -c, s][:n]
    out = np.concatenate([_unary_forward(Z, ctow, S), _unary_forward(Z, stow, S)], axis=-1)
    if not grad:
        return Jet(_check_finite(out, "jet_cos_sin"), a.slots)
    m = Z.shape[-1]

    def vjp(G):
        return (_unary_adjoint(G[..., :m], Z, ctow, S) + _unary_adjoint(G[..., m:], Z, stow, S),)

    return Jet(a.data.tape.record(out, (a.data,), vjp, "jet_cos_sin"), a.slots)
