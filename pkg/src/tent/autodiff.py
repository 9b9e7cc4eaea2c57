"""A small reverse-mode gradient tape over numpy arrays.

Differentiable operations take either plain arrays or :class:`Var` objects.
When no operand is a ``Var`` the operation just returns an array and nothing
is recorded, so the same model code serves inference and training.

Example::

    tape = Tape()
    w = tape.watch("w", np.array([1.0, -2.0]))
    loss = sum_squares(w)
    grads = backward(tape, loss)   # {"w": array([2., -4.])}
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import DimensionError

Vjp = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class UsageError(RuntimeError):
    """Raised when the tape is used incorrectly."""


class Var:
    __slots__ = ("value", "tape", "index")

    def __init__(self, value: np.ndarray, tape: "Tape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"


class Tape:
    """Ordered record of executed operations.

    Each entry is ``(output_index, inputs, vjp)``; ``vjp`` maps the output
    adjoint to one adjoint per input (``None`` for non-differentiable inputs).
    """

    def __init__(self):
        self.records: list[tuple[int, tuple, Vjp]] = []
        self.params: dict[str, Var] = {}
        self._count = 0

    def _new(self, value: np.ndarray) -> Var:
        var = Var(value, self, self._count)
        self._count += 1
        return var

    def watch(self, name: str, value) -> Var:
        if name in self.params:
            raise UsageError(f"parameter {name!r} already watched")
        var = self._new(np.asarray(value, dtype=np.float64))
        self.params[name] = var
        return var

    def watch_all(self, params: dict) -> dict[str, Var]:
        return {k: self.watch(k, v) for k, v in params.items()}


def value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else x


def record(out: np.ndarray, inputs: tuple, vjp: Vjp):
    """Wrap ``out`` in a Var and record it if any input lives on a tape."""
    tape = None
    for x in inputs:
        if isinstance(x, Var):
            if tape is not None and x.tape is not tape:
                raise UsageError("operands come from different tapes")
            tape = x.tape
    if tape is None:
        return out
    var = tape._new(out)
    tape.records.append((var.index, inputs, vjp))
    return var


def backward(tape: Tape, loss) -> dict[str, np.ndarray]:
    """Gradients of scalar ``loss`` for every watched parameter.

    Parameters the loss does not depend on receive zero arrays.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise UsageError("loss was not produced on this tape")
    if loss.value.size != 1:
        raise UsageError(f"loss must be a scalar, got shape {loss.value.shape}")
    adj: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
    for out_index, inputs, vjp in reversed(tape.records):
        g = adj.pop(out_index, None)
        if g is None:
            continue
        grads = vjp(g)
        for x, gx in zip(inputs, grads):
            if gx is None or not isinstance(x, Var):
                continue
            if gx.shape != x.value.shape:
                raise DimensionError(
                    f"adjoint shape {gx.shape} does not match value {x.value.shape}"
                )
            if x.index in adj:
                adj[x.index] = adj[x.index] + gx
            else:
                adj[x.index] = gx
    return {
        name: adj.get(var.index, np.zeros_like(var.value))
        for name, var in tape.params.items()
    }


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# generic differentiable ops


def add(a, b):
    av, bv = value(a), value(b)
    out = av + bv
    return record(
        out, (a, b), lambda g: (unbroadcast(g, av.shape), unbroadcast(g, bv.shape))
    )


def scale(a, c: float):
    return record(value(a) * c, (a,), lambda g: (g * c,))


def relu(a):
    av = value(a)
    mask = av > 0
    return record(np.where(mask, av, 0.0), (a,), lambda g: (g * mask,))


def reshape(a, shape: tuple):
    av = value(a)
    return record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def concat_last(parts: Sequence):
    vals = [value(p) for p in parts]
    lead = vals[0].shape[:-1]
    for v in vals[1:]:
        if v.shape[:-1] != lead:
            raise DimensionError(f"leading extents differ: {vals[0].shape} vs {v.shape}")
    out = np.concatenate(vals, axis=-1)
    bounds = np.cumsum([v.shape[-1] for v in vals])[:-1]
    return record(out, tuple(parts), lambda g: tuple(np.split(g, bounds, axis=-1)))


def softmax(a, axis: int):
    av = value(a)
    e = np.exp(av - av.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return record(s, (a,), vjp)


def dense(x, w, b=None):
    """``x @ w + b`` over the last axis of ``x``."""
    xv, wv = value(x), value(w)
    if xv.shape[-1] != wv.shape[0]:
        raise DimensionError(f"cannot apply weights {wv.shape} to input {xv.shape}")
    out = xv @ wv
    if b is not None:
        out = out + value(b)

    def vjp(g):
        gx = g @ wv.T
        gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return (gx, gw, gb)

    return record(out, (x, w, b), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-6):
    """Normalize over the last axis, then apply ``gain * y + bias``."""
    xv, gv, bv = value(x), value(gain), value(bias)
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv
    out = y * gv + bv

    def vjp(g):
        n = xv.shape[-1]
        dy = g * gv
        gx = inv * (
            dy - dy.sum(axis=-1, keepdims=True) / n
            - y * (dy * y).sum(axis=-1, keepdims=True) / n
        )
        flat = g.reshape(-1, n)
        return (gx, (flat * y.reshape(-1, n)).sum(axis=0), flat.sum(axis=0))

    return record(out, (x, gain, bias), vjp)


def sum_squares(a):
    av = value(a)
    return record(np.array((av * av).sum()), (a,), lambda g: (2.0 * g * av,))


def mse_loss(pred, target):
    """Mean squared error; ``target`` is treated as a constant."""
    pv = value(pred)
    tv = np.asarray(value(target), dtype=np.float64)
    if pv.shape != tv.shape:
        raise DimensionError(f"prediction {pv.shape} and target {tv.shape} differ")
    if pv.size == 0:
        raise DimensionError("mse_loss of empty vectors")
    r = pv - tv
    n = r.size
    return record(np.array((r * r).sum() / n), (pred,), lambda g: (g * 2.0 * r / n,))
