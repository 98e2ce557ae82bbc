"""Dense tensors on numpy buffers with reverse-mode automatic differentiation.

The engine is a classic Wengert list: while a :class:`Tape` is active, every
kernel appends a record holding its inputs, outputs and a vector-Jacobian
callback. ``Tape.grad`` sweeps the list once in reverse, accumulating
gradients additively across fan-out. Tensors are immutable after creation;
gradient buffers live inside the backward call, never on the tensor.

Training runs in float32 by default; all oracle and gradient tests run the
same code in float64 (``dtype`` is data, not a separate code path).
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "checkpoint",
    "finite_diff_check",
    "FiniteDiffReport",
    "KERNELS",
    "resolve_dtype",
    "add", "sub", "mul", "div", "scale", "matmul", "transpose", "reshape",
    "concat", "narrow", "reduce_sum", "softmax", "sigmoid", "elu_plus_one",
    "sqrt", "gelu", "clip_min", "embedding", "cross_entropy_with_logits",
]

_FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for a kernel."""


def resolve_dtype(precision: str) -> np.dtype:
    """Map a precision name ('single' or 'double') to a numpy dtype."""
    if precision == "single":
        return np.dtype(np.float32)
    if precision == "double":
        return np.dtype(np.float64)
    raise ValueError(f"unknown precision {precision!r}, expected 'single' or 'double'")


class Tensor:
    """Dense n-dimensional array: row-major flat buffer plus shape metadata.

    ``requires_grad`` marks trainable leaves; it does not gate recording
    (any tensor reachable from a recorded op can receive a gradient).
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, dtype=None, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        # np.ascontiguousarray would promote 0-d scalars to 1-d
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # arithmetic sugar; all routing goes through the module kernels
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _ensure_same_dtype(a: Tensor, b: Tensor, op: str) -> None:
    if a.dtype != b.dtype:
        raise TypeError(f"{op}: mixed dtypes {a.dtype} and {b.dtype}; convert explicitly")


# --------------------------------------------------------------------------
# tape
# --------------------------------------------------------------------------

class _Record:
    """One recorded op: outputs, inputs, and the vector-Jacobian callback."""

    __slots__ = ("outputs", "inputs", "vjp")

    def __init__(self, outputs: tuple[Tensor, ...], inputs: tuple[Tensor, ...], vjp):
        self.outputs = outputs
        self.inputs = inputs
        self.vjp = vjp


# Stack of tapes; a ``None`` entry suspends recording (used by checkpoint).
_TAPE_STACK: list["Tape | None"] = []


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class _SuspendRecording:
    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


class Tape:
    """Records one forward pass; replay in reverse yields gradients.

    Tapes are not shared between passes. Independent forward/backward passes
    may run concurrently only with distinct tapes (no shared mutable state).
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._records)

    def _append(self, rec: _Record) -> None:
        self._records.append(rec)

    def backward(self, seeds: dict[Tensor, np.ndarray], wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """Reverse sweep from seeded outputs; returns grads aligned with ``wrt``.

        Each recorded op is visited exactly once. Tensors without a path to a
        seeded output get exact-zero gradients.
        """
        grads: dict[int, np.ndarray] = {}
        for t, g in seeds.items():
            g = np.asarray(g, dtype=t.dtype)
            if g.shape != t.shape:
                raise ShapeError(f"seed gradient shape {g.shape} != tensor shape {t.shape}")
            key = id(t)
            grads[key] = grads[key] + g if key in grads else g

        wrt_ids = {id(t) for t in wrt}
        results: dict[int, np.ndarray] = {}

        for rec in reversed(self._records):
            out_grads = []
            any_grad = False
            for out in rec.outputs:
                key = id(out)
                if key in wrt_ids and key in grads:
                    # an op output can itself be a requested target
                    results[key] = grads[key].copy()
                g = grads.pop(key, None)
                out_grads.append(g)
                any_grad = any_grad or g is not None
            if not any_grad:
                continue
            in_grads = rec.vjp(out_grads)
            for t, g in zip(rec.inputs, in_grads):
                if g is None or not isinstance(t, Tensor):
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = np.asarray(g)

        out: list[np.ndarray] = []
        for t in wrt:
            key = id(t)
            if key in results:
                out.append(results[key])
            elif key in grads:
                out.append(np.ascontiguousarray(grads[key]))
            else:
                out.append(np.zeros(t.shape, dtype=t.dtype))
        return out

    def grad(self, loss: Tensor, params: Iterable[Tensor]) -> dict[Tensor, np.ndarray]:
        """Gradient of a scalar loss w.r.t. each param; unused params get zeros."""
        if loss.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        params = list(params)
        seed = np.ones((), dtype=loss.dtype)
        grads = self.backward({loss: seed}, params)
        return dict(zip(params, grads))


def _record(outputs, inputs, vjp) -> None:
    tape = _active_tape()
    if tape is not None:
        tape._append(_Record(tuple(outputs), tuple(inputs), vjp))


# --------------------------------------------------------------------------
# gradient checkpointing
# --------------------------------------------------------------------------

def checkpoint(fn: Callable[..., tuple], *inputs) -> tuple:
    """Run ``fn(*inputs)`` without storing intermediates; recompute on backward.

    ``fn`` must be deterministic and must take every tensor it differentiably
    depends on through ``inputs`` (closures over parameter tensors would
    silently drop their gradients). Returns the tuple of output tensors.
    Recomputation replays the identical op sequence, so gradients match the
    non-checkpointed pass bit for bit.
    """
    tape = _active_tape()
    if tape is None:
        outs = fn(*inputs)
        return tuple(outs)
    with _SuspendRecording():
        outs = tuple(fn(*inputs))

    tensor_inputs = tuple(t for t in inputs if isinstance(t, Tensor))

    def vjp(out_grads):
        with Tape() as inner:
            inner_outs = tuple(fn(*inputs))
        seeds: dict[Tensor, np.ndarray] = {}
        for o, g in zip(inner_outs, out_grads):
            if g is not None:
                seeds[o] = seeds[o] + g if o in seeds else g
        if not seeds:
            return [None] * len(inputs)
        inner_grads = inner.backward(seeds, tensor_inputs)
        by_id = {id(t): g for t, g in zip(tensor_inputs, inner_grads)}
        # a tensor listed twice must contribute its gradient only once
        seen: set[int] = set()
        routed = []
        for t in inputs:
            if isinstance(t, Tensor) and id(t) not in seen:
                seen.add(id(t))
                routed.append(by_id.get(id(t)))
            else:
                routed.append(None)
        return routed

    _record(outs, inputs, vjp)
    return outs


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(op: str, a, b, fwd, dfa, dfb) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, dtype=a.dtype)
    _ensure_same_dtype(a, b, op)
    try:
        out_data = fwd(a.data, b.data)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None
    out = Tensor(out_data)

    def vjp(out_grads):
        (g,) = out_grads
        return (_reduce_to(dfa(g, a.data, b.data), a.shape),
                _reduce_to(dfb(g, a.data, b.data), b.shape))

    _record((out,), (a, b), vjp)
    return out


def add(a, b) -> Tensor:
    return _binary("add", a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary("sub", a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary("mul", a, b, np.multiply,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    b_t = _as_tensor(b, dtype=_as_tensor(a).dtype)
    if np.any(b_t.data == 0):
        raise ZeroDivisionError("div: denominator contains a zero (apply an epsilon floor first)")
    return _binary("div", a, b_t, np.divide,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def scale(x, s: float) -> Tensor:
    """Multiply by a python scalar (constant, receives no gradient)."""
    x = _as_tensor(x)
    s = float(s)
    out = Tensor(x.data * x.dtype.type(s))

    def vjp(out_grads):
        (g,) = out_grads
        return (g * s,)

    _record((out,), (x,), vjp)
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _ensure_same_dtype(a, b, "matmul")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must have rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ: {a.shape} @ {b.shape}")
    try:
        out_data = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: incompatible leading dims: {a.shape} @ {b.shape}") from None
    out = Tensor(out_data)

    def vjp(out_grads):
        (g,) = out_grads
        ga = _reduce_to(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _reduce_to(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    _record((out,), (a, b), vjp)
    return out


def transpose(x, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes; default swaps the last two."""
    x = _as_tensor(x)
    if axes is None:
        if x.ndim < 2:
            raise ShapeError(f"transpose: rank >= 2 required, got {x.shape}")
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of rank-{x.ndim} axes")
    out = Tensor(np.transpose(x.data, axes))
    inv = np.argsort(axes)

    def vjp(out_grads):
        (g,) = out_grads
        return (np.transpose(g, inv),)

    _record((out,), (x,), vjp)
    return out


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    out = Tensor(out_data)
    in_shape = x.shape

    def vjp(out_grads):
        (g,) = out_grads
        return (g.reshape(in_shape),)

    _record((out,), (x,), vjp)
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    for t in tensors[1:]:
        _ensure_same_dtype(tensors[0], t, "concat")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    out = Tensor(out_data)
    ax = axis % out.ndim
    sizes = [t.shape[ax] for t in tensors]

    def vjp(out_grads):
        (g,) = out_grads
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=ax)
        return tuple(pieces)

    _record((out,), tuple(tensors), vjp)
    return out


def narrow(x, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis; the result is a copy, never a view."""
    x = _as_tensor(x)
    ax = axis % x.ndim
    n = x.shape[ax]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"narrow: [{start}:{stop}] out of range for axis {ax} of {x.shape}")
    idx = [slice(None)] * x.ndim
    idx[ax] = slice(start, stop)
    out = Tensor(x.data[tuple(idx)].copy())
    in_shape, dtype = x.shape, x.dtype

    def vjp(out_grads):
        (g,) = out_grads
        full = np.zeros(in_shape, dtype=dtype)
        full[tuple(idx)] = g
        return (full,)

    _record((out,), (x,), vjp)
    return out


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))
    in_shape = x.shape

    def vjp(out_grads):
        (g,) = out_grads
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(in_shape) for a in axes)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, in_shape).copy(),)

    _record((out,), (x,), vjp)
    return out


def softmax(x) -> Tensor:
    """Row-wise softmax over the last axis, stabilized by row-max subtraction."""
    x = _as_tensor(x)
    if x.ndim < 1:
        raise ShapeError("softmax: rank >= 1 required")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def vjp(out_grads):
        (g,) = out_grads
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    _record((out,), (x,), vjp)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d)))).astype(d.dtype)
    out = Tensor(y)

    def vjp(out_grads):
        (g,) = out_grads
        return (g * y * (1.0 - y),)

    _record((out,), (x,), vjp)
    return out


def elu_plus_one(x) -> Tensor:
    """Strictly positive activation: x + 1 for x >= 0, exp(x) below zero."""
    x = _as_tensor(x)
    d = x.data
    neg = np.exp(np.minimum(d, 0.0))
    y = np.where(d >= 0, d + 1.0, neg).astype(d.dtype)
    dydx = np.where(d >= 0, np.ones_like(d), neg).astype(d.dtype)
    out = Tensor(y)

    def vjp(out_grads):
        (g,) = out_grads
        return (g * dydx,)

    _record((out,), (x,), vjp)
    return out


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data < 0):
        raise ValueError("sqrt: negative input")
    y = np.sqrt(x.data)
    out = Tensor(y)

    def vjp(out_grads):
        (g,) = out_grads
        return (g / (2.0 * y),)

    _record((out,), (x,), vjp)
    return out


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x) -> Tensor:
    """Gaussian error linear unit (tanh form)."""
    x = _as_tensor(x)
    d = x.data
    inner = _GELU_C * (d + 0.044715 * d ** 3)
    t = np.tanh(inner)
    y = 0.5 * d * (1.0 + t)
    out = Tensor(y.astype(d.dtype))

    def vjp(out_grads):
        (g,) = out_grads
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * d ** 2)
        dy = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t ** 2) * dinner
        return (g * dy,)

    _record((out,), (x,), vjp)
    return out


def clip_min(x, floor: float) -> Tensor:
    """Elementwise max(x, floor); gradient passes only where x > floor."""
    x = _as_tensor(x)
    floor = float(floor)
    mask = x.data > floor
    out = Tensor(np.maximum(x.data, floor))

    def vjp(out_grads):
        (g,) = out_grads
        return (g * mask,)

    _record((out,), (x,), vjp)
    return out


def embedding(table, ids) -> Tensor:
    """Row lookup: table (V, d) indexed by an integer array of any shape."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("embedding: ids must be integers")
    if table.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-d, got {table.shape}")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids.max() if ids.max() >= vocab else ids.min())
        raise IndexError(f"embedding: id {bad} out of range for vocab {vocab}")
    out = Tensor(table.data[ids])
    tshape, dtype = table.shape, table.dtype

    def vjp(out_grads):
        (g,) = out_grads
        gt = np.zeros(tshape, dtype=dtype)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, tshape[1]))
        return (gt,)

    _record((out,), (table,), vjp)
    return out


def cross_entropy_with_logits(logits, targets) -> Tensor:
    """Per-position negative log-likelihood; targets are integer class ids.

    logits: (..., V); targets: (...) matching the leading shape. Returns a
    tensor of shape (...).
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    if not np.issubdtype(targets.dtype, np.integer):
        raise TypeError("cross_entropy_with_logits: targets must be integers")
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(
            f"cross_entropy_with_logits: targets {targets.shape} vs logits {logits.shape}")
    vocab = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        bad = int(targets.max() if targets.max() >= vocab else targets.min())
        raise IndexError(f"cross_entropy_with_logits: target id {bad} out of range for vocab {vocab}")

    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, targets[..., None], axis=-1)[..., 0]
    out = Tensor(lse - picked)

    def vjp(out_grads):
        (g,) = out_grads
        p = np.exp(z)
        p /= p.sum(axis=-1, keepdims=True)
        flat = p.reshape(-1, vocab)
        flat[np.arange(flat.shape[0]), targets.reshape(-1)] -= 1.0
        return (flat.reshape(logits.shape) * g[..., None],)

    _record((out,), (logits,), vjp)
    return out


# Registry of differentiable primitives; every entry has a reverse rule and is
# covered by the finite-difference property tests.
KERNELS: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "scale": scale,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "narrow": narrow,
    "reduce_sum": reduce_sum,
    "softmax": softmax,
    "sigmoid": sigmoid,
    "elu_plus_one": elu_plus_one,
    "sqrt": sqrt,
    "gelu": gelu,
    "clip_min": clip_min,
    "embedding": embedding,
    "cross_entropy_with_logits": cross_entropy_with_logits,
}


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------

class ParamCheckResult:
    __slots__ = ("name", "max_rel_err", "ok", "note")

    def __init__(self, name: str, max_rel_err: float, ok: bool, note: str = ""):
        self.name = name
        self.max_rel_err = max_rel_err
        self.ok = ok
        self.note = note

    def __repr__(self):
        flag = "ok" if self.ok else "FAIL"
        return f"<{self.name}: max_rel_err={self.max_rel_err:.3e} {flag} {self.note}>"


class FiniteDiffReport:
    def __init__(self, checks: list[ParamCheckResult], tolerance: float):
        self.checks = checks
        self.tolerance = tolerance

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        errs = [c.max_rel_err for c in self.checks if not math.isnan(c.max_rel_err)]
        return max(errs) if errs else 0.0

    def __repr__(self):
        worst = max(self.checks, key=lambda c: -1.0 if math.isnan(c.max_rel_err) else c.max_rel_err,
                    default=None)
        return f"<FiniteDiffReport ok={self.ok} worst={worst}>"


def finite_diff_check(f: Callable[[], Tensor], params: dict[str, Tensor],
                      step: float = 1e-4, tolerance: float = 1e-4) -> FiniteDiffReport:
    """Compare analytic gradients of ``f`` against central finite differences.

    ``f`` takes no arguments and reads the current contents of ``params``;
    it must be deterministic. Run in double precision: the central-difference
    truncation error alone exceeds most tolerances in float32. Relative error
    uses max(|analytic|, |numeric|, 1e-12) as the denominator. A non-finite
    value at a perturbed point is reported on that param, not raised.
    """
    for name, p in params.items():
        if p.dtype != np.float64:
            raise TypeError(f"finite_diff_check: param {name!r} must be float64")

    with Tape() as tape:
        loss = f()
    analytic = tape.grad(loss, list(params.values()))

    checks: list[ParamCheckResult] = []
    for name, p in params.items():
        a = analytic[p]
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        bad = ""
        for i in range(flat.size):
            keep = flat[i]
            try:
                flat[i] = keep + step
                up = f().item()
                flat[i] = keep - step
                down = f().item()
            except Exception as exc:
                bad = f"error at perturbed point: {exc}"
            finally:
                flat[i] = keep
            if not bad and not (math.isfinite(up) and math.isfinite(down)):
                bad = "non-finite value at perturbed point"
            if bad:
                break
            numeric[i] = (up - down) / (2.0 * step)
        if bad:
            checks.append(ParamCheckResult(name, float("nan"), False, bad))
            continue
        n = numeric.reshape(p.shape)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)
        rel = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
        checks.append(ParamCheckResult(name, rel, rel < tolerance))
    return FiniteDiffReport(checks, tolerance)
