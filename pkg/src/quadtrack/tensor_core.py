"""Dense tensors with a small reverse-mode tape.

Only the operations needed by the trainable tracking branch are
differentiable (matmul, elementwise arithmetic, activations, concat,
slicing, norms and a few fused loss composites registered by
:mod:`quadtrack.losses`).  Convolution, pooling and bilinear sampling are
forward-only: they serve the appearance head, which is never trained here.

Values are 32-bit floats by default.  Matrix products and reductions
accumulate in float64 and round back to the operand dtype.  A tensor may be
built with ``dtype=np.float64`` explicitly; that is what the finite
difference checks use.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, NonFiniteError, ShapeError, UsageError

ACTIVATIONS = ("sigmoid", "tanh", "relu")

QTNS_MAGIC = b"QTNS"
QTNS_VERSION = 1


class Tensor:
    """Immutable n-d array of floats, optionally tracked by a :class:`Tape`."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, dtype=None, *, _tape=None, _node=None):
        if dtype is None:
            dtype = np.float32
        arr = np.array(data, dtype=dtype, copy=True, order="C")
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"every dimension must be >= 1, got {arr.shape}")
        arr.setflags(write=False)
        self.data = arr
        self.tape = _tape
        self.node = _node

    @classmethod
    def _wrap(cls, arr: np.ndarray, tape=None, node=None) -> "Tensor":
        t = cls.__new__(cls)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        t.data = arr
        t.tape = tape
        t.node = node
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        tag = f", node={self.node}" if self.tracked else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # thin operator sugar; all of it routes through the recorded ops
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def as_tensor(x, dtype=None) -> Tensor:
    """Return ``x`` unchanged if already a Tensor, else wrap it."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor._wrap(np.zeros(shape, dtype=dtype))


def ones(shape, dtype=np.float32) -> Tensor:
    return Tensor._wrap(np.ones(shape, dtype=dtype))


# --------------------------------------------------------------------------
# Tape


@dataclass
class OpRecord:
    kind: str
    inputs: tuple[int | None, ...]
    output: int
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Gradients:
    """Result of :meth:`Tape.backward`: node id -> gradient array."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, key) -> np.ndarray:
        node = key.node if isinstance(key, Tensor) else key
        return self._grads[node]

    def __contains__(self, key):
        node = key.node if isinstance(key, Tensor) else key
        return node in self._grads

    def __len__(self):
        return len(self._grads)

    def items(self):
        return self._grads.items()


class Tape:
    """Records differentiable ops in execution order.

    A tape is single-owner: record on it from one thread only.
    """

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.records: list[OpRecord] = []

    def watch(self, t) -> Tensor:
        """Register ``t`` as a leaf and return the tracked handle."""
        t = as_tensor(t)
        if t.tape is self:
            return t
        node = len(self.values)
        self.values.append(t.data)
        return Tensor._wrap(t.data, self, node)

    def record(self, kind: str, inputs: Sequence[Tensor], out: np.ndarray, vjp) -> Tensor:
        if not _all_finite(out):
            raise NonFiniteError(f"{kind} produced non-finite values")
        ids = []
        for t in inputs:
            if t.tape is not None and t.tape is not self:
                raise UsageError("operands recorded on different tapes")
            ids.append(t.node if t.tape is self else None)
        node = len(self.values)
        self.values.append(out)
        self.records.append(OpRecord(kind, tuple(ids), node, vjp))
        return Tensor._wrap(out, self, node)

    def backward(self, root: Tensor) -> Gradients:
        if root.tape is not self:
            raise UsageError("root is not recorded on this tape")
        if root.data.size != 1:
            raise UsageError(f"backward needs a scalar root, got shape {root.shape}")
        grads: dict[int, np.ndarray] = {root.node: np.ones_like(root.data)}
        for rec in reversed(self.records):
            g = grads.get(rec.output)
            if g is None:
                continue
            in_grads = rec.vjp(g)
            for nid, ig in zip(rec.inputs, in_grads):
                if nid is None or ig is None:
                    continue
                if nid in grads:
                    grads[nid] = grads[nid] + ig
                else:
                    grads[nid] = ig
        full = {}
        for nid, v in enumerate(self.values):
            g = grads.get(nid)
            full[nid] = np.zeros_like(v) if g is None else np.asarray(g, dtype=v.dtype).reshape(v.shape)
        return Gradients(full)


def backward(root: Tensor) -> Gradients:
    """Reverse-accumulate gradients of scalar ``root`` over its tape."""
    if root.tape is None:
        raise UsageError("root is not recorded on any tape")
    return root.tape.backward(root)


def _tape_of(*ts: Tensor) -> Tape | None:
    tape = None
    for t in ts:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise UsageError("operands recorded on different tapes")
            tape = t.tape
    return tape


def _all_finite(a: np.ndarray) -> bool:
    return bool(np.isfinite(a).all())


def _emit(kind, inputs, out, vjp) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None:
        if not _all_finite(out):
            raise NonFiniteError(f"{kind} produced non-finite values")
        return Tensor._wrap(out)
    return tape.record(kind, inputs, out, vjp)


def record_composite(kind: str, inputs: Sequence[Tensor], out: np.ndarray, vjp) -> Tensor:
    """Emit a fused op with a hand-written vector-Jacobian product.

    ``vjp(g)`` must return one gradient (or ``None``) per input.
    """
    return _emit(kind, list(inputs), np.asarray(out), vjp)


def _dtype(*ts: Tensor):
    return np.result_type(*[t.data.dtype for t in ts])


# --------------------------------------------------------------------------
# differentiable ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-d ``a`` with a 2-d (or 1-d) ``b``."""
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul expects [m x k] @ [k x n], got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    dt = _dtype(a, b)
    A = a.data.astype(np.float64, copy=False)
    B = b.data.astype(np.float64, copy=False)
    out = (A @ B).astype(dt, copy=False)

    def vjp(g):
        G = g.astype(np.float64)
        if B.ndim == 1:
            ga = np.outer(G, B)
            gb = A.T @ G
        else:
            ga = G @ B.T
            gb = A.T @ G
        return ga.astype(a.dtype), gb.astype(b.dtype)

    return _emit("matmul", [a, b], out, vjp)


def _check_same(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what} needs equal shapes, got {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    out = a.data + b.data
    return _emit("add", [a, b], out, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    out = a.data - b.data
    return _emit("sub", [a, b], out, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    _check_same(a, b, "mul")
    A, B = a.data, b.data
    return _emit("mul", [a, b], A * B, lambda g: (g * B, g * A))


def scale(x: Tensor, c: float) -> Tensor:
    out = (x.data * c).astype(x.dtype)
    return _emit("scale", [x], out, lambda g: ((g * c).astype(x.dtype),))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` with 1-d ``b`` broadcast along the trailing (column) axis."""
    if b.data.ndim != 1 or x.shape[0] != b.shape[0] or x.data.ndim > 2:
        raise ShapeError(f"add_bias: cannot add bias {b.shape} to {x.shape}")
    bb = b.data if x.data.ndim == 1 else b.data[:, None]
    out = x.data + bb

    def vjp(g):
        gb = g if g.ndim == 1 else g.sum(axis=1, dtype=np.float64).astype(b.dtype)
        return g, gb

    return _emit("add_bias", [x, b], out, vjp)


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise sigmoid, tanh or relu."""
    X = x.data
    if kind == "sigmoid":
        # split by sign so large |x| never overflows exp
        e = np.exp(-np.abs(X))
        out = np.where(X >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(X.dtype, copy=False)
        deriv = lambda: out * (1 - out)  # noqa: E731
    elif kind == "tanh":
        out = np.tanh(X)
        deriv = lambda: 1 - out * out  # noqa: E731
    elif kind == "relu":
        out = np.maximum(X, 0)
        deriv = lambda: (X > 0).astype(X.dtype)  # noqa: E731
    else:
        raise UsageError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return _emit(kind, [x], out, lambda g: (g * deriv(),))


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along ``axis``; every other dimension must agree."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat needs at least one part")
    ndim = parts[0].data.ndim
    ax = axis % ndim
    for p in parts[1:]:
        if p.data.ndim != ndim or any(
            p.shape[d] != parts[0].shape[d] for d in range(ndim) if d != ax
        ):
            raise ShapeError(f"concat: non-axis dims differ: {[q.shape for q in parts]}")
    out = np.concatenate([p.data for p in parts], axis=ax).astype(_dtype(*parts), copy=False)

    def vjp(g):
        bounds = np.cumsum([0] + [p.shape[ax] for p in parts])
        return [
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(parts))
        ]

    return _emit("concat", parts, out, vjp)


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Contiguous slice ``[start:stop]`` along ``axis``."""
    ax = axis % x.data.ndim
    n = x.shape[ax]
    if not 0 <= start < stop <= n:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis of length {n}")
    idx = [slice(None)] * x.data.ndim
    idx[ax] = slice(start, stop)
    idx = tuple(idx)
    out = x.data[idx]

    def vjp(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return _emit("slice", [x], out, vjp)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-d tensor, got {x.shape}")
    return _emit("transpose", [x], x.data.T, lambda g: (g.T,))


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return _emit("reshape", [x], out, lambda g: (g.reshape(x.shape),))


def sum_all(x: Tensor) -> Tensor:
    out = np.array([x.data.sum(dtype=np.float64)], dtype=x.dtype)
    return _emit("sum", [x], out, lambda g: (np.full(x.shape, g[0], dtype=x.dtype),))


def sq_norm(x: Tensor) -> Tensor:
    """Squared Euclidean norm over all entries."""
    X = x.data
    out = np.array([np.sum(X.astype(np.float64) ** 2)], dtype=x.dtype)
    return _emit("sq_norm", [x], out, lambda g: (2 * g[0] * X,))


def norm(x: Tensor) -> Tensor:
    """Euclidean norm over all entries (subgradient 0 at the origin)."""
    X = x.data
    n = float(np.sqrt(np.sum(X.astype(np.float64) ** 2)))
    out = np.array([n], dtype=x.dtype)

    def vjp(g):
        if n == 0.0:
            return (np.zeros_like(X),)
        return ((g[0] / n) * X,)

    return _emit("norm", [x], out, vjp)


# --------------------------------------------------------------------------
# forward-only ops


def _forward_only(name: str, *ts: Tensor):
    for t in ts:
        if t.tracked:
            raise UsageError(f"{name} is forward-only and cannot take tracked inputs")


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded 2-d cross-correlation.

    ``x`` is [C x H x W] (or a batch [N x C x H x W]), ``w`` is
    [F x C x kh x kw] with odd kernel sides, ``b`` is [F].
    """
    _forward_only("conv2d", x, w, b)
    out = conv2d_array(x.data, w.data, b.data)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("conv2d produced non-finite values")
    return Tensor._wrap(out)


def conv2d_array(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Array-level conv2d; see :func:`conv2d`."""
    batched = x.ndim == 4
    if not batched:
        if x.ndim != 3:
            raise ShapeError(f"conv2d input must be [C x H x W], got {x.shape}")
        x = x[None]
    if w.ndim != 4:
        raise ShapeError(f"conv2d kernel must be [F x C x kh x kw], got {w.shape}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel sides must be odd, got {kh}x{kw}")
    if b.shape != (f,):
        raise ShapeError(f"conv2d bias must be [{f}], got {b.shape}")
    dt = np.result_type(x.dtype, w.dtype)
    out = conv2d_nhwc(np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=dt), w, b)
    out = out.transpose(0, 3, 1, 2)
    return out if batched else out[0]


def conv2d_nhwc(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded conv on channels-last input [N x H x W x C] -> [N x H x W x F].

    im2col is a concatenation of the kh*kw shifted views, so consecutive
    layers chain without transposes.  The GEMM runs in the input precision.
    """
    n, h, wd, c = x.shape
    f, _, kh, kw = w.shape
    dt = x.dtype
    wmat = np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(kh * kw * c, f), dtype=dt)
    if kh == 1 and kw == 1:
        cols = x.reshape(n * h * wd, c)
    else:
        ph, pw = kh // 2, kw // 2
        xp = np.zeros((n, h + 2 * ph, wd + 2 * pw, c), dtype=dt)
        xp[:, ph:ph + h, pw:pw + wd] = x
        cols = np.concatenate([xp[:, i:i + h, j:j + wd] for i in range(kh) for j in range(kw)], axis=3)
        cols = cols.reshape(n * h * wd, kh * kw * c)
    out = cols @ wmat
    out += b.astype(dt)
    return out.reshape(n, h, wd, f)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean of [C x H x W] -> [C]."""
    _forward_only("global_avg_pool", x)
    if x.data.ndim != 3:
        raise ShapeError(f"global_avg_pool expects [C x H x W], got {x.shape}")
    out = x.data.mean(axis=(1, 2), dtype=np.float64).astype(x.dtype)
    return Tensor._wrap(out)


def bilinear_sample(fmap: Tensor, coords) -> Tensor:
    """Sample a [C x H x W] map at float (x, y) points -> [C x len(coords)].

    Neighbours outside the map contribute zero.
    """
    _forward_only("bilinear_sample", fmap)
    pts = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    out = bilinear_sample_array(fmap.data, pts[:, 0], pts[:, 1])
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("bilinear_sample produced non-finite values")
    return Tensor._wrap(out)


def bilinear_sample_array(fmap: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Array-level bilinear sampling; ``xs``/``ys`` may have any common shape.

    Returns an array of shape ``(C,) + xs.shape``.
    """
    if fmap.ndim != 3:
        raise ShapeError(f"bilinear_sample expects [C x H x W], got {fmap.shape}")
    c, h, w = fmap.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    flat = fmap.reshape(c, h * w).astype(np.float64)
    acc = np.zeros((c,) + xs.shape, dtype=np.float64)
    for dx, dy, wt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        idx = np.where(ok, yi * w + xi, 0)
        vals = flat[:, idx.reshape(-1)].reshape((c,) + xs.shape)
        acc += vals * np.where(ok, wt, 0.0)
    return acc.astype(fmap.dtype)


# --------------------------------------------------------------------------
# parameters


class ParameterSet:
    """Ordered named tensors; a name's shape is fixed once created."""

    def __init__(self, items: Iterable[tuple[str, Tensor]] = ()):
        self._items: dict[str, Tensor] = {}
        for name, t in items:
            self.add(name, t)

    def add(self, name: str, t) -> None:
        if name in self._items:
            raise UsageError(f"duplicate parameter name {name!r}")
        self._items[name] = as_tensor(t)

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __setitem__(self, name: str, t) -> None:
        t = as_tensor(t)
        if name not in self._items:
            raise UsageError(f"unknown parameter {name!r}; use add() to create it")
        if t.shape != self._items[name].shape:
            raise ShapeError(
                f"parameter {name!r} has fixed shape {self._items[name].shape}, got {t.shape}"
            )
        self._items[name] = t

    def __contains__(self, name):
        return name in self._items

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def names(self) -> list[str]:
        return list(self._items)

    def items(self):
        return self._items.items()

    def watch(self, tape: Tape) -> "ParameterSet":
        """Copy with every tensor registered as a leaf on ``tape``."""
        return ParameterSet((n, tape.watch(t)) for n, t in self._items.items())

    def detach(self) -> "ParameterSet":
        return ParameterSet((n, t.detach()) for n, t in self._items.items())

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet((n, Tensor(t.data, dtype=dtype)) for n, t in self._items.items())

    def num_values(self) -> int:
        return sum(t.data.size for t in self._items.values())

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = []
        for name, t in self._items.items():
            fname = f"{name}.qtns"
            write_tensor(d / fname, t)
            manifest.append({"name": name, "file": fname, "shape": list(t.shape)})
        (d / "manifest.json").write_text(json.dumps({"tensors": manifest}, indent=1) + "\n")

    @classmethod
    def load(cls, directory) -> "ParameterSet":
        d = Path(directory)
        try:
            manifest = json.loads((d / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"{d}: cannot read parameter manifest: {e}") from e
        ps = cls()
        for entry in manifest["tensors"]:
            t = read_tensor(d / entry["file"])
            if list(t.shape) != list(entry["shape"]):
                raise DataError(
                    f"{d / entry['file']}: shape {list(t.shape)} disagrees with manifest {entry['shape']}"
                )
            ps.add(entry["name"], t)
        return ps


# --------------------------------------------------------------------------
# QTNS binary format: "QTNS", u8 version, u32 rank, u32 dims[rank], f32 LE payload


def encode_tensor(t: Tensor) -> bytes:
    t = as_tensor(t)
    head = QTNS_MAGIC + struct.pack("<BI", QTNS_VERSION, t.data.ndim)
    head += struct.pack(f"<{t.data.ndim}I", *t.shape)
    return head + t.data.astype("<f4").tobytes(order="C")


def decode_tensor(buf: bytes, source: str = "<bytes>") -> Tensor:
    if len(buf) < 9:
        raise DataError(f"{source}: truncated header at offset {len(buf)}")
    if buf[:4] != QTNS_MAGIC:
        raise DataError(f"{source}: bad magic {buf[:4]!r} at offset 0")
    version, rank = struct.unpack_from("<BI", buf, 4)
    if version != QTNS_VERSION:
        raise DataError(f"{source}: unsupported version {version} at offset 4")
    off = 9
    if rank < 1 or len(buf) < off + 4 * rank:
        raise DataError(f"{source}: bad rank {rank} or truncated dims at offset {off}")
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    n = int(np.prod(dims))
    if len(buf) != off + 4 * n:
        raise DataError(
            f"{source}: payload length {len(buf) - off} at offset {off}, expected {4 * n} bytes"
        )
    arr = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims)
    try:
        return Tensor(arr.astype(np.float32))
    except ShapeError as e:
        raise DataError(f"{source}: {e}") from e


def write_tensor(path, t: Tensor) -> None:
    Path(path).write_bytes(encode_tensor(t))


def read_tensor(path) -> Tensor:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as e:
        raise DataError(f"{p}: {e}") from e
    return decode_tensor(buf, str(p))
