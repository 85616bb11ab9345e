"""Minimal dense-tensor engine with reverse-mode autodiff.

Values are 32-bit floats; scalar reductions accumulate in 64-bit before
casting back.  There is no broadcasting beyond what the named ops define
(affine/conv bias over the last axis, ``badd`` over trailing shapes), which
keeps every backward rule small enough to audit.  Graphs are single-threaded;
run rollouts under ``no_grad()`` to skip graph construction entirely.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_grad_enabled = True


class no_grad:
    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # convenience operators used throughout the nets
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        return scale(self, other) if isinstance(other, (int, float)) else mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, key) -> "Tensor":
        return slice_tensor(self, key)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=np.float32)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def constant(data) -> Tensor:
    return Tensor(data)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _make(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), backward)


def badd(a: Tensor, b: Tensor) -> Tensor:
    """Add ``b`` whose shape equals a trailing suffix of ``a``'s shape."""
    k = b.data.ndim
    if k > a.data.ndim or a.data.shape[a.data.ndim - k :] != b.data.shape:
        raise ValueError(f"badd: {b.data.shape} is not a trailing suffix of {a.data.shape}")
    lead = tuple(range(a.data.ndim - k))

    def backward(g):
        _accum(a, g)
        _accum(b, g.sum(axis=lead) if lead else g)

    return _make(a.data + b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: equal leading dims, or an unbatched 2-D right side."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(f"matmul: inputs must be >= 2-D, got {a.data.shape} @ {b.data.shape}")
    if b.data.ndim != 2 and a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError(f"matmul: leading dims differ: {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: inner dims differ: {a.data.shape} @ {b.data.shape}")

    def backward(g):
        _accum(a, g @ np.swapaxes(b.data, -1, -2))
        if b.data.ndim == 2 and a.data.ndim > 2:
            a2 = a.data.reshape(-1, a.data.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            _accum(b, a2.T @ g2)
        else:
            _accum(b, np.swapaxes(a.data, -1, -2) @ g)

    return _make(a.data @ b.data, (a, b), backward)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b over the last axis; x may carry any leading shape."""
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"affine: shapes {x.data.shape} @ {w.data.shape} + {b.data.shape}")
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, x.data.shape[-1])
    y = (x2 @ w.data + b.data).reshape(*lead, w.data.shape[1])

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        _accum(x, (g2 @ w.data.T).reshape(x.data.shape))
        _accum(w, x2.T @ g2)
        _accum(b, g2.sum(axis=0))

    return _make(y, (x, w, b), backward)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0.0)

    def backward(g):
        _accum(x, g * (y > 0.0))

    return _make(y, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (g - inner))

    return _make(y, (x,), backward)


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then scale and shift."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ValueError(f"layernorm: gain/bias must be ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = gain.data * xhat + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=lead))
        _accum(bias, g.sum(axis=lead))
        dxhat = g * gain.data
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv * term)

    return _make(y, (x, gain, bias), backward)


def conv1d(x: Tensor, w: Tensor, b: Tensor, padding: int | str = "same") -> Tensor:
    """Temporal convolution, stride 1.  x: (B, T, Cin), w: (K, Cin, Cout).

    Computed as K shifted matmuls rather than an im2col expansion; the
    kernel is small and this avoids materializing the K-fold input copy.
    """
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ValueError(f"conv1d: expected x (B,T,Cin) and w (K,Cin,Cout), got {x.data.shape}, {w.data.shape}")
    batch, t_in, c_in = x.data.shape
    k, wc_in, c_out = w.data.shape
    if wc_in != c_in or b.data.shape != (c_out,):
        raise ValueError(f"conv1d: channel mismatch x={x.data.shape} w={w.data.shape} b={b.data.shape}")
    pad = (k - 1) // 2 if padding == "same" else int(padding)
    t_out = t_in + 2 * pad - k + 1
    if t_out < 1:
        raise ValueError(f"conv1d: kernel {k} with padding {pad} exceeds length {t_in}")

    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0))) if pad else x.data
    y = np.tile(b.data, (batch, t_out, 1))
    for j in range(k):
        y += xp[:, j : j + t_out, :] @ w.data[j]

    def backward(g):
        db = g.sum(axis=(0, 1))
        dw = np.empty_like(w.data)
        dxp = np.zeros_like(xp)
        g2 = g.reshape(batch * t_out, c_out)
        for j in range(k):
            xs = xp[:, j : j + t_out, :].reshape(batch * t_out, c_in)
            dw[j] = xs.T @ g2
            dxp[:, j : j + t_out, :] += g @ w.data[j].T
        _accum(w, dw)
        _accum(b, db)
        _accum(x, dxp[:, pad : pad + t_in, :] if pad else dxp)

    return _make(y, (x, w, b), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = np.argsort(axes)

    def backward(g):
        _accum(x, g.transpose(inverse))

    return _make(x.data.transpose(axes), (x,), backward)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for part, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            _accum(part, g[tuple(index)])

    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def stack(parts: list[Tensor], axis: int) -> Tensor:
    def backward(g):
        for i, part in enumerate(parts):
            _accum(part, np.take(g, i, axis=axis))

    return _make(np.stack([p.data for p in parts], axis=axis), tuple(parts), backward)


def slice_tensor(x: Tensor, key) -> Tensor:
    def backward(g):
        if not x.requires_grad:
            return
        dx = np.zeros_like(x.data)
        np.add.at(dx, key, g)
        _accum(x, dx)

    return _make(x.data[key], (x,), backward)


def gather_cols(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select columns of the last axis by integer index array."""
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        if not x.requires_grad:
            return
        dx2 = np.zeros((int(np.prod(x.data.shape[:-1])), x.data.shape[-1]), dtype=np.float32)
        g2 = g.reshape(-1, len(idx))
        np.add.at(dx2, (slice(None), idx), g2)
        _accum(x, dx2.reshape(x.data.shape))

    return _make(x.data[..., idx], (x,), backward)


def take_per_row(x: Tensor, idx: np.ndarray) -> Tensor:
    """x: (B, A), idx: (B,) -> (B,) picking one column per row."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.data.shape[0])

    def backward(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, (rows, idx), g)
        _accum(x, dx)

    return _make(x.data[rows, idx], (x,), backward)


def row_max(x: Tensor) -> Tensor:
    """Max over the last axis; the gradient flows to the first argmax."""
    arg = x.data.argmax(axis=-1)
    y = np.take_along_axis(x.data, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        dx = np.zeros_like(x.data)
        np.put_along_axis(dx, arg[..., None], g[..., None], axis=-1)
        _accum(x, dx)

    return _make(y, (x,), backward)


def tsum(x: Tensor, axis: int | None = None) -> Tensor:
    y = np.sum(x.data, axis=axis, dtype=np.float64).astype(np.float32)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape))
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _make(y, (x,), backward)


def tmean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    y = (np.sum(x.data, axis=axis, dtype=np.float64) / n).astype(np.float32)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g / n, x.data.shape))
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g / n, axis), x.data.shape))

    return _make(y, (x,), backward)


def huber(x: Tensor, delta: float = 1.0) -> Tensor:
    """Elementwise Huber: quadratic inside |x| <= delta, linear outside."""
    a = np.abs(x.data)
    y = np.where(a <= delta, 0.5 * x.data * x.data, delta * (a - 0.5 * delta))

    def backward(g):
        _accum(x, g * np.clip(x.data, -delta, delta))

    return _make(y.astype(np.float32), (x,), backward)


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int) -> Tensor:
    """Multi-head attention over axis 1 of (B, S, D) inputs."""
    batch, seq, dim = q.data.shape
    if dim % n_heads:
        raise ValueError(f"attention: model dim {dim} not divisible by {n_heads} heads")
    if q.data.shape != k.data.shape or k.data.shape != v.data.shape:
        raise ValueError(f"attention: Q/K/V shapes differ: {q.data.shape}, {k.data.shape}, {v.data.shape}")
    d_head = dim // n_heads

    def split(t: Tensor) -> Tensor:
        return transpose(reshape(t, (batch, seq, n_heads, d_head)), (0, 2, 1, 3))

    # scale Q up front: cheaper than scaling the (seq x seq) score matrices
    qs, ks, vs = split(scale(q, 1.0 / np.sqrt(d_head))), split(k), split(v)
    scores = matmul(qs, transpose(ks, (0, 1, 3, 2)))
    ctx = matmul(softmax(scores, axis=-1), vs)
    return reshape(transpose(ctx, (0, 2, 1, 3)), (batch, seq, dim))


# ---------------------------------------------------------------------------
# parameter initialization and the optimizer


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], gain: float = 1.0) -> Tensor:
    if len(shape) == 3:  # conv kernels: (K, Cin, Cout)
        fan_in, fan_out = shape[0] * shape[1], shape[0] * shape[2]
    else:
        fan_in, fan_out = shape[0], shape[-1]
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return param(rng.uniform(-limit, limit, size=shape).astype(np.float32))


def zeros(shape: tuple[int, ...]) -> Tensor:
    return param(np.zeros(shape, dtype=np.float32))


def ones(shape: tuple[int, ...]) -> Tensor:
    return param(np.ones(shape, dtype=np.float32))


def small_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float = 0.02) -> Tensor:
    return param((rng.standard_normal(shape) * std).astype(np.float32))


class Adam:
    """Standard Adam with bias correction, over a named parameter registry."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(np.float32)


# ---------------------------------------------------------------------------
# checkpoint format: one flat little-endian binary + a JSON manifest


def save_checkpoint(directory: str | Path, params: dict[str, Tensor]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"endianness": "little", "dtype": "float32", "params": []}
    offset = 0
    chunks = []
    for name in sorted(params):
        data = params[name].data.astype("<f4")
        manifest["params"].append(
            {"name": name, "shape": list(data.shape), "offset": offset, "nbytes": data.nbytes}
        )
        chunks.append(data.tobytes())
        offset += data.nbytes
    (directory / "weights.bin").write_bytes(b"".join(chunks))
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(directory: str | Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    blob = (directory / "weights.bin").read_bytes()
    out = {}
    for entry in manifest["params"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f4").reshape(entry["shape"])
        out[entry["name"]] = arr.astype(np.float32)
    return out
