"""Small reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable operation records its parents and a vector-Jacobian
product written in terms of other differentiable operations, so the backward
pass can itself be recorded (``create_graph=True``).  That is what makes
Hessian-vector products a plain double backward.

Only what the policies, critics and trust-region code need is provided:
elementwise arithmetic with broadcasting, 2-D matmul, a handful of
nonlinearities, reductions, slicing and concatenation.
"""

from __future__ import annotations

import contextlib
import itertools
import json
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_node_ids = itertools.count()
_grad_enabled = True


class NonFiniteError(FloatingPointError):
    """A forward pass produced NaN or Inf."""


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A node in the recorded computation.

    ``id`` grows monotonically, so sorting by it gives a topological order
    (inputs are always created before their consumers).
    """

    __slots__ = ("data", "requires_grad", "_parents", "_vjp", "id", "name")
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None
        self.id = next(_node_ids)
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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return len(self.data)

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

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


# ---------------------------------------------------------------------------
# shape plumbing


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast result back down to ``shape``."""
    x = as_tensor(x)
    if x.shape == tuple(shape):
        return x
    data = x.data
    lead = data.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and data.shape[i + lead] != 1
    )
    red = data.sum(axis=axes, keepdims=True)
    if lead:
        red = red.reshape(red.shape[lead:])
    src_shape = x.shape
    return _make(red.reshape(shape), (x,), lambda g: (broadcast_to(g, src_shape),))


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    if x.shape == tuple(shape):
        return x
    src_shape = x.shape
    return _make(np.broadcast_to(x.data, shape).copy(), (x,), lambda g: (sum_to(g, src_shape),))


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    src_shape = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (reshape(g, src_shape),))


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.T, (x,), lambda g: (transpose(g),))


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (sum_to(g, sa), sum_to(neg(g), sb)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (neg(g),))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def vjp(g):
        ga = div(g, b)
        gb = neg(mul(ga, div(a, b)))
        return sum_to(ga, sa), sum_to(gb, sb)

    return _make(a.data / b.data, (a, b), vjp)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    c = float(exponent)
    if c == 1.0:
        return a
    return _make(a.data**c, (a,), lambda g: (mul(g, mul(power(a, c - 1.0), c)),))


def exp(a):
    if not isinstance(a, Tensor):
        return np.exp(a)
    out = _make(np.exp(a.data), (a,), lambda g: (mul(g, out),))
    return out


def log(a):
    if not isinstance(a, Tensor):
        return np.log(a)
    return _make(np.log(a.data), (a,), lambda g: (div(g, a),))


def tanh(a):
    if not isinstance(a, Tensor):
        return np.tanh(a)
    out = _make(np.tanh(a.data), (a,), lambda g: (mul(g, sub(1.0, mul(out, out))),))
    return out


def relu(a):
    if not isinstance(a, Tensor):
        return np.maximum(a, 0.0)
    mask = (a.data > 0).astype(DTYPE)
    return _make(np.maximum(a.data, 0.0), (a,), lambda g: (mul(g, mask),))


def clip(a, lo: float, hi: float):
    """Clamp values; gradient passes only where the input was inside [lo, hi]."""
    if not isinstance(a, Tensor):
        return np.clip(a, lo, hi)
    mask = ((a.data >= lo) & (a.data <= hi)).astype(DTYPE)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (mul(g, mask),))


def stop_gradient(a):
    return a.detach() if isinstance(a, Tensor) else a


# ---------------------------------------------------------------------------
# reductions


def _expand_reduced(g: Tensor, shape, axis, keepdims) -> Tensor:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        kept = list(shape)
        for ax in axes:
            kept[ax % len(shape)] = 1
        g = reshape(g, tuple(kept))
    elif axis is None and not keepdims:
        g = reshape(g, (1,) * len(shape))
    return broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False):
    if not isinstance(a, Tensor):
        return np.sum(a, axis=axis, keepdims=keepdims)
    shape = a.shape
    return _make(
        np.asarray(a.data.sum(axis=axis, keepdims=keepdims)),
        (a,),
        lambda g: (_expand_reduced(g, shape, axis, keepdims),),
    )


def mean(a, axis=None, keepdims=False):
    if not isinstance(a, Tensor):
        return np.mean(a, axis=axis, keepdims=keepdims)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def logsumexp(a, axis=-1, keepdims=False):
    if not isinstance(a, Tensor):
        m = np.max(a, axis=axis, keepdims=True)
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
        return out if keepdims else np.squeeze(out, axis=axis)
    m = Tensor(np.max(a.data, axis=axis, keepdims=True))
    out = add(log(tsum(exp(sub(a, m)), axis=axis, keepdims=True)), m)
    if keepdims:
        return out
    return reshape(out, np.squeeze(out.data, axis=axis).shape)


def log_softmax(a, axis=-1):
    return a - logsumexp(a, axis=axis, keepdims=True)


def softmax(a, axis=-1):
    return exp(log_softmax(a, axis=axis))


# ---------------------------------------------------------------------------
# linear algebra and indexing


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not conform")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (matmul(g, transpose(b)) if a.requires_grad else None,
                   matmul(transpose(a), g) if b.requires_grad else None),
    )


def linear(x, w, b) -> Tensor:
    """x @ w + b for a (batch, in) input as a single node."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"linear shapes {x.shape}, {w.shape}, {b.shape} do not conform")

    def vjp(g):
        return (matmul(g, transpose(w)) if x.requires_grad else None,
                matmul(transpose(x), g) if w.requires_grad else None,
                tsum(g, axis=0) if b.requires_grad else None)

    return _make(x.data @ w.data + b.data, (x, w, b), vjp)


def _scatter(g: Tensor, shape, key) -> Tensor:
    buf = np.zeros(shape, dtype=DTYPE)
    buf[key] = g.data
    return _make(buf, (g,), lambda gg: (getitem(gg, key),))


def getitem(a, key):
    if not isinstance(a, Tensor):
        return a[key]
    shape = a.shape
    return _make(np.asarray(a.data[key]), (a,), lambda g: (_scatter(g, shape, key),))


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def vjp(g):
        outs = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            key = [slice(None)] * data.ndim
            key[ax] = slice(int(lo), int(hi))
            outs.append(getitem(g, tuple(key)))
        return tuple(outs)

    return _make(data, parts, vjp)


# ---------------------------------------------------------------------------
# backward pass


def _topo(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    order: list[Tensor] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.id in seen or not node.requires_grad:
            continue
        seen.add(node.id)
        order.append(node)
        stack.extend(node._parents)
    order.sort(key=lambda n: n.id, reverse=True)
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False,
         seed: Tensor | np.ndarray | None = None) -> list[Tensor]:
    """Vector-Jacobian product of ``output`` with respect to ``inputs``.

    ``output`` must be a scalar unless ``seed`` is given.  Inputs the output
    does not depend on get exact zeros.
    """
    if seed is None:
        if output.size != 1:
            raise ShapeError(f"gradient needs a scalar output, got shape {output.shape}")
        seed = np.ones_like(output.data)
    grads: dict[int, Tensor] = {output.id: as_tensor(seed)}
    wanted = {t.id for t in inputs}
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = create_graph
    try:
        for node in _topo(output):
            g = grads.get(node.id)
            if g is None or node._vjp is None:
                continue
            if node.id not in wanted:
                del grads[node.id]
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev_g = grads.get(parent.id)
                grads[parent.id] = pg if prev_g is None else add(prev_g, pg)
    finally:
        _grad_enabled = prev
    return [grads.get(t.id, Tensor(np.zeros(t.shape))) for t in inputs]


# ---------------------------------------------------------------------------
# parameter registry


class ParameterSet:
    """Ordered registry of trainable leaf tensors.

    The flat-vector layout is the registration order, which is the order the
    owning networks were constructed in.
    """

    def __init__(self):
        self._names: list[str] = []
        self._tensors: dict[str, Tensor] = {}

    def register(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=DTYPE), requires_grad=True, name=name)
        self._names.append(name)
        self._tensors[name] = t
        return t

    def extend(self, other: "ParameterSet", prefix: str = ""):
        for name in other.names:
            t = other[name]
            key = prefix + name
            if key in self._tensors:
                raise KeyError(f"parameter {key!r} already registered")
            self._names.append(key)
            self._tensors[key] = t

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self):
        return (self._tensors[n] for n in self._names)

    def __len__(self):
        return len(self._names)

    @property
    def size(self) -> int:
        return sum(t.size for t in self)

    def shapes(self) -> dict[str, list[int]]:
        return {n: list(self._tensors[n].shape) for n in self._names}

    def flat(self) -> np.ndarray:
        if not self._names:
            return np.zeros(0)
        return np.concatenate([t.data.ravel() for t in self])

    def set_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=DTYPE)
        if vec.shape != (self.size,):
            raise ShapeError(f"expected flat vector of length {self.size}, got {vec.shape}")
        i = 0
        for t in self:
            n = t.size
            t.data = vec[i:i + n].reshape(t.shape).copy()
            i += n

    def unflatten(self, vec: np.ndarray) -> list[np.ndarray]:
        out, i = [], 0
        for t in self:
            out.append(vec[i:i + t.size].reshape(t.shape))
            i += t.size
        return out


def flat_grad(output: Tensor, params: ParameterSet, create_graph: bool = False):
    """Gradient of a scalar as a flat vector in the registry ordering."""
    gs = grad(output, list(params), create_graph=create_graph)
    if create_graph:
        return gs
    return np.concatenate([g.data.ravel() for g in gs]) if gs else np.zeros(0)


def gradient(loss: Tensor, params: ParameterSet) -> np.ndarray:
    return flat_grad(loss, params)


def hessian_vector_product(scalar_fn: Callable[[], Tensor], params: ParameterSet,
                           v: np.ndarray) -> np.ndarray:
    """(d^2 f / d theta^2) v by double backward; the Hessian is never formed.

    ``scalar_fn`` rebuilds the scalar from the current parameter values.
    """
    v = np.asarray(v, dtype=DTYPE)
    if v.shape != (params.size,):
        raise ShapeError(f"vector length {v.shape} does not match {params.size} parameters")
    scalar = scalar_fn()
    gs = grad(scalar, list(params), create_graph=True)
    gv = None
    for g, vi in zip(gs, params.unflatten(v)):
        term = tsum(mul(g, vi))
        gv = term if gv is None else add(gv, term)
    if gv is None or not gv.requires_grad:
        return np.zeros_like(v)
    return flat_grad(gv, params)


def check_finite(x, what: str = "forward pass"):
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced in {what}")
    return x


# ---------------------------------------------------------------------------
# MLP


ACTIVATIONS = {
    "relu": relu,
    "tanh": tanh,
    "identity": lambda x: x,
    "softmax": softmax,
}


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0 or any(h <= 0 for h in self.hidden_sizes):
            raise ValueError(f"layer sizes must be positive: {self}")
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_sizes": list(self.hidden_sizes),
            "output_dim": self.output_dim,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }


class MLP:
    """Fully connected network whose weights live in a ParameterSet.

    Hidden layers use uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; the
    last layer is additionally multiplied by ``final_scale``.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator, final_scale: float = 1.0,
                 params: ParameterSet | None = None, prefix: str = ""):
        self.spec = spec
        self.params = params if params is not None else ParameterSet()
        sizes = [spec.input_dim, *spec.hidden_sizes, spec.output_dim]
        self.layers: list[tuple[Tensor, Tensor]] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(fan_out,))
            if i == len(sizes) - 2:
                w, b = w * final_scale, b * final_scale
            self.layers.append((
                self.params.register(f"{prefix}W{i}", w),
                self.params.register(f"{prefix}b{i}", b),
            ))
        self._hidden = ACTIVATIONS[spec.hidden_activation]
        self._out = ACTIVATIONS[spec.output_activation]

    def __call__(self, x) -> Tensor:
        h = as_tensor(x)
        if h.ndim != 2 or h.shape[1] != self.spec.input_dim:
            raise ShapeError(f"expected input (batch, {self.spec.input_dim}), got {h.shape}")
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = linear(h, w, b)
            h = self._out(h) if i == last else self._hidden(h)
        return check_finite(h, "MLP forward")

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        """Same computation without recording a graph."""
        h = np.asarray(x, dtype=DTYPE)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        if h.shape[1] != self.spec.input_dim:
            raise ShapeError(f"expected input width {self.spec.input_dim}, got {h.shape[1]}")
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w.data + b.data
            h = self._out(h) if i == last else self._hidden(h)
        check_finite(h, "MLP forward")
        return h[0] if squeeze else h


def forward(net: MLP, inputs: dict[str, np.ndarray | Tensor]) -> dict[str, Tensor]:
    """Evaluate ``net`` on each named input batch."""
    return {name: net(x) for name, x in inputs.items()}


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected Adam descent step; returns (new_params, state)."""
    params = np.asarray(params, dtype=DTYPE)
    grad = np.asarray(grad, dtype=DTYPE)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ShapeError(f"adam dimension mismatch: {params.shape}, {grad.shape}, {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


class Adam:
    """Adam bound to a ParameterSet, updating each leaf in place.

    Same arithmetic as ``adam_step`` with the bias corrections folded into
    the step size and epsilon.
    """

    def __init__(self, params: ParameterSet, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros(p.shape) for p in params]
        self._v = [np.zeros(p.shape) for p in params]
        self._buf = [np.zeros(p.shape) for p in params]

    def step(self, grad):
        """Descend along ``grad`` (flat vector or per-leaf list)."""
        if isinstance(grad, np.ndarray):
            if grad.shape != (self.params.size,):
                raise ShapeError(f"gradient length {grad.shape} does not match {self.params.size}")
            grads = self.params.unflatten(grad)
        else:
            grads = [g.data if isinstance(g, Tensor) else g for g in grad]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = np.sqrt(1.0 - b2 ** self.t)
        step = self.lr * c2 / c1
        eps = self.eps * c2
        for p, g, m, v, buf in zip(self.params, grads, self._m, self._v, self._buf):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - b2
            v += buf
            np.sqrt(v, out=buf)
            buf += eps
            np.divide(m, buf, out=buf)
            buf *= step
            p.data -= buf


# ---------------------------------------------------------------------------
# checkpoints: 8-byte little-endian header length, JSON header, float64 LE body


def parameters_to_bytes(params: ParameterSet, meta: dict | None = None) -> bytes:
    """Checkpoint encoding: u64 header length, JSON header, float64 LE values."""
    header = json.dumps({
        "names": params.names,
        "shapes": params.shapes(),
        "meta": meta or {},
    }, sort_keys=True).encode()
    return struct.pack("<Q", len(header)) + header + params.flat().astype("<f8").tobytes()


def save_parameters(path, params: ParameterSet, meta: dict | None = None):
    with open(path, "wb") as fh:
        fh.write(parameters_to_bytes(params, meta))


def load_parameters(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        body = np.frombuffer(fh.read(), dtype="<f8").astype(DTYPE)
    expected = sum(int(np.prod(s)) for s in header["shapes"].values())
    if body.size != expected:
        raise ShapeError(f"checkpoint body has {body.size} values, header implies {expected}")
    return header, body


def soft_update(target: ParameterSet, online: ParameterSet, tau: float):
    """target <- tau * online + (1 - tau) * target."""
    for t, o in zip(target, online):
        t.data *= 1.0 - tau
        t.data += tau * o.data


def copy_values(dst: ParameterSet, src: ParameterSet):
    for d, s in zip(dst, src):
        d.data = s.data.copy()

