"""Reverse-mode differentiation over a dynamically recorded tape.

Values are float64 numpy arrays wrapped in :class:`Tensor`.  Operations on
tensors that require gradients are appended to the active :class:`Graph`
(thread-local), and :func:`backward` replays the tape in reverse.  Outside an
active graph, or when no input requires a gradient, operations are plain numpy
evaluations with no recording cost beyond the wrapper.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from collections.abc import Callable, Iterable, Iterator, Sequence

import numpy as np

DTYPE = np.float64

class _State(threading.local):
    graph = None


_local = _State()


class Tensor:
    """A float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_is_leaf", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._is_leaf = True
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    # operator sugar; everything routes through the functional ops below
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _raise_not_scalar(t: Tensor):
    raise ValueError(f"tensor of shape {t.shape} is not a scalar")


def as_tensor(x) -> Tensor:
    return x if x.__class__ is Tensor else Tensor(x)


class Graph:
    """Operations recorded in execution order for one forward pass.

    Use as a context manager; it becomes the recording target for the
    current thread until the block exits.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._prev: Graph | None = None

    def __enter__(self) -> Graph:
        self._prev = _local.graph
        _local.graph = self
        return self

    def __exit__(self, *exc) -> None:
        _local.graph = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        for node in self.nodes:
            node._parents = ()
            node._backward = None
        self.nodes.clear()


def current_graph() -> Graph | None:
    return _local.graph


def _plain(out_data: np.ndarray) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    out._is_leaf = False
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    return out


def _record(out_data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    out._is_leaf = False
    graph = _local.graph
    if graph is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        graph.nodes.append(out)
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t._is_leaf:
        # leaf grads are owned buffers, safe to update in place
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g
    elif t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(graph: Graph, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every leaf's ``grad`` and clear the graph."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
        for node in reversed(graph.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
            node.grad = None
    graph.clear()


# ---------------------------------------------------------------------------
# plain numerics
# ---------------------------------------------------------------------------


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    z = np.exp(v - v.max())
    return z / z.sum()


def log_softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ValueError("log_softmax of an empty vector")
    shifted = v - v.max()
    return shifted - np.log(np.exp(shifted).sum())


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=DTYPE)))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


# ---------------------------------------------------------------------------
# differentiable ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if _local.graph is None:
        return _plain(a.data + b.data)

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return _record(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(-g, b.shape))

    return _record(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    """Element-wise product with numpy broadcasting (scalar * vector included)."""
    a, b = as_tensor(a), as_tensor(b)
    if _local.graph is None:
        return _plain(a.data * b.data)

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g * a.data, b.shape))

    return _record(a.data * b.data, (a, b), bw)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.data * c, (a,), lambda g: _acc(a, g * c))


def one_minus(a) -> Tensor:
    a = as_tensor(a)
    return _record(1.0 - a.data, (a,), lambda g: _acc(a, -g))


def matmul(a, b) -> Tensor:
    """``a @ b`` for 1-D and 2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if _local.graph is None:
        return _plain(ad @ bd)

    def bw(g):
        if a.requires_grad:
            if ad.ndim == 1 and bd.ndim == 1:
                ga = g * bd
            elif ad.ndim == 1:
                ga = bd @ g
            elif bd.ndim == 1:
                ga = g[:, None] * bd
            else:
                ga = g @ bd.T
            _acc(a, ga)
        if b.requires_grad:
            if ad.ndim == 1 and bd.ndim == 1:
                gb = g * ad
            elif ad.ndim == 1:
                gb = ad[:, None] * g
            elif bd.ndim == 1:
                gb = ad.T @ g
            else:
                gb = ad.T @ g
            _acc(b, gb)

    return _record(ad @ bd, (a, b), bw)


def affine(*pairs: tuple[Tensor, Tensor]) -> Tensor:
    """Sum of matrix-vector products ``W1 @ x1 + W2 @ x2 + ...`` as one node."""
    if _local.graph is None:
        w, x = pairs[0]
        out = w.data @ as_tensor(x).data
        for w, x in pairs[1:]:
            out += w.data @ as_tensor(x).data
        return _plain(out)
    ws = [as_tensor(w) for w, _ in pairs]
    xs = [as_tensor(x) for _, x in pairs]
    out = ws[0].data @ xs[0].data
    for w, x in zip(ws[1:], xs[1:]):
        out = out + w.data @ x.data

    def bw(g):
        for w, x in zip(ws, xs):
            if w.requires_grad:
                _acc(w, g[:, None] * x.data)
            if x.requires_grad:
                _acc(x, w.data.T @ g)

    parents = [t for pair in zip(ws, xs) for t in pair]
    return _record(out, parents, bw)


def t_sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    if _local.graph is None:
        return _plain(s)
    return _record(np.asarray(s, dtype=DTYPE), (a,), lambda g: _acc(a, g * s * (1.0 - s)))


def t_tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    if _local.graph is None:
        return _plain(y)
    return _record(y, (a,), lambda g: _acc(a, g * (1.0 - y * y)))


def t_softmax(a) -> Tensor:
    a = as_tensor(a)
    y = softmax(a.data)

    def bw(g):
        _acc(a, y * (g - np.dot(g, y)))

    return _record(y, (a,), bw)


def concat(parts: Sequence) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if _local.graph is None:
        return _plain(np.concatenate([p.data for p in parts]))
    sizes = [p.size for p in parts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            _acc(p, g[lo:hi])

    return _record(np.concatenate([p.data for p in parts]), parts, bw)


def stack(rows: Sequence) -> Tensor:
    rows = [as_tensor(r) for r in rows]

    def bw(g):
        for i, r in enumerate(rows):
            _acc(r, g[i])

    return _record(np.stack([r.data for r in rows]), rows, bw)


def take_rows(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; the gradient scatters back into those rows only."""
    ids = np.asarray(ids, dtype=np.intp)
    n_rows = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
        raise IndexError(f"row id out of range for table with {n_rows} rows: {ids.tolist()}")

    def bw(g):
        if table._is_leaf:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)
        else:
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            _acc(table, full)

    return _record(table.data[ids], (table,), bw)


def take_row(table: Tensor, i: int) -> Tensor:
    n_rows = table.shape[0]
    if not 0 <= i < n_rows:
        raise IndexError(f"row id {i} out of range for table with {n_rows} rows")

    def bw(g):
        if table._is_leaf:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            table.grad[i] += g
        else:
            full = np.zeros_like(table.data)
            full[i] = g
            _acc(table, full)

    return _record(table.data[i], (table,), bw)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _record(a.data.T, (a,), lambda g: _acc(a, g.T))


def dot(a, b) -> Tensor:
    return matmul(a, b)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.asarray(a.data.sum()), (a,), lambda g: _acc(a, np.broadcast_to(g, a.shape).copy()))


def sum_squares(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.asarray(np.sum(a.data * a.data)), (a,), lambda g: _acc(a, 2.0 * g * a.data))


def nll_of_logits(logits, target: int) -> Tensor:
    """``-log softmax(logits)[target]`` fused, returning a scalar tensor."""
    logits = as_tensor(logits)
    logp = log_softmax(logits.data)

    def bw(g):
        grad = np.exp(logp)
        grad[target] -= 1.0
        _acc(logits, g * grad)

    return _record(np.asarray(-logp[target]), (logits,), bw)


def add_n(terms: Sequence) -> Tensor:
    terms = [as_tensor(t) for t in terms]
    out = terms[0].data
    for t in terms[1:]:
        out = out + t.data

    def bw(g):
        for t in terms:
            _acc(t, _unbroadcast(g, t.shape))

    return _record(np.asarray(out), terms, bw)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


class ParamStore:
    """Named trainable tensors, each with a same-shaped gradient buffer."""

    def __init__(self, seed: int = 0):
        self.rng_seed = seed
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape: tuple[int, ...], init: str | np.ndarray = "uniform", scale: float = 0.08) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        if isinstance(init, np.ndarray):
            data = np.array(init, dtype=DTYPE).reshape(shape)
        elif init == "uniform":
            data = self.rng.uniform(-scale, scale, size=shape)
        elif init == "zeros":
            data = np.zeros(shape, dtype=DTYPE)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data, requires_grad=True, name=name)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = np.zeros_like(p.data)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self._params[k].data = v.copy()

    def global_norm(self, grads: bool = False) -> float:
        total = 0.0
        for p in self._params.values():
            arr = p.grad if grads else p.data
            total += float(np.sum(arr * arr))
        return float(np.sqrt(total))

    def n_values(self) -> int:
        return sum(p.size for p in self._params.values())


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheck:
    max_error: float
    per_param: dict[str, float]
    ok: bool

    def worst(self) -> str:
        return max(self.per_param, key=self.per_param.get) if self.per_param else ""


def grad_check(
    f: Callable[[], Tensor],
    store: ParamStore,
    h: float = 1e-5,
    tol: float = 1e-4,
    names: Sequence[str] | None = None,
    deterministic: bool = True,
) -> GradCheck:
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` must build its forward pass from ``store`` and return a scalar
    tensor.  For every parameter tensor the numeric gradient is formed
    coordinate by coordinate and compared as a whole::

        err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)

    with Euclidean norms over the tensor's entries.  ``ok`` on the result is
    ``max_error < tol``.
    """
    if not deterministic:
        raise ValueError("grad_check needs a deterministic objective (disable dropout)")

    store.zero_grad()
    with Graph() as g:
        loss = f()
    backward(g, loss)
    analytic = {k: p.grad.copy() for k, p in store.items()}

    per_param: dict[str, float] = {}
    for name in names if names is not None else store.names():
        flat = store[name].data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * h)
        ana = analytic[name].reshape(-1)
        denom = max(np.linalg.norm(ana), np.linalg.norm(numeric), 1e-8)
        per_param[name] = float(np.linalg.norm(ana - numeric) / denom)
    store.zero_grad()
    worst = max(per_param.values()) if per_param else 0.0
    return GradCheck(worst, per_param, worst < tol)
