"""Dense float64 tensors with reverse-mode autodiff, plus a portable RNG.

Everything is backed by numpy arrays. Each operation records a backward
closure on the result; calling ``backward()`` on a scalar walks the graph
in reverse topological order and accumulates gradients into ``.grad`` of
every tracked leaf. Only the operations the rest of the package needs are
implemented: 2-D matrix algebra, a handful of elementwise activations,
log-softmax, and row-wise max/min/sum pooling.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes do not fit an operation."""


class GradCheckError(RuntimeError):
    """Raised when a gradient check cannot be evaluated (non-finite loss)."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference/decoding)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float64 array plus an optional backward-graph record."""

    __slots__ = ("data", "grad", "requires_grad", "_track", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._track = self.requires_grad and _grad_enabled
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed: Optional[np.ndarray] = None):
        """Reverse-mode pass from this tensor; seeds with ones for scalars."""
        if seed is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() needs an explicit seed for shape {self.data.shape}"
                )
            seed = np.ones_like(self.data)
        # Iterative topological sort; graphs from long sequences exceed the
        # default recursion limit.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accum(np.asarray(seed, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic sugar used throughout the model code
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        if other.data.ndim == 1:
            return matvec(self, other)
        return matmul(self, other)


def _result(data: np.ndarray, parents: Sequence[Tensor],
            backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p._track for p in parents):
        out._track = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# binary / unary elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def backward(g):
        if a._track:
            a._accum(g)
        if b._track:
            b._accum(g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def backward(g):
        if a._track:
            a._accum(g)
        if b._track:
            b._accum(-g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    _check_same_shape(a, b, "mul")

    def backward(g):
        if a._track:
            a._accum(g * b.data)
        if b._track:
            b._accum(g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        if a._track:
            a._accum(c * g)

    return _result(a.data * c, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        if a._track:
            a._accum(g * out * (1.0 - out))

    return _result(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        if a._track:
            a._accum(g * (1.0 - out * out))

    return _result(out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = a.data > 0

    def backward(g):
        if a._track:
            a._accum(g * mask)

    return _result(np.where(mask, a.data, 0.0), (a,), backward)


def clip_relu1(a: Tensor) -> Tensor:
    """Elementwise clamp to [0, 1]; subgradient 0 at both hinges."""
    mask = (a.data > 0) & (a.data < 1)

    def backward(g):
        if a._track:
            a._accum(g * mask)

    return _result(np.clip(a.data, 0.0, 1.0), (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        if a._track:
            a._accum(g * out)

    return _result(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    """Natural log; non-positive inputs yield -inf (no exception).

    The -inf sentinel is meant for score adjustments computed outside any
    gradient path; backward treats those coordinates as constant.
    """
    pos = a.data > 0
    out = np.full_like(a.data, -np.inf)
    np.log(a.data, out=out, where=pos)

    def backward(g):
        if a._track:
            a._accum(np.where(pos, g / np.where(pos, a.data, 1.0), 0.0))

    return _result(out, (a,), backward)


def ipow(a: Tensor, b: int) -> Tensor:
    """Integer power x**b, b >= 1."""
    if b < 1 or int(b) != b:
        raise ValueError(f"ipow exponent must be an integer >= 1, got {b}")
    b = int(b)

    def backward(g):
        if a._track:
            a._accum(g * b * a.data ** (b - 1))

    return _result(a.data ** b, (a,), backward)


_ELEMENTWISE_UNARY = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "log": log,
    "exp": exp,
    "clip-relu-1": clip_relu1,
}
_ELEMENTWISE_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Dispatch an elementwise op by code name."""
    if op in _ELEMENTWISE_BINARY:
        if b is None:
            raise ValueError(f"elementwise '{op}' needs two operands")
        return _ELEMENTWISE_BINARY[op](a, b)
    if op in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ValueError(f"elementwise '{op}' takes one operand")
        return _ELEMENTWISE_UNARY[op](a)
    raise ValueError(f"unknown elementwise op '{op}'")


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: shapes {a.data.shape} and {b.data.shape} do not agree"
        )

    def backward(g):
        if a._track:
            a._accum(g @ b.data.T)
        if b._track:
            b._accum(a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def matvec(a: Tensor, x: Tensor) -> Tensor:
    """(m x k) matrix times length-k vector -> length-m vector."""
    if a.data.ndim != 2 or x.data.ndim != 1 or a.data.shape[1] != x.data.shape[0]:
        raise DimensionError(
            f"matvec: shapes {a.data.shape} and {x.data.shape} do not agree"
        )

    def backward(g):
        if a._track:
            a._accum(np.outer(g, x.data))
        if x._track:
            x._accum(a.data.T @ g)

    return _result(a.data @ x.data, (a, x), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.data.shape}")

    def backward(g):
        if a._track:
            a._accum(g.T)

    return _result(a.data.T.copy(), (a,), backward)


# ---------------------------------------------------------------------------
# reductions and reshaping

def log_softmax(a: Tensor) -> Tensor:
    """Numerically stable log-softmax of a vector (max subtraction)."""
    if a.data.ndim != 1 or a.data.size == 0:
        raise DimensionError(f"log_softmax needs a nonempty vector, got {a.data.shape}")
    z = a.data - np.max(a.data)
    out = z - np.log(np.sum(np.exp(z)))

    def backward(g):
        if a._track:
            a._accum(g - np.exp(out) * np.sum(g))

    return _result(out, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    return exp(log_softmax(a))


def _row_extremum(a: Tensor, arg_fn) -> Tensor:
    if a.data.ndim != 2 or a.data.shape[1] < 1:
        raise DimensionError(f"row pooling needs a nonempty matrix, got {a.data.shape}")
    idx = arg_fn(a.data, axis=1)  # first occurrence = lowest column index
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, idx]

    def backward(g):
        if a._track:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, (rows, idx), g)

    return _result(out, (a,), backward)


def row_max(a: Tensor) -> Tensor:
    """Per-row maximum; gradient routes to the first arg-max column."""
    return _row_extremum(a, np.argmax)


def row_min(a: Tensor) -> Tensor:
    """Per-row minimum; gradient routes to the first arg-min column."""
    return _row_extremum(a, np.argmin)


def row_sum(a: Tensor) -> Tensor:
    """Sum over columns of a matrix -> vector."""
    if a.data.ndim != 2:
        raise DimensionError(f"row_sum needs a matrix, got shape {a.data.shape}")

    def backward(g):
        if a._track:
            a._accum(np.broadcast_to(g[:, None], a.data.shape))

    return _result(a.data.sum(axis=1), (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    """Sum of all elements -> scalar."""

    def backward(g):
        if a._track:
            a._accum(np.full_like(a.data, float(g)))

    return _result(np.asarray(a.data.sum()), (a,), backward)


def concat(parts: Iterable[Tensor]) -> Tensor:
    parts = list(parts)
    if any(p.data.ndim != 1 for p in parts) or not parts:
        raise DimensionError("concat needs one or more vectors")
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p._track:
                p._accum(g[lo:hi])

    return _result(np.concatenate([p.data for p in parts]), parts, backward)


def stack_cols(cols: Iterable[Tensor]) -> Tensor:
    """Stack length-H vectors as the columns of an H x I matrix."""
    cols = list(cols)
    if not cols or any(c.data.ndim != 1 for c in cols):
        raise DimensionError("stack_cols needs one or more vectors")

    def backward(g):
        for i, c in enumerate(cols):
            if c._track:
                c._accum(g[:, i])

    return _result(np.stack([c.data for c in cols], axis=1), cols, backward)


def slice_vec(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 1:
        raise DimensionError(f"slice_vec needs a vector, got shape {a.data.shape}")

    def backward(g):
        if a._track:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[lo:hi] += g

    return _result(a.data[lo:hi].copy(), (a,), backward)


def pick(a: Tensor, index: int) -> Tensor:
    """Select one element of a vector -> scalar."""
    if a.data.ndim != 1:
        raise DimensionError(f"pick needs a vector, got shape {a.data.shape}")

    def backward(g):
        if a._track:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[index] += float(g)

    return _result(np.asarray(a.data[index]), (a,), backward)


def row(a: Tensor, index: int) -> Tensor:
    """Select one row of a matrix -> vector (embedding lookup)."""
    if a.data.ndim != 2:
        raise DimensionError(f"row needs a matrix, got shape {a.data.shape}")

    def backward(g):
        if a._track:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[index] += g

    return _result(a.data[index].copy(), (a,), backward)


# ---------------------------------------------------------------------------
# gradient checking

def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               h: float = 1e-5) -> float:
    """Compare reverse-mode gradients of a scalar loss against central
    finite differences, coordinate by coordinate.

    Returns the worst relative error max |analytic - numeric| /
    max(1, |analytic| + |numeric|) over all coordinates of all params.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.data).all():
        raise GradCheckError(f"loss is not finite: {out.data!r}")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = float(f().data)
                flat[i] = orig - h
                f_minus = float(f().data)
                flat[i] = orig
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise GradCheckError(
                        f"non-finite loss during finite differencing at coordinate {i}"
                    )
                numeric = (f_plus - f_minus) / (2.0 * h)
                err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]) + abs(numeric))
                if err > worst:
                    worst = err
    return worst


# ---------------------------------------------------------------------------
# deterministic RNG

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = float(2.0 ** -53)


class Rng:
    """Counter-based 64-bit generator (splitmix64 xorshift-multiply mixer).

    Output word i is a fixed avalanche of ``seed + (i+1) * golden-ratio``,
    so the stream depends only on (seed, counter) and is bit-identical on
    every platform. Counter-based form keeps array fills vectorizable.
    """

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    @staticmethod
    def _mix(z: np.ndarray) -> np.ndarray:
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return self._mix(self.seed + idx * _GOLDEN)

    def next_u64(self) -> int:
        return int(self._words(1)[0])

    def spawn(self, tag: int) -> "Rng":
        """Derive an independent substream keyed by an integer tag."""
        t = np.array([tag & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) * _MIX2
        z = self._mix(self.seed ^ t)
        return Rng(int(z[0]))

    def uniform(self, lo: float = 0.0, hi: float = 1.0, shape=None):
        """Uniform floats in [lo, hi) with 53-bit resolution."""
        n = 1 if shape is None else int(np.prod(shape))
        u = (self._words(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        out = lo + (hi - lo) * u
        if shape is None:
            return float(out[0])
        return out.reshape(shape)

    def integers(self, n: int, size: Optional[int] = None):
        """Uniform integers in [0, n)."""
        if n < 1:
            raise ValueError("integers() needs n >= 1")
        count = 1 if size is None else size
        u = (self._words(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        vals = np.minimum((u * n).astype(np.int64), n - 1)
        if size is None:
            return int(vals[0])
        return vals

    def shuffle(self, items: list):
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items: Sequence):
        return items[self.integers(len(items))]
