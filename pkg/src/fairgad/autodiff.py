"""Reverse-mode automatic differentiation over dense float64 tensors.

A dynamic tape records every differentiable operation as it executes; the
graph is rebuilt on each forward pass, so freezing a subnetwork is just a
matter of flipping ``requires_grad`` on its leaves.  Broadcasting is
deliberately narrow: elementwise ops require matching shapes, except that
``add``/``sub`` also accept a row-vector bias or a scalar as their second
argument.  Everything is 64-bit.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "DomainError",
    "backward",
    "matmul",
    "spmm",
    "add",
    "sub",
    "hadamard",
    "div",
    "scale",
    "add_scalar",
    "sigmoid",
    "relu",
    "exp",
    "log",
    "square",
    "sqrt",
    "absolute",
    "clip",
    "bce_with_logits",
    "tsum",
    "tmean",
    "row_sum",
    "frobenius_sq_rows",
    "concat_cols",
    "permute_rows",
    "take_rows",
    "gram",
    "reshape",
    "as_tensor",
    "constant",
    "zero_grads",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class DomainError(ValueError):
    """Raised when an input leaves the mathematical domain of an op."""


class Tensor:
    """Dense float64 array with optional gradient tracking.

    ``grad`` is populated by :func:`backward` for leaves that have
    ``requires_grad`` set; intermediate results acquire ``requires_grad``
    automatically while a tape is active.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view of the same buffer with gradient tracking severed."""
        return Tensor(self.data, requires_grad=False)

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy(), requires_grad=self.requires_grad)
        return t

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; scalars route to the scalar-aware ops.
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    def __radd__(self, other):
        return add_scalar(self, float(other))

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """A non-trainable tensor, for targets and fixed inputs."""
    return Tensor(x, requires_grad=False)


class _Node:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out, parents, backward_fn):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations for one forward pass.

    Nodes are appended in execution order, which is already a topological
    order, so the backward sweep is a single reverse scan that visits each
    node exactly once.
    """

    _stack: list = []

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = Tape._stack.pop()
        assert popped is self
        return False

    @classmethod
    def current(cls):
        return cls._stack[-1] if cls._stack else None

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def _record(out: Tensor, parents: tuple, backward_fn) -> Tensor:
    tape = Tape.current()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape._nodes.append(_Node(out, parents, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Propagate d(loss)/d(leaf) to every ``requires_grad`` leaf on the tape.

    Leaves that do not lie on any path to ``loss`` receive a zero gradient
    rather than ``None``, so optimizers can treat all registered parameters
    uniformly.  Gradients are assigned, not accumulated across calls.
    """
    if loss.data.shape != ():
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    outputs = {id(n.out) for n in tape._nodes}
    if id(loss) not in outputs:
        raise ValueError("loss was not produced on this tape")

    leaves: dict[int, Tensor] = {}
    for node in tape._nodes:
        for p in node.parents:
            if p.requires_grad and id(p) not in outputs:
                leaves[id(p)] = p

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(tape._nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    for key, leaf in leaves.items():
        g = grads.get(key)
        leaf.grad = np.zeros_like(leaf.data) if g is None else np.asarray(g)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def spmm(s, d: Tensor) -> Tensor:
    """Sparse CSR times dense.  The sparse operand is constant data; the
    gradient flows to the dense factor only (via the transposed matrix)."""
    if d.ndim != 2 or s.shape[1] != d.shape[0]:
        raise ShapeError(f"spmm shape mismatch: {s.shape} x {d.shape}")
    csr = s.to_scipy()
    out = Tensor(np.asarray(csr @ d.data))

    def bwd(g):
        return (s.to_scipy_t() @ g,)

    return _record(out, (d,), bwd)


def gram(z: Tensor) -> Tensor:
    """z @ z.T, used by inner-product structure decoders."""
    if z.ndim != 2:
        raise ShapeError(f"gram expects a matrix, got shape {z.shape}")
    out = Tensor(z.data @ z.data.T)

    def bwd(g):
        return ((g + g.T) @ z.data,)

    return _record(out, (z,), bwd)


# ---------------------------------------------------------------------------
# elementwise


def _binary_mode(a: Tensor, b: Tensor) -> str:
    """Classify the allowed add/sub shape pairings."""
    if a.shape == b.shape:
        return "same"
    if b.shape == ():
        return "scalar"
    if a.ndim == 2:
        if b.ndim == 1 and b.shape[0] == a.shape[1]:
            return "row"
        if b.ndim == 2 and b.shape == (1, a.shape[1]):
            return "row"
    raise ShapeError(f"incompatible shapes for elementwise op: {a.shape}, {b.shape}")


def _reduce_to(g: np.ndarray, mode: str, b_shape: tuple) -> np.ndarray:
    if mode == "same":
        return g
    if mode == "scalar":
        return g.sum()
    summed = g.sum(axis=0)
    return summed.reshape(b_shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    mode = _binary_mode(a, b)
    out = Tensor(a.data + b.data)

    def bwd(g):
        ga = g if a.requires_grad else None
        gb = _reduce_to(g, mode, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    mode = _binary_mode(a, b)
    out = Tensor(a.data - b.data)

    def bwd(g):
        ga = g if a.requires_grad else None
        gb = -_reduce_to(g, mode, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)

    def bwd(g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"div shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data / b.data)

    def bwd(g):
        ga = g / b.data if a.requires_grad else None
        gb = -g * a.data / (b.data * b.data) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)

    def bwd(g):
        return (g * c,)

    return _record(out, (a,), bwd)


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + float(c))

    def bwd(g):
        return (g,)

    return _record(out, (a,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    out = Tensor(_sigmoid_stable(x.data))
    y = out.data

    def bwd(g):
        return (g * y * (1.0 - y),)

    return _record(out, (x,), bwd)


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    # Piecewise form avoids overflow in exp for large |x|.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))

    def bwd(g):
        return (g * mask,)

    return _record(out, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.data))
    y = out.data

    def bwd(g):
        return (g * y,)

    return _record(out, (x,), bwd)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log requires strictly positive input")
    out = Tensor(np.log(x.data))

    def bwd(g):
        return (g / x.data,)

    return _record(out, (x,), bwd)


def square(x: Tensor) -> Tensor:
    out = Tensor(x.data * x.data)

    def bwd(g):
        return (2.0 * x.data * g,)

    return _record(out, (x,), bwd)


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainError("sqrt requires nonnegative input")
    out = Tensor(np.sqrt(x.data))
    y = out.data

    def bwd(g):
        return (g / (2.0 * y),)

    return _record(out, (x,), bwd)


def absolute(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.data))
    sign = np.sign(x.data)

    def bwd(g):
        return (g * sign,)

    return _record(out, (x,), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(x.data, lo, hi))
    mask = (x.data > lo) & (x.data < hi)

    def bwd(g):
        return (g * mask,)

    return _record(out, (x,), bwd)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Elementwise binary cross-entropy on raw logits.

    Fusing the sigmoid keeps the loss finite for any logit magnitude; the
    gradient is sigmoid(logit) - target.  Targets are constants.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"bce_with_logits shape mismatch: {logits.shape} vs {t.shape}")
    x = logits.data
    out = Tensor(np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x))))

    def bwd(g):
        return (g * (_sigmoid_stable(x) - t),)

    return _record(out, (logits,), bwd)


# ---------------------------------------------------------------------------
# reductions and structure


def tsum(x: Tensor) -> Tensor:
    if x.size == 0:
        raise ShapeError("sum of an empty tensor")
    out = Tensor(np.sum(x.data))

    def bwd(g):
        return (np.full(x.shape, float(g)),)

    return _record(out, (x,), bwd)


def tmean(x: Tensor) -> Tensor:
    if x.size == 0:
        raise ShapeError("mean of an empty tensor")
    n = x.size
    out = Tensor(np.sum(x.data) / n)

    def bwd(g):
        return (np.full(x.shape, float(g) / n),)

    return _record(out, (x,), bwd)


def row_sum(x: Tensor) -> Tensor:
    if x.ndim != 2 or x.size == 0:
        raise ShapeError(f"row_sum expects a nonempty matrix, got shape {x.shape}")
    out = Tensor(x.data.sum(axis=1))

    def bwd(g):
        return (np.broadcast_to(g[:, None], x.shape).copy(),)

    return _record(out, (x,), bwd)


def frobenius_sq_rows(x: Tensor) -> Tensor:
    """Per-row squared Euclidean norm of a matrix."""
    if x.ndim != 2 or x.size == 0:
        raise ShapeError(f"frobenius_sq_rows expects a nonempty matrix, got shape {x.shape}")
    out = Tensor((x.data * x.data).sum(axis=1))

    def bwd(g):
        return (2.0 * x.data * g[:, None],)

    return _record(out, (x,), bwd)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    p = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))

    def bwd(g):
        ga = g[:, :p] if a.requires_grad else None
        gb = g[:, p:] if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def _check_permutation(perm: np.ndarray, n: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,):
        raise ValueError(f"permutation length {perm.shape} does not match {n} rows")
    seen = np.zeros(n, dtype=bool)
    if np.any(perm < 0) or np.any(perm >= n):
        raise ValueError("permutation index out of range")
    seen[perm] = True
    if not seen.all():
        raise ValueError("permutation contains duplicate indices")
    return perm


def permute_rows(x: Tensor, perm) -> Tensor:
    """Row i of the output is row perm[i] of the input."""
    n = x.shape[0]
    perm = _check_permutation(perm, n)
    out = Tensor(x.data[perm])

    def bwd(g):
        gx = np.empty_like(x.data)
        gx[perm] = g
        return (gx,)

    return _record(out, (x,), bwd)


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather a subset of rows (or vector entries); grad scatters back."""
    idx = np.asarray(idx, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= x.shape[0]):
        raise ValueError("row index out of range")
    out = Tensor(x.data[idx])

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _record(out, (x,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bwd(g):
        return (g.reshape(x.shape),)

    return _record(out, (x,), bwd)
