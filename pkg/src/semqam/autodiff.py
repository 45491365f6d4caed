"""Minimal reverse-mode autodiff on float64 arrays of rank <= 2.

Enough machinery for MLP encoders/decoders, the quantizer estimators, and
every loss term: each op records a backward closure on the result node, and
`backward` replays them in reverse topological order.  Broadcasting is
deliberately narrow: same-shape elementwise, python scalars, and a (N,M)+(M,)
row broadcast in `add` for biases.
"""

from __future__ import annotations

import numbers

import numpy as np


class Tensor:
    __slots__ = ("value", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        if self.value.ndim > 2:
            raise ValueError(f"tensors of rank {self.value.ndim} are not supported")
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _result(value, parents, backward_fn) -> Tensor:
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (numbers.Number, np.ndarray)):
        return Tensor(x)
    raise TypeError(f"cannot treat {type(x).__name__} as a tensor")


def _check_same_shape(op: str, a: Tensor, b: Tensor):
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    row_broadcast = (
        a.value.ndim == 2 and b.value.ndim == 1 and a.value.shape[1] == b.value.shape[0]
    )
    if not row_broadcast and b.value.ndim != 0 and a.value.ndim != 0:
        _check_same_shape("add", a, b)

    def backward_fn(g):
        _accumulate(a, g if a.value.ndim else g.sum())
        if b.value.ndim == 0:
            _accumulate(b, g.sum())
        elif row_broadcast:
            _accumulate(b, g.sum(axis=0))
        else:
            _accumulate(b, g)

    return _result(a.value + b.value, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if b.value.ndim != 0 and a.value.ndim != 0:
        _check_same_shape("sub", a, b)

    def backward_fn(g):
        _accumulate(a, g if a.value.ndim else g.sum())
        _accumulate(b, -(g.sum() if b.value.ndim == 0 else g))

    return _result(a.value - b.value, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    """Elementwise product; either side may be a scalar."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 0 and b.value.ndim != 0:
        _check_same_shape("mul", a, b)

    def backward_fn(g):
        ga = g * b.value
        gb = g * a.value
        _accumulate(a, ga.sum() if a.value.ndim == 0 else ga)
        _accumulate(b, gb.sum() if b.value.ndim == 0 else gb)

    return _result(a.value * b.value, (a, b), backward_fn)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul: shapes {a.value.shape} and {b.value.shape} incompatible"
        )

    def backward_fn(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return _result(a.value @ b.value, (a, b), backward_fn)


# -------------------------------------------------------------- elementwise

def relu(a) -> Tensor:
    a = _as_tensor(a)

    def backward_fn(g):
        _accumulate(a, g * (a.value > 0))

    return _result(np.maximum(a.value, 0.0), (a,), backward_fn)


def log(a) -> Tensor:
    a = _as_tensor(a)

    def backward_fn(g):
        _accumulate(a, g / a.value)

    return _result(np.log(a.value), (a,), backward_fn)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out_value = np.exp(a.value)

    def backward_fn(g):
        _accumulate(a, g * out_value)

    return _result(out_value, (a,), backward_fn)


# --------------------------------------------------------------- reductions

def sum_(a, axis=None) -> Tensor:
    a = _as_tensor(a)

    def backward_fn(g):
        if axis is None:
            _accumulate(a, np.full_like(a.value, g))
        else:
            _accumulate(a, np.expand_dims(g, axis) * np.ones_like(a.value))

    return _result(a.value.sum(axis=axis), (a,), backward_fn)


def mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    n = a.value.size if axis is None else a.value.shape[axis]
    if n == 0:
        raise ValueError("mean: empty input")

    def backward_fn(g):
        if axis is None:
            _accumulate(a, np.full_like(a.value, g / n))
        else:
            _accumulate(a, np.expand_dims(g, axis) * np.ones_like(a.value) / n)

    return _result(a.value.mean(axis=axis), (a,), backward_fn)


# ------------------------------------------------------------ shape & index

def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.value.shape

    def backward_fn(g):
        _accumulate(a, g.reshape(old))

    return _result(a.value.reshape(shape), (a,), backward_fn)


def gather(a, indices) -> Tensor:
    """Select rows of a rank-2 tensor."""
    a = _as_tensor(a)
    if a.value.ndim != 2:
        raise ValueError(f"gather: expected rank-2 tensor, got shape {a.value.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
        raise ValueError(f"gather: index out of range for {a.value.shape[0]} rows")

    def backward_fn(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            np.add.at(a.grad, idx, g)

    return _result(a.value[idx], (a,), backward_fn)


def detach(a) -> Tensor:
    """Stop-gradient: same value, no parents."""
    a = _as_tensor(a)
    return Tensor(a.value.copy())


# ------------------------------------------------------------- nonlinearity

def softmax(a, axis: int) -> Tensor:
    """Shift-invariant softmax (max subtraction applied before exponentiation)."""
    a = _as_tensor(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(a, y * (g - inner))

    return _result(y, (a,), backward_fn)


def squared_distance_pairwise(a, b) -> Tensor:
    """All-pairs squared Euclidean distances between rows of a (N,D) and b (K,D)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if (
        a.value.ndim != 2
        or b.value.ndim != 2
        or a.value.shape[1] != b.value.shape[1]
    ):
        raise ValueError(
            f"squared_distance_pairwise: shapes {a.value.shape} and "
            f"{b.value.shape} incompatible"
        )
    diff2 = (
        (a.value**2).sum(axis=1)[:, None]
        - 2.0 * a.value @ b.value.T
        + (b.value**2).sum(axis=1)[None, :]
    )

    def backward_fn(g):
        _accumulate(a, 2.0 * (g.sum(axis=1)[:, None] * a.value - g @ b.value))
        _accumulate(b, 2.0 * (g.sum(axis=0)[:, None] * b.value - g.T @ a.value))

    return _result(np.maximum(diff2, 0.0), (a, b), backward_fn)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log softmax probability of the true label, in nats."""
    logits = _as_tensor(logits)
    if logits.value.ndim != 2:
        raise ValueError(
            f"cross_entropy: logits must be rank 2, got shape {logits.value.shape}"
        )
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.value.shape
    if labels.shape != (n,):
        raise ValueError(f"cross_entropy: expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"cross_entropy: label out of range for {k} classes")
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - shifted[np.arange(n), labels]

    def backward_fn(g):
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        _accumulate(logits, g * p / n)

    return _result(losses.mean(), (logits,), backward_fn)


# ----------------------------------------------------------------- backward

def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad node reachable from a scalar loss."""
    if loss.value.ndim != 0:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.asarray(1.0)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(tensors) -> None:
    for t in tensors:
        t.grad = None


def gradcheck(build, params, h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-8):
    """Compare reverse-mode gradients against central finite differences.

    `build` is a zero-argument callable returning a scalar Tensor assembled
    from `params` (Tensors with requires_grad).  Returns the worst relative
    error; raises AssertionError beyond rtol/atol.
    """
    zero_grad(params)
    loss = build()
    backward(loss)
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.value.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(build().value)
            flat[i] = orig - h
            down = float(build().value)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            a = an.ravel()[i]
            err = abs(a - fd)
            bound = atol + rtol * max(abs(a), abs(fd))
            if err > bound:
                raise AssertionError(
                    f"gradient mismatch at param element {i}: analytic {a!r}, "
                    f"finite-difference {fd!r}"
                )
            denom = max(abs(fd), abs(a), atol)
            worst = max(worst, err / denom)
    return worst
