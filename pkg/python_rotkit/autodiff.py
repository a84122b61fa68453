"""A small reverse-mode differentiation tape over numpy arrays.

Each ``DiffValue`` keeps its value, an adjoint of the same shape and the
parents it was computed from, each paired with the vector-Jacobian product
that maps this node's adjoint to the parent's contribution.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
import numpy.typing as npt

from python_rotkit import projections, so3
from python_rotkit.const import ARCCOS_EPS
from python_rotkit.exceptions import DataError, NumericalError
from python_rotkit.model import FloatArray

_LOGGER = logging.getLogger(__name__)

Vjp = Callable[[FloatArray], FloatArray]


def _unbroadcast(grad: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class DiffValue:
    __slots__ = ("adjoint", "op", "parents", "value")
    # ndarray <op> DiffValue must defer to the reflected DiffValue operator
    __array_ufunc__ = None

    def __init__(
        self,
        value: npt.ArrayLike,
        parents: Sequence[tuple[DiffValue, Vjp]] = (),
        op: str = "leaf",
    ) -> None:
        self.value: FloatArray = np.asarray(value, dtype=np.float64)
        self.adjoint: FloatArray = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.op = op

    def __repr__(self) -> str:
        return f"DiffValue(op={self.op!r}, shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    @property
    def ndim(self) -> int:
        return self.value.ndim

    # arithmetic

    def __add__(self, other: Any) -> DiffValue:
        other = lift(other)
        return DiffValue(
            self.value + other.value,
            [
                (self, lambda g: _unbroadcast(g, self.shape)),
                (other, lambda g: _unbroadcast(g, other.shape)),
            ],
            "add",
        )

    __radd__ = __add__

    def __neg__(self) -> DiffValue:
        return DiffValue(-self.value, [(self, lambda g: -g)], "neg")

    def __sub__(self, other: Any) -> DiffValue:
        return self + (-lift(other))

    def __rsub__(self, other: Any) -> DiffValue:
        return lift(other) + (-self)

    def __mul__(self, other: Any) -> DiffValue:
        other = lift(other)
        return DiffValue(
            self.value * other.value,
            [
                (self, lambda g: _unbroadcast(g * other.value, self.shape)),
                (other, lambda g: _unbroadcast(g * self.value, other.shape)),
            ],
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> DiffValue:
        other = lift(other)
        return DiffValue(
            self.value / other.value,
            [
                (self, lambda g: _unbroadcast(g / other.value, self.shape)),
                (
                    other,
                    lambda g: _unbroadcast(-g * self.value / other.value**2, other.shape),
                ),
            ],
            "div",
        )

    def __rtruediv__(self, other: Any) -> DiffValue:
        return lift(other) / self

    def __pow__(self, exponent: float) -> DiffValue:
        return DiffValue(
            self.value**exponent,
            [(self, lambda g: g * exponent * self.value ** (exponent - 1))],
            "pow",
        )

    def __matmul__(self, other: Any) -> DiffValue:
        other = lift(other)
        return DiffValue(
            self.value @ other.value,
            [
                (self, lambda g: _unbroadcast(g @ np.swapaxes(other.value, -1, -2), self.shape)),
                (other, lambda g: _unbroadcast(np.swapaxes(self.value, -1, -2) @ g, other.shape)),
            ],
            "matmul",
        )

    def __rmatmul__(self, other: Any) -> DiffValue:
        return lift(other) @ self

    # shape manipulation and reductions

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> DiffValue:
        shape = self.shape

        def vjp(g: FloatArray) -> FloatArray:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return DiffValue(self.value.sum(axis=axis, keepdims=keepdims), [(self, vjp)], "sum")

    def mean(self, axis: int | None = None) -> DiffValue:
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) / float(count)

    def reshape(self, *shape: int) -> DiffValue:
        original = self.shape
        return DiffValue(self.value.reshape(*shape), [(self, lambda g: g.reshape(original))], "reshape")

    def swapaxes(self, axis1: int, axis2: int) -> DiffValue:
        return DiffValue(
            np.swapaxes(self.value, axis1, axis2),
            [(self, lambda g: np.swapaxes(g, axis1, axis2))],
            "swapaxes",
        )

    def __getitem__(self, index: Any) -> DiffValue:
        shape = self.shape

        def vjp(g: FloatArray) -> FloatArray:
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return full

        return DiffValue(self.value[index], [(self, vjp)], "getitem")

    # tape

    def backward(self) -> None:
        backward(self)


def lift(x: Any) -> DiffValue:
    """Wrap a constant so it can take part in tape arithmetic."""
    return x if isinstance(x, DiffValue) else DiffValue(x, op="const")


def _topological_order(root: DiffValue) -> list[DiffValue]:
    visiting, done = 1, 2
    state: dict[int, int] = {}
    order: list[DiffValue] = []
    stack: list[tuple[DiffValue, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            state[id(node)] = done
            order.append(node)
            continue
        mark = state.get(id(node))
        if mark == done:
            continue
        if mark == visiting:
            raise NumericalError(f"cycle on the differentiation tape at {node!r}")
        state[id(node)] = visiting
        stack.append((node, True))
        stack.extend((parent, False) for parent, _ in node.parents if state.get(id(parent)) != done)
    return order


def backward(root: DiffValue) -> None:
    """Populate ``adjoint`` on every node reachable from a scalar root."""
    if root.value.size != 1:
        raise DataError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological_order(root)
    for node in order:
        node.adjoint = np.zeros_like(node.value)
    root.adjoint = np.ones_like(root.value)
    for node in reversed(order):
        for parent, vjp in node.parents:
            parent.adjoint = parent.adjoint + vjp(node.adjoint)


# elementwise primitives


def relu(x: DiffValue) -> DiffValue:
    """ReLU with subgradient 0 at 0."""
    mask = x.value > 0.0
    return DiffValue(np.where(mask, x.value, 0.0), [(x, lambda g: g * mask)], "relu")


def sqrt(x: DiffValue) -> DiffValue:
    """Square root whose gradient is taken as 0 at 0."""
    out = np.sqrt(np.maximum(x.value, 0.0))
    positive = out > 0.0
    return DiffValue(
        out,
        [(x, lambda g: np.where(positive, g / (2.0 * np.where(positive, out, 1.0)), 0.0))],
        "sqrt",
    )


def absolute(x: DiffValue) -> DiffValue:
    return DiffValue(np.abs(x.value), [(x, lambda g: g * np.sign(x.value))], "abs")


def arccos(x: DiffValue, eps: float = ARCCOS_EPS) -> DiffValue:
    """arccos of the argument clamped to [-1 + eps, 1 - eps]; no gradient where clamped."""
    clamped = np.clip(x.value, -1.0 + eps, 1.0 - eps)
    inside = clamped == x.value
    return DiffValue(
        np.arccos(clamped),
        [(x, lambda g: np.where(inside, -g / np.sqrt(1.0 - clamped * clamped), 0.0))],
        "arccos",
    )


def minimum(a: DiffValue, b: DiffValue) -> DiffValue:
    pick_a = a.value <= b.value
    return DiffValue(
        np.where(pick_a, a.value, b.value),
        [
            (a, lambda g: _unbroadcast(np.where(pick_a, g, 0.0), a.shape)),
            (b, lambda g: _unbroadcast(np.where(pick_a, 0.0, g), b.shape)),
        ],
        "minimum",
    )


def norm(x: DiffValue, axis: int = -1) -> DiffValue:
    return sqrt((x * x).sum(axis=axis))


def stack(values: Sequence[DiffValue], axis: int = 0) -> DiffValue:
    def make_vjp(index: int) -> Vjp:
        return lambda g: np.take(g, index, axis=axis)

    return DiffValue(
        np.stack([v.value for v in values], axis=axis),
        [(v, make_vjp(i)) for i, v in enumerate(values)],
        "stack",
    )


def concatenate(values: Sequence[DiffValue], axis: int = -1) -> DiffValue:
    bounds = np.cumsum([0, *(v.value.shape[axis] for v in values)])

    def make_vjp(start: int, stop: int) -> Vjp:
        return lambda g: np.take(g, np.arange(start, stop), axis=axis)

    return DiffValue(
        np.concatenate([v.value for v in values], axis=axis),
        [(v, make_vjp(int(bounds[i]), int(bounds[i + 1]))) for i, v in enumerate(values)],
        "concatenate",
    )


def vec(m: DiffValue) -> DiffValue:
    """Column-major flattening of (..., 3, 3) matrices."""
    return m.swapaxes(-1, -2).reshape(*m.shape[:-2], 9)


# rotation primitives with hand-written VJPs


def gso(x: DiffValue) -> DiffValue:
    """Gram-Schmidt rotation from (..., 6) inputs."""
    out = projections.gso(x.value)
    return DiffValue(out, [(x, lambda g: projections.gso_vjp(x.value, g))], "gso")


def svd_plus(x: DiffValue) -> DiffValue:
    """SVD+ rotation from (..., 9) column-major matrix entries."""
    m = so3.unvec(x.value)
    factors = projections.svd3(m)
    out = projections.svd_plus(m, factors)
    return DiffValue(
        out,
        [(x, lambda g: so3.vec(projections.svd_plus_vjp(m, g, factors)))],
        "svd_plus",
    )


def _quaternion_forms() -> FloatArray:
    # R_ij = q^T A_ij q / (q . q) for scalar-first q
    forms = np.zeros((3, 3, 4, 4))
    w, x, y, z = range(4)
    forms[0, 0] = np.diag([1.0, 1.0, -1.0, -1.0])
    forms[1, 1] = np.diag([1.0, -1.0, 1.0, -1.0])
    forms[2, 2] = np.diag([1.0, -1.0, -1.0, 1.0])
    for (i, j), terms in {
        (0, 1): ((x, y, 1.0), (w, z, -1.0)),
        (0, 2): ((x, z, 1.0), (w, y, 1.0)),
        (1, 0): ((x, y, 1.0), (w, z, 1.0)),
        (1, 2): ((y, z, 1.0), (w, x, -1.0)),
        (2, 0): ((x, z, 1.0), (w, y, -1.0)),
        (2, 1): ((y, z, 1.0), (w, x, 1.0)),
    }.items():
        for a, b, sign in terms:
            forms[i, j, a, b] = sign
            forms[i, j, b, a] = sign
    return forms


_QUAT_FORMS = _quaternion_forms()


def quat_to_matrix(q: DiffValue) -> DiffValue:
    """Rotation of a (possibly unnormalized) quaternion, normalization included."""
    quad = np.einsum("ijab,...a,...b->...ij", _QUAT_FORMS, q.value, q.value)
    sq = np.sum(q.value * q.value, axis=-1)
    if np.any(sq <= 0.0):
        raise NumericalError("quat_to_matrix received a zero quaternion")
    s = sq[..., None, None]

    def vjp(g: FloatArray) -> FloatArray:
        weighted = np.einsum("...ij,ijab->...ab", g, _QUAT_FORMS)
        first = 2.0 * np.einsum("...ab,...b->...a", weighted, q.value) / sq[..., None]
        second = 2.0 * np.sum(g * quad, axis=(-2, -1)) / sq**2
        return first - second[..., None] * q.value

    return DiffValue(quad / s, [(q, vjp)], "quat_to_matrix")
