"""Vectorized forward-mode automatic differentiation.

A :class:`Dual` bundles an array of values with the Jacobian of every entry
with respect to ``k`` seed directions (tangents live on the trailing axis).
Dynamics, feature, and objective code is written against the small generic
API below (``sin``, ``sum``, ``concat``, operators), so the same code path
produces values on plain ndarrays and exact derivatives on duals.

Seeding one tangent per decision variable of a *single* timestep keeps the
tangent count at the local input dimension; the trajectory structure then
assembles full gradients from these row-local Jacobians.
"""

from __future__ import annotations

import numpy as np


def _wrap(val, jac):
    val = np.asarray(val)
    target = val.shape + (jac.shape[-1],)
    if jac.shape != target:
        jac = np.broadcast_to(jac, target)
    return Dual(val, jac)


class Dual:
    """Array of values with attached forward-mode tangents.

    ``val`` has an arbitrary shape; ``jac`` has shape ``val.shape + (k,)``
    holding d(entry)/d(seed_j).  Instances are immutable by convention.
    """

    __slots__ = ("val", "jac")

    # make ndarray operands defer to the reflected operators below
    __array_ufunc__ = None
    __array_priority__ = 1000.0

    def __init__(self, val, jac):
        self.val = np.asarray(val, dtype=float)
        self.jac = np.asarray(jac, dtype=float)
        if self.jac.shape[:-1] != self.val.shape:
            raise ValueError(
                f"jac shape {self.jac.shape} incompatible with val shape {self.val.shape}"
            )

    @property
    def ntan(self) -> int:
        return self.jac.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual(val={self.val!r}, ntan={self.ntan})"

    # --- elementwise arithmetic -------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return _wrap(self.val + other.val, self.jac + other.jac)
        return _wrap(self.val + other, self.jac)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return _wrap(self.val - other.val, self.jac - other.jac)
        return _wrap(self.val - other, self.jac)

    def __rsub__(self, other):
        return _wrap(other - self.val, -self.jac)

    def __neg__(self):
        return _wrap(-self.val, -self.jac)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return _wrap(
                self.val * other.val,
                self.jac * other.val[..., None] + self.val[..., None] * other.jac,
            )
        other = np.asarray(other)
        return _wrap(self.val * other, self.jac * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            val = self.val * inv
            jac = self.jac * inv[..., None] - (val * inv)[..., None] * other.jac
            return _wrap(val, jac)
        other = np.asarray(other)
        return _wrap(self.val / other, self.jac / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other)
        inv = 1.0 / self.val
        val = other * inv
        return _wrap(val, -(val * inv)[..., None] * self.jac)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only constant exponents are supported")
        val = self.val ** p
        return _wrap(val, (p * self.val ** (p - 1))[..., None] * self.jac)

    # --- linear algebra with constant operands ----------------------------
    def __matmul__(self, other):
        if isinstance(other, Dual):
            raise TypeError("matmul requires one constant operand")
        other = np.asarray(other)
        if other.ndim == 1:
            jac = np.einsum("...nk,n->...k", self.jac, other)
            return Dual(self.val @ other, jac)
        jac = np.swapaxes(np.swapaxes(self.jac, -1, -2) @ other, -1, -2)
        return Dual(self.val @ other, jac)

    def __rmatmul__(self, other):
        if isinstance(other, Dual):
            raise TypeError("matmul requires one constant operand")
        other = np.asarray(other)
        val = other @ self.val
        if self.val.ndim == 1:
            jac = other @ self.jac
        else:
            jac = np.tensordot(other, self.jac, axes=(-1, self.val.ndim - 1))
        return Dual(val, jac)

    # --- structure ---------------------------------------------------------
    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.val[idx], self.jac[idx + (slice(None),)])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Dual(self.val.reshape(shape), self.jac.reshape(shape + (self.ntan,)))


def value(x):
    """Value part of x (identity for plain arrays)."""
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def seed(x) -> Dual:
    """Seed a 1-D vector with one tangent per component."""
    x = np.asarray(x, dtype=float)
    return Dual(x, np.eye(x.shape[0]))


def seed_rows(x) -> Dual:
    """Seed a (rows, n) matrix with per-row identity tangents.

    Every row gets its own n seed directions, so downstream Jacobians are
    d(output row)/d(input row) — the row-local derivative used by the
    trajectory structure.
    """
    x = np.asarray(x, dtype=float)
    rows, n = x.shape
    jac = np.broadcast_to(np.eye(n), (rows, n, n)).copy()
    return Dual(x, jac)


def _unary(fn, dfn):
    def op(x):
        if isinstance(x, Dual):
            return _wrap(fn(x.val), dfn(x.val)[..., None] * x.jac)
        return fn(x)

    return op


sin = _unary(np.sin, np.cos)
cos = _unary(np.cos, lambda v: -np.sin(v))
exp = _unary(np.exp, np.exp)
log = _unary(np.log, lambda v: 1.0 / v)
sqrt = _unary(np.sqrt, lambda v: 0.5 / np.sqrt(v))
tanh = _unary(np.tanh, lambda v: 1.0 - np.tanh(v) ** 2)


def sum(x, axis=None):  # noqa: A001 - mirrors np.sum for generic code
    if not isinstance(x, Dual):
        return np.sum(x, axis=axis)
    if axis is None:
        axes = tuple(range(x.val.ndim))
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % x.val.ndim for a in axes)
    return Dual(np.sum(x.val, axis=axes), np.sum(x.jac, axis=axes))


def concat(parts, axis=-1):
    """Concatenate duals and/or plain arrays; plain parts get zero tangents."""
    duals = [p for p in parts if isinstance(p, Dual)]
    if not duals:
        return np.concatenate(parts, axis=axis)
    k = duals[0].ntan
    vals, jacs = [], []
    for p in parts:
        if isinstance(p, Dual):
            if p.ntan != k:
                raise ValueError("mismatched tangent counts in concat")
            vals.append(p.val)
            jacs.append(p.jac)
        else:
            arr = np.asarray(p, dtype=float)
            vals.append(arr)
            jacs.append(np.zeros(arr.shape + (k,)))
    val = np.concatenate(vals, axis=axis)
    jac_axis = axis if axis >= 0 else axis - 1
    return Dual(val, np.concatenate(jacs, axis=jac_axis))
