"""Second-order forward-mode dual numbers over complex scalars and matrices.

A `D2` carries a value, a gradient over `k` seed directions and the full
(symmetric) k x k Hessian.  All model expressions are holomorphic in the
seeded variables (counting fields enter through exp(-i*chi), mean fields
are independent complex coordinates), so complex forward-mode propagation
is exact to machine precision.

`DualMatrix` lifts the same truncated Taylor algebra to dense complex
matrices; it is used to thread tilt derivatives through the
Faddeev-LeVerrier characteristic-polynomial recursion.
"""

from __future__ import annotations

import numpy as np


class D2:
    """Complex scalar with first and second derivatives in k directions."""

    __slots__ = ("val", "g", "h")

    def __init__(self, val, g, h):
        self.val = complex(val)
        self.g = np.asarray(g, dtype=complex)
        self.h = np.asarray(h, dtype=complex)

    # -- construction -------------------------------------------------

    @staticmethod
    def seed(value, index, k):
        g = np.zeros(k, dtype=complex)
        g[index] = 1.0
        return D2(value, g, np.zeros((k, k), dtype=complex))

    @staticmethod
    def const(value, k):
        return D2(value, np.zeros(k, dtype=complex), np.zeros((k, k), dtype=complex))

    @property
    def k(self):
        return self.g.shape[0]

    def _coerce(self, other):
        if isinstance(other, D2):
            return other
        return D2.const(other, self.k)

    # -- ring operations ----------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        return D2(self.val + o.val, self.g + o.g, self.h + o.h)

    __radd__ = __add__

    def __neg__(self):
        return D2(-self.val, -self.g, -self.h)

    def __sub__(self, other):
        o = self._coerce(other)
        return D2(self.val - o.val, self.g - o.g, self.h - o.h)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        h = (self.h * o.val + o.h * self.val
             + np.outer(self.g, o.g) + np.outer(o.g, self.g))
        return D2(self.val * o.val, self.g * o.val + o.g * self.val, h)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        return self * o._reciprocal()

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self):
        iv = 1.0 / self.val
        g = -self.g * iv * iv
        h = (-self.h * iv * iv
             + 2.0 * np.outer(self.g, self.g) * iv ** 3)
        return D2(iv, g, h)

    # -- analytic functions -------------------------------------------

    def _lift(self, f, df, d2f):
        h = self.h * df + np.outer(self.g, self.g) * d2f
        return D2(f, self.g * df, h)

    def exp(self):
        e = np.exp(self.val)
        return self._lift(e, e, e)

    def sqrt(self):
        s = np.sqrt(self.val)  # principal branch
        return self._lift(s, 0.5 / s, -0.25 / (s * self.val))

    def log(self):
        return self._lift(np.log(self.val), 1.0 / self.val, -1.0 / self.val ** 2)

    def __repr__(self):
        return f"D2({self.val!r}, g={self.g!r})"


def dexp(x):
    """exp for D2 or plain numbers."""
    return x.exp() if isinstance(x, D2) else np.exp(x)


def dsqrt(x):
    return x.sqrt() if isinstance(x, D2) else np.sqrt(x)


def value_of(x):
    return x.val if isinstance(x, D2) else complex(x)


class DualMatrix:
    """Dense complex matrix with first/second derivatives in k directions."""

    __slots__ = ("val", "g", "h")

    def __init__(self, val, g, h):
        self.val = val  # (n, n)
        self.g = g      # (k, n, n)
        self.h = h      # (k, k, n, n)

    @staticmethod
    def const(mat, k):
        mat = np.asarray(mat, dtype=complex)
        n = mat.shape[0]
        return DualMatrix(mat.copy(),
                          np.zeros((k, n, n), dtype=complex),
                          np.zeros((k, k, n, n), dtype=complex))

    @staticmethod
    def from_scalar_times(scalar, mat):
        """scalar (D2 or number) times a constant matrix."""
        mat = np.asarray(mat, dtype=complex)
        if not isinstance(scalar, D2):
            raise TypeError("use DualMatrix.const for plain scalars")
        g = scalar.g[:, None, None] * mat[None, :, :]
        h = scalar.h[:, :, None, None] * mat[None, None, :, :]
        return DualMatrix(scalar.val * mat, g, h)

    @property
    def k(self):
        return self.g.shape[0]

    @property
    def n(self):
        return self.val.shape[0]

    def __add__(self, other):
        return DualMatrix(self.val + other.val, self.g + other.g, self.h + other.h)

    def __sub__(self, other):
        return DualMatrix(self.val - other.val, self.g - other.g, self.h - other.h)

    def add_const(self, mat):
        return DualMatrix(self.val + mat, self.g, self.h)

    def scale(self, c):
        return DualMatrix(self.val * c, self.g * c, self.h * c)

    def __matmul__(self, other):
        val = self.val @ other.val
        g = np.einsum("aij,jk->aik", self.g, other.val) \
            + np.einsum("ij,ajk->aik", self.val, other.g)
        h = (np.einsum("abij,jk->abik", self.h, other.val)
             + np.einsum("ij,abjk->abik", self.val, other.h)
             + np.einsum("aij,bjk->abik", self.g, other.g)
             + np.einsum("bij,ajk->abik", self.g, other.g))
        return DualMatrix(val, g, h)

    def trace(self):
        return D2(np.trace(self.val),
                  np.trace(self.g, axis1=1, axis2=2),
                  np.trace(self.h, axis1=2, axis2=3))


def charpoly_coefficients(mat, n_coeffs=None):
    """Characteristic polynomial det(zI - L) of a DualMatrix or ndarray.

    Returns coefficients [a_0, a_1, ..., a_n] (a_n = 1) via the
    Faddeev-LeVerrier recursion; each coefficient is a D2 when the input
    is a DualMatrix.  `n_coeffs` optionally truncates the returned list to
    the lowest orders (the recursion still runs to completion).
    """
    if isinstance(mat, DualMatrix):
        n = mat.n
        k = mat.k
        one = np.eye(n, dtype=complex)
        coeffs = [None] * (n + 1)
        coeffs[n] = D2.const(1.0, k)
        M = DualMatrix.const(np.zeros((n, n)), k)
        c = D2.const(1.0, k)
        for m in range(1, n + 1):
            shifted = DualMatrix(M.val + c.val * one,
                                 M.g + c.g[:, None, None] * one,
                                 M.h + c.h[:, :, None, None] * one)
            M = mat @ shifted
            c = M.trace() * (-1.0 / m)
            coeffs[n - m] = c
        if n_coeffs is not None:
            coeffs = coeffs[:n_coeffs]
        return coeffs
    # plain ndarray path
    A = np.asarray(mat, dtype=complex)
    n = A.shape[0]
    one = np.eye(n, dtype=complex)
    coeffs = np.zeros(n + 1, dtype=complex)
    coeffs[n] = 1.0
    M = np.zeros_like(A)
    c = 1.0 + 0.0j
    for m in range(1, n + 1):
        M = A @ (M + c * one)
        c = -np.trace(M) / m
        coeffs[n - m] = c
    if n_coeffs is not None:
        coeffs = coeffs[:n_coeffs]
    return coeffs
