"""First-order dual numbers with one tangent slot per active input direction.

A ``DualScalar`` carries a complex value plus a fixed-length complex tangent
vector holding d(value)/d(direction_k) for each seeded real input direction.
Arithmetic follows the product and quotient rules exactly; derivatives are
taken with respect to real parameters, so conjugation and real/imag parts are
linear and therefore differentiable slot-wise.

The circuit contraction itself is linear in the state, so tangent tensors ride
through gates unchanged in form; these scalars do the remaining nonlinear work
at the readout (quadratic forms and the normalization quotient).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _coerce(other, width: int) -> "DualScalar":
    if isinstance(other, DualScalar):
        return other
    return DualScalar(complex(other), np.zeros(width, dtype=np.complex128))


@dataclass
class DualScalar:
    value: complex
    tangents: np.ndarray

    @classmethod
    def seed(cls, value: complex, direction: int, width: int) -> "DualScalar":
        """A variable with d(self)/d(direction) = 1."""
        t = np.zeros(width, dtype=np.complex128)
        t[direction] = 1.0
        return cls(complex(value), t)

    @classmethod
    def constant(cls, value: complex, width: int) -> "DualScalar":
        return cls(complex(value), np.zeros(width, dtype=np.complex128))

    @property
    def width(self) -> int:
        return len(self.tangents)

    def __add__(self, other):
        o = _coerce(other, self.width)
        return DualScalar(self.value + o.value, self.tangents + o.tangents)

    __radd__ = __add__

    def __neg__(self):
        return DualScalar(-self.value, -self.tangents)

    def __sub__(self, other):
        o = _coerce(other, self.width)
        return DualScalar(self.value - o.value, self.tangents - o.tangents)

    def __rsub__(self, other):
        return _coerce(other, self.width) - self

    def __mul__(self, other):
        o = _coerce(other, self.width)
        return DualScalar(
            self.value * o.value, self.value * o.tangents + self.tangents * o.value
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _coerce(other, self.width)
        if o.value == 0:
            raise ZeroDivisionError("dual division by zero value part")
        val = self.value / o.value
        return DualScalar(val, (self.tangents - val * o.tangents) / o.value)

    def __rtruediv__(self, other):
        return _coerce(other, self.width) / self

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers are supported")
        out = DualScalar.constant(1.0, self.width)
        for _ in range(n):
            out = out * self
        return out

    def conj(self):
        return DualScalar(np.conj(self.value), np.conj(self.tangents))

    @property
    def real(self) -> "DualScalar":
        return DualScalar(self.value.real, self.tangents.real.astype(np.complex128))

    def exp(self):
        e = np.exp(self.value)
        return DualScalar(e, e * self.tangents)

    def sin(self):
        return DualScalar(np.sin(self.value), np.cos(self.value) * self.tangents)

    def cos(self):
        return DualScalar(np.cos(self.value), -np.sin(self.value) * self.tangents)

    def sqrt(self):
        s = np.sqrt(self.value)
        if s == 0:
            raise ZeroDivisionError("sqrt not differentiable at 0")
        return DualScalar(s, self.tangents / (2.0 * s))
