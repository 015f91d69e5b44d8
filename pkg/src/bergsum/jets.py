"""Truncated Taylor-jet arithmetic in chart coordinates and their conjugates.

A :class:`Jet` stores the coefficients of the expansion

    f(z0 + u, conj(z0) + v) = sum_{|A| + |B| <= order} c[A, B] * u^A * v^B

around a chart point, where ``A`` runs over multi-indices of the ``n``
holomorphic offsets ``u_1 .. u_n`` and ``B`` over their formal conjugates
``v_1 .. v_n``.  Coefficients are mpmath numbers, so every operation below is
exact up to roundoff at the ambient working precision.  Mixed Wirtinger
partials are recovered as ``A! * B! * c[A, B]``.

This is the derivative engine behind the curvature formulas: products,
reciprocals, logs and exponentials of jets give closed-form derivative jets
for every catalog potential without symbolic algebra or differencing noise.
"""

from __future__ import annotations

import math
from typing import Iterable

from mpmath import mp, mpc

__all__ = ["Jet"]


def _key_degree(key: tuple) -> int:
    return sum(key)


class Jet:
    """Polynomial in the 2n offset variables, truncated at total degree `order`."""

    __slots__ = ("nvars", "order", "coeffs")

    def __init__(self, nvars: int, order: int, coeffs: dict | None = None):
        self.nvars = nvars
        self.order = order
        self.coeffs = coeffs if coeffs is not None else {}

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Jet":
        c = mpc(value)
        if c == 0:
            return cls(nvars, order, {})
        key = (0,) * (2 * nvars)
        return cls(nvars, order, {key: c})

    @classmethod
    def variable(cls, index: int, nvars: int, order: int, anti: bool = False) -> "Jet":
        """The offset u_index (or its conjugate v_index when `anti`)."""
        if order < 1:
            return cls(nvars, order, {})
        key = [0] * (2 * nvars)
        key[index + (nvars if anti else 0)] = 1
        return cls(nvars, order, {tuple(key): mpc(1)})

    @classmethod
    def coordinate(cls, value, index: int, nvars: int, order: int) -> "Jet":
        """Jet of the chart coordinate z_index = value + u_index."""
        return cls.constant(value, nvars, order) + cls.variable(index, nvars, order)

    def copy_with(self, coeffs: dict) -> "Jet":
        return Jet(self.nvars, self.order, coeffs)

    # -- ring operations ----------------------------------------------------

    def __add__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            other = Jet.constant(other, self.nvars, self.order)
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            cur = out.get(key)
            out[key] = c if cur is None else cur + c
        return Jet(self.nvars, min(self.order, other.order), out)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return self.copy_with({k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            other = Jet.constant(other, self.nvars, self.order)
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            c = mpc(other)
            return self.copy_with({k: v * c for k, v in self.coeffs.items()})
        order = min(self.order, other.order)
        out: dict = {}
        for ka, ca in self.coeffs.items():
            da = _key_degree(ka)
            for kb, cb in other.coeffs.items():
                if da + _key_degree(kb) > order:
                    continue
                key = tuple(a + b for a, b in zip(ka, kb))
                prod = ca * cb
                cur = out.get(key)
                out[key] = prod if cur is None else cur + prod
        return Jet(self.nvars, order, out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * other.recip()
        return self * (1 / mpc(other))

    def pow_int(self, k: int) -> "Jet":
        result = Jet.constant(1, self.nvars, self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # -- calculus -----------------------------------------------------------

    def deriv_holo(self, i: int) -> "Jet":
        return self._deriv(i)

    def deriv_anti(self, i: int) -> "Jet":
        return self._deriv(i + self.nvars)

    def _deriv(self, slot: int) -> "Jet":
        out = {}
        for key, c in self.coeffs.items():
            e = key[slot]
            if e == 0:
                continue
            nk = list(key)
            nk[slot] = e - 1
            out[tuple(nk)] = c * e
        return Jet(self.nvars, self.order - 1, out)

    def conjugate(self) -> "Jet":
        """Complex conjugate; swaps holomorphic and antiholomorphic slots."""
        n = self.nvars
        out = {}
        for key, c in self.coeffs.items():
            out[key[n:] + key[:n]] = c.conjugate()
        return self.copy_with(out)

    @property
    def constant_term(self):
        return self.coeffs.get((0,) * (2 * self.nvars), mpc(0))

    def partial(self, alpha: Iterable[int], beta: Iterable[int]):
        """Mixed Wirtinger partial (d/dz)^alpha (d/dzbar)^beta at the base point."""
        key = tuple(alpha) + tuple(beta)
        c = self.coeffs.get(key)
        if c is None:
            return mpc(0)
        fac = 1
        for e in key:
            fac *= math.factorial(e)
        return c * fac

    # -- analytic functions of a jet ----------------------------------------

    def _split_unit(self):
        """Write the jet as c * (1 + w) with w nilpotent; requires c != 0."""
        c = self.constant_term
        if c == 0:
            raise ZeroDivisionError("jet has zero constant term")
        key0 = (0,) * (2 * self.nvars)
        w = self.copy_with({k: v / c for k, v in self.coeffs.items() if k != key0})
        return c, w

    def _nilpotent_powers(self, w: "Jet"):
        powers = []
        acc = w
        for _ in range(self.order):
            if not acc.coeffs:
                break
            powers.append(acc)
            acc = acc * w
        return powers

    def recip(self) -> "Jet":
        c, w = self._split_unit()
        out = Jet.constant(1 / c, self.nvars, self.order)
        sign = -1
        for wq in self._nilpotent_powers(w):
            out = out + wq * (sign / c)
            sign = -sign
        return out

    def log(self) -> "Jet":
        c, w = self._split_unit()
        out = Jet.constant(mp.log(c), self.nvars, self.order)
        for q, wq in enumerate(self._nilpotent_powers(w), start=1):
            out = out + wq * (mpc(-1) ** (q + 1) / q)
        return out

    def exp(self) -> "Jet":
        key0 = (0,) * (2 * self.nvars)
        c = self.constant_term
        w = self.copy_with({k: v for k, v in self.coeffs.items() if k != key0})
        out = Jet.constant(1, self.nvars, self.order)
        fac = mpc(1)
        for q, wq in enumerate(self._nilpotent_powers(w), start=1):
            fac /= q
            out = out + wq * fac
        return out * mp.exp(c)

    def __repr__(self):  # pragma: no cover - debugging aid
        terms = ", ".join(f"{k}: {mp.nstr(c, 8)}" for k, c in sorted(self.coeffs.items()))
        return f"Jet(n={self.nvars}, order={self.order}, {{{terms}}})"
