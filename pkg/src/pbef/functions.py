"""Test functions with tracked derivatives.

A :class:`SmoothFunction` carries its value and a tuple of derivative
closures. Sums and products propagate derivatives with the Leibniz rule, so
expressions such as ``f * generator(f)`` stay differentiable without finite
differencing. Polynomials additionally keep their coefficients, which lets
polynomial diffusions evaluate moments and potentials exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

_EPS = np.finfo(float).eps


def _fd_d1(f, h_scale=_EPS ** (1 / 3)):
    def d1(x):
        x = np.asarray(x, dtype=float)
        h = h_scale * np.maximum(1.0, np.abs(x))
        return (f(x + h) - f(x - h)) / (2 * h)

    return d1


def _fd_d2(f, h_scale=_EPS ** (1 / 4)):
    def d2(x):
        x = np.asarray(x, dtype=float)
        h = h_scale * np.maximum(1.0, np.abs(x))
        return (f(x + h) - 2 * f(x) + f(x - h)) / h**2

    return d2


@dataclass(frozen=True, eq=False)
class SmoothFunction:
    """A real function of one variable with derivatives ``derivs[k] = f^(k)``.

    ``derivs[0]`` is the function itself. ``poly`` is set when the function
    is a polynomial; ``finite_difference`` flags derivatives obtained
    numerically rather than analytically.
    """

    derivs: tuple[Callable, ...]
    poly: Polynomial | None = None
    label: str = ""
    growth_note: str = "polynomial growth"
    finite_difference: bool = False
    _const: float | None = field(default=None, repr=False)

    # -- construction -------------------------------------------------
    @classmethod
    def polynomial(cls, coeffs: Sequence[float] | Polynomial, label: str = "") -> SmoothFunction:
        """Polynomial with coefficients in increasing degree order."""
        p = coeffs if isinstance(coeffs, Polynomial) else Polynomial(np.asarray(coeffs, dtype=float))
        p = p.trim() if np.any(p.coef != 0) else Polynomial([0.0])
        derivs = []
        q = p
        for _ in range(5):
            derivs.append(_poly_eval(q))
            q = q.deriv() if q.degree() > 0 else Polynomial([0.0])
        const = float(p.coef[0]) if p.degree() == 0 else None
        return cls(tuple(derivs), poly=p, label=label or _poly_label(p), _const=const)

    @classmethod
    def constant(cls, c: float) -> SmoothFunction:
        return cls.polynomial([float(c)], label=repr(float(c)))

    @classmethod
    def identity(cls) -> SmoothFunction:
        return cls.polynomial([0.0, 1.0], label="x")

    @classmethod
    def monomial(cls, k: int) -> SmoothFunction:
        coeffs = np.zeros(k + 1)
        coeffs[k] = 1.0
        return cls.polynomial(coeffs, label=f"x^{k}" if k != 1 else "x")

    @classmethod
    def from_callable(cls, f: Callable, *derivs: Callable, label: str = "") -> SmoothFunction:
        """Wrap ``f`` with analytic derivatives, or central differences if none are given.

        Finite-difference derivatives are flagged through ``finite_difference``.
        """
        if derivs:
            return cls((f, *derivs), label=label)
        return cls((f, _fd_d1(f), _fd_d2(f)), label=label, finite_difference=True)

    # -- evaluation ---------------------------------------------------
    def __call__(self, x):
        return self.derivs[0](x)

    @property
    def eval(self) -> Callable:
        return self.derivs[0]

    @property
    def d1(self) -> Callable:
        return self.derivative(1)

    @property
    def d2(self) -> Callable:
        return self.derivative(2)

    @property
    def order(self) -> int:
        """Highest derivative order available."""
        return len(self.derivs) - 1

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    def derivative(self, k: int) -> Callable:
        if k > self.order:
            raise ValueError(f"derivative of order {k} not available for {self.label or 'function'}")
        return self.derivs[k]

    def derivative_function(self, k: int = 1) -> SmoothFunction:
        """The k-th derivative as a :class:`SmoothFunction` (losing k orders)."""
        if self.poly is not None:
            return SmoothFunction.polynomial(self.poly.deriv(k) if self.poly.degree() >= k else [0.0])
        return SmoothFunction(self.derivs[k:], label=f"d{k}({self.label})",
                              finite_difference=self.finite_difference)

    # -- algebra ------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if self.poly is not None and other.poly is not None:
            return SmoothFunction.polynomial(self.poly + other.poly)
        n = min(len(self.derivs), len(other.derivs))
        derivs = tuple(_sum(self.derivs[k], other.derivs[k]) for k in range(n))
        return SmoothFunction(derivs, label=f"({self.label} + {other.label})",
                              finite_difference=self.finite_difference or other.finite_difference)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        if np.isscalar(other):
            c = float(other)
            if self.poly is not None:
                return SmoothFunction.polynomial(self.poly * c)
            derivs = tuple(_scaled(d, c) for d in self.derivs)
            return SmoothFunction(derivs, label=f"{c!r}*{self.label}",
                                  finite_difference=self.finite_difference)
        other = _coerce(other)
        if self.poly is not None and other.poly is not None:
            return SmoothFunction.polynomial(self.poly * other.poly)
        n = min(len(self.derivs), len(other.derivs))
        derivs = tuple(_leibniz(self.derivs, other.derivs, k) for k in range(n))
        return SmoothFunction(derivs, label=f"{self.label}*{other.label}",
                              finite_difference=self.finite_difference or other.finite_difference)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return self * (1.0 / float(c))

    def shift(self, c: float) -> SmoothFunction:
        """``f - c``; the centring operation ``f* = f - mu(f)``."""
        return self - float(c)


def _poly_eval(p: Polynomial) -> Callable:
    coef = p.coef.copy()

    def ev(x):
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval(x, coef) + 0.0 * x

    return ev


def _poly_label(p: Polynomial) -> str:
    terms = []
    for k, c in enumerate(p.coef):
        if c == 0:
            continue
        mono = "" if k == 0 else ("x" if k == 1 else f"x^{k}")
        if k == 0:
            terms.append(f"{c:g}")
        elif c == 1:
            terms.append(mono)
        else:
            terms.append(f"{c:g}{mono}")
    return " + ".join(terms) if terms else "0"


def _coerce(obj) -> SmoothFunction:
    if isinstance(obj, SmoothFunction):
        return obj
    if np.isscalar(obj):
        return SmoothFunction.constant(float(obj))
    raise TypeError(f"cannot combine SmoothFunction with {type(obj).__name__}")


def _sum(f, g):
    return lambda x: f(x) + g(x)


def _scaled(f, c):
    return lambda x: c * f(x)


def _leibniz(fd, gd, k):
    def prod(x):
        return sum(comb(k, j) * fd[j](x) * gd[k - j](x) for j in range(k + 1))

    return prod


def check_derivatives(f: SmoothFunction, probes, rtol: float = 1e-6, h: float = 1e-3) -> float:
    """Largest relative mismatch of ``d1``/``d2`` against 5-point central differences.

    Returns the mismatch and raises ``AssertionError`` when it exceeds ``rtol``.
    """
    x = np.asarray(probes, dtype=float)
    hx = h * np.maximum(1.0, np.abs(x))
    fm2, fm1, f0, fp1, fp2 = (f(x + s * hx) for s in (-2, -1, 0, 1, 2))
    fd1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * hx)
    fd2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * hx**2)
    worst = 0.0
    for exact, approx in ((f.d1(x), fd1), (f.d2(x), fd2)):
        scale = np.maximum(1.0, np.abs(exact))
        worst = max(worst, float(np.max(np.abs(exact - approx) / scale)))
    if worst > rtol:
        raise AssertionError(f"derivative mismatch {worst:.3g} exceeds {rtol:g}")
    return worst
