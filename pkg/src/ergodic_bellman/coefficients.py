"""Closed-form 1-D scalar fields: constant + polynomial + Gaussian bumps.

Every coefficient in the toolkit (diffusion a, control weight ahat, drift b,
potentials V0 and Vbar, supersolution W0) is an instance of this family, so
values and the first two derivatives are exact closed forms, tails are decided
by the leading polynomial term, and configurations serialize to plain JSON.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DEGREE = 4


@dataclass(frozen=True)
class CoefficientModel1D:
    """constant + sum_k c_k x^k (k <= 4) + sum_j A_j exp(-(x-m_j)^2/(2 s_j^2))."""

    constant: float = 0.0
    poly: tuple = ()    # ((degree, coef), ...)
    bumps: tuple = ()   # ((amplitude, center, width), ...)

    def __post_init__(self):
        object.__setattr__(self, "poly",
                           tuple((int(k), float(c)) for k, c in self.poly))
        object.__setattr__(self, "bumps",
                           tuple((float(a), float(m), float(s)) for a, m, s in self.bumps))
        for k, _ in self.poly:
            if not 0 <= k <= MAX_DEGREE:
                raise ValueError(f"polynomial degree {k} outside 0..{MAX_DEGREE}")
        for _, _, s in self.bumps:
            if s <= 0:
                raise ValueError("bump width must be positive")

    def __call__(self, x, order: int = 0):
        return eval_coeff(self, x, order)

    def leading_term(self):
        """(degree, coefficient) of the polynomial tail; bumps vanish at infinity."""
        terms = {}
        for k, c in self.poly:
            terms[k] = terms.get(k, 0.0) + c
        terms[0] = terms.get(0, 0.0) + self.constant
        for k in sorted(terms, reverse=True):
            if terms[k] != 0.0:
                return k, terms[k]
        return 0, 0.0

    def is_constant(self, tol: float = 0.0) -> bool:
        deg, _ = self.leading_term()
        return deg == 0 and not self.bumps and all(
            k == 0 or abs(c) <= tol for k, c in self.poly)

    def shifted(self, alpha: float) -> "CoefficientModel1D":
        return CoefficientModel1D(self.constant + alpha, self.poly, self.bumps)

    def scaled(self, factor: float) -> "CoefficientModel1D":
        return CoefficientModel1D(
            factor * self.constant,
            tuple((k, factor * c) for k, c in self.poly),
            tuple((factor * a, m, s) for a, m, s in self.bumps))

    def plus(self, other: "CoefficientModel1D") -> "CoefficientModel1D":
        return CoefficientModel1D(
            self.constant + other.constant,
            self.poly + other.poly,
            self.bumps + other.bumps)

    def to_dict(self):
        return {"const": self.constant,
                "poly": [[k, c] for k, c in self.poly],
                "bumps": [[a, m, s] for a, m, s in self.bumps]}

    @classmethod
    def from_dict(cls, d) -> "CoefficientModel1D":
        return cls(float(d.get("const", 0.0)),
                   tuple((k, c) for k, c in d.get("poly", ())),
                   tuple((a, m, s) for a, m, s in d.get("bumps", ())))


def constant(value: float) -> CoefficientModel1D:
    return CoefficientModel1D(constant=value)


def polynomial(*terms) -> CoefficientModel1D:
    """polynomial((1, -1.0), (2, 0.5)) -> -x + x^2/2."""
    return CoefficientModel1D(poly=tuple(terms))


def bump(amplitude: float, center: float = 0.0, width: float = 1.0) -> CoefficientModel1D:
    return CoefficientModel1D(bumps=((amplitude, center, width),))


def zero() -> CoefficientModel1D:
    return CoefficientModel1D()


def eval_coeff(c: CoefficientModel1D, x, order: int = 0):
    """Exact value (order 0) or first/second derivative of the stored closed form.

    Vectorized over `x`; scalars in give scalars out.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    xa = np.asarray(x, dtype=float)
    out = np.zeros_like(xa)
    if order == 0:
        out += c.constant
    for k, ck in c.poly:
        if order == 0:
            out += ck * xa**k
        elif order == 1:
            if k >= 1:
                out += ck * k * xa**(k - 1)
        else:
            if k >= 2:
                out += ck * k * (k - 1) * xa**(k - 2)
    for amp, m, s in c.bumps:
        z = (xa - m) / s
        g = amp * np.exp(-0.5 * z * z)
        if order == 0:
            out += g
        elif order == 1:
            out += -g * z / s
        else:
            out += g * (z * z - 1.0) / s**2
    if np.isscalar(x):
        return float(out)
    return out
