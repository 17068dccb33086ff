"""Sparse multivariate polynomials with exact differentiation.

Frames are stored as polynomial coefficient tables so every Jacobian,
bracket and connection coefficient is an exact symbolic object rather than
a finite-difference approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

Monomial = tuple[int, ...]


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in ``nvars`` real variables, ``{exponents: coefficient}``."""

    nvars: int
    terms: tuple[tuple[Monomial, float], ...] = ()

    @classmethod
    def from_dict(cls, nvars: int, terms: Mapping[Monomial, float]) -> "Polynomial":
        clean = []
        for exps, coef in sorted(terms.items()):
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"monomial {exps} does not have {nvars} exponents")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            if coef != 0.0:
                clean.append((exps, float(coef)))
        return cls(nvars, tuple(clean))

    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls.from_dict(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, k: int, coef: float = 1.0) -> "Polynomial":
        exps = [0] * nvars
        exps[k] = 1
        return cls.from_dict(nvars, {tuple(exps): coef})

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, ())

    def as_dict(self) -> dict[Monomial, float]:
        return dict(self.terms)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return all(not any(e) for e, _ in self.terms)

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def variables(self) -> set[int]:
        """Indices of the variables that actually occur."""
        return {k for exps, _ in self.terms for k, e in enumerate(exps) if e}

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = self.as_dict()
        for exps, coef in other.terms:
            out[exps] = out.get(exps, 0.0) + coef
        return Polynomial.from_dict(self.nvars, out)

    def __neg__(self) -> "Polynomial":
        return self.scale(-1.0)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial | float") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return self.scale(float(other))
        out: dict[Monomial, float] = {}
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial.from_dict(self.nvars, out)

    __rmul__ = __mul__

    def scale(self, c: float) -> "Polynomial":
        return Polynomial.from_dict(self.nvars, {e: c * v for e, v in self.terms})

    def derivative(self, k: int) -> "Polynomial":
        out: dict[Monomial, float] = {}
        for exps, coef in self.terms:
            if exps[k] == 0:
                continue
            new = list(exps)
            new[k] -= 1
            out[tuple(new)] = out.get(tuple(new), 0.0) + coef * exps[k]
        return Polynomial.from_dict(self.nvars, out)

    def __call__(self, x) -> np.ndarray:
        """Evaluate at points ``x`` of shape ``(..., nvars)``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for exps, coef in self.terms:
            term = np.full(x.shape[:-1], coef)
            for k, e in enumerate(exps):
                if e == 1:
                    term = term * x[..., k]
                elif e > 1:
                    term = term * x[..., k] ** e
            out = out + term
        return out

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for exps, coef in self.terms:
            mono = "*".join(
                f"x{k + 1}" + (f"^{e}" if e > 1 else "") for k, e in enumerate(exps) if e
            )
            parts.append(f"{coef:g}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


def polynomial_vector(nvars: int, rows: Iterable[Polynomial | float]) -> tuple[Polynomial, ...]:
    """Coerce a mixed list of constants/polynomials into a polynomial vector."""
    out = []
    for r in rows:
        out.append(r if isinstance(r, Polynomial) else Polynomial.constant(nvars, float(r)))
    return tuple(out)


def pack_table(entries: Iterable[Polynomial], nvars: int):
    """Flatten polynomials into CSR-like arrays for compiled kernels.

    Returns ``(ptr, coef, exps)`` with the terms of entry ``i`` stored in
    ``coef[ptr[i]:ptr[i+1]]`` and ``exps[ptr[i]:ptr[i+1]]``.
    """
    ptr = [0]
    coefs: list[float] = []
    exps: list[Monomial] = []
    for poly in entries:
        for e, c in poly.terms:
            coefs.append(c)
            exps.append(e)
        ptr.append(len(coefs))
    exps_arr = np.array(exps, dtype=np.int64).reshape(len(exps), nvars)
    return np.array(ptr, dtype=np.int64), np.array(coefs, dtype=float), exps_arr
