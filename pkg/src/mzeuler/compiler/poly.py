"""Explicit sparse multivariate polynomials with complex coefficients.

Monomials are sorted tuples of variable indices (with repetition), so
``x0 * x2**2`` is ``(0, 2, 2)``.  Used to cross-check the hyper-dual oracle on
small quadratic systems where writing every monomial is affordable.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Sequence

import numpy as np


class PolynomialTooLarge(RuntimeError):
    pass


class PolyFunction:
    __slots__ = ("terms",)
    max_terms = 200_000

    def __init__(self, terms: dict | None = None):
        self.terms: dict[tuple, complex] = {m: c for m, c in (terms or {}).items() if c != 0}
        if len(self.terms) > self.max_terms:
            raise PolynomialTooLarge(f"{len(self.terms)} monomials exceeds {self.max_terms}")

    @classmethod
    def variable(cls, i: int) -> "PolyFunction":
        return cls({(i,): 1.0})

    @classmethod
    def constant(cls, c: complex) -> "PolyFunction":
        return cls({(): c})

    def __add__(self, other: "PolyFunction") -> "PolyFunction":
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return PolyFunction(out)

    def __neg__(self) -> "PolyFunction":
        return PolyFunction({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "PolyFunction") -> "PolyFunction":
        return self + (-other)

    def scale(self, s: complex) -> "PolyFunction":
        return PolyFunction({m: s * c for m, c in self.terms.items()})

    def __mul__(self, other: "PolyFunction") -> "PolyFunction":
        out: dict = defaultdict(complex)
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                out[tuple(sorted(m1 + m2))] += c1 * c2
        return PolyFunction(out)

    def degrees(self) -> set[int]:
        return {len(m) for m in self.terms}

    def diff(self, i: int) -> "PolyFunction":
        out: dict = defaultdict(complex)
        for m, c in self.terms.items():
            k = m.count(i)
            if k:
                j = m.index(i)
                out[m[:j] + m[j + 1:]] += k * c
        return PolyFunction(out)

    def substitute_zero(self, variables: Iterable[int]) -> "PolyFunction":
        dead = set(variables)
        return PolyFunction({m: c for m, c in self.terms.items() if not dead.intersection(m)})

    def evaluate(self, x: Sequence[complex]) -> complex:
        x = np.asarray(x)
        return complex(sum(c * np.prod(x[list(m)]) for m, c in self.terms.items()))

    def lie_derivative(self, rhs: Sequence["PolyFunction"]) -> "PolyFunction":
        """``L f = sum_i R_i df/dx_i``."""
        acc = PolyFunction()
        used = {i for m in self.terms for i in m}
        for i in sorted(used):
            acc = acc + rhs[i] * self.diff(i)
        return acc


def apply_word(word: str, f: PolyFunction, rhs: Sequence[PolyFunction],
               unresolved: Iterable[int]) -> PolyFunction:
    """Apply an operator word such as ``"PLQL"`` (outermost first) to ``f``."""
    unresolved = tuple(unresolved)
    for op in reversed(word):
        if op == "L":
            f = f.lie_derivative(rhs)
        elif op == "P":
            f = f.substitute_zero(unresolved)
        elif op == "Q":
            f = f - f.substitute_zero(unresolved)
        else:
            raise ValueError(f"unknown operator {op!r}")
    return f


def quadratic_system(coeffs: np.ndarray) -> list[PolyFunction]:
    """``R_i = sum_{j,k} C_ijk x_j x_k`` as explicit polynomials."""
    d = coeffs.shape[0]
    out = []
    for i in range(d):
        terms: dict = defaultdict(complex)
        for j in range(d):
            for k in range(d):
                if coeffs[i, j, k] != 0:
                    terms[tuple(sorted((j, k)))] += coeffs[i, j, k]
        out.append(PolyFunction(terms))
    return out
