"""Sparse real polynomials over dense variable indices.

A monomial is a sorted tuple of variable indices (a multiset), so `x0*x0*x3`
is `(0, 0, 3)` and the constant monomial is `()`. Duplicate monomials are
merged on construction, which gives every polynomial one canonical form.
"""

from __future__ import annotations

import math
from typing import Dict, Iterable, Iterator, Mapping, Sequence, Tuple, Union

Monomial = Tuple[int, ...]
Scalar = Union[int, float]


class Polynomial:
    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, float] | Iterable[Tuple[Monomial, float]] = ()) -> None:
        merged: Dict[Monomial, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for monomial, coef in items:
            key = tuple(sorted(monomial))
            merged[key] = merged.get(key, 0.0) + float(coef)
        self._terms: Tuple[Tuple[Monomial, float], ...] = tuple(
            sorted(((m, c) for m, c in merged.items() if c != 0.0), key=lambda item: (len(item[0]), item[0]))
        )
        self._hash: int | None = None

    @classmethod
    def constant(cls, value: Scalar) -> "Polynomial":
        return cls({(): value})

    @classmethod
    def variable(cls, index: int) -> "Polynomial":
        return cls({(index,): 1.0})

    @property
    def terms(self) -> Tuple[Tuple[Monomial, float], ...]:
        return self._terms

    def __iter__(self) -> Iterator[Tuple[Monomial, float]]:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    # algebra

    @staticmethod
    def _lift(other: "Polynomial | Scalar") -> "Polynomial":
        return other if isinstance(other, Polynomial) else Polynomial.constant(other)

    def __add__(self, other: "Polynomial | Scalar") -> "Polynomial":
        return Polynomial(self._terms + self._lift(other)._terms)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial((m, -c) for m, c in self._terms)

    def __sub__(self, other: "Polynomial | Scalar") -> "Polynomial":
        return self + (-self._lift(other))

    def __rsub__(self, other: "Polynomial | Scalar") -> "Polynomial":
        return self._lift(other) - self

    def __mul__(self, other: "Polynomial | Scalar") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return Polynomial((m, c * other) for m, c in self._terms)
        return Polynomial((m1 + m2, c1 * c2) for m1, c1 in self._terms for m2, c2 in other._terms)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Polynomial":
        result = Polynomial.constant(1.0)
        for _ in range(exponent):
            result = result * self
        return result

    # inspection

    def degree(self, ignore: frozenset = frozenset()) -> int:
        return max((sum(1 for i in m if i not in ignore) for m, _ in self._terms), default=0)

    @property
    def is_affine(self) -> bool:
        return self.degree() <= 1

    @property
    def constant_term(self) -> float:
        if self._terms and self._terms[0][0] == ():
            return self._terms[0][1]
        return 0.0

    def variables(self) -> set[int]:
        return {i for m, _ in self._terms for i in m}

    def linear_coefficients(self) -> Dict[int, float]:
        return {m[0]: c for m, c in self._terms if len(m) == 1}

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for _, c in self._terms)

    def evaluate(self, x: Sequence[float]) -> float:
        total = 0.0
        for monomial, coef in self._terms:
            value = coef
            for i in monomial:
                value *= x[i]
            total += value
        return total

    def reindex(self, mapping: Mapping[int, int]) -> "Polynomial":
        return Polynomial((tuple(mapping[i] for i in m), c) for m, c in self._terms)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._terms)
        return self._hash

    def __repr__(self) -> str:
        if not self._terms:
            return "Polynomial(0)"
        parts = [f"{c:+g}" + "".join(f"*x{i}" for i in m) for m, c in self._terms]
        return "Polynomial(" + " ".join(parts) + ")"


ZERO = Polynomial()
ONE = Polynomial.constant(1.0)
