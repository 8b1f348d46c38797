"""
Partitions, compositions and exponential Bell polynomials with exact integers.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, prod
from typing import Dict, Iterator, List, Sequence, Tuple

from .utils import DomainError, trim_zeros

Exponents = Tuple[int, ...]


@dataclass(frozen=True)
class PartitionSet:
    """Multiplicity vectors (v_1..v_k) with sum i*v_i = k, lexicographic."""
    k: int
    items: List[Exponents] = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def partitions(k: int) -> PartitionSet:
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    found: List[Exponents] = []

    def fill(part: int, remaining: int, tail: Tuple[int, ...]):
        # choose multiplicities from the largest part downwards
        if part == 0:
            if remaining == 0:
                found.append(tail)
            return
        for mult in range(remaining // part + 1):
            fill(part - 1, remaining - mult * part, (mult,) + tail)

    fill(k, k, ())
    return PartitionSet(k=k, items=sorted(found))


def compositions(k: int, n: int) -> List[Exponents]:
    """Ordered tuples of n nonnegative integers summing to k."""
    if k < 0 or n < 0:
        raise DomainError(f"compositions needs k, n >= 0, got {k}, {n}")
    if n == 0:
        return [()] if k == 0 else []
    if n == 1:
        return [(k,)]
    return [(first,) + rest for first in range(k + 1) for rest in compositions(k - first, n - 1)]


def strict_compositions(n: int, m: int) -> List[Exponents]:
    """Ordered tuples of m positive integers summing to n."""
    if n < 0 or m < 0:
        raise DomainError(f"strict_compositions needs n, m >= 0, got {n}, {m}")
    if m == 0:
        return [()] if n == 0 else []
    if n < m:
        return []
    return [tuple(part + 1 for part in comp) for comp in compositions(n - m, m)]


def multinomial(n: int, parts: Sequence[int]) -> int:
    if sum(parts) != n or any(p < 0 for p in parts):
        raise DomainError(f"Parts {list(parts)} do not form a composition of {n}")
    return factorial(n) // prod(factorial(p) for p in parts)


def set_partitions(items: Sequence) -> Iterator[List[List]]:
    """All set partitions of items; blocks keep the input order."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        yield [[first]] + partition
        for i in range(len(partition)):
            yield partition[:i] + [[first] + partition[i]] + partition[i + 1:]


@dataclass(frozen=True)
class BellPoly:
    """Sparse polynomial in x_1..x_arity with nonzero integer coefficients."""
    terms: Dict[Exponents, int]
    arity: int

    @classmethod
    def build(cls, terms: Dict[Exponents, int], arity: int) -> "BellPoly":
        clean = {}
        for exps, coeff in terms.items():
            if coeff:
                clean[_lift(exps, arity)] = coeff
        return cls(terms=clean, arity=arity)

    @classmethod
    def one(cls, arity: int = 0) -> "BellPoly":
        return cls(terms={(0,) * arity: 1}, arity=arity)

    @classmethod
    def variable(cls, i: int, arity: int) -> "BellPoly":
        exps = [0] * arity
        exps[i - 1] = 1
        return cls(terms={tuple(exps): 1}, arity=arity)

    def lift(self, arity: int) -> "BellPoly":
        if arity == self.arity:
            return self
        return BellPoly.build(self.terms, arity)

    def __add__(self, other: "BellPoly") -> "BellPoly":
        arity = max(self.arity, other.arity)
        out: Dict[Exponents, int] = dict(self.lift(arity).terms)
        for exps, coeff in other.lift(arity).terms.items():
            out[exps] = out.get(exps, 0) + coeff
        return BellPoly.build(out, arity)

    def __mul__(self, other) -> "BellPoly":
        if isinstance(other, int):
            return BellPoly.build({e: c * other for e, c in self.terms.items()}, self.arity)
        arity = max(self.arity, other.arity)
        a, b = self.lift(arity), other.lift(arity)
        out: Dict[Exponents, int] = {}
        for ea, ca in a.terms.items():
            for eb, cb in b.terms.items():
                key = tuple(x + y for x, y in zip(ea, eb))
                out[key] = out.get(key, 0) + ca * cb
        return BellPoly.build(out, arity)

    __rmul__ = __mul__

    def __pow__(self, power: int) -> "BellPoly":
        result = BellPoly.one(self.arity)
        for _ in range(power):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, BellPoly):
            return NotImplemented
        arity = max(self.arity, other.arity)
        return self.lift(arity).terms == other.lift(arity).terms

    def __hash__(self):
        return hash(tuple(sorted((trim_zeros(list(e)), c) for e, c in self.terms.items())))

    def evaluate(self, values: Sequence):
        """Value at x_i = values[i-1]; exact for int or Fraction inputs."""
        if len(values) < self.arity:
            raise DomainError(f"Need {self.arity} values, got {len(values)}")
        total = 0
        for exps, coeff in self.terms.items():
            term = coeff
            for value, e in zip(values, exps):
                if e:
                    term = term * value ** e
            total = total + term
        return total

    def to_text(self, var: str = "x") -> str:
        if not self.terms:
            return "0"
        pieces = []
        # order by total degree, then reversed exponents (x1^3 before x1*x2)
        for exps in sorted(self.terms, key=lambda e: (sum(e), tuple(-x for x in e))):
            coeff = self.terms[exps]
            factors = []
            for i, e in enumerate(exps, start=1):
                if e == 1:
                    factors.append(f"{var}{i}")
                elif e > 1:
                    factors.append(f"{var}{i}^{e}")
            monomial = "*".join(factors)
            if not monomial:
                body = str(abs(coeff))
            elif abs(coeff) == 1:
                body = monomial
            else:
                body = f"{abs(coeff)}*{monomial}"
            sign = "-" if coeff < 0 else "+"
            pieces.append((sign, body))
        text = pieces[0][1] if pieces[0][0] == "+" else f"-{pieces[0][1]}"
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text


def _lift(exps: Exponents, arity: int) -> Exponents:
    if len(exps) > arity:
        if any(exps[arity:]):
            raise DomainError(f"Exponents {exps} do not fit arity {arity}")
        return tuple(exps[:arity])
    return tuple(exps) + (0,) * (arity - len(exps))


@lru_cache(maxsize=None)
def partial_bell(n: int, k: int) -> BellPoly:
    """
    Partial exponential Bell polynomial B_{n,k}(x_1, ..., x_{n-k+1}).

    B_{n,k} = sum_{i=1}^{n-k+1} C(n-1, i-1) x_i B_{n-i,k-1},
    with B_{0,0} = 1, B_{n,0} = 0 (n >= 1) and B_{0,k} = 0 (k >= 1).

    Raises:
        DomainError: if k > n or either index is negative
    """
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"B_(n,k) needs 0 <= k <= n, got n={n}, k={k}")
    arity = n - k + 1 if n else 0
    if n == 0:
        return BellPoly.one(0)
    if k == 0:
        return BellPoly.build({}, arity)
    total = BellPoly.build({}, arity)
    for i in range(1, n - k + 2):
        if k - 1 > n - i:
            continue
        inner = partial_bell(n - i, k - 1)
        total = total + BellPoly.variable(i, arity) * inner * comb(n - 1, i - 1)
    return total.lift(arity)


@lru_cache(maxsize=None)
def complete_bell(n: int) -> BellPoly:
    """B_n(x_1..x_n) = sum_k B_{n,k}; B_0 = 1."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    if n == 0:
        return BellPoly.one(0)
    total = BellPoly.build({}, n)
    for k in range(1, n + 1):
        total = total + partial_bell(n, k).lift(n)
    return total


@lru_cache(maxsize=None)
def complete_bell_recursive(n: int) -> BellPoly:
    """B_{m+1} = sum_i C(m, i) B_{m-i} x_{i+1}."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    if n == 0:
        return BellPoly.one(0)
    m = n - 1
    total = BellPoly.build({}, n)
    for i in range(m + 1):
        total = total + complete_bell_recursive(m - i).lift(n) * BellPoly.variable(i + 1, n) * comb(m, i)
    return total


def bell_number(n: int) -> int:
    return complete_bell(n).evaluate([1] * n)


def bell_diagram_polynomial(d: int, K: int) -> BellPoly:
    """sum over (k_1..k_d) with sum K of prod_m B_m(x_1..x_m)^{k_m}."""
    if d < 1 or K < 0:
        raise DomainError(f"bell diagrams need d >= 1, K >= 0, got d={d}, K={K}")
    total = BellPoly.build({}, d)
    for ks in compositions(K, d):
        term = BellPoly.one(d)
        for m, k_m in enumerate(ks, start=1):
            if k_m:
                term = term * complete_bell(m).lift(d) ** k_m
        total = total + term
    return total


def bell_diagram_count(d: int, K: int) -> int:
    """Number of set-partition diagrams behind the degree-d, level-K truncation."""
    if d < 1 or K < 0:
        raise DomainError(f"bell diagrams need d >= 1, K >= 0, got d={d}, K={K}")
    numbers = [bell_number(m) for m in range(1, d + 1)]
    return sum(prod(b ** k for b, k in zip(numbers, ks)) for ks in compositions(K, d))
