"""
Exact residue engine for the autocorrelation-ratio integrand.

Every zeta factor is expanded around a base point as
    zeta(1 + base + v) / zeta(1 + base) = sum_m (zeta^(m)/zeta)(1 + base) v^m / m!
with the ratios zeta^(m)/zeta kept as formal symbols. Series live in a sympy
polynomial ring over QQ whose generators are the shift variables, the ratio
symbols and one A-tag marker per shift variable; products are truncated per
shift variable with the ring_series helpers.
"""
import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial, prod
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import sympy
from sympy.polys.domains import QQ
from sympy.polys.ring_series import rs_mul, rs_trunc
from sympy.polys.rings import PolyElement, PolyRing, ring

from .utils import MAX_RESIDUE_WEIGHT, DomainError, InconsistencyError, ResourceError, trim_zeros

logger = logging.getLogger(__name__)

BASES = ("SU", "AS", "BU")


@dataclass(frozen=True)
class RatioSymbol:
    """zeta^(order)/zeta evaluated at the base point."""
    base: str
    order: int

    def __post_init__(self):
        if self.base not in BASES:
            raise DomainError(f"Unknown base '{self.base}', expected one of {BASES}")
        if self.order < 1:
            raise DomainError(f"Symbol order must be >= 1, got {self.order}")

    def __str__(self):
        return f"{self.base}{self.order}"

    @property
    def symbol(self) -> sympy.Symbol:
        return sympy.Symbol(str(self))


def _qq(value):
    value = Fraction(value)
    return QQ(value.numerator, value.denominator)


def _fraction(value) -> Fraction:
    return Fraction(int(value.numerator), int(value.denominator))


@lru_cache(maxsize=None)
def series_ring(variables: Tuple[str, ...], order: int) -> PolyRing:
    """QQ[shift variables, SU1..SU_order, AS1.., BU1.., A-tag markers]."""
    names = list(variables)
    names += [f"{base}{m}" for base in BASES for m in range(1, order + 1)]
    names += [f"A_{v}" for v in variables]
    R, *_ = ring([sympy.Symbol(name) for name in names], QQ)
    return R


@dataclass
class TruncatedSeries:
    """
    Multivariate Taylor series in shift variables with per-variable caps.

    The coefficients are polynomials over QQ in the ratio symbols (up to order
    `order` at each base) and the A-tag markers.
    """
    variables: Tuple[str, ...]
    caps: Tuple[int, ...]
    order: int
    poly: Optional[PolyElement] = None
    ring: PolyRing = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.caps = tuple(self.caps)
        self.ring = series_ring(self.variables, self.order)
        if self.poly is None:
            self.poly = self.ring.zero

    # ---- construction -------------------------------------------------
    def _new(self, poly: PolyElement) -> "TruncatedSeries":
        return TruncatedSeries(self.variables, self.caps, self.order, poly)

    def unit_poly(self, coeff: Fraction = Fraction(1)) -> PolyElement:
        return self.ring.ground_new(_qq(coeff))

    def symbol_poly(self, base: str, order: int, coeff: Fraction = Fraction(1)) -> PolyElement:
        if order == 0:
            return self.unit_poly(coeff)
        if order > self.order:
            raise InconsistencyError(f"Symbol order {order} exceeds ring order {self.order}")
        position = len(self.variables) + BASES.index(base) * self.order + order - 1
        return self.ring.gens[position] * _qq(coeff)

    @classmethod
    def one(cls, variables: Sequence[str], caps: Sequence[int], order: int) -> "TruncatedSeries":
        series = cls(tuple(variables), tuple(caps), order)
        series.poly = series.ring.one
        return series

    def linear_form(self, shift_vars: Iterable[str]) -> "TruncatedSeries":
        """Series of V = sum of the given variables."""
        poly = self.ring.zero
        for name in shift_vars:
            i = self.variables.index(name)
            if self.caps[i]:
                poly = poly + self.ring.gens[i]
        return self._new(poly)

    # ---- arithmetic ---------------------------------------------------
    def _truncated_product(self, a: PolyElement, b: PolyElement) -> PolyElement:
        if not self.variables:
            return a * b
        gens = self.ring.gens
        product = rs_mul(a, b, gens[0], self.caps[0] + 1)
        for i in range(1, len(self.variables)):
            product = rs_trunc(product, gens[i], self.caps[i] + 1)
        return product

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return self._new(self.poly + other.poly)

    def scale(self, factor) -> "TruncatedSeries":
        """Multiply by a rational or by a polynomial in the ratio symbols."""
        if not isinstance(factor, PolyElement):
            factor = _qq(factor)
        return self._new(self.poly * factor)

    def __mul__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return self._new(self._truncated_product(self.poly, other.poly))

    def __pow__(self, power: int) -> "TruncatedSeries":
        if power < 0:
            return self.inverse() ** (-power)
        result = TruncatedSeries.one(self.variables, self.caps, self.order)
        base = self
        while power:
            if power & 1:
                result = result * base
            power >>= 1
            if power:
                base = base * base
        return result

    def max_degree(self) -> int:
        return sum(self.caps)

    def inverse(self) -> "TruncatedSeries":
        """
        1/s = sum_k (-T)^k for s = 1 + T.

        Raises:
            DomainError: if the constant term is not the unit
        """
        if self.coefficient((0,) * len(self.variables)) != self.ring.one:
            raise DomainError("Series inversion needs constant term 1")
        tail = self.ring.one - self.poly
        result = self.ring.one
        term = self.ring.one
        for _ in range(self.max_degree()):
            term = self._truncated_product(term, tail)
            if not term:
                break
            result = result + term
        return self._new(result)

    def coefficient(self, exps: Sequence[int]) -> PolyElement:
        """Coefficient of prod v_i^e_i as a polynomial in the remaining generators."""
        n = len(self.variables)
        exps = tuple(exps)
        picked = {(0,) * n + monom[n:]: coeff for monom, coeff in self.poly.items() if monom[:n] == exps}
        return self.ring.from_dict(picked)


def shifted_zeta_factor(base: str, shift_vars: Sequence[str], sign: int, power: int,
                        order_caps: Mapping[str, int], order: Optional[int] = None) -> TruncatedSeries:
    """
    Series of (zeta(1 + base + V)/zeta(1 + base))^(sign * power), V = sum(shift_vars).

    Args:
        base: 'SU', 'AS' or 'BU'
        shift_vars: variables entering the shift
        sign: +1 for a numerator factor, -1 for a denominator factor
        power: positive multiplicity
        order_caps: truncation order of every variable of the ring
        order: highest symbol order the ring tracks (defaults to the total cap)

    Returns:
        TruncatedSeries over all variables of order_caps
    """
    if power < 1:
        raise DomainError(f"power must be >= 1, got {power}")
    if sign not in (1, -1):
        raise DomainError(f"sign must be +1 or -1, got {sign}")
    variables = tuple(order_caps)
    caps = tuple(order_caps[v] for v in variables)
    if order is None:
        order = max(1, sum(caps))
    unit = TruncatedSeries.one(variables, caps, order)
    shift = unit.linear_form(shift_vars)
    reach = sum(order_caps[v] for v in shift_vars)

    factor = unit
    shift_power = unit
    for m in range(1, reach + 1):
        shift_power = shift_power * shift
        if not shift_power.poly:
            break
        factor = factor + shift_power.scale(unit.symbol_poly(base, m, Fraction(1, factorial(m))))
    if sign < 0:
        factor = factor.inverse()
    return factor ** power if power > 1 else factor


def arithmetic_factor_series(order_caps: Mapping[str, int], order: int) -> TruncatedSeries:
    """Formal A(v) = sum_idx A^(idx) v^idx / idx!, each coefficient marked by A-tag exponents idx."""
    variables = tuple(order_caps)
    caps = tuple(order_caps[v] for v in variables)
    series = TruncatedSeries(variables, caps, order)
    symbols = (0,) * (len(BASES) * order)
    terms = {}
    for exps in itertools.product(*(range(c + 1) for c in caps)):
        terms[exps + symbols + exps] = _qq(Fraction(1, prod(factorial(e) for e in exps)))
    series.poly = series.ring.from_dict(terms)
    return series


ExpansionKey = Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]


@dataclass(frozen=True)
class RatioExpansion:
    """
    Exact combination of monomials in the ratio symbols.

    Keys are (k, l, m, tag): exponent vectors of SU_j, AS_j, BU_j (trailing
    zeros trimmed) and the A-derivative multi-index (() when A is not
    differentiated). `sign` is the residue sign (-1)^(sum q l_q + sum q lbar_q),
    kept apart from the coefficients.
    """
    terms: Dict[ExpansionKey, Fraction]
    sign: int = 1
    ell: Tuple[int, ...] = ()
    ellbar: Tuple[int, ...] = ()

    def __len__(self):
        return len(self.terms)

    def untagged(self) -> Dict[ExpansionKey, Fraction]:
        return {key: c for key, c in self.terms.items() if not any(key[3])}

    def coefficient(self, k=(), l=(), m=(), tag=()) -> Fraction:
        return self.terms.get((trim_zeros(list(k)), trim_zeros(list(l)), trim_zeros(list(m)), tuple(tag)),
                              Fraction(0))

    def swapped(self) -> "RatioExpansion":
        """Exchange the AS and BU sides (and the z/w halves of A-tags)."""
        n_z = sum(self.ell)
        terms = {}
        for (k, l, m, tag), coeff in self.terms.items():
            new_tag = (tag[n_z:] + tag[:n_z]) if tag else ()
            terms[(k, m, l, new_tag)] = coeff
        return RatioExpansion(terms, self.sign, self.ellbar, self.ell)

    def sorted_items(self) -> List[Tuple[ExpansionKey, Fraction]]:
        return sorted(self.terms.items(), key=lambda item: (item[0][3], item[0][0], item[0][1], item[0][2]))

    def as_poly(self) -> sympy.Poly:
        """
        The expansion as a sympy Poly over QQ.

        Generators are the ratio symbols SU_j, AS_j, BU_j that occur, followed
        by one symbol A(tag) per distinct A-tag.
        """
        tags = sorted({key[3] for key in self.terms if key[3]})
        orders = [max((len(key[i]) for key in self.terms), default=0) for i in range(3)]
        gens = [RatioSymbol(base, j).symbol for base, n in zip(BASES, orders) for j in range(1, n + 1)]
        gens += [sympy.Symbol("A(" + ",".join(str(t) for t in tag) + ")") for tag in tags]
        if not gens:
            gens = [RatioSymbol("SU", 1).symbol]
        terms = {}
        for (k, l, m, tag), coeff in self.terms.items():
            monom = []
            for vector, n in zip((k, l, m), orders):
                monom += list(vector) + [0] * (n - len(vector))
            monom += [1 if t == tag else 0 for t in tags]
            monom += [0] * (len(gens) - len(monom))
            terms[tuple(monom)] = sympy.Rational(coeff.numerator, coeff.denominator)
        return sympy.Poly.from_dict(terms, *gens, domain=QQ)

    def to_json(self) -> List[Dict]:
        return [
            {
                "coeff": str(coeff),
                "su": list(k),
                "as": list(l),
                "bu": list(m),
                "aTag": list(tag),
            }
            for (k, l, m, tag), coeff in self.sorted_items()
        ]

    def to_text(self) -> str:
        lines = []
        for (k, l, m, tag), coeff in self.sorted_items():
            factors = []
            for base, vector in zip(BASES, (k, l, m)):
                for j, e in enumerate(vector, start=1):
                    if e == 1:
                        factors.append(f"{base}{j}")
                    elif e > 1:
                        factors.append(f"{base}{j}^{e}")
            if any(tag):
                factors.append("A(" + ",".join(str(t) for t in tag) + ")")
            lines.append(f"{coeff} * " + " * ".join(factors) if factors else str(coeff))
        return "\n".join(lines)


def residue_variables(d: int, ell: Sequence[int], ellbar: Sequence[int]) -> Tuple[Dict[str, int], List[str], List[str]]:
    """Variable caps: z_{q,i} and w_{q,j} get cap q."""
    caps: Dict[str, int] = {}
    z_vars, w_vars = [], []
    for q, count in enumerate(ell, start=1):
        for i in range(1, count + 1):
            name = f"z{q}_{i}"
            caps[name] = q
            z_vars.append(name)
    for q, count in enumerate(ellbar, start=1):
        for j in range(1, count + 1):
            name = f"w{q}_{j}"
            caps[name] = q
            w_vars.append(name)
    return caps, z_vars, w_vars


def expand_integrand(d: int, ell: Sequence[int], ellbar: Sequence[int], include_A: bool = False) -> RatioExpansion:
    """
    Multi-residue of the ratio integrand at z = w = 0.

    The integrand is
        prod_{i,j} E_SU(z_i + w_j)
        * prod_i E_AS(z_i) E_SU(z_i)^-(Lbar+1) * prod_j E_BU(w_j) E_SU(w_j)^-(L+1)
        [* A(z, w)]
    with E_X(v) = zeta(X + v)/zeta(X), L = sum(ell), Lbar = sum(ellbar). The
    returned coefficients are prod(q!) times the coefficient of
    prod z_{q,i}^q w_{q,j}^q, so they are the mixed partial derivatives.

    Raises:
        DomainError: on malformed exponent vectors
        ResourceError: if sum(q*l_q) + sum(q*lbar_q) exceeds MAX_RESIDUE_WEIGHT
    """
    ell, ellbar = tuple(ell), tuple(ellbar)
    if d < 0 or len(ell) != d or len(ellbar) != d:
        raise DomainError(f"Exponent vectors {ell}, {ellbar} must both have length d={d}")
    if any(e < 0 for e in ell + ellbar):
        raise DomainError("Exponents must be nonnegative")

    weight = sum(q * e for q, e in enumerate(ell, 1)) + sum(q * e for q, e in enumerate(ellbar, 1))
    caps, z_vars, w_vars = residue_variables(d, ell, ellbar)
    if weight > MAX_RESIDUE_WEIGHT:
        estimate = prod(c + 1 for c in caps.values())
        raise ResourceError(
            f"Residue weight {weight} exceeds {MAX_RESIDUE_WEIGHT}: about {estimate} multi-exponents "
            f"with symbol polynomials of degree {weight}"
        )
    sign = -1 if weight % 2 else 1
    order = max(1, weight)
    variables = tuple(caps)
    n_l, n_lbar = sum(ell), sum(ellbar)

    factors: List[TruncatedSeries] = []
    for z in z_vars:
        for w in w_vars:
            factors.append(shifted_zeta_factor("SU", [z, w], 1, 1, caps, order))
    for z in z_vars:
        factors.append(shifted_zeta_factor("AS", [z], 1, 1, caps, order))
        factors.append(shifted_zeta_factor("SU", [z], -1, n_lbar + 1, caps, order))
    for w in w_vars:
        factors.append(shifted_zeta_factor("BU", [w], 1, 1, caps, order))
        factors.append(shifted_zeta_factor("SU", [w], -1, n_l + 1, caps, order))
    if include_A:
        factors.append(arithmetic_factor_series(caps, order))

    product = TruncatedSeries.one(variables, tuple(caps[v] for v in variables), order)
    for factor in factors:
        product = product * factor
    target = tuple(caps[v] for v in variables)
    scale = prod(factorial(c) for c in target)

    n = len(variables)
    terms: Dict[ExpansionKey, Fraction] = {}
    for monom, coeff in product.coefficient(target).items():
        symbols, tag = monom[n:n + len(BASES) * order], monom[n + len(BASES) * order:]
        k = trim_zeros(list(symbols[:order]))
        l = trim_zeros(list(symbols[order:2 * order]))
        m = trim_zeros(list(symbols[2 * order:]))
        key = (k, l, m, tuple(tag) if any(tag) else ())
        terms[key] = terms.get(key, 0) + _fraction(coeff) * scale
    terms = {key: c for key, c in terms.items() if c}
    logger.info(f"Expanded ell={ell}, ellbar={ellbar}: {len(terms)} terms")
    return RatioExpansion(terms=terms, sign=sign, ell=ell, ellbar=ellbar)


def numeric_eval(expansion: RatioExpansion, symbol_values: Mapping[RatioSymbol, complex],
                 a_values: Optional[Mapping[Tuple[int, ...], complex]] = None) -> complex:
    """
    Sum of coefficient * product of symbol values over all terms.

    A-tagged terms need a value for their tag in a_values.

    Raises:
        DomainError: if a needed symbol or A value is missing
    """
    total = 0
    for (k, l, m, tag), coeff in expansion.sorted_items():
        term = complex(coeff.numerator) / coeff.denominator
        for base, vector in zip(BASES, (k, l, m)):
            for j, e in enumerate(vector, start=1):
                if not e:
                    continue
                symbol = RatioSymbol(base, j)
                if symbol not in symbol_values:
                    raise DomainError(f"No value supplied for {symbol}")
                term *= symbol_values[symbol] ** e
        if tag:
            if a_values is None or tag not in a_values:
                raise DomainError(f"No value supplied for A-derivative {tag}")
            term *= a_values[tag]
        total += term
    return total
