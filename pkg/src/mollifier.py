"""
Mollifier polynomials and coefficient tables.

A mollifier is a list of pieces. Each piece is one convolution table
(mu * Lambda_1^{*l_1} * ... * Lambda_d^{*l_d}) with a sign, a multinomial
weight, a log-power normalisation and the polynomial evaluated at
log(N/n)/log N. Tables are stored unnormalised; N only enters at evaluation.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .arith_sieve import ConvolutionSpec, FnTable, convolution_table, factorize, mobius_value
from .combinatorics import compositions, multinomial
from .utils import ConfigError, DomainError

logger = logging.getLogger(__name__)

CONSTRAINTS = ("P0", "Pk", "Q", "free")

# Printed coefficient sets are rounded to six places
CONSTRAINT_TOL = 1e-5

LAYOUTS = ("general", "feng")


@dataclass(frozen=True)
class PolySpec:
    """Polynomial in the monomial basis plus the constraint set it must satisfy."""
    coeffs: Tuple[float, ...]
    constraint: str = "free"
    sign: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.constraint not in CONSTRAINTS:
            raise ConfigError(f"Unknown constraint tag '{self.constraint}'")
        if not self.coeffs:
            raise ConfigError("Polynomial needs at least one coefficient")
        if self.sign not in (None, 1, -1):
            raise ConfigError(f"Piece sign must be +1 or -1, got {self.sign}")
        self.validate()

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return self.poly(x)

    def derivative(self, m: int = 1) -> Polynomial:
        return self.poly.deriv(m)

    def validate(self):
        """
        Raises:
            ConfigError: if the coefficients break the constraint tag
        """
        c = self.coeffs
        if self.constraint in ("P0", "Pk") and abs(c[0]) > CONSTRAINT_TOL:
            raise ConfigError(f"{self.constraint} polynomial needs P(0)=0, got {c[0]}")
        if self.constraint == "P0" and abs(sum(c) - 1.0) > CONSTRAINT_TOL:
            raise ConfigError(f"P0 polynomial needs P(1)=1, got {sum(c)}")
        if self.constraint == "Q":
            if abs(c[0] - 1.0) > CONSTRAINT_TOL:
                raise ConfigError(f"Q needs Q(0)=1, got {c[0]}")
            # Q'(x) = Q'(1-x) exactly when Q(x) + Q(1-x) is constant
            mirrored = self.poly + self.poly(Polynomial([1.0, -1.0]))
            if np.any(np.abs(mirrored.coef[1:]) > CONSTRAINT_TOL):
                raise ConfigError("Q must satisfy Q'(x) = Q'(1-x)")

    def with_constraint(self, constraint: str) -> "PolySpec":
        return PolySpec(self.coeffs, constraint, self.sign)

    @classmethod
    def from_basis(cls, basis: str, coeffs, constraint: str = "free",
                   sign: Optional[int] = None) -> "PolySpec":
        """
        Convert from one of the input bases to the monomial basis.

        Bases:
            monomial: coefficients of x^0, x^1, ...
            p1: P(x) = x + sum_k a_k x (1-x)^k, k = 1, 2, ...
            q_odd: Q(x) = c_0 + sum_j c_j (1-2x)^(2j-1), j = 1, 2, ...
        """
        coeffs = [float(c) for c in coeffs]
        x = Polynomial([0.0, 1.0])
        if basis == "monomial":
            poly = Polynomial(coeffs or [0.0])
        elif basis == "p1":
            poly = x.copy()
            for k, a in enumerate(coeffs, start=1):
                poly = poly + a * x * (1 - x) ** k
        elif basis == "q_odd":
            if not coeffs:
                raise ConfigError("q_odd basis needs at least c_0")
            poly = Polynomial([coeffs[0]])
            for j, cj in enumerate(coeffs[1:], start=1):
                poly = poly + cj * (1 - 2 * x) ** (2 * j - 1)
        else:
            raise ConfigError(f"Unknown polynomial basis '{basis}'")
        values = list(poly.coef)
        while len(values) > 1 and values[-1] == 0.0:
            values.pop()
        return cls(tuple(values), constraint, sign)


@dataclass(frozen=True)
class MollifierPiece:
    """One term of the mollifier; table is None until tables are built."""
    poly_key: str
    exponents: Tuple[int, ...]
    sign: int
    weight: int
    log_power: int
    table: Optional[FnTable] = field(default=None, compare=False, repr=False)

    @property
    def level(self) -> int:
        return sum(self.exponents)

    @property
    def spec(self) -> ConvolutionSpec:
        return ConvolutionSpec(d=len(self.exponents), exponents=self.exponents)


@dataclass(frozen=True)
class MollifierSpec:
    """
    Degree, truncation and polynomials of psi_d.

    The general layout keys polynomials P0..PK by level sum(l). The Feng
    layout (d=1) has P1 on mu and P_k, k >= 2, on (-1)^k mu * Lambda^{*k};
    it has no level-1 piece. Levels without a polynomial are left out.
    """
    d: int
    K: int
    theta: float
    polynomials: Mapping[str, PolySpec]
    squarefree_restricted: bool = False
    layout: str = "general"

    def __post_init__(self):
        if self.d < 0:
            raise ConfigError(f"Degree must be >= 0, got {self.d}")
        if self.K < 0:
            raise ConfigError(f"Truncation must be >= 0, got {self.K}")
        if not 0 < self.theta < 1:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"Unknown mollifier layout '{self.layout}'")
        if self.layout == "feng" and self.d != 1:
            raise ConfigError(f"The Feng layout needs d=1, got d={self.d}")
        if self.main_key not in self.polynomials:
            raise ConfigError(f"Mollifier needs the {self.main_key} polynomial")
        for key in self.polynomials:
            if key not in self.level_keys():
                raise ConfigError(f"Polynomial '{key}' does not match any level of K={self.K}")
        for key, poly in self.polynomials.items():
            wanted = "P0" if key == self.main_key else "Pk"
            poly.with_constraint(wanted)

    @property
    def main_key(self) -> str:
        return "P1" if self.layout == "feng" else "P0"

    def level_keys(self) -> Dict[str, int]:
        """Polynomial key -> truncation level."""
        if self.layout == "feng":
            keys = {"P1": 0}
            keys.update({f"P{k}": k for k in range(2, self.K + 1)})
            return keys
        return {f"P{level}": level for level in range(self.K + 1)}


def exponent_vectors(d: int, level: int) -> List[Tuple[int, ...]]:
    """All (l_1..l_d) with sum level, in lexicographic order."""
    if d == 0:
        return [()] if level == 0 else []
    return sorted(compositions(level, d))


def mollifier_pieces(spec: MollifierSpec) -> List[MollifierPiece]:
    """Pieces without tables, ordered by level then exponent vector."""
    pieces = []
    for key, level in spec.level_keys().items():
        if key not in spec.polynomials:
            continue
        poly = spec.polynomials[key]
        for exps in exponent_vectors(spec.d, level):
            log_power = sum(r * e for r, e in enumerate(exps, start=1))
            if spec.layout == "feng":
                default_sign, weight = (-1) ** level, 1
            else:
                default_sign = -1 if (level + log_power) % 2 else 1
                weight = multinomial(level, list(exps)) if exps else 1
            sign = poly.sign if poly.sign is not None else default_sign
            pieces.append(MollifierPiece(key, tuple(exps), sign, weight, log_power))
    return pieces


def mollifier_coeff_tables(spec: MollifierSpec, n_max: int, cache=None) -> Dict[Tuple[int, ...], MollifierPiece]:
    """
    Build the convolution table of every piece.

    Returns:
        exponent vector -> piece carrying its table, sign, weight and log power
    """
    out: Dict[Tuple[int, ...], MollifierPiece] = {}
    for piece in mollifier_pieces(spec):
        conv = ConvolutionSpec(spec.d, piece.exponents, spec.squarefree_restricted)
        table = convolution_table(conv, n_max, cache)
        out[piece.exponents] = MollifierPiece(
            piece.poly_key, piece.exponents, piece.sign, piece.weight, piece.log_power, table
        )
    logger.info(f"Built {len(out)} mollifier tables for d={spec.d}, K={spec.K} up to {n_max}")
    return out


def _log_ratio(n_max: int, length: float) -> np.ndarray:
    n = np.arange(1, n_max + 1, dtype=np.float64)
    return np.log(length / n) / math.log(length)


def mollifier_coefficients(spec: MollifierSpec, n_max: int, length: Optional[float] = None,
                           cache=None) -> FnTable:
    """
    Full coefficient b(n) without the n^(sigma_0 - 1/2) kernel.

    b(n) = sum_pieces sign * weight * table(n) / log^{log_power} N * P(log(N/n)/log N)
    for n <= N = length (default n_max), zero above.
    """
    length = float(length or n_max)
    if length < 2:
        raise DomainError(f"Mollifier length must be >= 2, got {length}")
    x = _log_ratio(n_max, length)
    inside = x >= 0
    log_n = math.log(length)
    total = np.zeros(n_max, dtype=np.float64)
    for piece in mollifier_coeff_tables(spec, n_max, cache).values():
        poly = spec.polynomials[piece.poly_key]
        scale = piece.sign * piece.weight / log_n ** piece.log_power
        total += np.where(inside, scale * piece.table.values * poly(x), 0.0)
    return FnTable(n_max, total, f"psi_{spec.d} (K={spec.K})")


def feng_coeffs(K: int, n_max: int, polys: Mapping[int, PolySpec], length: Optional[float] = None,
                cache=None) -> FnTable:
    """
    b_F(n) = mu(n) sum_{k=2}^K sum_{p_1..p_k | n} log p_1...log p_k / log^k N * P_k(log(N/n)/log N).

    The p_i are distinct primes in every order. Built from the convolution
    form mu^2(n) (-1)^k (mu * Lambda^{*k})(n), which equals mu(n) times the
    ordered log-product sum on squarefree n.
    """
    if K < 2:
        raise DomainError(f"The Feng sum starts at k=2, got K={K}")
    length = float(length or n_max)
    x = _log_ratio(n_max, length)
    inside = x >= 0
    log_n = math.log(length)
    total = np.zeros(n_max, dtype=np.float64)
    for k in range(2, K + 1):
        if k not in polys:
            raise ConfigError(f"Missing polynomial P_1,{k}")
        table = convolution_table(ConvolutionSpec(1, (k,), True), n_max, cache)
        total += np.where(inside, (-1) ** k * table.values / log_n ** k * polys[k](x), 0.0)
    return FnTable(n_max, total, f"b_F (K={K})")


def feng_coeff_value(n: int, K: int, polys: Mapping[int, PolySpec], length: float) -> float:
    """Single b_F(n) straight from the distinct-prime sum."""
    mu = mobius_value(n)
    if mu == 0 or n > length:
        return 0.0
    x = math.log(length / n) / math.log(length)
    logs = [math.log(p) for p in factorize(n)] if n > 1 else []
    total = []
    for k in range(2, K + 1):
        ordered = math.fsum(math.prod(chosen) for chosen in itertools.permutations(logs, k))
        total.append(ordered / math.log(length) ** k * float(polys[k](x)))
    return mu * math.fsum(total)


@dataclass(frozen=True)
class PartialSums:
    """Cumulative sums of an unrestricted and a squarefree-restricted table."""
    x: np.ndarray
    unrestricted: np.ndarray
    restricted: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.unrestricted - self.restricted

    def rows(self):
        for row in zip(self.x, self.unrestricted, self.restricted, self.difference):
            yield int(row[0]), float(row[1]), float(row[2]), float(row[3])


def partial_sum_compare(spec: ConvolutionSpec, x_max: int, cache=None) -> PartialSums:
    """Sum_{n<=x} f(n) against sum_{n<=x} mu^2(n) f(n) for every x <= x_max."""
    if x_max < 1:
        raise DomainError(f"x_max must be >= 1, got {x_max}")
    plain = convolution_table(ConvolutionSpec(spec.d, spec.exponents, False), x_max, cache)
    restricted = convolution_table(ConvolutionSpec(spec.d, spec.exponents, True), x_max, cache)
    return PartialSums(
        x=np.arange(1, x_max + 1),
        unrestricted=np.cumsum(plain.values),
        restricted=np.cumsum(restricted.values),
    )
