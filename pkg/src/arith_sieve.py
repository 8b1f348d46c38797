"""
Arithmetic-function sieves and Dirichlet convolution tables.

Every table is an FnTable: a dense numpy array holding f(1), ..., f(n_max).
Integer-valued functions (mu, mu^2, d_k, the unit and delta) are int64,
everything carrying a logarithm is float64.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .combinatorics import multinomial, strict_compositions
from .utils import MAX_SIEVE, ConfigError, DimensionError, DomainError, ResourceError

logger = logging.getLogger(__name__)

# Odd numbers per segment of the streaming prime sieve
SEGMENT_ODD_COUNT = 1 << 22


@dataclass(frozen=True)
class FnTable:
    """Values f(1..n_max) of an arithmetic function."""
    n_max: int
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if len(self.values) != self.n_max:
            raise DimensionError(
                f"Table '{self.label}' has {len(self.values)} entries, expected {self.n_max}"
            )

    def __getitem__(self, n: int):
        if not 1 <= n <= self.n_max:
            raise DomainError(f"Index {n} outside 1..{self.n_max}")
        return self.values[n - 1]

    def padded(self) -> np.ndarray:
        """Copy of the values with a 0 in front, so that index n holds f(n)."""
        out = np.zeros(self.n_max + 1, dtype=self.values.dtype)
        out[1:] = self.values
        return out

    @classmethod
    def from_padded(cls, array: np.ndarray, label: str) -> "FnTable":
        return cls(n_max=len(array) - 1, values=array[1:].copy(), label=label)


@dataclass(frozen=True)
class ConvolutionSpec:
    """Index of mu * Lambda_1^{*l_1} * ... * Lambda_d^{*l_d}."""
    d: int
    exponents: Tuple[int, ...] = ()
    squarefree_restricted: bool = False

    def __post_init__(self):
        if self.d < 0:
            raise ConfigError(f"Degree must be >= 0, got {self.d}")
        if len(self.exponents) != self.d:
            raise ConfigError(
                f"Exponent vector {self.exponents} must have length d={self.d}"
            )
        if any(e < 0 for e in self.exponents):
            raise ConfigError(f"Exponents must be nonnegative, got {self.exponents}")

    @property
    def label(self) -> str:
        parts = ["mu"]
        for q, power in enumerate(self.exponents, start=1):
            parts.extend([f"Lambda_{q}"] * power)
        text = " * ".join(parts)
        return f"mu^2 . ({text})" if self.squarefree_restricted else text

    def factor_orders(self) -> List[int]:
        """Generalised von Mangoldt orders in convolution order (ascending q)."""
        orders = []
        for q, power in enumerate(self.exponents, start=1):
            orders.extend([q] * power)
        return orders


@dataclass(frozen=True)
class PrimeTable:
    limit: int
    primes: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.primes)


def _check_n_max(n_max: int):
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    if n_max > MAX_SIEVE:
        raise ResourceError(f"n_max={n_max} exceeds sieve capacity {MAX_SIEVE}")


def _small_primes(limit: int) -> np.ndarray:
    """Plain Eratosthenes sieve, used for limits that fit in one array."""
    if limit < 2:
        return np.array([], dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p::p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def iter_prime_blocks(limit: int, segment_odd_count: int = SEGMENT_ODD_COUNT) -> Iterator[np.ndarray]:
    """
    Stream the primes <= limit in ascending blocks.

    Odd-only segmented sieve; the first block starts with 2. Blocks are
    generated in a fixed order so block-wise reductions are reproducible.
    """
    if limit < 2:
        return
    base = _small_primes(math.isqrt(limit) + 1)
    yield np.array([2], dtype=np.int64)

    span = 2 * segment_odd_count
    low = 3
    while low <= limit:
        high = min(low + span, limit + 1)
        odd_count = (high - low + 1) // 2
        mask = np.ones(odd_count, dtype=bool)
        for p in base[1:]:
            p2 = p * p
            if p2 >= high:
                break
            start = max(p2, ((low + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            if start >= high:
                continue
            mask[(start - low) // 2::p] = False
        block = low + 2 * np.flatnonzero(mask).astype(np.int64)
        block = block[block <= limit]
        if len(block):
            yield block
        low = high


def sieve_primes(limit: int) -> PrimeTable:
    """
    All primes <= limit.

    Raises:
        DomainError: if limit < 2
    """
    if limit < 2:
        raise DomainError(f"Empty prime range: limit={limit}")
    if limit <= 10 ** 7:
        primes = _small_primes(limit)
    else:
        primes = np.concatenate(list(iter_prime_blocks(limit)))
    logger.info(f"Sieved {len(primes)} primes up to {limit}")
    return PrimeTable(limit=limit, primes=primes)


def delta_table(n_max: int) -> FnTable:
    """Identity of the Dirichlet ring: 1 at n=1, else 0."""
    _check_n_max(n_max)
    values = np.zeros(n_max, dtype=np.int64)
    values[0] = 1
    return FnTable(n_max, values, "delta")


def ones_table(n_max: int) -> FnTable:
    _check_n_max(n_max)
    return FnTable(n_max, np.ones(n_max, dtype=np.int64), "1")


def mobius_sieve(n_max: int) -> FnTable:
    _check_n_max(n_max)
    mu = np.ones(n_max + 1, dtype=np.int64)
    mu[0] = 0
    if n_max >= 2:
        for p in _small_primes(n_max):
            mu[p::p] *= -1
            if p * p <= n_max:
                mu[p * p::p * p] = 0
    return FnTable.from_padded(mu, "mu")


def mobius_sq_sieve(n_max: int) -> FnTable:
    mu = mobius_sieve(n_max)
    return FnTable(n_max, mu.values * mu.values, "mu^2")


def vonmangoldt_sieve(n_max: int) -> FnTable:
    _check_n_max(n_max)
    lam = np.zeros(n_max + 1, dtype=np.float64)
    if n_max >= 2:
        primes = _small_primes(n_max)
        logs = np.log(primes.astype(np.float64))
        powers = primes.copy()
        alive = np.ones(len(primes), dtype=bool)
        while alive.any():
            lam[powers[alive]] = logs[alive]
            # guard the multiply against int64 overflow near MAX_SIEVE
            alive &= powers <= n_max // primes
            powers = np.where(alive, powers * primes, powers)
    return FnTable.from_padded(lam, "Lambda")


def log_power_sieve(k: int, n_max: int) -> FnTable:
    """log^k n; k=0 gives the unit function."""
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    _check_n_max(n_max)
    if k == 0:
        return ones_table(n_max)
    logs = np.log(np.arange(1, n_max + 1, dtype=np.float64))
    return FnTable(n_max, logs ** k, f"log^{k}")


def lambda_log_sieve(k: int, n_max: int) -> FnTable:
    """Lambda(n) log^k n: l^k log^{k+1} p at n = p^l, zero elsewhere."""
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    lam = vonmangoldt_sieve(n_max)
    if k == 0:
        return lam
    logs = np.log(np.arange(1, n_max + 1, dtype=np.float64))
    return FnTable(n_max, lam.values * logs ** k, f"Lambda_L,{k}")


def dk_sieve(k: int, n_max: int) -> FnTable:
    """Number of ordered factorisations into k factors; d_1 = 1."""
    if k < 1:
        raise DomainError(f"d_k needs k >= 1, got {k}")
    table = ones_table(n_max)
    ones = table
    for _ in range(k - 1):
        table = dirichlet_convolve(table, ones)
    return FnTable(n_max, table.values, f"d_{k}")


def lambda_k_sieve(k: int, n_max: int) -> FnTable:
    """
    Generalised von Mangoldt function Lambda_k = mu * log^k.

    Built from Lambda_{j+1} = Lambda_j log + Lambda * Lambda_j, seeded with
    Lambda_1 = Lambda.
    """
    if k < 1:
        raise DomainError("Lambda_k needs k >= 1; use delta_table for the unit")
    lam = vonmangoldt_sieve(n_max)
    if k == 1:
        return lam
    logs = np.log(np.arange(1, n_max + 1, dtype=np.float64))
    current = lam
    for j in range(1, k):
        conv = dirichlet_convolve(lam, current)
        current = FnTable(n_max, current.values * logs + conv.values, f"Lambda_{j + 1}")
    return current


def dirichlet_convolve(f: FnTable, g: FnTable) -> FnTable:
    """
    h(n) = sum_{ab=n} f(a) g(b) for n <= n_max.

    The outer loop runs over the nonzero entries of the sparser factor, so
    convolving with Lambda costs one strided update per prime power.
    """
    if f.n_max != g.n_max:
        raise DimensionError(f"Cannot convolve tables of size {f.n_max} and {g.n_max}")
    n = f.n_max
    fv, gv = f.padded(), g.padded()
    if np.count_nonzero(fv) > np.count_nonzero(gv):
        fv, gv = gv, fv
    h = np.zeros(n + 1, dtype=np.result_type(fv, gv))
    for a in np.flatnonzero(fv):
        a = int(a)
        m = n // a
        h[a::a] += fv[a] * gv[1:m + 1]
    return FnTable.from_padded(h, f"({f.label} * {g.label})")


def convolution_table(spec: ConvolutionSpec, n_max: int, cache=None) -> FnTable:
    """
    Table of (mu * Lambda_1^{*l_1} * ... * Lambda_d^{*l_d})(n).

    Convolution order is fixed: mu first, then ascending q. With a SieveCache
    the table is looked up first and stored after construction.
    """
    if cache is not None:
        cached = cache.get(spec, n_max)
        if cached is not None:
            return cached

    table = mobius_sieve(n_max)
    table = FnTable(n_max, table.values.astype(np.float64), "mu")
    von_mangoldt: Dict[int, FnTable] = {}
    for q in spec.factor_orders():
        if q not in von_mangoldt:
            von_mangoldt[q] = lambda_k_sieve(q, n_max)
        table = dirichlet_convolve(table, von_mangoldt[q])
    if spec.squarefree_restricted:
        table = FnTable(n_max, table.values * mobius_sq_sieve(n_max).values, spec.label)
    else:
        table = FnTable(n_max, table.values, spec.label)
    logger.info(f"Built {spec.label} up to {n_max}")

    if cache is not None:
        cache.put(spec, table)
    return table


def factorize(n: int) -> Dict[int, int]:
    """Prime factorisation by trial division."""
    if n < 1:
        raise DomainError(f"Cannot factor {n}")
    factors: Dict[int, int] = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            factors[p] = factors.get(p, 0) + 1
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        factors[n] = factors.get(n, 0) + 1
    return factors


def divisors(n: int) -> List[int]:
    divs = [1]
    for p, e in factorize(n).items():
        divs = [d * p ** i for d in divs for i in range(e + 1)]
    return sorted(divs)


def mobius_value(n: int) -> int:
    factors = factorize(n)
    if any(e > 1 for e in factors.values()):
        return 0
    return -1 if len(factors) % 2 else 1


def lambda_k_value(k: int, n: int) -> float:
    """Lambda_k(n) straight from the definition sum_{e|n} mu(e) log^k(n/e)."""
    return math.fsum(mobius_value(e) * math.log(n // e) ** k for e in divisors(n))


def lambda_k_squarefree(k: int, n: int) -> float:
    """
    Lambda_k(n) for squarefree n through compositions of k.

    Lambda_k(n) = sum over (i_1..i_r) with positive parts summing to k of
    k!/(i_1!...i_r!) log^{i_1} p_1 ... log^{i_r} p_r.
    """
    factors = factorize(n)
    if any(e > 1 for e in factors.values()):
        raise DomainError(f"{n} is not squarefree")
    logs = [math.log(p) for p in sorted(factors)]
    total = []
    for parts in strict_compositions(k, len(logs)):
        term = float(multinomial(k, list(parts)))
        for log_p, i in zip(logs, parts):
            term *= log_p ** i
        total.append(term)
    return math.fsum(total)


def point_convolve(spec: ConvolutionSpec, n: int) -> float:
    """
    Single value of the convolution table by enumerating ordered factorisations.

    Independent of the sieves: every factor is evaluated from its definition.
    Cost grows with the number of divisor chains, fine for n up to ~10^4.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    orders = spec.factor_orders()

    @lru_cache(maxsize=None)
    def chain(position: int, m: int) -> float:
        if position == len(orders):
            return float(mobius_value(m))
        q = orders[position]
        return math.fsum(
            lambda_k_value(q, a) * chain(position + 1, m // a)
            for a in divisors(m) if a > 1
        )

    value = chain(0, n)
    if spec.squarefree_restricted and mobius_value(n) == 0:
        return 0.0
    return value
