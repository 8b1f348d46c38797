"""
Arithmetical factor A of the ratio integrand: log A as a prime sum, the
closed-form catalog of its diagonal derivatives, and the finite-difference
cross-check.

At the diagonal s = alpha, u = beta with x = alpha + beta, t = p^-(1+x),
lam = log p, delta_i = p^-z_i - 1, eps_j = p^-w_j - 1 and
phi(v) = log(1 - t p^-v), each Euler factor reduces to

    log A_p = sum_{i,j} [phi(z_i + w_j) - phi(z_i) - phi(w_j) + phi(0)]
              + log(1 + t/(1 - t) * sum_{i,j} delta_i eps_j)

so only mixed z/w derivatives survive. The catalog below is read off this form.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import mpmath
import numpy as np
from scipy import integrate

from .arith_sieve import iter_prime_blocks
from .combinatorics import set_partitions
from .utils import DivergenceError, DomainError, UnsupportedIndexError

logger = logging.getLogger(__name__)

MultiIndex = Tuple[Tuple[int, ...], Tuple[int, ...]]
Summand = Callable[[np.ndarray], np.ndarray]

# Shifts after "1 +" must stay above this for absolute convergence
CONVERGENCE_EDGE = -0.5


@dataclass(frozen=True)
class PrimeSumResult:
    """Truncated prime sum plus its integral tail."""
    value: mpmath.mpf
    cutoff: int
    tail_estimate: float

    def __float__(self):
        return float(self.value)


def _tail_integral(summand: Summand, cutoff: int) -> float:
    """
    Prime-number-theorem surrogate sum_{p > P} f(p) ~ int_P^inf f(t)/log t dt.

    Integrated in y with t = P e^y so the range starts at 0.
    """
    base = float(cutoff)

    def integrand(y: float) -> float:
        t = base * math.exp(y)
        return float(summand(np.array([t]))[0]) * t / math.log(t)

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-15, epsrel=1e-12, limit=200)
    return value


def prime_sum(summand: Summand, cutoff: int, tail: bool = True, threads: int = 1) -> PrimeSumResult:
    """
    sum_{p <= cutoff} summand(p) with an optional integral tail.

    Block partial sums use math.fsum; blocks are reduced in ascending order
    with mpmath.fsum so the result does not depend on the thread count.
    """
    if cutoff < 2:
        raise DomainError(f"Prime cutoff must be >= 2, got {cutoff}")

    def block_sum(block: np.ndarray) -> float:
        return math.fsum(summand(block.astype(np.float64)))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        partials = list(pool.map(block_sum, iter_prime_blocks(cutoff)))
    with mpmath.workdps(30):
        value = mpmath.fsum(partials)
        tail_value = _tail_integral(summand, cutoff) if tail else 0.0
        total = value + tail_value
    return PrimeSumResult(value=total, cutoff=cutoff, tail_estimate=abs(tail_value))


# ---------------------------------------------------------------------------
# log A away from the diagonal

def log_A_local(p: np.ndarray, z: Sequence[float], w: Sequence[float],
                s: float, u: float, alpha: float, beta: float) -> np.ndarray:
    """log of the Euler factor of A at each prime in p (any real p > 1)."""
    lam = np.log(p)

    def e(shift: float) -> np.ndarray:
        return np.exp(-(1.0 + shift) * lam)

    n_z, n_w = len(z), len(w)
    total = ((n_z + 1) * (n_w + 1) * np.log1p(-e(s + u))
             - (n_z + 1) * np.log1p(-e(alpha + s))
             - (n_w + 1) * np.log1p(-e(beta + u)))
    bracket = (-(n_z + 1) * e(alpha + s) - (n_w + 1) * e(beta + u)
               + (n_z + 1) * (n_w + 1) * e(s + u))
    for zi in z:
        for wj in w:
            total = total + np.log1p(-e(s + u + zi + wj))
            bracket = bracket + e(s + u + zi + wj)
    for zi in z:
        total = total + np.log1p(-e(alpha + s + zi)) - (n_w + 1) * np.log1p(-e(s + u + zi))
        bracket = bracket + e(alpha + s + zi) - (n_w + 1) * e(s + u + zi)
    for wj in w:
        total = total + np.log1p(-e(beta + u + wj)) - (n_z + 1) * np.log1p(-e(s + u + wj))
        bracket = bracket + e(beta + u + wj) - (n_z + 1) * e(s + u + wj)
    return total + np.log1p(bracket)


def _check_convergence(z, w, s, u, alpha, beta):
    shifts = [s + u, alpha + s, beta + u]
    shifts += [s + u + zi + wj for zi in z for wj in w]
    shifts += [alpha + s + zi for zi in z] + [s + u + zi for zi in z]
    shifts += [beta + u + wj for wj in w] + [s + u + wj for wj in w]
    worst = min(shifts)
    if worst <= CONVERGENCE_EDGE:
        raise DivergenceError(
            f"Euler product diverges: an argument 1{worst:+.6g} is not above 1/2"
        )


def log_A_numeric(z: Sequence[float], w: Sequence[float], s: float, u: float,
                  alpha: float, beta: float, prime_cutoff: int,
                  tail: bool = True, threads: int = 1) -> PrimeSumResult:
    """
    log A(z, w; s, u) summed over primes up to prime_cutoff.

    Args:
        z, w: shift vectors (one entry per residue variable)
        s, u, alpha, beta: the remaining shifts
        prime_cutoff: largest prime summed exactly (>= 100)
        tail: add the integral tail beyond the cutoff

    Raises:
        DivergenceError: if some 1 + shift argument is not above 1/2
    """
    if prime_cutoff < 100:
        raise DomainError(f"prime_cutoff must be >= 100, got {prime_cutoff}")
    z, w = list(z), list(w)
    _check_convergence(z, w, s, u, alpha, beta)
    return prime_sum(lambda p: log_A_local(p, z, w, s, u, alpha, beta), prime_cutoff, tail, threads)


# ---------------------------------------------------------------------------
# closed-form catalog at the diagonal

def _pair_2(p, x):
    lam = np.log(p)
    big = np.exp((1.0 + x) * lam)
    return -lam ** 2 / (big - 1.0) ** 2


def _pair_3(p, x):
    lam = np.log(p)
    big = np.exp((1.0 + x) * lam)
    return big * (big + 1.0) * lam ** 3 / (big - 1.0) ** 3 - lam ** 3 / (big - 1.0)


def _pair_4(p, x):
    lam = np.log(p)
    big = np.exp((1.0 + x) * lam)
    return (-big * (big * big + 4.0 * big + 1.0) * lam ** 4 / (big - 1.0) ** 4
            + lam ** 4 / (big - 1.0) - 2.0 * lam ** 4 / (big - 1.0) ** 2)


def _quad_1111(p, x):
    lam = np.log(p)
    big = np.exp((1.0 + x) * lam)
    return -2.0 * lam ** 4 / (big - 1.0) ** 2


def _quint_1211(p, x):
    lam = np.log(p)
    big = np.exp((1.0 + x) * lam)
    return 2.0 * lam ** 5 / (big - 1.0) ** 2


def _sext_1212(p, x):
    lam = np.log(p)
    big = np.exp((1.0 + x) * lam)
    return -2.0 * lam ** 6 / (big - 1.0) ** 2 + 12.0 * lam ** 6 / (big - 1.0) ** 3


# canonical (z-orders ; w-orders) -> per-prime closed form, None for vanishing
LOG_A_CATALOG: Dict[MultiIndex, Optional[Callable]] = {
    ((1,), (1,)): _pair_2,
    ((1,), (2,)): _pair_3,
    ((2,), (2,)): _pair_4,
    ((1,), (1, 1)): None,
    ((1,), (1, 2)): None,
    ((1,), (2, 2)): None,
    ((1, 1), (1, 1)): _quad_1111,
    ((1, 1), (1, 2)): _quint_1211,
    ((1, 2), (1, 2)): _sext_1212,
}


def canonical_index(multi_index: MultiIndex) -> MultiIndex:
    """Drop zero orders, sort each side, and put the smaller side first."""
    zs = tuple(sorted(o for o in multi_index[0] if o))
    ws = tuple(sorted(o for o in multi_index[1] if o))
    return min((zs, ws), (ws, zs))


def is_vanishing(multi_index: MultiIndex) -> bool:
    """True for indices whose diagonal log A derivative is identically 0."""
    zs, ws = canonical_index(multi_index)
    if not zs or not ws:
        return True
    return LOG_A_CATALOG.get((zs, ws), 0) is None


def a_derivative_closed_form(multi_index: MultiIndex, x: float = 0.0, prime_cutoff: int = 10 ** 6,
                             tail: bool = True, threads: int = 1) -> PrimeSumResult:
    """
    Diagonal derivative of log A for a catalogued multi-index.

    Args:
        multi_index: (z-orders, w-orders), one entry per differentiated variable
        x: alpha + beta
        prime_cutoff: largest prime summed exactly

    Raises:
        UnsupportedIndexError: for indices outside the catalog
        DivergenceError: if x <= -1/2
    """
    if x <= CONVERGENCE_EDGE:
        raise DivergenceError(f"x={x} is outside the convergence region x > -1/2")
    if is_vanishing(multi_index):
        return PrimeSumResult(value=mpmath.mpf(0), cutoff=prime_cutoff, tail_estimate=0.0)
    key = canonical_index(multi_index)
    if key not in LOG_A_CATALOG:
        raise UnsupportedIndexError(f"No closed form catalogued for index {multi_index}")
    form = LOG_A_CATALOG[key]
    return prime_sum(lambda p: form(p, x), prime_cutoff, tail, threads)


def _slots(multi_index: MultiIndex):
    """One slot per derivative: (side, variable position)."""
    slots = []
    for side, orders in enumerate(multi_index):
        for position, order in enumerate(orders):
            slots.extend([(side, position)] * order)
    return slots


def a_derivative_from_log(multi_index: MultiIndex, x: float = 0.0, prime_cutoff: int = 10 ** 6,
                          tail: bool = True, threads: int = 1) -> PrimeSumResult:
    """
    Diagonal derivative of A itself from log-A derivatives (Faa di Bruno).

    Since A = 1 at the diagonal, the derivative is the sum over set partitions
    of the differentiation slots of the products of block derivatives of log A.
    """
    slots = _slots(multi_index)
    n_z = len(multi_index[0])
    cache: Dict[MultiIndex, PrimeSumResult] = {}

    def block_value(block) -> PrimeSumResult:
        z_orders = [0] * n_z
        w_orders = [0] * len(multi_index[1])
        for side, position in block:
            (z_orders if side == 0 else w_orders)[position] += 1
        key = canonical_index((tuple(z_orders), tuple(w_orders)))
        if key not in cache:
            cache[key] = a_derivative_closed_form(key, x, prime_cutoff, tail, threads)
        return cache[key]

    with mpmath.workdps(30):
        total = mpmath.mpf(0)
        spread = 0.0
        for partition in set_partitions(slots):
            values = [block_value(block) for block in partition]
            term = mpmath.fprod(v.value for v in values)
            total += term
            # first-order propagation of the tail estimates
            for i, v in enumerate(values):
                others = mpmath.fprod(values[j].value for j in range(len(values)) if j != i)
                spread += abs(float(others)) * v.tail_estimate
    return PrimeSumResult(value=total, cutoff=prime_cutoff, tail_estimate=spread)


# ---------------------------------------------------------------------------
# finite-difference cross-check

# central stencils: derivative order -> [(offset in units of h, weight)], divided by h^order
STENCILS = {
    1: [(-1, -0.5), (1, 0.5)],
    2: [(-1, 1.0), (0, -2.0), (1, 1.0)],
    3: [(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
    4: [(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
}


def finite_difference(multi_index: MultiIndex, x: float, h: float, prime_cutoff: int,
                      kind: str = "log", threads: int = 1) -> float:
    """
    Tensor-product central difference of log A (kind='log') or A (kind='A').

    Evaluated at the diagonal alpha = beta = s = u = x/2 on truncated sums.
    """
    z_orders, w_orders = multi_index
    orders = list(z_orders) + list(w_orders)
    if any(o not in STENCILS for o in orders if o):
        raise UnsupportedIndexError(f"No stencil for derivative orders {orders}")
    half = x / 2.0
    stencils = [STENCILS[o] if o else [(0, 1.0)] for o in orders]
    primes = np.concatenate(list(iter_prime_blocks(prime_cutoff))).astype(np.float64)

    samples = []
    for combo in itertools.product(*stencils):
        shifts = [offset * h for offset, _ in combo]
        weight = math.prod(wt for _, wt in combo)
        z = shifts[:len(z_orders)]
        w = shifts[len(z_orders):]
        _check_convergence(z, w, half, half, half, half)
        log_a = math.fsum(log_A_local(primes, z, w, half, half, half, half))
        value = log_a if kind == "log" else math.expm1(log_a)
        samples.append(weight * value)
    total_order = sum(orders)
    return math.fsum(samples) / h ** total_order


def faa_di_bruno_check(multi_index: MultiIndex, x: float = 0.0, h: float = 1e-3,
                       prime_cutoff: int = 10 ** 4, kind: str = "log",
                       threads: int = 1) -> Tuple[float, float, float]:
    """
    Closed form against finite differences, both on the same truncated prime sum.

    Returns:
        (closed_form, finite_diff, abs_error)
    """
    if kind == "log":
        closed = a_derivative_closed_form(multi_index, x, prime_cutoff, tail=False, threads=threads)
    elif kind == "A":
        closed = a_derivative_from_log(multi_index, x, prime_cutoff, tail=False, threads=threads)
    else:
        raise DomainError(f"kind must be 'log' or 'A', got '{kind}'")
    fd = finite_difference(multi_index, x, h, prime_cutoff, kind, threads)
    closed_value = float(closed.value)
    logger.info(f"Index {multi_index} at x={x}: closed={closed_value:.12g} fd={fd:.12g}")
    return closed_value, fd, abs(closed_value - fd)
