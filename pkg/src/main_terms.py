"""
Main term of the mollified second moment.

Every term of a ratio expansion is classified on both sides by the contour
lemma (cases A, B, C), its n-sum is turned into a u-integral by
Euler-Maclaurin, the two Q operators are applied, and the resulting
integrals over u, t (and the case-C a variables) are done by tensor
Gauss-Legendre quadrature. Derivatives in the shift variables x, y are
carried exactly by first-order jets.

All quantities are expressed in the scaled variables log N / log T = theta,
alpha = beta = -R / log T, so T never appears numerically; c is the
coefficient of T * Phi(0).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .arith_sieve import FnTable, delta_table, dirichlet_convolve, dk_sieve, lambda_k_sieve, _check_n_max
from .config import KappaConfig
from .euler_product import a_derivative_from_log
from .mollifier import MollifierPiece, PolySpec, mollifier_pieces
from .series_residue import RatioExpansion, expand_integrand
from .utils import DivergenceError, DomainError, InconsistencyError, UnsupportedIndexError

logger = logging.getLogger(__name__)

# Doubling (here: halving) the quadrature order may move c by at most this much
PRECISION_TOL = 1e-9

I_TERM_LABELS = {("A", "A"): "I1", ("B", "B"): "I2", ("A", "B"): "I3", ("B", "A"): "I4"}


@dataclass(frozen=True)
class CaseClassification:
    omega: int
    case: str
    coefficient: int


def classify(d: int, l_vector: Sequence[int]) -> CaseClassification:
    """
    Contour-lemma case of one side of a term.

    omega = 1*l_1 + 2*l_2 + ... + d*l_d - 1 picks case A (omega = -1),
    B (omega = 0) or C (omega > 0); the coefficient is
    prod_r (r! (-1)^r)^{l_r}.
    """
    l_vector = tuple(l_vector)
    if len(l_vector) > d or any(e < 0 for e in l_vector):
        raise DomainError(f"l={l_vector} is not an exponent vector of degree {d}")
    omega = sum(r * e for r, e in enumerate(l_vector, start=1)) - 1
    coefficient = 1
    for r, e in enumerate(l_vector, start=1):
        coefficient *= ((-1) ** r * factorial(r)) ** e
    if omega == -1:
        case = "A"
    elif omega == 0:
        case = "B"
    else:
        case = "C"
    return CaseClassification(omega=omega, case=case, coefficient=coefficient)


def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return (nodes + 1.0) / 2.0, weights / 2.0


def contour_F(case: CaseClassification, P: PolySpec, alpha: float, log_ratio: float,
              log_N: float = 1.0, order: int = 64) -> float:
    """
    Value of the contour integral F for one side.

    A: (U/log N) d/dx [N^{alpha x} P(x + r)] at x = 0
    B: V P(r)
    C: W (log N)^w r^w / (w-1)! int_0^1 P((1-a) r) a^{w-1} (N/n)^{-alpha a} da
    with r = log(N/n)/log N.
    """
    if not 0.0 <= log_ratio <= 1.0:
        raise DomainError(f"log_ratio must lie in [0, 1], got {log_ratio}")
    u = log_ratio
    if case.case == "A":
        if case.omega != -1:
            raise InconsistencyError(f"Case A needs omega=-1, got {case.omega}")
        return case.coefficient / log_N * (alpha * log_N * float(P(u)) + float(P.derivative()(u)))
    if case.case == "B":
        if case.omega != 0:
            raise InconsistencyError(f"Case B needs omega=0, got {case.omega}")
        return case.coefficient * float(P(u))
    if case.omega <= 0:
        raise InconsistencyError(f"Case C needs omega > 0, got {case.omega}")
    w = case.omega
    a, weights = gauss_legendre(order)
    inner = np.sum(weights * P((1.0 - a) * u) * a ** (w - 1) * np.exp(-alpha * log_N * u * a))
    return case.coefficient * log_N ** w * u ** w / factorial(w - 1) * float(inner)


def kappa_bound(c: float, R: float) -> float:
    """kappa >= 1 - log(c)/R."""
    if c <= 0:
        raise DomainError(f"Mollified moment must be positive, got c={c}")
    if R <= 0:
        raise DomainError(f"R must be positive, got {R}")
    return 1.0 - math.log(c) / R


# ---------------------------------------------------------------------------
# Euler-Maclaurin

@dataclass(frozen=True)
class EulerMaclaurinResult:
    exact: float
    leading: float

    @property
    def ratio(self) -> float:
        return self.exact / self.leading


def weight_table(k: int, k_vector: Sequence[int], n_max: int) -> FnTable:
    """(d_k * Lambda_1^{*k_1} * ... * Lambda_m^{*k_m})(n); k = 0 means delta."""
    if k < 0 or any(e < 0 for e in k_vector):
        raise DomainError(f"Bad weight index k={k}, k_vector={tuple(k_vector)}")
    table = dk_sieve(k, n_max) if k else delta_table(n_max)
    table = FnTable(n_max, table.values.astype(np.float64), table.label)
    for r, power in enumerate(k_vector, start=1):
        if power:
            lam = lambda_k_sieve(r, n_max)
            for _ in range(power):
                table = dirichlet_convolve(table, lam)
    return table


def euler_maclaurin_sum(k: int, k_vector: Sequence[int], z: float, F: Callable, H: Callable,
                        s: float = 0.0, x: Optional[float] = None,
                        order: int = 64) -> EulerMaclaurinResult:
    """
    sum_{n<=z} g(n)/n^{1+s} F(log(x/n)/log x) H(log(z/n)/log z) against its leading term

        prod (r!)^{k_r} (log z)^kappa / (z^s (kappa-1)!) int_0^1 (1-u)^{kappa-1}
            F(1 - (1-u) log z / log x) H(u) z^{us} du,

    g = d_k * Lambda_1^{*k_1} * ..., kappa = k + sum r k_r.

    Raises:
        ResourceError: if z exceeds the sieve capacity
    """
    if z < 2:
        raise DomainError(f"z must be >= 2, got {z}")
    x = float(x or z)
    n_max = int(math.floor(z))
    _check_n_max(n_max)
    kappa = k + sum(r * e for r, e in enumerate(k_vector, start=1))
    if kappa < 1:
        raise DomainError("The weight needs k + sum r k_r >= 1")

    g = weight_table(k, k_vector, n_max)
    n = np.arange(1, n_max + 1, dtype=np.float64)
    log_z, log_x = math.log(z), math.log(x)
    terms = g.values / n ** (1.0 + s) * F(np.log(x / n) / log_x) * H(np.log(z / n) / log_z)
    exact = math.fsum(terms)

    u, weights = gauss_legendre(order)
    constant = math.prod(factorial(r) ** e for r, e in enumerate(k_vector, start=1))
    integrand = (1.0 - u) ** (kappa - 1) * F(1.0 - (1.0 - u) * log_z / log_x) * H(u) * np.exp(u * s * log_z)
    leading = constant * log_z ** kappa / (math.exp(s * log_z) * factorial(kappa - 1)) * float(np.sum(weights * integrand))
    logger.info(f"Euler-Maclaurin {g.label} at z={z}: exact={exact:.12g}, leading={leading:.12g}")
    return EulerMaclaurinResult(exact=exact, leading=leading)


def beta_identity(kf: int, kg: int) -> Tuple[Fraction, Fraction]:
    """
    Both sides of sum_j C(kf-1, j) (-1)^j / (kg + j) = (kf-1)! (kg-1)! / (kf+kg-1)!.
    """
    if kf < 1 or kg < 1:
        raise DomainError(f"Need kf, kg >= 1, got {kf}, {kg}")
    lhs = sum(Fraction(comb(kf - 1, j) * (-1) ** j, kg + j) for j in range(kf))
    rhs = Fraction(factorial(kf - 1) * factorial(kg - 1), factorial(kf + kg - 1))
    return lhs, rhs


# ---------------------------------------------------------------------------
# jets in the shift variables

@dataclass
class Jet:
    """f + fx x + fy y + fxy x y, truncated at first order in each of x, y."""
    c0: np.ndarray
    cx: np.ndarray = 0.0
    cy: np.ndarray = 0.0
    cxy: np.ndarray = 0.0

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c0 + other, self.cx, self.cy, self.cxy)
        return Jet(self.c0 + other.c0, self.cx + other.cx, self.cy + other.cy, self.cxy + other.cxy)

    __radd__ = __add__

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c0 * other, self.cx * other, self.cy * other, self.cxy * other)
        return Jet(
            self.c0 * other.c0,
            self.c0 * other.cx + self.cx * other.c0,
            self.c0 * other.cy + self.cy * other.c0,
            self.c0 * other.cxy + self.cx * other.cy + self.cy * other.cx + self.cxy * other.c0,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def compose(self, f0, f1, f2) -> "Jet":
        """f(jet) given f, f', f'' evaluated at c0."""
        return Jet(f0, f1 * self.cx, f1 * self.cy, f1 * self.cxy + f2 * self.cx * self.cy)

    def component(self, dx: bool, dy: bool):
        if dx and dy:
            return self.cxy
        if dx:
            return self.cx
        if dy:
            return self.cy
        return self.c0


def _poly_jet(poly: PolySpec, arg: Jet) -> Jet:
    p = poly.poly
    return arg.compose(p(arg.c0), p.deriv(1)(arg.c0), p.deriv(2)(arg.c0))


def _exp_jet(arg: Jet) -> Jet:
    e = np.exp(arg.c0)
    return arg.compose(e, e, e)


# ---------------------------------------------------------------------------
# assembly

@dataclass(frozen=True)
class TermContribution:
    pair: Tuple[str, str]
    key: Tuple
    label: str
    contribution: float
    diagnostic_scale: Optional[float] = None


@dataclass
class MainTermValue:
    c: float
    kappa: float
    breakdown: List[TermContribution] = field(default_factory=list)
    precision_warning: bool = False
    quad_order: int = 64

    def by_pair(self) -> Dict[Tuple[str, str], float]:
        totals: Dict[Tuple[str, str], List[float]] = {}
        for row in self.breakdown:
            totals.setdefault(row.pair, []).append(row.contribution)
        return {pair: math.fsum(values) for pair, values in totals.items()}


@lru_cache(maxsize=None)
def _cached_expansion(d: int, ell: Tuple[int, ...], ellbar: Tuple[int, ...], include_A: bool) -> RatioExpansion:
    return expand_integrand(d, ell, ellbar, include_A)


def pair_expansion(d: int, ell: Tuple[int, ...], ellbar: Tuple[int, ...], include_A: bool = False) -> RatioExpansion:
    """Expansion for an ordered piece pair; the mirrored pair reuses the swap."""
    if ell > ellbar:
        return _cached_expansion(d, ellbar, ell, include_A).swapped()
    return _cached_expansion(d, ell, ellbar, include_A)


def _piece_name(piece: MollifierPiece) -> str:
    return f"{piece.poly_key}(" + "-".join(str(e) for e in piece.exponents) + ")"


def _term_label(k, l, m) -> str:
    factors = []
    for base, vector in zip(("SU", "AS", "BU"), (k, l, m)):
        for j, e in enumerate(vector, start=1):
            if e:
                factors.append(f"{base}{j}" + (f"^{e}" if e > 1 else ""))
    return "*".join(factors) or "1"


class PairIntegrator:
    """
    u-profiles of one (side-1 case, side-2 case) group of a piece pair.

    For every u node, the integrand over t and the a variables is summed,
    so the terms of a group differ only by their (1-u)^K/K! weight.
    """

    def __init__(self, P_left: PolySpec, P_right: PolySpec, Q: PolySpec, R: float, theta: float, order: int):
        self.P_left = P_left
        self.P_right = P_right
        self.Q = Q
        self.R = R
        self.theta = theta
        self.order = order
        self.nodes, self.weights = gauss_legendre(order)

    def _side(self, case: CaseClassification, poly: PolySpec, u: float, axis: int, first: bool):
        """(phi jet, g jet) for one side; case C lives on its own a-axis."""
        if case.case == "A":
            p0, p1 = poly(u), poly.derivative()(u)
            if first:
                return Jet(0.0, 1.0, 0.0, 0.0), Jet(p0, p1, 0.0, 0.0)
            return Jet(0.0, 0.0, 1.0, 0.0), Jet(p0, 0.0, p1, 0.0)
        if case.case == "B":
            return Jet(0.0), Jet(poly(u))
        w = case.omega
        shape = [1, 1, 1]
        shape[axis] = self.order
        a = self.nodes.reshape(shape)
        wa = self.weights.reshape(shape)
        g = wa * u ** w * a ** (w - 1) * poly((1.0 - a) * u) / factorial(w - 1)
        return Jet(-u * a), Jet(g)

    def profile(self, case_left: CaseClassification, case_right: CaseClassification) -> np.ndarray:
        """H(u_i) = sum over t and a of the jet component picked by the A sides."""
        th, R = self.theta, self.R
        t = self.nodes.reshape(-1, 1, 1)
        wt = self.weights.reshape(-1, 1, 1)
        dx, dy = case_left.case == "A", case_right.case == "A"
        out = np.empty(self.order)
        for i, u in enumerate(self.nodes):
            phi, g1 = self._side(case_left, self.P_left, u, 1, True)
            chi, g2 = self._side(case_right, self.P_right, u, 2, False)
            shift = phi + chi
            common = shift * (th * t) + t
            prefactor = shift * th + 1.0
            q1 = _poly_jet(self.Q, common - phi * th)
            q2 = _poly_jet(self.Q, common - chi * th)
            expo = _exp_jet((common * 2.0 - shift * th) * R)
            total = g1 * g2 * prefactor * q1 * q2 * expo
            value = np.broadcast_to(total.component(dx, dy), (self.order, self.order if case_left.case == "C" else 1,
                                                              self.order if case_right.case == "C" else 1))
            out[i] = float(np.sum(wt * value))
        return out

    def moment(self, profile: np.ndarray, K: int) -> float:
        return float(np.sum(self.weights * (1.0 - self.nodes) ** K * profile)) / factorial(K)


def pair_main_term(d: int, expansion: RatioExpansion, P_left: PolySpec, P_right: PolySpec, Q: PolySpec,
                   R: float, theta: float, order: int = 64, scale: float = 1.0,
                   pair: Tuple[str, str] = ("", "")) -> List[TermContribution]:
    """
    Contributions of the untagged terms of one ordered piece pair.

    Each term adds
        scale * sign * Psi * C_k * c_l * c_m / (theta K!) *
        int int (1-u)^K g1 g2 (1 + theta(phi+chi)) Q(t + theta t(phi+chi) - theta phi)
            Q(t + theta t(phi+chi) - theta chi) e^{R(2t + 2 theta t(phi+chi) - theta(phi+chi))}
    with K = sum r k_r and C_k = prod (r! (-1)^r)^{k_r}.
    """
    integrator = PairIntegrator(P_left, P_right, Q, R, theta, order)
    profiles: Dict[Tuple, np.ndarray] = {}
    rows = []
    i_labels = d == 1 and expansion.ell == (1,) and expansion.ellbar == (1,)
    for (k, l, m, tag), coeff in expansion.sorted_items():
        if tag:
            continue
        left, right = classify(d, l), classify(d, m)
        group = (left.case, left.omega, right.case, right.omega)
        if group not in profiles:
            profiles[group] = integrator.profile(left, right)
        K = sum(r * e for r, e in enumerate(k, start=1))
        C_k = classify(max(d, len(k)), k).coefficient
        factor = scale * expansion.sign * float(coeff) * C_k * left.coefficient * right.coefficient / theta
        value = factor * integrator.moment(profiles[group], K)
        label = _term_label(k, l, m)
        if i_labels:
            label = f"{I_TERM_LABELS[(left.case, right.case)]} {label}"
        rows.append(TermContribution(pair=pair, key=(k, l, m, tag), label=label, contribution=value))
    return rows


def _a_diagnostics(d: int, expansion: RatioExpansion, scale: float, pair: Tuple[str, str],
                   cutoff: int) -> List[TermContribution]:
    """A-tagged rows: zero contribution, with |Psi * A-derivative| as a size indicator."""
    n_z = sum(expansion.ell)
    rows = []
    for (k, l, m, tag), coeff in expansion.sorted_items():
        if not tag:
            continue
        index = (tuple(tag[:n_z]), tuple(tag[n_z:]))
        try:
            a_value = float(a_derivative_from_log(index, 0.0, cutoff).value)
            size = abs(scale * float(coeff) * a_value)
        except (UnsupportedIndexError, DivergenceError):
            size = float("nan")
        label = f"{_term_label(k, l, m)}*A(" + "-".join(str(t) for t in tag) + ")"
        rows.append(TermContribution(pair=pair, key=(k, l, m, tag), label=label,
                                     contribution=0.0, diagnostic_scale=size))
    return rows


class MainTermAssembler:
    """Sum of pair contributions over all ordered pairs of mollifier pieces."""

    def __init__(self, config: KappaConfig, threads: int = 1):
        self.config = config
        self.threads = max(1, threads)
        self.spec = config.mollifier_spec()
        self.Q = config.q_spec()
        self.pieces: List[MollifierPiece] = mollifier_pieces(self.spec)
        self.logger = logging.getLogger(f"MainTerms-{config.d}")

    def _pair_jobs(self):
        for left in self.pieces:
            for right in self.pieces:
                yield left, right

    def _evaluate(self, order: int, expansions: Optional[Mapping] = None) -> List[TermContribution]:
        config, spec = self.config, self.spec

        def job(pair):
            left, right = pair
            key = (left.exponents, right.exponents)
            if expansions is not None and key in expansions:
                expansion = expansions[key]
            else:
                expansion = pair_expansion(config.d, left.exponents, right.exponents)
            scale = left.sign * left.weight * right.sign * right.weight
            return pair_main_term(
                config.d, expansion, spec.polynomials[left.poly_key], spec.polynomials[right.poly_key],
                self.Q, config.R, config.theta, order, scale,
                pair=(_piece_name(left), _piece_name(right)),
            )

        # evaluated in parallel, reduced in submission order
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            results = list(pool.map(job, list(self._pair_jobs())))
        return [row for rows in results for row in rows]

    def assemble(self, expansions: Optional[Mapping] = None, check_precision: bool = True,
                 diagnose_A: bool = False, a_cutoff: int = 10 ** 5) -> MainTermValue:
        order = self.config.quad_order
        rows = self._evaluate(order, expansions)
        c = math.fsum(row.contribution for row in rows)
        warning = False
        if check_precision:
            coarse = math.fsum(row.contribution for row in self._evaluate(max(4, order // 2), expansions))
            if abs(coarse - c) > PRECISION_TOL:
                warning = True
                self.logger.warning(
                    f"Quadrature not converged: order {order // 2} gives {coarse:.15g}, order {order} gives {c:.15g}"
                )
        if diagnose_A:
            for left, right in self._pair_jobs():
                expansion = pair_expansion(self.config.d, left.exponents, right.exponents, include_A=True)
                scale = left.sign * left.weight * right.sign * right.weight
                pair = (_piece_name(left), _piece_name(right))
                rows.extend(_a_diagnostics(self.config.d, expansion, scale, pair, a_cutoff))
        kappa = kappa_bound(c, self.config.R)
        self.logger.info(f"c={c:.15g}, kappa={kappa:.12g} from {len(rows)} terms")
        return MainTermValue(c=c, kappa=kappa, breakdown=rows, precision_warning=warning, quad_order=order)


def assemble_main_term(config: KappaConfig, expansions: Optional[Mapping] = None, threads: int = 1,
                       check_precision: bool = True, diagnose_A: bool = False) -> MainTermValue:
    """
    Main term c and kappa for a config.

    Args:
        config: validated parameter set
        expansions: optional (ell, ellbar) -> RatioExpansion overrides; missing
            pairs are expanded on demand
        threads: worker threads for the pair integrals
        check_precision: compare against half the quadrature order
        diagnose_A: list A-tagged terms with a size indicator
    """
    return MainTermAssembler(config, threads).assemble(expansions, check_precision, diagnose_A)


def conrey_closed_form(P: PolySpec, Q: PolySpec, R: float, theta: float, order: int = 64) -> float:
    """
    c = 1 + (1/theta) int int e^{2Rv} (d/dx [e^{R theta x} P(x+u) Q(v + theta x)]_{x=0})^2 du dv.
    """
    u, wu = gauss_legendre(order)
    v, wv = gauss_legendre(order)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    p, dp = P(U), P.derivative()(U)
    q, dq = Q(V), Q.derivative()(V)
    inner = R * theta * p * q + dp * q + theta * p * dq
    return 1.0 + float(np.sum(W * np.exp(2.0 * R * V) * inner ** 2)) / theta
