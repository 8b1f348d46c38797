"""
Derivative-free maximisation of kappa over polynomial coefficients and R.

Constraints are kept by parameterisation: P coefficients are searched in
their input basis with P(0) = 0 built in, the main polynomial's P(1) = 1 and
Q's c_0 = 1 - sum c_j are re-derived after every step.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .config import KappaConfig, parse_config
from .main_terms import assemble_main_term
from .utils import ConfigError, KappaError

logger = logging.getLogger(__name__)

# Objective value of an infeasible point (kappa is far above -1e6)
PENALTY = 1e6

DEFAULT_BOUNDS = {"R": (0.05, 10.0), "theta": (1e-3, 4.0 / 7.0)}
COEFF_BOUNDS = (-50.0, 50.0)


@dataclass(frozen=True)
class FreeParameter:
    """R, theta, or one coefficient (in its input-basis index) of a polynomial."""
    target: str
    index: Optional[int] = None

    @property
    def name(self) -> str:
        return self.target if self.index is None else f"{self.target}:{self.index}"


def _poly_input(config: KappaConfig, target: str):
    if target == "Q":
        return config.Q
    if target not in config.P:
        raise ConfigError(f"Config has no polynomial '{target}'")
    return config.P[target]


def _main_key(config: KappaConfig) -> str:
    return "P1" if config.mollifier == "feng" else "P0"


def free_indices(config: KappaConfig, target: str) -> List[int]:
    """
    Basis indices of a polynomial that are not fixed by its constraint.

    p1: a_1..a_n are all free. q_odd: c_1..c_n (c_0 is derived).
    monomial: powers >= 1, minus the top power for the main polynomial.
    """
    poly = _poly_input(config, target)
    n = len(poly.coeffs)
    if poly.basis == "p1":
        return list(range(1, n + 1))
    if poly.basis == "q_odd":
        return list(range(1, n))
    if target == "Q":
        raise ConfigError("Q can only be optimised in the q_odd basis")
    indices = list(range(1, n))
    if target == _main_key(config):
        indices = indices[:-1]
    return indices


def _position(basis: str, index: int) -> int:
    return index - 1 if basis == "p1" else index


def parse_free_parameters(text: str, config: KappaConfig) -> List[FreeParameter]:
    """
    Parse a free-parameter list such as "P1:1-4,P2:*,R".

    Raises:
        ConfigError: on unknown targets or constrained / missing indices
    """
    params: List[FreeParameter] = []
    for token in (t.strip() for t in text.split(",")):
        if not token:
            continue
        if token in ("R", "theta"):
            params.append(FreeParameter(token))
            continue
        target, _, selector = token.partition(":")
        allowed = free_indices(config, target)
        if selector in ("", "*"):
            chosen = allowed
        else:
            try:
                if "-" in selector:
                    lo, hi = (int(part) for part in selector.split("-", 1))
                    chosen = list(range(lo, hi + 1))
                else:
                    chosen = [int(selector)]
            except ValueError:
                raise ConfigError(f"Bad coefficient selector '{selector}' in '{token}'")
            bad = [i for i in chosen if i not in allowed]
            if bad:
                raise ConfigError(f"{target} indices {bad} are constrained or out of range (free: {allowed})")
        params.extend(FreeParameter(target, i) for i in chosen)
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ConfigError(f"Free parameters repeat: {names}")
    if not params:
        raise ConfigError("No free parameters given")
    return params


def parameter_vector(config: KappaConfig, params: Sequence[FreeParameter]) -> np.ndarray:
    values = []
    for param in params:
        if param.index is None:
            values.append(getattr(config, param.target))
        else:
            poly = _poly_input(config, param.target)
            values.append(poly.coeffs[_position(poly.basis, param.index)])
    return np.array(values, dtype=np.float64)


def _renormalise(poly: Dict, is_main: bool):
    coeffs = poly["coeffs"]
    if poly["basis"] == "q_odd":
        coeffs[0] = 1.0 - math.fsum(coeffs[1:])
    elif poly["basis"] == "monomial" and is_main:
        coeffs[-1] = 1.0 - math.fsum(coeffs[:-1])


def apply_parameters(config: KappaConfig, params: Sequence[FreeParameter], vector: Sequence[float]) -> KappaConfig:
    """
    Config with the free parameters replaced and the derived coefficients refreshed.

    Raises:
        ConfigError: if the result violates a constraint
    """
    payload = config.to_json()
    touched = set()
    for param, value in zip(params, vector):
        value = float(value)
        if param.index is None:
            payload[param.target] = value
            continue
        poly = payload["Q"] if param.target == "Q" else payload["P"][param.target]
        poly["coeffs"][_position(poly["basis"], param.index)] = value
        touched.add(param.target)
    for target in sorted(touched):
        poly = payload["Q"] if target == "Q" else payload["P"][target]
        _renormalise(poly, target == _main_key(config))
    return parse_config(payload)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    restart: int
    kappa: float
    parameters: Tuple[float, ...]


@dataclass
class OptimizationProblem:
    base_config: KappaConfig
    free_parameters: List[FreeParameter]
    bounds: List[Tuple[float, float]] = field(default_factory=list)
    seed: int = 0
    budget: int = 2000
    restarts: int = 4

    def __post_init__(self):
        if not self.bounds:
            self.bounds = [DEFAULT_BOUNDS.get(p.target, COEFF_BOUNDS) if p.index is None else COEFF_BOUNDS
                           for p in self.free_parameters]
        if len(self.bounds) != len(self.free_parameters):
            raise ConfigError(f"{len(self.bounds)} bounds for {len(self.free_parameters)} free parameters")
        if any(p.target == "theta" for p in self.free_parameters):
            raise ConfigError("theta is fixed during optimisation; use evaluate_profile for theta slices")
        if self.budget < 1 or self.restarts < 1:
            raise ConfigError("budget and restarts must be positive")
        start = parameter_vector(self.base_config, self.free_parameters)
        for param, value, (lo, hi) in zip(self.free_parameters, start, self.bounds):
            if not lo <= value <= hi:
                raise ConfigError(f"Start value {param.name}={value} lies outside [{lo}, {hi}]")


@dataclass
class OptimizationResult:
    best_config: KappaConfig
    best_kappa: float
    trace: List[TraceRow]
    budget_exhausted: bool = False


class KappaOptimizer:
    """Nelder-Mead with seeded restarts; restart 0 starts at the base config."""

    def __init__(self, problem: OptimizationProblem, threads: int = 1):
        self.problem = problem
        self.threads = max(1, threads)
        self.params = problem.free_parameters
        self.start = parameter_vector(problem.base_config, self.params)
        self.logger = logging.getLogger(f"Optimizer-{problem.seed}")

    def _kappa(self, vector: np.ndarray) -> float:
        """kappa at a point, or nan when the point is infeasible."""
        for value, (lo, hi) in zip(vector, self.problem.bounds):
            if not lo <= value <= hi:
                return float("nan")
        try:
            config = apply_parameters(self.problem.base_config, self.params, vector)
            return assemble_main_term(config, check_precision=False).kappa
        except KappaError as e:
            self.logger.debug(f"Infeasible point {vector.tolist()}: {e}")
            return float("nan")

    def _start_point(self, restart: int) -> np.ndarray:
        if restart == 0:
            return self.start.copy()
        rng = np.random.default_rng([self.problem.seed, restart])
        scale = 0.05 * np.abs(self.start) + 0.01
        lo, hi = np.array(self.problem.bounds).T
        return np.clip(self.start + rng.normal(0.0, 1.0, len(self.start)) * scale, lo, hi)

    def _run_restart(self, restart: int, max_evals: int):
        rows: List[Tuple[float, Tuple[float, ...]]] = []

        def objective(x: np.ndarray) -> float:
            kappa = self._kappa(np.asarray(x, dtype=np.float64))
            rows.append((kappa, tuple(float(v) for v in x)))
            return PENALTY if math.isnan(kappa) else -kappa

        x0 = self._start_point(restart)
        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=self.problem.bounds,
            options={"maxfev": max_evals, "xatol": 1e-8, "fatol": 1e-12},
        )
        exhausted = result.status == 1
        self.logger.info(f"Restart {restart}: {len(rows)} evaluations, best kappa {-result.fun:.12g}, "
                         f"status {result.status} ({result.message})")
        return rows, exhausted

    def run(self) -> OptimizationResult:
        problem = self.problem
        start_kappa = self._kappa(self.start)
        if math.isnan(start_kappa):
            raise ConfigError("The start configuration cannot be evaluated")
        per_restart = max(1, (problem.budget - 1) // problem.restarts)

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            outcomes = list(pool.map(lambda r: self._run_restart(r, per_restart), range(problem.restarts)))

        trace = [TraceRow(0, -1, start_kappa, tuple(float(v) for v in self.start))]
        for restart, (rows, _) in enumerate(outcomes):
            for kappa, params in rows:
                trace.append(TraceRow(len(trace), restart, kappa, params))
        exhausted = any(flag for _, flag in outcomes)

        # ties go to the earliest row, so the start wins against equal kappas
        best = trace[0]
        for row in trace[1:]:
            if not math.isnan(row.kappa) and row.kappa > best.kappa:
                best = row
        best_config = apply_parameters(problem.base_config, self.params, best.parameters)
        if exhausted:
            self.logger.warning(f"Budget of {problem.budget} evaluations exhausted before the simplex converged")
        self.logger.info(f"kappa {start_kappa:.12g} -> {best.kappa:.12g} after {len(trace)} evaluations")
        return OptimizationResult(best_config, best.kappa, trace, exhausted)


def optimize_kappa(problem: OptimizationProblem, threads: int = 1) -> OptimizationResult:
    """
    Maximise kappa over the free parameters of a problem.

    The result never has kappa below the start point's kappa; restarts run
    on a thread pool and are merged in restart order.
    """
    return KappaOptimizer(problem, threads).run()


@dataclass(frozen=True)
class ProfilePoint:
    value: float
    c: float
    kappa: float


def evaluate_profile(config: KappaConfig, parameter: str, grid: Sequence[float],
                     threads: int = 1) -> List[ProfilePoint]:
    """
    kappa along a 1-D slice in R, theta or a single coefficient ("P1:2").

    Points where the config becomes invalid give nan rows.
    """
    if parameter == "theta":
        param = FreeParameter("theta")
    else:
        params = parse_free_parameters(parameter, config)
        if len(params) != 1:
            raise ConfigError(f"A profile needs exactly one parameter, got {[p.name for p in params]}")
        param = params[0]

    points = []
    for value in grid:
        try:
            point_config = apply_parameters(config, [param], [value])
            result = assemble_main_term(point_config, threads=threads, check_precision=False)
            points.append(ProfilePoint(float(value), result.c, result.kappa))
        except KappaError as e:
            logger.warning(f"{param.name}={value} skipped: {e}")
            points.append(ProfilePoint(float(value), float("nan"), float("nan")))
    return points
