import math

import pytest

from src.config import parse_config
from src.main_terms import assemble_main_term
from src.optimizer import (FreeParameter, OptimizationProblem, apply_parameters, evaluate_profile,
                           free_indices, optimize_kappa, parameter_vector, parse_free_parameters)
from src.utils import ConfigError


def _feng_two():
    return parse_config({
        "d": 1, "K": 2, "R": 1.3, "mollifier": "feng", "quadOrder": 24,
        "P": {
            "P1": {"basis": "p1", "coeffs": [0.2, -0.6]},
            "P2": {"basis": "monomial", "coeffs": [0.0, 1.0, 0.3]},
        },
        "Q": {"basis": "q_odd", "coeffs": [0.5, 0.4, 0.1]},
    })


def _degree_zero(R=1.3):
    return parse_config({
        "d": 0, "K": 0, "R": R, "mollifier": "general", "quadOrder": 24,
        "P": {"P0": {"basis": "monomial", "coeffs": [0.0, 1.0]}},
        "Q": {"basis": "q_odd", "coeffs": [0.5, 0.5]},
    })


def test_free_indices_per_basis(conrey_config):
    config = _feng_two()
    assert free_indices(config, "P1") == [1, 2]
    assert free_indices(config, "P2") == [1, 2]
    assert free_indices(config, "Q") == [1, 2]
    # the main monomial polynomial keeps its top coefficient for P(1) = 1
    assert free_indices(conrey_config, "P0") == []


def test_parse_free_parameters():
    config = _feng_two()
    params = parse_free_parameters("P1:1-2,P2:*,R", config)
    assert [p.name for p in params] == ["P1:1", "P1:2", "P2:1", "P2:2", "R"]
    assert parse_free_parameters("Q:2", config) == [FreeParameter("Q", 2)]


@pytest.mark.parametrize("text", ["P2:0", "P1:3", "P9:1", "R,R", "", "P1:x"])
def test_parse_free_parameter_errors(text):
    with pytest.raises(ConfigError):
        parse_free_parameters(text, _feng_two())


def test_apply_parameters_renormalises():
    config = _feng_two()
    params = parse_free_parameters("Q:1,P1:2,R", config)
    assert list(parameter_vector(config, params)) == [0.4, -0.6, 1.3]
    updated = apply_parameters(config, params, [0.3, 0.1, 1.7])
    assert updated.R == 1.7
    assert updated.Q.coeffs == pytest.approx([0.6, 0.3, 0.1])
    assert updated.P["P1"].coeffs == [0.2, 0.1]
    assert updated.q_spec()(0.0) == pytest.approx(1.0)


def test_main_monomial_keeps_unit_value():
    config = parse_config({
        "d": 0, "K": 0, "R": 1.3, "mollifier": "general",
        "P": {"P0": {"basis": "monomial", "coeffs": [0.0, 0.5, 0.5]}},
        "Q": {"basis": "q_odd", "coeffs": [0.5, 0.5]},
    })
    params = parse_free_parameters("P0:1", config)
    updated = apply_parameters(config, params, [1.4])
    assert updated.P["P0"].coeffs == pytest.approx([0.0, 1.4, -0.4])


def test_problem_validation():
    config = _feng_two()
    with pytest.raises(ConfigError):
        OptimizationProblem(config, [FreeParameter("theta")])
    with pytest.raises(ConfigError):
        OptimizationProblem(config, [FreeParameter("R")], bounds=[(2.0, 3.0)])
    with pytest.raises(ConfigError):
        OptimizationProblem(config, [FreeParameter("R")], bounds=[(0.1, 3.0), (0.1, 3.0)])
    with pytest.raises(ConfigError):
        OptimizationProblem(config, [FreeParameter("R")], budget=0)


def test_optimizer_never_loses_the_start():
    config = _feng_two()
    start = assemble_main_term(config, check_precision=False).kappa
    problem = OptimizationProblem(config, parse_free_parameters("P2:1,R", config), budget=25, restarts=2)
    result = optimize_kappa(problem)
    assert result.best_kappa >= start
    assert result.trace[0].kappa == start
    assert result.trace[0].restart == -1
    assert len(result.trace) > 1


def test_optimizer_is_deterministic_across_threads():
    config = _feng_two()
    params = parse_free_parameters("P1:1,R", config)
    one = optimize_kappa(OptimizationProblem(config, params, seed=3, budget=17, restarts=3), threads=1)
    three = optimize_kappa(OptimizationProblem(config, params, seed=3, budget=17, restarts=3), threads=3)
    assert one.best_kappa == three.best_kappa
    assert [row.parameters for row in one.trace] == [row.parameters for row in three.trace]
    assert one.best_config.digest() == three.best_config.digest()


def test_degree_zero_R_has_an_interior_optimum():
    config = _degree_zero(R=0.8)
    problem = OptimizationProblem(config, [FreeParameter("R")], budget=120, restarts=1)
    result = optimize_kappa(problem)
    assert result.best_kappa > assemble_main_term(config, check_precision=False).kappa
    assert 0.8 < result.best_config.R < 10.0
    grid = [result.best_config.R - 0.2, result.best_config.R, result.best_config.R + 0.2]
    kappas = [point.kappa for point in evaluate_profile(result.best_config, "R", grid)]
    assert kappas[1] >= kappas[0] and kappas[1] >= kappas[2]


def test_profile_points():
    config = _degree_zero()
    points = evaluate_profile(config, "R", [1.0, 1.3])
    assert points[1].kappa == pytest.approx(assemble_main_term(config, check_precision=False).kappa)
    assert points[0].c > 0
    # an invalid theta gives a nan row instead of an error
    theta_points = evaluate_profile(config, "theta", [0.5, 0.9])
    assert math.isfinite(theta_points[0].kappa)
    assert math.isnan(theta_points[1].kappa)
    with pytest.raises(ConfigError):
        evaluate_profile(_feng_two(), "P1:1-2", [0.1])


@pytest.mark.slow
def test_optimizer_from_published_start(feng_config):
    start = assemble_main_term(feng_config, check_precision=False, threads=4).kappa
    problem = OptimizationProblem(feng_config, parse_free_parameters("R", feng_config), budget=6, restarts=1)
    result = optimize_kappa(problem, threads=1)
    assert result.best_kappa >= start - 1e-6
