import math

import numpy as np
import pytest

from src.config import load_config, parse_config
from src.main_terms import (CaseClassification, assemble_main_term, beta_identity, classify,
                            conrey_closed_form, contour_F, euler_maclaurin_sum, gauss_legendre,
                            kappa_bound, pair_main_term)
from src.mollifier import PolySpec
from src.series_residue import RatioExpansion, expand_integrand
from src.utils import DomainError, InconsistencyError, ResourceError

from .conftest import config_path

THETA = 4.0 / 7.0


def _ones(v):
    return np.ones_like(v)


# ---------------------------------------------------------------------------
# contour lemma

@pytest.mark.parametrize("d,l,omega,case,coefficient", [
    (1, (), -1, "A", 1),
    (1, (0,), -1, "A", 1),
    (1, (1,), 0, "B", -1),
    (1, (2,), 1, "C", 2),
    (2, (0, 1), 1, "C", 2),
    (2, (1, 1), 2, "C", -2),
    (3, (0, 0, 1), 2, "C", -6),
])
def test_classify(d, l, omega, case, coefficient):
    assert classify(d, l) == CaseClassification(omega, case, coefficient)


def test_classify_rejects_long_vectors():
    with pytest.raises(DomainError):
        classify(1, (1, 1))


def test_contour_values():
    P = PolySpec((0.0, 1.0, 2.0))
    u = 0.3
    assert contour_F(classify(1, (1,)), P, 0.7, u) == pytest.approx(-P(u))
    assert contour_F(classify(1, ()), P, 0.7, u) == pytest.approx(0.7 * P(u) + P.derivative()(u))
    assert contour_F(classify(1, ()), P, 0.7, u, log_N=2.0) == pytest.approx((1.4 * P(u) + P.derivative()(u)) / 2.0)
    # C with omega = 1, P = x, alpha = 0: 2 * u * int_0^1 (1-a) u da = u^2
    assert contour_F(classify(1, (2,)), PolySpec((0.0, 1.0)), 0.0, 0.5) == pytest.approx(0.25)


def test_contour_case_mismatch():
    with pytest.raises(InconsistencyError):
        contour_F(CaseClassification(0, "A", 1), PolySpec((0.0, 1.0)), 0.0, 0.5)
    with pytest.raises(InconsistencyError):
        contour_F(CaseClassification(0, "C", 1), PolySpec((0.0, 1.0)), 0.0, 0.5)
    with pytest.raises(DomainError):
        contour_F(classify(1, ()), PolySpec((0.0, 1.0)), 0.0, 1.5)


def test_kappa_bound():
    assert kappa_bound(math.exp(0.5), 1.0) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        kappa_bound(0.0, 1.0)
    with pytest.raises(DomainError):
        kappa_bound(1.0, -1.0)


def test_gauss_legendre_on_unit_interval():
    nodes, weights = gauss_legendre(8)
    assert weights.sum() == pytest.approx(1.0)
    assert np.sum(weights * nodes ** 7) == pytest.approx(1.0 / 8.0)


# ---------------------------------------------------------------------------
# Euler-Maclaurin and the beta identity

def test_em_counting_function():
    result = euler_maclaurin_sum(1, (), 1e4, _ones, _ones, s=-1.0)
    assert result.exact == 10000.0
    assert result.leading == pytest.approx(9999.0, rel=1e-12)


def test_em_log_sum():
    ratios = []
    for z in (1e3, 1e4):
        result = euler_maclaurin_sum(1, (1,), z, _ones, _ones, s=-1.0)
        assert result.exact == pytest.approx(math.lgamma(z + 1.0), rel=1e-12)
        assert result.leading == pytest.approx(z * math.log(z) - z + 1.0, rel=1e-12)
        ratios.append(abs(result.ratio - 1.0))
    assert ratios[1] < ratios[0]
    assert ratios[1] < 1e-4


@pytest.mark.slow
def test_em_log_sum_converges_up_to_ten_million():
    # (1 * Lambda)(n) = log n
    errors = []
    for z in (1e4, 1e5, 1e6, 1e7):
        result = euler_maclaurin_sum(1, (1,), z, _ones, _ones, s=-1.0)
        errors.append(abs(result.ratio - 1.0))
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
    assert errors[-1] <= 0.15


def test_em_chebyshev_psi():
    result = euler_maclaurin_sum(0, (1,), 1e4, _ones, _ones, s=-1.0)
    assert result.leading == pytest.approx(9999.0, rel=1e-12)
    assert abs(result.ratio - 1.0) < 1e-2


def test_em_with_weights_at_s_zero():
    # sum_{n<=z} 1/n against log z
    result = euler_maclaurin_sum(1, (), 1e5, _ones, _ones, s=0.0)
    assert result.leading == pytest.approx(math.log(1e5), rel=1e-12)
    assert result.exact - result.leading == pytest.approx(0.5772156649, abs=1e-4)


def test_em_errors():
    with pytest.raises(ResourceError):
        euler_maclaurin_sum(1, (), 3e8, _ones, _ones)
    with pytest.raises(DomainError):
        euler_maclaurin_sum(0, (), 100.0, _ones, _ones)
    with pytest.raises(DomainError):
        euler_maclaurin_sum(1, (), 1.0, _ones, _ones)


def test_beta_identity():
    for kf in range(1, 9):
        for kg in range(1, 9):
            lhs, rhs = beta_identity(kf, kg)
            assert lhs == rhs
    with pytest.raises(DomainError):
        beta_identity(0, 1)


# ---------------------------------------------------------------------------
# degree zero against the closed form

def _degree_zero_config(P_coeffs, Q_coeffs, R, basis="monomial", **extra):
    payload = {
        "d": 0, "K": 0, "R": R, "mollifier": "general",
        "P": {"P0": {"basis": basis, "coeffs": P_coeffs}},
        "Q": {"basis": "q_odd", "coeffs": Q_coeffs},
    }
    payload.update(extra)
    return parse_config(payload)


def test_degree_zero_matches_closed_form(conrey_config, linear_P, linear_Q):
    value = assemble_main_term(conrey_config)
    expected = conrey_closed_form(linear_P, linear_Q, conrey_config.R, conrey_config.theta)
    assert value.c == pytest.approx(expected, rel=1e-10)
    assert value.kappa == pytest.approx(1.0 - math.log(expected) / conrey_config.R, rel=1e-10)
    assert not value.precision_warning
    assert value.by_pair() == {("P0()", "P0()"): pytest.approx(value.c)}


def test_degree_zero_general_polynomials():
    config = _degree_zero_config([0.3, -0.2], [0.6, 0.5, -0.1], 1.1, basis="p1")
    P = PolySpec.from_basis("p1", [0.3, -0.2], "P0")
    Q = PolySpec.from_basis("q_odd", [0.6, 0.5, -0.1], "Q")
    value = assemble_main_term(config)
    assert value.c == pytest.approx(conrey_closed_form(P, Q, 1.1, THETA), rel=1e-10)


def test_feng_level_one_is_degree_zero(linear_P, linear_Q):
    config = parse_config({
        "d": 1, "K": 1, "R": 1.3, "mollifier": "feng",
        "P": {"P1": {"basis": "monomial", "coeffs": [0.0, 1.0]}},
        "Q": {"basis": "q_odd", "coeffs": [0.5, 0.5]},
    })
    value = assemble_main_term(config, check_precision=False)
    assert value.c == pytest.approx(conrey_closed_form(linear_P, linear_Q, 1.3, THETA), rel=1e-10)


def test_precision_warning_on_coarse_quadrature(conrey_config):
    coarse = conrey_config.updated(quadOrder=6, R=8.0)
    assert assemble_main_term(coarse).precision_warning


def test_threads_do_not_change_the_result(conrey_config):
    one = assemble_main_term(conrey_config, threads=1)
    four = assemble_main_term(conrey_config, threads=4)
    assert one.c == four.c
    assert [row.contribution for row in one.breakdown] == [row.contribution for row in four.breakdown]


# ---------------------------------------------------------------------------
# d = 1, single-variable bracket against the four integrals written out by hand

def _richardson(diff, h):
    d1, d2, d3 = diff(h), diff(h / 2), diff(h / 4)
    r1, r2 = (4 * d2 - d1) / 3, (4 * d3 - d2) / 3
    return (16 * r2 - r1) / 15


def _hand_integrals(P1, P2, Q, R, theta, order=40):
    u, wu = gauss_legendre(order)
    t, wt = gauss_legendre(order)
    U, T = np.meshgrid(u, t, indexing="ij")
    W = np.outer(wu, wt)

    def i1_inner(x, y):
        s = x + y
        value = ((theta * s + 1) * (1 - U) ** 2 * P1(x + U) * P2(y + U)
                 * Q(theta * T * s - theta * y + T) * Q(theta * T * s - theta * x + T)
                 * np.exp(R * (2 * T + 2 * theta * T * s - theta * s)))
        return float(np.sum(W * value))

    def i3_inner(x):
        value = ((1 + theta * x) * (1 - U) * P1(x + U) * P2(U)
                 * Q(T + theta * x * T) * Q(T + theta * x * T - theta * x)
                 * np.exp(R * (2 * T + 2 * theta * x * T - theta * x)))
        return float(np.sum(W * value))

    def i4_inner(y):
        value = ((1 + theta * y) * (1 - U) * P1(U) * P2(y + U)
                 * Q(T + theta * y * T) * Q(T + theta * y * T - theta * y)
                 * np.exp(R * (2 * T + 2 * theta * y * T - theta * y)))
        return float(np.sum(W * value))

    mixed = _richardson(lambda h: (i1_inner(h, h) - i1_inner(h, -h) - i1_inner(-h, h) + i1_inner(-h, -h))
                        / (4 * h * h), 0.02)
    i1 = mixed / theta
    i2 = float(np.sum(W * Q(T) ** 2 * np.exp(2 * R * T) * P1(U) * P2(U))) / theta
    i3 = -_richardson(lambda h: (i3_inner(h) - i3_inner(-h)) / (2 * h), 0.02) / theta
    i4 = -_richardson(lambda h: (i4_inner(h) - i4_inner(-h)) / (2 * h), 0.02) / theta
    return {"I1": i1, "I2": i2, "I3": i3, "I4": i4}


def test_single_bracket_matches_hand_integrals(rng):
    expansion = expand_integrand(1, (1,), (1,))
    for _ in range(5):
        P1 = PolySpec.from_basis("p1", rng.normal(0.0, 0.5, 3), "P0")
        P2 = PolySpec((0.0,) + tuple(rng.normal(0.0, 0.7, 3)), "Pk")
        q = rng.normal(0.0, 0.3, 2)
        Q = PolySpec.from_basis("q_odd", [1.0 - q.sum(), *q], "Q")
        R = float(rng.uniform(0.5, 2.0))

        rows = pair_main_term(1, expansion, P1, P2, Q, R, THETA, order=40)
        ours = {}
        for row in rows:
            name = row.label.split()[0]
            ours[name] = ours.get(name, 0.0) + row.contribution
        expected = _hand_integrals(P1, P2, Q, R, THETA)

        assert set(ours) == {"I1", "I2", "I3", "I4"}
        scale = max(abs(v) for v in expected.values())
        for name, value in expected.items():
            assert ours[name] == pytest.approx(value, rel=1e-7, abs=1e-8 * scale), name
        assert math.fsum(ours.values()) == pytest.approx(math.fsum(expected.values()), rel=1e-7, abs=1e-8 * scale)


def test_scale_multiplies_every_row(linear_P, linear_Q):
    expansion = expand_integrand(1, (1,), (1,))
    base = pair_main_term(1, expansion, linear_P, linear_P, linear_Q, 1.3, THETA, order=16)
    scaled = pair_main_term(1, expansion, linear_P, linear_P, linear_Q, 1.3, THETA, order=16, scale=-2.0,
                            pair=("a", "b"))
    for a, b in zip(base, scaled):
        assert b.contribution == pytest.approx(-2.0 * a.contribution)
        assert b.pair == ("a", "b")


def test_single_bracket_arithmetic_factor_is_lower_order():
    config = parse_config({
        "d": 1, "K": 1, "R": 1.3, "mollifier": "general",
        "P": {
            "P0": {"basis": "monomial", "coeffs": [0.0, 1.0]},
            "P1": {"basis": "monomial", "coeffs": [0.0, 0.8, -0.3]},
        },
        "Q": {"basis": "q_odd", "coeffs": [0.5, 0.5]},
    })
    value = assemble_main_term(config, check_precision=False, diagnose_A=True)
    tagged = [row for row in value.breakdown if row.key[3]]
    leading = math.fsum(abs(row.contribution) for row in tagged)
    assert leading <= 1e-3 * value.c
    (mixed,) = [row for row in tagged if row.pair == ("P1(1)", "P1(1)") and row.key[3] == (1, 1)]
    assert mixed.diagnostic_scale == pytest.approx(1.385603705, rel=1e-3)
    one_sided = [row for row in tagged if row.key[3] in ((1, 0), (0, 1))]
    assert one_sided
    assert all(row.diagnostic_scale == pytest.approx(0.0, abs=1e-12) for row in one_sided)


@pytest.mark.parametrize("shorter,longer", [(0.5, 6.0 / 11.0), (6.0 / 11.0, 4.0 / 7.0), (0.5, 4.0 / 7.0)])
def test_longer_mollifier_lowers_c(conrey_config, shorter, longer):
    short = assemble_main_term(conrey_config.updated(theta=shorter), check_precision=False)
    long = assemble_main_term(conrey_config.updated(theta=longer), check_precision=False)
    assert long.c < short.c
    assert long.kappa > short.kappa


# ---------------------------------------------------------------------------
# d = 1 Feng layout

def _feng_two_config():
    return parse_config({
        "d": 1, "K": 2, "R": 1.3, "mollifier": "feng",
        "P": {
            "P1": {"basis": "p1", "coeffs": [0.2, -0.6]},
            "P2": {"basis": "monomial", "coeffs": [0.0, 1.0, 0.3]},
        },
        "Q": {"basis": "q_odd", "coeffs": [0.5, 0.5]},
    })


def test_arithmetic_factor_rows_are_diagnostic_only():
    config = _feng_two_config()
    plain = assemble_main_term(config, check_precision=False)
    diagnosed = assemble_main_term(config, check_precision=False, diagnose_A=True)
    assert diagnosed.c == plain.c
    tagged = [row for row in diagnosed.breakdown if row.key[3]]
    assert tagged
    for row in tagged:
        assert row.contribution == 0.0
        assert row.diagnostic_scale is not None
        assert "*A(" in row.label
    assert len(plain.by_pair()) == 4


def test_expansion_overrides_are_used():
    config = _feng_two_config()
    zero = RatioExpansion({}, 1, (2,), (2,))
    full = assemble_main_term(config, check_precision=False)
    dropped = assemble_main_term(config, expansions={((2,), (2,)): zero}, check_precision=False)
    pair_value = full.by_pair()[("P2(2)", "P2(2)")]
    assert dropped.c == pytest.approx(full.c - pair_value, rel=1e-12, abs=1e-12)


@pytest.mark.slow
def test_feng_three_piece_kappa(feng_config):
    value = assemble_main_term(feng_config, threads=4)
    assert len(value.by_pair()) == 9
    assert value.kappa == pytest.approx(0.417293962, abs=5e-4)


@pytest.mark.slow
def test_simple_zero_kappa():
    value = assemble_main_term(load_config(config_path("simple_zeros.json")), threads=4)
    assert value.kappa == pytest.approx(0.407511457, abs=5e-4)
