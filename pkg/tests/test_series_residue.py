from fractions import Fraction

import pytest
import sympy

from src.series_residue import (BASES, RatioSymbol, TruncatedSeries, expand_integrand, numeric_eval,
                                residue_variables, shifted_zeta_factor)
from src.utils import DomainError, ResourceError


def _exponential_values(c: float, order: int):
    """zeta^(m)/zeta = c^m at every base turns each factor into an exponential."""
    return {RatioSymbol(base, m): c ** m for base in BASES for m in range(1, order + 1)}


def test_single_variable_bracket():
    expansion = expand_integrand(1, (1,), (1,))
    assert expansion.sign == 1
    assert expansion.untagged() == {
        ((0, 1), (), (), ()): 1,
        ((), (1,), (1,), ()): 1,
        ((1,), (), (1,), ()): -1,
        ((1,), (1,), (), ()): -1,
    }


def test_weight_four_bracket():
    expansion = expand_integrand(1, (2,), (2,))
    assert expansion.sign == 1
    expected = {
        ((0, 2), (), ()): 2,
        ((4,), (), ()): -1,
        ((3,), (1,), ()): 2,
        ((3,), (), (1,)): 2,
        ((2,), (2,), ()): 1,
        ((2,), (), (2,)): 1,
        ((1,), (1,), (2,)): -2,
        ((1,), (2,), (1,)): -2,
        ((), (2,), (2,)): 1,
        ((0, 1), (1,), (1,)): 4,
        ((1, 1), (), (1,)): -4,
        ((1, 1), (1,), ()): -4,
    }
    assert len(expansion) == len(expected)
    for (k, l, m), coeff in expected.items():
        assert expansion.coefficient(k, l, m) == coeff, (k, l, m)


def test_degree_two_bracket():
    expansion = expand_integrand(2, (1, 1), (1, 1))
    assert expansion.sign == 1
    assert expansion.coefficient((6,)) == 12
    assert expansion.coefficient((4, 1)) == -48
    assert expansion.coefficient((2, 2)) == 43
    assert expansion.coefficient((0, 3)) == 4
    assert expansion.coefficient((5,), (1,)) == 12
    assert expansion.coefficient((3, 0, 1)) == 8
    assert expansion.coefficient((1, 1, 1)) == -20
    assert expansion.coefficient((1, 2), (1,)) == -25
    assert expansion.coefficient((1, 2), (), (1,)) == -25


@pytest.mark.parametrize("ell,ellbar", [((1,), (1,)), ((1,), (2,)), ((2,), (2,)), ((0,), (3,)), ((3,), (1,))])
def test_exponential_specialisation_cancels(ell, ellbar):
    expansion = expand_integrand(1, ell, ellbar)
    weight = sum(ell) + sum(ellbar)
    assert abs(numeric_eval(expansion, _exponential_values(1.7, weight))) < 1e-9


def test_exponential_specialisation_cancels_in_degree_two():
    expansion = expand_integrand(2, (1, 1), (0, 1))
    assert abs(numeric_eval(expansion, _exponential_values(1.3, 5))) < 1e-9


def test_odd_weight_sign():
    assert expand_integrand(1, (1,), (2,)).sign == -1
    assert expand_integrand(2, (0, 1), (1, 0)).sign == -1


def test_mirror_pair_is_a_swap():
    forward = expand_integrand(1, (1,), (2,))
    backward = expand_integrand(1, (2,), (1,))
    assert forward.swapped().terms == backward.terms
    assert forward.swapped().ell == (2,)


def test_empty_vectors_give_unit():
    expansion = expand_integrand(1, (0,), (0,))
    assert expansion.terms == {((), (), (), ()): 1}
    assert expand_integrand(0, (), ()).terms == {((), (), (), ()): 1}


def test_arithmetic_factor_tags():
    expansion = expand_integrand(1, (1,), (1,), include_A=True)
    assert expansion.untagged() == expand_integrand(1, (1,), (1,)).terms
    tags = {key[3] for key in expansion.terms if key[3]}
    assert tags == {(1, 0), (0, 1), (1, 1)}
    assert expansion.coefficient(tag=(1, 1)) == 1
    values = _exponential_values(2.0, 2)
    a_values = {(1, 0): 0.0, (0, 1): 0.0, (1, 1): 0.0}
    assert abs(numeric_eval(expansion, values, a_values)) < 1e-9


def test_numeric_eval_needs_every_value():
    expansion = expand_integrand(1, (1,), (1,), include_A=True)
    with pytest.raises(DomainError):
        numeric_eval(expansion, {RatioSymbol("SU", 1): 1.0})
    with pytest.raises(DomainError):
        numeric_eval(expansion, _exponential_values(1.0, 2))


def test_weight_cap():
    with pytest.raises(ResourceError):
        expand_integrand(1, (5,), (4,))
    with pytest.raises(DomainError):
        expand_integrand(2, (1,), (1, 1))


def test_residue_variables_caps():
    caps, z_vars, w_vars = residue_variables(2, (1, 1), (0, 2))
    assert z_vars == ["z1_1", "z2_1"]
    assert w_vars == ["w2_1", "w2_2"]
    assert caps == {"z1_1": 1, "z2_1": 2, "w2_1": 2, "w2_2": 2}


def test_shifted_factor_inverse():
    caps = {"z": 3}
    up = shifted_zeta_factor("SU", ["z"], 1, 1, caps, order=3)
    down = shifted_zeta_factor("SU", ["z"], -1, 1, caps, order=3)
    product = up * down
    assert product.coefficient((0,)) == product.unit_poly()
    for e in (1, 2, 3):
        assert not product.coefficient((e,))


def test_series_inverse_needs_unit_constant():
    series = TruncatedSeries(("z",), (2,), 2)
    with pytest.raises(DomainError):
        series.inverse()


def test_symbol_rejects_bad_base():
    with pytest.raises(DomainError):
        RatioSymbol("XX", 1)
    assert str(RatioSymbol("AS", 2)) == "AS2"
    assert isinstance(expand_integrand(1, (1,), (1,)).coefficient((0, 1)), Fraction)


def test_bracket_as_sympy_poly():
    su1, su2, as1, bu1 = sympy.symbols("SU1 SU2 AS1 BU1")
    poly = expand_integrand(1, (1,), (1,)).as_poly()
    assert poly.domain == sympy.QQ
    assert sympy.expand(poly.as_expr() - (su2 + as1 * bu1 - su1 * bu1 - su1 * as1)) == 0


def test_tagged_poly_keeps_arithmetic_symbols():
    poly = expand_integrand(1, (1,), (1,), include_A=True).as_poly()
    names = {str(g) for g in poly.gens}
    assert {"A(1,0)", "A(0,1)", "A(1,1)"} <= names
    assert poly.coeff_monomial(sympy.Symbol("A(1,1)")) == 1
