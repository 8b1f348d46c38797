from fractions import Fraction

import pytest

from src.combinatorics import (BellPoly, bell_diagram_count, bell_diagram_polynomial, bell_number,
                               complete_bell, complete_bell_recursive, compositions, multinomial,
                               partial_bell, partitions, set_partitions, strict_compositions)
from src.utils import DomainError


def test_partition_counts():
    assert [len(partitions(k)) for k in range(8)] == [1, 1, 2, 3, 5, 7, 11, 15]
    for vector in partitions(6):
        assert sum(i * v for i, v in enumerate(vector, start=1)) == 6


def test_compositions():
    assert compositions(2, 2) == [(0, 2), (1, 1), (2, 0)]
    assert len(compositions(3, 3)) == 10
    assert strict_compositions(4, 2) == [(1, 3), (2, 2), (3, 1)]
    assert strict_compositions(1, 2) == []


def test_multinomial():
    assert multinomial(4, [2, 1, 1]) == 12
    with pytest.raises(DomainError):
        multinomial(4, [2, 1])


def test_set_partitions_count_bell_numbers():
    for n in range(1, 7):
        assert sum(1 for _ in set_partitions(range(n))) == bell_number(n)


def test_bell_numbers():
    assert [bell_number(n) for n in range(8)] == [1, 1, 2, 5, 15, 52, 203, 877]


@pytest.mark.parametrize("k,expected", [(1, 7), (2, 67), (3, 72), (4, 16)])
def test_partial_bell_order_four(k, expected):
    assert partial_bell(4, k).evaluate([2, 3, 5, 7]) == expected


@pytest.mark.parametrize("k,expected", [(1, 5), (2, 18), (3, 8)])
def test_partial_bell_order_three(k, expected):
    assert partial_bell(3, k).evaluate([2, 3, 5]) == expected


def test_partial_bell_exact_on_fractions():
    value = partial_bell(3, 2).evaluate([Fraction(1, 2), Fraction(1, 3)])
    assert value == Fraction(1, 2)


def test_partial_bell_terms():
    assert partial_bell(4, 2).terms == {(1, 0, 1): 4, (0, 2, 0): 3}
    with pytest.raises(DomainError):
        partial_bell(2, 3)


@pytest.mark.parametrize("n", range(0, 9))
def test_complete_bell_matches_recursion(n):
    assert complete_bell(n) == complete_bell_recursive(n)


def test_complete_bell_text():
    assert complete_bell(2).to_text() == "x2 + x1^2"
    assert complete_bell(3).to_text() == "x3 + 3*x1*x2 + x1^3"


@pytest.mark.parametrize("d,K,count", [
    pytest.param(1, 3, 1, id="d1-K3"),
    pytest.param(2, 3, 15, id="d2-K3"),
    pytest.param(2, 4, 31, id="d2-K4"),
    pytest.param(3, 3, 250, id="d3-K3-formula-gives-250-not-printed-282"),
])
def test_bell_diagram_counts(d, K, count):
    assert bell_diagram_count(d, K) == count
    assert bell_diagram_polynomial(d, K).evaluate([1] * d) == count


def test_bell_diagram_polynomial_small():
    # B_1^2 + B_1 B_2 + B_2^2 with B_1 = x1, B_2 = x2 + x1^2
    poly = bell_diagram_polynomial(2, 2)
    assert poly.evaluate([2, 3]) == 4 + 2 * 7 + 49


def test_bell_poly_arithmetic():
    x1, x2 = BellPoly.variable(1, 2), BellPoly.variable(2, 2)
    poly = (x1 + x2) ** 2
    assert poly.terms == {(2, 0): 1, (1, 1): 2, (0, 2): 1}
    assert poly * 0 == BellPoly.build({}, 2)
    assert BellPoly.one(0).lift(3) == BellPoly.one(3)
