import math

import numpy as np
import pytest

from cdofb.quadrature import (QuadratureRule, interval_rule, map_to_simplices,
                              simplex_rule, tetrahedron_rule, triangle_rule)


def exact_simplex_monomial(exponents):
    """Integral of x^a y^b z^c over the unit simplex: prod(a_i!) / (sum a_i + d)!"""
    num = 1
    for a in exponents:
        num *= math.factorial(a)
    return num / math.factorial(sum(exponents) + len(exponents))


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4, 6, 8, 11])
def test_interval_exactness(degree):
    rule = interval_rule(degree)
    for p in range(degree + 1):
        val = rule.weights @ rule.points[:, 0] ** p
        assert val == pytest.approx(1.0 / (p + 1), rel=1e-13)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 6, 7])
def test_triangle_exactness(degree):
    rule = triangle_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert val == pytest.approx(exact_simplex_monomial((a, b)), rel=1e-12)


@pytest.mark.parametrize("degree", [1, 2, 4, 6])
def test_tetrahedron_exactness(degree):
    rule = tetrahedron_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                val = rule.weights @ (rule.points[:, 0] ** a
                                      * rule.points[:, 1] ** b
                                      * rule.points[:, 2] ** c)
                assert val == pytest.approx(exact_simplex_monomial((a, b, c)), rel=1e-12)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_weights_positive_and_sum(dim):
    rule = simplex_rule(dim, 6)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(1.0 / math.factorial(dim), rel=1e-14)


def test_rule_validation():
    with pytest.raises(ValueError):
        QuadratureRule(2, np.zeros((1, 2)), np.array([-0.5]))


def test_map_to_simplices_area():
    tri = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]],
                    [[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]]])
    pts, wts = map_to_simplices(triangle_rule(2), tri)
    assert wts.sum(axis=1) == pytest.approx([3.0, 0.5])
    # centroid of first triangle via quadrature of (x, y)
    cx = (wts[0] @ pts[0, :, 0]) / 3.0
    assert cx == pytest.approx(2.0 / 3.0)


def test_map_lower_dimensional_simplex():
    seg = np.array([[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]])  # segment in 3D
    tri3 = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    _, wseg = map_to_simplices(interval_rule(3), seg)
    assert wseg.sum() == pytest.approx(math.sqrt(3.0))
    _, wtri = map_to_simplices(triangle_rule(3), tri3)
    assert wtri.sum() == pytest.approx(0.5)
