import math

import numpy as np
import pytest
from scipy import integrate

from wl1bounds.errors import DomainError, ShapeError
from wl1bounds.shapes import (PROBABILITY, WEIGHT, IntervalGrid, bernoulli_kl, constant,
                              interval_averages, linear_probability, linear_weight,
                              moment_integrals, parse_shape, piecewise_linear, typical_face,
                              typicality_divergence)

FAMILIES = [
    linear_weight(0.0), linear_weight(1.0), linear_weight(2.7),
    piecewise_linear([0, 0.5, 1], [1.0, 1.2, 2.0]),
    piecewise_linear([0, 0.3, 0.3, 1], [1.0, 1.1, 1.8, 2.0]),
]


def test_linear_families_evaluate():
    assert linear_probability(0.185, 0.36)(0.0) == pytest.approx(0.365)
    assert linear_weight(1.0)(0.5) == 1.5
    assert constant(0.1, PROBABILITY)(0.7) == 0.1


def test_jump_is_right_continuous():
    f = piecewise_linear([0, 0.5, 0.5, 1], [1, 1, 2, 2])
    assert f(0.5) == 2.0
    assert f(np.nextafter(0.5, 0)) == pytest.approx(1.0)


@pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.spec())
@pytest.mark.parametrize("a,b", [(0.0, 1.0), (0.1, 0.45), (0.3, 0.95), (0.2, 0.2)])
def test_closed_form_integrals_match_quadrature(f, a, b):
    pts = [x for x in f.knots if a < x < b]
    want, _ = integrate.quad(f, a, b, points=pts or None, epsabs=1e-13)
    want_sq, _ = integrate.quad(lambda u: f(u) ** 2, a, b, points=pts or None, epsabs=1e-13)
    assert f.integral(a, b) == pytest.approx(want, abs=1e-9)
    assert f.integral_sq(a, b) == pytest.approx(want_sq, abs=1e-9)


def test_moment_integrals_closed_form():
    c0, c1, c2 = moment_integrals(linear_weight(1.0), 0.1, 0.5)
    assert c0 == pytest.approx(0.4 + (0.25 - 0.01) / 2)
    assert c1 == pytest.approx(((1.1) ** 3 - 1) / 3)
    assert c2 == pytest.approx(((1.5) ** 3 - 1) / 3)
    assert moment_integrals(linear_weight(1.0), 0.0, 1.0)[2] == pytest.approx(7 / 3)


def test_interval_averages_examples():
    p = linear_probability(0.2, 0.1)
    np.testing.assert_allclose(interval_averages(p, 2), [0.225, 0.175], atol=1e-15)
    np.testing.assert_allclose(interval_averages(p, 1), [0.2], atol=1e-15)
    np.testing.assert_allclose(interval_averages(constant(0.3, PROBABILITY), 5), 0.3)


def test_typical_face_examples():
    face = typical_face(linear_probability(0.185, 0.36), 2)
    np.testing.assert_allclose(face.g, [0.275, 0.095], atol=1e-15)
    face = typical_face(constant(0.1, PROBABILITY), 4)
    np.testing.assert_allclose(face.g, 0.1)
    assert face.delta == pytest.approx(0.1)
    assert not np.any(typical_face(constant(0.0, PROBABILITY), 3).g)


@pytest.mark.parametrize("delta,c", [(0.185, 0.36), (0.3, 0.0), (0.5, 1.0), (0.05, 0.1)])
@pytest.mark.parametrize("r", [1, 3, 7, 60])
def test_typical_face_recovers_total_mass(delta, c, r):
    p = linear_probability(delta, c)
    assert typical_face(p, r).delta == pytest.approx(p.integral(0, 1), abs=1e-10)


def test_left_edge_sampling():
    grid = IntervalGrid.sample(linear_weight(1.0), 4, 0.2, 1.0)
    np.testing.assert_allclose(grid.samples, [1.2, 1.4, 1.6, 1.8])
    assert grid.cell == pytest.approx(0.2)


def test_bernoulli_kl_examples():
    assert bernoulli_kl(0.3, 0.3) == 0.0
    assert bernoulli_kl(0.5, 0.25) == pytest.approx(0.143841, abs=1e-6)
    assert bernoulli_kl(0.0, 0.5) == pytest.approx(math.log(2))
    assert bernoulli_kl(1.0, 0.25) == pytest.approx(math.log(4))
    with pytest.raises(DomainError):
        bernoulli_kl(0.2, 0.0)


def test_bernoulli_kl_nonnegative_on_grid():
    qs = np.linspace(0, 1, 100)
    ps = np.linspace(0.005, 0.995, 100)
    for q in qs:
        for p in ps:
            d = bernoulli_kl(q, p)
            assert d >= 0.0
            if abs(q - p) > 1e-3:
                assert d > 0.0


def test_typicality_divergence_examples():
    assert typicality_divergence([0.5], [0.25]) == pytest.approx(0.143841, abs=1e-6)
    assert typicality_divergence([0.5, 0.25], [0.25, 0.25]) == pytest.approx(0.0719205, abs=1e-7)
    face = typical_face(linear_probability(0.2, 0.1), 5)
    assert typicality_divergence(face, face.g) == 0.0


def test_atypical_profiles_become_rare():
    # Bernoulli(p(j/n)) indicators, binned into 4 cells; rate of profiles far from p-bar
    p = linear_probability(0.185, 0.36)
    r, draws, rng = 4, 10_000, np.random.default_rng(7)
    rates = []
    for n in (500, 1000, 2000):
        probs = p(np.arange(1, n + 1) / n)
        pbar = interval_averages(p, r)
        bins = np.minimum((np.arange(n) * r) // n, r - 1)
        hits = 0
        for chunk in range(10):
            ind = rng.random((draws // 10, n)) < probs
            counts = np.stack([ind[:, bins == i].sum(axis=1) for i in range(r)], axis=1)
            g = counts / (n / r)
            q, pb = np.clip(g, 1e-300, 1 - 1e-16), pbar
            div = np.mean(q * np.log(q / pb) + (1 - q) * np.log((1 - q) / (1 - pb)), axis=1)
            hits += int(np.sum(div > 0.02))
        rates.append(hits / draws)
    for a, b in zip(rates, rates[1:]):
        se = math.sqrt(a * (1 - a) / draws + b * (1 - b) / draws)
        assert b <= a + 2 * se
    assert rates[0] > rates[-1]


@pytest.mark.parametrize("text,role", [
    ("linear-prob:delta=0.185,c=0.36", PROBABILITY),
    ("linear-weight:rho=1.0", WEIGHT),
    ("pwl:0=1.0,0.5=1.2,1=2.0", WEIGHT),
    ("const:v=1", WEIGHT),
])
def test_shape_grammar_round_trip(text, role):
    shape = parse_shape(text, role)
    again = parse_shape(shape.spec(), role)
    np.testing.assert_allclose(again.knots, shape.knots)
    np.testing.assert_allclose(again.values, shape.values)


@pytest.mark.parametrize("text,role", [
    ("linear-prob:delta=0.9,c=0.5", PROBABILITY),  # leaves [0, 1]
    ("linear-weight:rho=-2", WEIGHT),               # not positive
    ("pwl:0=2,1=1", WEIGHT),                        # decreasing weight
    ("linear-weight:rho=1", PROBABILITY),           # wrong role
    ("sine:a=1", WEIGHT),
    ("linear-weight:beta=1", WEIGHT),
    ("linear-weight:rho", WEIGHT),
    ("pwl:0.1=1,1=2", WEIGHT),
])
def test_shape_grammar_rejects(text, role):
    with pytest.raises(ShapeError):
        parse_shape(text, role)


def test_shapes_are_defined_on_unit_interval_only():
    with pytest.raises(DomainError):
        linear_weight(1.0)(1.5)
