import math

import numpy as np
import pytest
from scipy import optimize

from wl1bounds import specfn
from wl1bounds.errors import DomainError, NoSignChangeError
from wl1bounds.exponents import evaluate_breakdown, leading_face_geometry, typical_face_geometry
from wl1bounds.optimizer import (BINDING, NEGATIVE, BoundQuery, LeadingFace, TypicalFace,
                                 ascend_overcount, free_exponent, guaranteed_delta_bound,
                                 maximize_total, optimal_rho, project_overcount, total_exponent)
from wl1bounds.shapes import constant, linear_probability, linear_weight

LOG2 = math.log(2)

QUERIES = [
    BoundQuery(0.5, 4, LeadingFace(0.15), linear_weight(1.0)),
    BoundQuery(0.5, 10, TypicalFace(linear_probability(0.17, 0.26)), linear_weight(0.8)),
    BoundQuery(0.4, 3, LeadingFace(0.05), constant(1.0)),
]


@pytest.mark.parametrize("query", QUERIES)
def test_certificate_reproduces_value(query):
    res = total_exponent(query)
    assert res.feasible
    h, x, y = res.certificate
    again = evaluate_breakdown(query.geometry(), h, x, y)
    assert again.psi_tot == pytest.approx(res.psi_tot, abs=1e-9)
    assert res.dual_value == pytest.approx(res.psi_tot, abs=1e-8)
    geom = query.geometry()
    assert geom.mass(h) >= query.alpha - geom.delta - 1e-9
    assert res.breakdown.psi_int <= 0 and res.breakdown.psi_ext <= 0


@pytest.mark.parametrize("query", QUERIES)
def test_projected_gradient_agrees(query):
    res = total_exponent(query)
    h, x, y = res.certificate
    value, _ = ascend_overcount(query.geometry(), query.alpha, x, y)
    assert value == pytest.approx(res.psi_tot, abs=1e-7)


@pytest.mark.parametrize("query", QUERIES)
def test_finer_x_scan_changes_nothing(query):
    coarse = total_exponent(query).psi_tot
    fine = total_exponent(BoundQuery(query.alpha, query.r, query.mode, query.weight, 96)).psi_tot
    assert fine == pytest.approx(coarse, abs=1e-9)


def single_interval_oracle(alpha, delta):
    """Uniform weights with one cell: scan the covering fraction tau >= alpha."""

    def internal(tau):
        c0, c1 = tau - delta, delta

        def q(y):
            conj = -optimize.minimize_scalar(lambda s: -(s * y - specfn.half_normal_cgf(s)),
                                             bounds=(-300, 0), method="bounded",
                                             options={"xatol": 1e-12}).fun
            return c0 * c0 * y * y / (2 * c1) + c0 * conj
        return -c0 * LOG2 - optimize.minimize_scalar(
            q, bounds=(1e-6, math.sqrt(2 / math.pi) - 1e-9), method="bounded",
            options={"xatol": 1e-12}).fun

    def external(tau):
        if tau >= 1:
            return 0.0
        return -optimize.minimize_scalar(
            lambda x: tau * x * x - (1 - tau) * specfn.log_erf(x), bounds=(1e-6, 30),
            method="bounded", options={"xatol": 1e-12}).fun

    def total(tau):
        frac = (tau - delta) / (1 - delta)
        com = (1 - delta) * specfn.binary_entropy(frac) + (tau - delta) * LOG2
        return com + internal(tau) + external(tau)

    taus = np.linspace(alpha, 1 - 1e-9, 400)
    vals = [total(t) for t in taus]
    i = int(np.argmax(vals))
    lo, hi = taus[max(i - 1, 0)], taus[min(i + 1, taus.size - 1)]
    res = optimize.minimize_scalar(lambda t: -total(t), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return max(vals[i], -res.fun)


@pytest.mark.parametrize("alpha,delta", [(0.5, 0.1), (0.5, 0.19), (0.6, 0.3), (0.3, 0.02)])
def test_single_cell_reduces_to_scalar_scan(alpha, delta):
    res = total_exponent(BoundQuery(alpha, 1, LeadingFace(delta), constant(1.0)))
    assert res.psi_tot == pytest.approx(single_interval_oracle(alpha, delta), abs=1e-6)


def test_unconstrained_maximum_is_zero_for_flat_weights():
    for delta in (0.05, 0.2, 0.4):
        geom = leading_face_geometry(constant(1.0), delta, 1)
        assert abs(free_exponent(geom).psi_tot) < 1e-9


def test_full_measurement_case():
    res = total_exponent(BoundQuery(1.0, 5, LeadingFace(0.3), linear_weight(1.0)))
    assert res.feasible and res.psi_tot < 0
    np.testing.assert_allclose(res.certificate[0], 1.0)


def test_infeasible_mass_requirement():
    geom = typical_face_geometry(constant(1.0), linear_probability(0.2, 0.1), 4)
    res = maximize_total(geom, 1.5)
    assert not res.feasible and res.psi_tot == -math.inf


def test_bad_queries_rejected():
    with pytest.raises(DomainError):
        BoundQuery(0.0, 3, LeadingFace(0.1), constant(1.0))
    with pytest.raises(DomainError):
        BoundQuery(0.5, 0, LeadingFace(0.1), constant(1.0))
    with pytest.raises(DomainError):
        guaranteed_delta_bound(1.0, constant(1.0), 3)


def test_projection_onto_overcount_set():
    rng = np.random.default_rng(1)
    for _ in range(100):
        r = int(rng.integers(1, 10))
        upper = rng.uniform(0, 1, r)
        cell = 1 / r
        need = rng.uniform(0, cell * upper.sum())
        v = rng.normal(0, 1, r)
        p = project_overcount(v, upper, cell, need)
        assert np.all(p >= -1e-15) and np.all(p <= upper + 1e-15)
        assert cell * p.sum() >= need - 1e-12
        # no feasible point is closer: check against random feasible points
        for _ in range(20):
            q = project_overcount(rng.uniform(0, 1, r) * upper, upper, cell, need)
            assert np.linalg.norm(v - p) <= np.linalg.norm(v - q) + 1e-9


def test_flat_weight_bound_matches_known_weak_threshold():
    # the uniform l1 weak threshold at m/n = 1/2 is k/n ~ 0.1924
    for criterion in (BINDING, NEGATIVE):
        bound = guaranteed_delta_bound(0.5, constant(1.0), 1, criterion=criterion, tol=1e-5)
        assert bound.delta_bar == pytest.approx(0.1928, abs=1.5e-3)
        assert bound.monotone


def test_bound_grows_with_measurements():
    bars = [guaranteed_delta_bound(a, linear_weight(1.0), 5).delta_bar for a in (0.3, 0.5, 0.7)]
    assert bars[0] < bars[1] < bars[2]


def test_strict_reading_is_more_conservative():
    weight = linear_weight(1.0)
    strict = guaranteed_delta_bound(0.5, weight, 5, criterion=NEGATIVE).delta_bar
    binding = guaranteed_delta_bound(0.5, weight, 5, criterion=BINDING).delta_bar
    assert strict < binding


def test_bound_at_its_value_is_certified():
    bound = guaranteed_delta_bound(0.5, linear_weight(1.0), 5, criterion=NEGATIVE)
    assert bound.psi_at_bound < 0
    bound = guaranteed_delta_bound(0.5, linear_weight(1.0), 5)
    assert bound.psi_at_bound < bound.free_at_bound


def test_uncertifiable_family_raises():
    with pytest.raises(NoSignChangeError):
        # a steep tilt keeps delta >= c/2 = 0.3, past the flat-weight threshold
        guaranteed_delta_bound(0.5, linear_weight(5.0), 1, 0.6, criterion=NEGATIVE,
                               scan_points=4)


def test_optimal_rho_prefers_smaller_slope_on_ties():
    choice = optimal_rho(0.0, 0.5, 4, [0.0, 0.0, 0.5])
    assert choice.rho_star == 0.0
    assert len(choice.curve) == 3
