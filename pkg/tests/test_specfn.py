import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wl1bounds import specfn
from wl1bounds.errors import DomainError

mp.mp.dps = 40


def cgf_oracle(s):
    s = mp.mpf(s)
    return s * s / 2 + mp.log(2 * mp.ncdf(s))


def cgf_deriv_oracle(s):
    return mp.diff(cgf_oracle, mp.mpf(s))


S_POINTS = [-200.0, -40.0, -12.0, -5.000001, -4.999999, -2.0, -0.3, 0.0, 0.7, 1.0, 3.0, 8.0]


@pytest.mark.parametrize("s", S_POINTS)
def test_cgf_matches_high_precision(s):
    assert specfn.half_normal_cgf(s) == pytest.approx(float(cgf_oracle(s)), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("s", S_POINTS)
def test_cgf_slope_matches_high_precision(s):
    assert specfn.half_normal_cgf_deriv(s) == pytest.approx(float(cgf_deriv_oracle(s)), rel=1e-12)


@pytest.mark.parametrize("s", [-60.0, -6.0, -1.0, 0.5])
def test_cgf_curvature_matches_high_precision(s):
    want = float(mp.diff(cgf_oracle, mp.mpf(s), 2))
    assert specfn.half_normal_cgf_second(s) == pytest.approx(want, rel=1e-9)


def test_cgf_at_one_frozen():
    # 1/2 + log(2 Phi(1)), evaluated to 40 digits
    assert specfn.half_normal_cgf(1.0) == pytest.approx(1.0203934, abs=5e-8)
    assert specfn.half_normal_cgf(0.0) == 0.0
    assert specfn.half_normal_cgf_deriv(0.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-300.0, max_value=5.0))
def test_cgf_slope_agrees_with_finite_difference(s):
    eps = 1e-5 * max(1.0, abs(s))
    fd = (specfn.half_normal_cgf(s + eps) - specfn.half_normal_cgf(s - eps)) / (2 * eps)
    assert fd == pytest.approx(specfn.half_normal_cgf_deriv(s), rel=1e-6, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-3, max_value=6.0))
def test_log_erf_slope_agrees_with_finite_difference(x):
    eps = 1e-6 * x
    fd = (specfn.log_erf(x + eps) - specfn.log_erf(x - eps)) / (2 * eps)
    assert fd == pytest.approx(specfn.log_erf_deriv(x), rel=1e-6, abs=1e-12)


def test_cgf_slope_is_continuous_across_the_tail_switch():
    left = specfn.half_normal_cgf_deriv(np.nextafter(-5.0, -np.inf))
    right = specfn.half_normal_cgf_deriv(-5.0)
    assert left == pytest.approx(right, rel=1e-13)


@pytest.mark.parametrize("x", [1e-12, 1e-4, 0.3, 1.9999, 2.0, 4.0, 6.5])
def test_log_erf_matches_high_precision(x):
    assert specfn.log_erf(x) == pytest.approx(float(mp.log(mp.erf(x))), rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("x", [0.0, -1.0, math.nan])
def test_log_erf_rejects_nonpositive(x):
    with pytest.raises(DomainError):
        specfn.log_erf(x)
    with pytest.raises(DomainError):
        specfn.log_erf_deriv(x)


def test_log_two_phi_extreme_tail():
    s = -50.0
    want = float(mp.log(2 * mp.ncdf(s)))
    assert specfn.log_two_phi(s) == pytest.approx(want, rel=1e-13)


def test_binary_entropy_values():
    assert specfn.binary_entropy(0.5) == pytest.approx(math.log(2))
    assert specfn.binary_entropy(0.0) == 0.0
    assert specfn.binary_entropy(1.0) == 0.0
    t = 0.2
    assert specfn.binary_entropy(t) == pytest.approx(-t * math.log(t) - (1 - t) * math.log(1 - t))


def test_vector_shapes_are_preserved():
    arr = np.array([[-1.0, 0.0], [1.0, -30.0]])
    assert specfn.half_normal_cgf(arr).shape == (2, 2)
    assert isinstance(specfn.half_normal_cgf(0.5), float)
