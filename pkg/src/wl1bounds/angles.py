"""Finite-n internal and external angles of the weighted cross-polytope.

These are the exact finite-dimensional angles that the exponents bound,
used as independent oracles. Faces are indexed by their leading vertices:
``F`` is spanned by ``e_i / w_i`` for ``i < k`` and ``G`` by ``i < l``.

The external angle is a one-dimensional integral of a product of error
functions, done by Gauss-Legendre in log space on a window around the
peak. The internal angle is an expectation over a sum of half-normal
variables, estimated by exponentially tilted Monte Carlo so that values
far below machine underflow remain measurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from . import specfn
from .errors import DomainError

# window half-depth in log units; e**-40 is far below 1e-14 of the peak
_WINDOW = 40.0


def _positive(weights):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(~(w > 0)):
        raise DomainError("weights must be a non-empty vector of positive reals")
    return w


def log_external_angle(weights, l: int, quad_points: int = 200) -> float:
    """Log of the external angle of the face on the first ``l`` vertices."""
    w = _positive(weights)
    n = w.size
    if not 1 <= l <= n:
        raise DomainError("need 1 <= l <= n")
    sigma = float(np.sum(w[:l] ** 2))
    rest = w[l:]
    prefactor = 0.5 * math.log(sigma / math.pi)

    def log_integrand(x):
        x = np.asarray(x, dtype=float)
        out = -sigma * x * x
        if rest.size:
            out = out + specfn.log_erf(np.multiply.outer(x, rest)).sum(axis=-1)
        return out

    if rest.size == 0:
        peak_x, a = 0.0, 0.0
    else:
        def slope(x):
            return -2 * sigma * x + float(rest @ specfn.log_erf_deriv(x * rest))

        hi = 1.0
        while slope(hi) > 0:
            hi *= 2
        lo = hi
        while slope(lo) < 0:
            lo /= 2
        peak_x = optimize.brentq(slope, lo, max(hi, 2 * lo), xtol=1e-14)
    peak = float(log_integrand(peak_x))

    def drop(x):
        return float(log_integrand(x)) - (peak - _WINDOW)

    if rest.size:
        a_try = peak_x * 1e-12
        a = optimize.brentq(drop, a_try, peak_x) if drop(a_try) < 0 else 0.0
    inside, step = peak_x, 1.0 / math.sqrt(sigma)
    while drop(inside + step) > 0:
        inside, step = inside + step, 2 * step
    b = optimize.brentq(drop, inside, inside + step)

    nodes, qw = np.polynomial.legendre.leggauss(quad_points)
    x = a + (b - a) * (nodes + 1) / 2
    vals = log_integrand(x) - peak
    return prefactor + peak + math.log((b - a) / 2 * float(qw @ np.exp(vals)))


def external_angle_oracle(weights, l: int, quad_points: int = 200) -> float:
    """External angle of the face on the first ``l`` vertices."""
    return math.exp(log_external_angle(weights, l, quad_points))


@dataclass(frozen=True)
class AngleEstimate:
    """A Monte Carlo angle estimate carried in log space."""

    log_value: float
    log_stderr: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def stderr(self) -> float:
        return math.exp(self.log_stderr)


def _tilt(scales):
    """Tilt that minimizes the bound on the importance weight."""
    def slope(t):
        return t / 2 + float(scales @ specfn.half_normal_cgf_deriv(t * scales))

    lo = -1.0
    while slope(lo) > 0:
        lo *= 2
    return optimize.brentq(slope, lo, 0.0, xtol=1e-14)


def internal_angle_oracle(weights, k: int, samples: int, rng: np.random.Generator) -> AngleEstimate:
    """Internal angle of the face on ``k`` vertices inside the face on ``l = len(weights)``.

    Writes the angle as ``2**-(l-k) * sqrt(sig_l / sig_k) * E[exp(-S**2)]`` where
    ``S`` is a sum of independent half-normals with variances
    ``w_p**2 / (2 sig_k)`` over the extra vertices. Each half-normal is drawn
    from its exponentially tilted law, a normal truncated to the positive
    half-line, and reweighted.
    """
    w = _positive(weights)
    l = w.size
    if not 1 <= k <= l:
        raise DomainError("need 1 <= k <= l")
    if k == l:
        return AngleEstimate(0.0, -math.inf)
    if samples < 2:
        raise DomainError("need at least two samples")
    sig_k = float(np.sum(w[:k] ** 2))
    sig_l = float(np.sum(w ** 2))
    var = w[k:] ** 2 / (2 * sig_k)
    scales = np.sqrt(var)
    theta = _tilt(scales)

    # the tilted law of each term is N(theta var, var) conditioned on being positive
    cut = -theta * scales
    u = rng.random((samples, l - k))
    z = -special.ndtri_exp(np.log(u) + special.log_ndtr(-cut))
    terms = theta * var + scales * z
    s = terms.sum(axis=1)
    log_w = -s * s - theta * s + float(np.sum(specfn.half_normal_cgf(theta * scales)))

    top = float(np.max(log_w))
    ratios = np.exp(log_w - top)
    mean = float(ratios.mean())
    sem = float(ratios.std(ddof=1)) / math.sqrt(samples)
    base = -(l - k) * specfn.LOG2 + 0.5 * math.log(sig_l / sig_k) + top
    log_sem = base + math.log(sem) if sem > 0 else -math.inf
    return AngleEstimate(base + math.log(mean), log_sem)
