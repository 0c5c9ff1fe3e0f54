"""Scalar special functions behind the angle exponents.

Everything here accepts scalars or numpy arrays and is evaluated
elementwise. The half-normal cumulant generating function

    lambda(s) = s**2 / 2 + log(2 * Phi(s))

is probed at strongly negative ``s`` by the root finders, so the
negative half-line is evaluated through the scaled complementary error
function, ``2 * Phi(s) * exp(s**2 / 2) = erfcx(-s / sqrt(2))``, which has
no underflow and no cancellation.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import special

from .errors import DomainError

SQRT2 = math.sqrt(2.0)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
LOG2 = math.log(2.0)

# Below this point lambda' is taken from the Mills-ratio continued fraction.
_CF_SWITCH = -5.0
_CF_TERMS = 40


def _elementwise(fn):
    """Run ``fn`` on a flat float array and restore the input's shape."""

    @functools.wraps(fn)
    def wrapper(x):
        arr = np.asarray(x, dtype=float)
        out = fn(arr.ravel()).reshape(arr.shape)
        return float(out) if arr.ndim == 0 else out

    return wrapper


@_elementwise
def std_normal_cdf(s):
    """Standard normal distribution function Phi(s)."""
    return special.ndtr(s)


@_elementwise
def std_normal_pdf(s):
    return np.exp(-0.5 * s * s) / math.sqrt(2.0 * math.pi)


@_elementwise
def log_two_phi(s):
    """log(2 * Phi(s)), finite for arbitrarily negative ``s``."""
    out = np.empty_like(s)
    neg = s <= 0
    sn = s[neg]
    out[neg] = np.log(special.erfcx(-sn / SQRT2)) - 0.5 * sn * sn
    out[~neg] = LOG2 + np.log1p(-special.ndtr(-s[~neg]))
    return out


def _mills_excess(u):
    """phi(u) / (1 - Phi(u)) - u, accurate for u >= 5."""
    t = np.array(u, dtype=float, copy=True)
    for j in range(_CF_TERMS, 1, -1):
        t = u + j / t
    return 1.0 / t


@_elementwise
def half_normal_cgf(s):
    """lambda(s) = s**2/2 + log(2 Phi(s)), the log-MGF of |N(0, 1)|."""
    out = np.empty_like(s)
    neg = s <= 0
    out[neg] = np.log(special.erfcx(-s[neg] / SQRT2))
    sp = s[~neg]
    out[~neg] = 0.5 * sp * sp + LOG2 + np.log1p(-special.ndtr(-sp))
    return out


def _inverse_mills(s):
    """phi(s) / Phi(s)."""
    out = np.empty_like(s)
    neg = s <= 0
    out[neg] = SQRT_2_OVER_PI / special.erfcx(-s[neg] / SQRT2)
    sp = s[~neg]
    out[~neg] = np.exp(-0.5 * sp * sp) / math.sqrt(2.0 * math.pi) / special.ndtr(sp)
    return out


@_elementwise
def half_normal_cgf_deriv(s):
    """lambda'(s) = s + phi(s)/Phi(s); decays like 1/|s| as s -> -inf."""
    out = np.empty_like(s)
    tail = s < _CF_SWITCH
    if tail.any():
        out[tail] = _mills_excess(-s[tail])
    body = ~tail
    out[body] = s[body] + _inverse_mills(s[body])
    return out


@_elementwise
def half_normal_cgf_second(s):
    """lambda''(s) = 1 - m(s) * lambda'(s) with m = phi/Phi."""
    d1 = half_normal_cgf_deriv(s)
    out = 1.0 - (d1 - s) * d1
    # the tail is ~1/s**2; keep rounding from pushing it to zero or below
    return np.maximum(out, 1e-300)


@_elementwise
def erf(x):
    return special.erf(x)


@_elementwise
def erf_deriv(x):
    """d/dx erf(x) = 2/sqrt(pi) * exp(-x**2)."""
    return TWO_OVER_SQRT_PI * np.exp(-x * x)


def _log_erf(x):
    out = np.empty_like(x)
    small = x < 2.0
    out[small] = np.log(special.erf(x[small]))
    out[~small] = np.log1p(-special.erfc(x[~small]))
    return out


@_elementwise
def log_erf(x):
    """log(erf(x)) for x > 0.

    Raises
    ------
    DomainError
        If any ``x <= 0``; the logarithm diverges at the origin.
    """
    if np.any(~(x > 0)):
        raise DomainError("log_erf is defined only for x > 0")
    return _log_erf(x)


@_elementwise
def log_erf_deriv(x):
    """d/dx log(erf(x)) for x > 0."""
    if np.any(~(x > 0)):
        raise DomainError("log_erf_deriv is defined only for x > 0")
    return TWO_OVER_SQRT_PI * np.exp(-x * x) / special.erf(x)


@_elementwise
def binary_entropy(t):
    """Natural-log binary entropy with 0 log 0 = 0."""
    return special.entr(t) + special.entr(1.0 - t)
