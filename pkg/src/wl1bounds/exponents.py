"""Combinatorial, internal-angle and external-angle exponents.

All three exponents are asymptotic rates ``(1/n) log(.)`` of a face count
or an angle. They are evaluated on a :class:`FaceGeometry`, which fixes the
weight shape, the grid of cells and the occupancy of the face class:

* leading-face mode puts the face on [0, delta) and the grid on
  [delta, 1] with zero occupancy there;
* typical-face mode puts the grid on [0, 1] with occupancy equal to the
  prior's cell means.

An overcount profile ``h`` (one entry per cell, ``0 <= h_i <= 1 - g_i``)
describes the additional vertices of a covering face.

The extra-vertex ``log 2`` terms are counted as ``+m log 2`` in the
combinatorial exponent and ``-m log 2`` in the internal exponent, where
``m = cell * sum(h)``; they cancel in any total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from . import specfn
from .errors import DomainError, RootNotBracketedError, ShapeError
from .shapes import (PROBABILITY, WEIGHT, FaceProfile, IntervalGrid, ShapeFunction,
                     typical_face)

_GAUSS_NODES = 40
_S_FLOOR = -1e6
_BOUND_TOL = 1e-12


@dataclass(frozen=True)
class FaceGeometry:
    """Weights, cells and face occupancy for one exponent evaluation."""

    weight: ShapeFunction
    grid: IntervalGrid
    face: FaceProfile

    def __post_init__(self):
        if self.weight.role != WEIGHT:
            raise ShapeError("the geometry needs a weight shape")
        if self.face.g.shape != (self.grid.r,):
            raise DomainError("face occupancy and grid have different lengths")
        if not math.isclose(self.grid.start, self.face.head, abs_tol=1e-15):
            raise DomainError("the grid must start where the off-grid face ends")
        cell = self.grid.cell
        f = self.grid.samples
        head_sq = self.weight.integral_sq(0.0, self.face.head)
        nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_NODES)
        qf, qw = [], []
        for lo, hi, fl, fh in self.weight.pieces(self.face.head, 1.0):
            t = (nodes + 1) / 2
            qf.append(fl + (fh - fl) * t)
            qw.append(weights * (hi - lo) / 2)
        derived = dict(
            cell=cell, f=f, f2=f * f, g=self.face.g, room=1.0 - self.face.g,
            head_sq=head_sq, c1=head_sq + cell * float(np.sum(f * f * self.face.g)),
            region=1.0 - self.face.head,
            _qf=np.concatenate(qf) if qf else np.zeros(0),
            _qw=np.concatenate(qw) if qw else np.zeros(0),
        )
        for key, val in derived.items():
            object.__setattr__(self, key, val)

    @property
    def r(self) -> int:
        return self.grid.r

    @property
    def delta(self) -> float:
        return self.face.delta

    def mass(self, h) -> float:
        """Extra vertices per coordinate, ``cell * sum(h)``."""
        return self.cell * float(np.sum(h))

    def log_erf_integral(self, x: float) -> float:
        """Integral of log erf(x f(u)) over the grid region [head, 1]."""
        if self._qf.size == 0:
            return 0.0
        return float(self._qw @ specfn.log_erf(x * self._qf))

    def log_erf_integral_deriv(self, x: float) -> float:
        if self._qf.size == 0:
            return 0.0
        return float(self._qw @ (self._qf * specfn.log_erf_deriv(x * self._qf)))


def leading_face_geometry(weight: ShapeFunction, delta: float, r: int) -> FaceGeometry:
    """Geometry of the face spanned by the first ``delta * n`` coordinates."""
    if not 0.0 <= delta < 1.0:
        raise DomainError("leading-face delta must lie in [0, 1)")
    grid = IntervalGrid.sample(weight, r, delta, 1.0)
    return FaceGeometry(weight, grid, FaceProfile(np.zeros(r), float(delta), float(delta)))


def typical_face_geometry(weight: ShapeFunction, prob: ShapeFunction, r: int) -> FaceGeometry:
    """Geometry of the face whose cell occupancies follow the prior ``prob``."""
    if prob.role != PROBABILITY:
        raise ShapeError("typical-face mode needs a probability shape")
    grid = IntervalGrid.sample(weight, r)
    return FaceGeometry(weight, grid, typical_face(prob, r))


def check_overcount(geom: FaceGeometry, h) -> np.ndarray:
    """Validate an overcount profile and clip round-off at the bounds."""
    h = np.asarray(h, dtype=float)
    if h.shape != (geom.r,):
        raise DomainError(f"overcount profile must have length {geom.r}")
    if np.any(h < -_BOUND_TOL) or np.any(h > geom.room + _BOUND_TOL):
        raise DomainError("overcount entries must satisfy 0 <= h_i <= 1 - g_i")
    return np.clip(h, 0.0, geom.room)


# -- combinatorial -----------------------------------------------------------

def combinatorial_exponent(geom: FaceGeometry, h, count_signs: bool = True) -> float:
    """Rate of the number of covering faces with overcount ``h``."""
    h = check_overcount(geom, h)
    room = geom.room
    open_ = room > 0
    frac = np.zeros_like(h)
    frac[open_] = h[open_] / room[open_]
    value = geom.cell * float(np.sum(room * specfn.binary_entropy(frac)))
    if count_signs:
        value += geom.mass(h) * specfn.LOG2
    return value


# -- internal ----------------------------------------------------------------

def _face_moments(geom, h):
    c0 = geom.cell * float(np.sum(geom.f * h))
    if geom.c1 <= 0:
        raise DomainError("the face is empty, so the internal angle is undefined")
    return c0, geom.c1


def scaled_cgf(geom: FaceGeometry, h, s: float):
    """The averaged cumulant function and its slope at ``s``.

    Returns ``(L(s), L'(s))`` with ``L(s) = cell * sum(h_i lambda(s f_i)) / c0``.
    """
    h = check_overcount(geom, h)
    c0 = geom.cell * float(np.sum(geom.f * h))
    if c0 <= 0:
        raise DomainError("the overcount profile is empty")
    z = s * geom.f
    lam = geom.cell * float(h @ specfn.half_normal_cgf(z)) / c0
    dlam = geom.cell * float(h @ (geom.f * specfn.half_normal_cgf_deriv(z))) / c0
    return lam, dlam


def _increasing_root(fn, what):
    """Root of an increasing function with fn(0) > 0 on [_S_FLOOR, 0]."""
    lo = -1.0
    while fn(lo) > 0:
        if lo <= _S_FLOOR:
            raise RootNotBracketedError(f"no sign change for {what} on [-1e6, 0]")
        lo = max(2.0 * lo, _S_FLOOR)
    hi = 0.0 if lo == -1.0 else lo / 2.0
    return optimize.brentq(fn, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def cgf_conjugate(geom: FaceGeometry, h, y: float):
    """Legendre conjugate of the averaged cumulant function, restricted to s <= 0.

    Returns ``(value, s)`` where ``value = max_{s<=0} s y - L(s)``.
    """
    h = check_overcount(geom, h)
    c0 = geom.cell * float(np.sum(geom.f * h))
    if c0 <= 0:
        raise DomainError("the overcount profile is empty")
    if not y > 0:
        raise DomainError("the conjugate diverges for y <= 0")
    if y >= specfn.SQRT_2_OVER_PI:
        return 0.0, 0.0
    fh = geom.cell * geom.f * h / c0

    def slope(s):
        return float(fh @ specfn.half_normal_cgf_deriv(s * geom.f)) - y

    s = _increasing_root(slope, "the conjugate slope")
    lam = geom.cell * float(h @ specfn.half_normal_cgf(s * geom.f)) / c0
    return s * y - lam, s


def internal_exponent(geom: FaceGeometry, h, y: float, count_signs: bool = True) -> float:
    """Internal-angle exponent at the Laplace point ``y``."""
    h = check_overcount(geom, h)
    if not np.any(h > 0):
        return 0.0
    c0, c1 = _face_moments(geom, h)
    conj, _ = cgf_conjugate(geom, h, y)
    value = -(c0 * c0 * y * y / (2 * c1) + c0 * conj)
    if count_signs:
        value -= geom.mass(h) * specfn.LOG2
    return value


class InternalOptimum(NamedTuple):
    value: float
    y: float
    s: float


def optimized_internal_exponent(geom: FaceGeometry, h) -> InternalOptimum:
    """Internal exponent minimized over the Laplace point.

    The optimal ``s`` is the root of ``c1 s + cell * sum(h f lambda'(s f))``,
    which is strictly increasing and positive at 0; then ``y = -c1 s / c0``.
    """
    h = check_overcount(geom, h)
    if not np.any(h > 0):
        return InternalOptimum(0.0, math.nan, 0.0)
    c0, c1 = _face_moments(geom, h)
    fh = geom.cell * geom.f * h

    def stationarity(s):
        return c1 * s + float(fh @ specfn.half_normal_cgf_deriv(s * geom.f))

    s = _increasing_root(stationarity, "the internal stationarity equation")
    lam = geom.cell * float(h @ specfn.half_normal_cgf(s * geom.f))
    value = -geom.mass(h) * specfn.LOG2 + c1 * s * s / 2 + lam
    return InternalOptimum(value, -c1 * s / c0, s)


# -- external ----------------------------------------------------------------

def external_exponent(geom: FaceGeometry, h, x: float) -> float:
    """External-angle exponent ``-(c2 x^2 - log G0(x))`` at ``x > 0``."""
    if not x > 0:
        raise DomainError("the external exponent needs x > 0")
    h = check_overcount(geom, h)
    occ = geom.g + h
    c2 = geom.head_sq + geom.cell * float(geom.f2 @ occ)
    log_g0 = geom.log_erf_integral(x) - geom.cell * float(occ @ specfn.log_erf(x * geom.f))
    return -(c2 * x * x - log_g0)


def _external_slope(geom, occ, x):
    c2 = geom.head_sq + geom.cell * float(geom.f2 @ occ)
    inner = geom.cell * float(occ @ (geom.f * specfn.log_erf_deriv(x * geom.f)))
    return -2 * c2 * x + geom.log_erf_integral_deriv(x) - inner


def optimized_external_exponent(geom: FaceGeometry, h):
    """Maximize the external exponent over ``x``; returns ``(value, x)``.

    When the face and overcount leave nothing uncovered the angle is one and
    ``(0.0, 0.0)`` is returned.
    """
    h = check_overcount(geom, h)
    occ = geom.g + h
    if geom.region - geom.cell * float(np.sum(occ)) <= _BOUND_TOL:
        return 0.0, 0.0

    def slope(x):
        return _external_slope(geom, occ, x)

    lo = hi = 1.0
    for _ in range(60):
        if slope(lo) > 0:
            break
        lo /= 2
    else:
        raise RootNotBracketedError("external stationarity bracket failed toward 0")
    for _ in range(60):
        if slope(hi) < 0:
            break
        hi *= 2
    else:
        raise RootNotBracketedError("external stationarity bracket failed toward infinity")
    if lo == hi:
        lo = hi / 2
    x = optimize.brentq(slope, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return external_exponent(geom, h, x), x


@dataclass(frozen=True)
class ExponentBreakdown:
    """The three exponents at one maximizing point, and their sum."""

    psi_com: float
    psi_int: float
    psi_ext: float
    argmax_h: np.ndarray
    argmax_x: float
    argmax_y: float
    argmax_s: float

    @property
    def psi_tot(self) -> float:
        return self.psi_com + self.psi_int + self.psi_ext


def evaluate_breakdown(geom: FaceGeometry, h, x: float, y: float) -> ExponentBreakdown:
    """Evaluate every exponent at ``(h, x, y)`` from scratch."""
    h = check_overcount(geom, h)
    psi_int = internal_exponent(geom, h, y) if np.any(h > 0) else 0.0
    s = cgf_conjugate(geom, h, y)[1] if np.any(h > 0) else 0.0
    return ExponentBreakdown(combinatorial_exponent(geom, h), psi_int,
                             external_exponent(geom, h, x), h, float(x), float(y), float(s))
