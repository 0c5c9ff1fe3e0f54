"""Total-exponent maximization and the guaranteed sparsity bound.

The total exponent of a face class is

    max over h, x of  psi_com(h) + min_y psi_int(h, y) + psi_ext(h, x)

subject to ``0 <= h_i <= 1 - g_i`` and ``cell * sum(h) >= alpha - delta``.
For fixed ``x`` the problem in ``h`` is concave, and its Lagrange dual in
the two scalars (``s`` from the internal exponent, ``mu`` from the mass
constraint) is smooth and convex:

    D(s, mu) = c1 s^2 / 2 + cell * sum((1 - g_i) softplus(b_i)) - mu (alpha - delta)
    b_i      = -f_i^2 x^2 - log erf(x f_i) + lambda(s f_i) + mu

with primal solution ``h_i = (1 - g_i) sigmoid(b_i)``. The dual is solved by
projected damped Newton, the outer problem in ``x`` by a log-spaced scan
followed by bounded Brent refinement around the best scan point. The
reported value is re-evaluated from the primal point, so every result
carries a certificate that can be checked independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import optimize, special

from . import specfn
from .errors import DomainError, NoSignChangeError
from .exponents import (ExponentBreakdown, FaceGeometry, cgf_conjugate,
                        combinatorial_exponent, evaluate_breakdown, external_exponent,
                        internal_exponent, leading_face_geometry,
                        optimized_internal_exponent, typical_face_geometry)
from .shapes import ShapeFunction, linear_probability, linear_weight

X_GRID_POINTS = 48
_X_RANGE = (1e-3, 20.0)
_NEWTON_TOL = 1e-11
_NEWTON_ITERS = 200
# An exponent is only trusted as negative below this margin. Past the
# threshold the maximum is exactly zero for flat weights, and round-off
# would otherwise flip its sign.
CERTIFY_MARGIN = 1e-10


@dataclass(frozen=True)
class LeadingFace:
    """Face on the first ``delta * n`` coordinates."""

    delta: float


@dataclass(frozen=True)
class TypicalFace:
    """Face whose cell occupancies follow the prior ``prob``."""

    prob: ShapeFunction


@dataclass(frozen=True)
class BoundQuery:
    alpha: float
    r: int
    mode: Union[LeadingFace, TypicalFace]
    weight: ShapeFunction
    x_points: int = X_GRID_POINTS

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError("alpha must lie in (0, 1]")
        if self.r < 1:
            raise DomainError("r must be a positive integer")
        if self.x_points < 3:
            raise DomainError("the x scan needs at least three points")

    def geometry(self) -> FaceGeometry:
        if isinstance(self.mode, LeadingFace):
            return leading_face_geometry(self.weight, self.mode.delta, self.r)
        return typical_face_geometry(self.weight, self.mode.prob, self.r)


@dataclass(frozen=True)
class BoundResult:
    psi_tot: float
    feasible: bool
    breakdown: ExponentBreakdown | None = None
    dual_value: float = math.nan

    @property
    def certificate(self):
        """The maximizing ``(h, x, y)``."""
        b = self.breakdown
        return None if b is None else (b.argmax_h, b.argmax_x, b.argmax_y)


# -- inner dual problem ----------------------------------------------------

@dataclass
class _DualState:
    s: float = -1.0
    mu: float = 0.0


def _dual_terms(geom, x):
    a = -geom.f2 * x * x - specfn.log_erf(x * geom.f)
    const = (-geom.c1 * x * x + geom.log_erf_integral(x)
             - geom.cell * float(geom.g @ specfn.log_erf(x * geom.f)))
    return a, const


def _dual_eval(geom, a, need, s, mu, wgt):
    z = s * geom.f
    b = a + specfn.half_normal_cgf(z) + mu
    return geom.c1 * s * s / 2 + float(wgt @ np.logaddexp(0.0, b)) - mu * need, b, z


def _solve_dual(geom, a, need, state):
    """Minimize D(s, mu) over s real and mu >= 0; returns (D*, h)."""
    wgt = geom.cell * geom.room
    f = geom.f
    s, mu = state.s, state.mu
    value, b, z = _dual_eval(geom, a, need, s, mu, wgt)
    for _ in range(_NEWTON_ITERS):
        sig = special.expit(b)
        d1 = specfn.half_normal_cgf_deriv(z)
        d2 = specfn.half_normal_cgf_second(z)
        q = sig * (1 - sig)
        fd = f * d1
        gs = geom.c1 * s + float(wgt @ (sig * fd))
        gm = float(wgt @ sig) - need
        hss = geom.c1 + float(wgt @ (q * fd * fd + sig * geom.f2 * d2))
        hsm = float(wgt @ (q * fd))
        hmm = float(wgt @ q)
        mu_free = mu > 0 or gm < 0
        if abs(gs) <= _NEWTON_TOL and (not mu_free or abs(gm) <= _NEWTON_TOL):
            break
        if mu_free:
            det = hss * hmm - hsm * hsm
            if det > 1e-300 * max(1.0, hss * hmm):
                ds = -(hmm * gs - hsm * gm) / det
                dm = -(hss * gm - hsm * gs) / det
            else:
                ds, dm = -gs / hss, -gm / max(hmm, 1e-300)
        else:
            ds, dm = -gs / hss, 0.0
        slope = gs * ds + gm * dm
        if -slope < 1e-24:
            break
        # round-off allowance so the search does not stall at the optimum
        slack = 1e-15 * (1.0 + abs(value))
        step = 1.0
        while True:
            s_new = s + step * ds
            mu_new = max(mu + step * dm, 0.0)
            trial, b_new, z_new = _dual_eval(geom, a, need, s_new, mu_new, wgt)
            if trial <= value + 1e-4 * step * slope + slack:
                break
            if step < 1e-10:
                break
            step /= 2
        if trial > value + slack:
            break
        s, mu, value, b, z = s_new, mu_new, trial, b_new, z_new
    state.s, state.mu = s, mu
    h = geom.room * special.expit(b)
    return value, h


def _fixed_x_value(geom, alpha, x, state):
    a, const = _dual_terms(geom, x)
    dual, h = _solve_dual(geom, a, alpha - geom.delta, state)
    return const + dual, h


def _full_overcount_value(geom, x):
    h = geom.room.copy()
    return (combinatorial_exponent(geom, h) + optimized_internal_exponent(geom, h).value
            + external_exponent(geom, h, x))


def total_exponent(query: BoundQuery) -> BoundResult:
    """Maximize the total exponent of the queried face class."""
    geom = query.geometry()
    return maximize_total(geom, query.alpha, query.x_points)


def maximize_total(geom: FaceGeometry, alpha: float, x_points: int = X_GRID_POINTS) -> BoundResult:
    if geom.c1 <= 0:
        raise DomainError("the face is empty, so the total exponent is undefined")
    need = alpha - geom.delta
    capacity = geom.cell * float(np.sum(geom.room))
    if need > capacity * (1 + 1e-12) + 1e-15:
        return BoundResult(-math.inf, False)
    pinned = need >= capacity * (1 - 1e-9)

    f_lo = float(np.min(geom.f))
    xs = np.geomspace(_X_RANGE[0], _X_RANGE[1], x_points) / f_lo
    if pinned:
        def objective(x):
            return _full_overcount_value(geom, x), geom.room.copy()
    else:
        state = _DualState()

        def objective(x):
            return _fixed_x_value(geom, alpha, x, state)

    scan = [objective(x)[0] for x in xs]
    best = int(np.argmax(scan))
    lo = xs[max(best - 1, 0)]
    hi = xs[min(best + 1, len(xs) - 1)]
    res = optimize.minimize_scalar(lambda x: -objective(x)[0], bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-10 * hi})
    x_star = float(res.x) if -res.fun >= scan[best] else float(xs[best])
    dual_value, h = objective(x_star)

    h = np.clip(h, 0.0, geom.room)
    if np.any(h > 0):
        y_star = optimized_internal_exponent(geom, h).y
        breakdown = evaluate_breakdown(geom, h, x_star, y_star)
    else:
        breakdown = evaluate_breakdown(geom, h, x_star, math.nan)
    return BoundResult(breakdown.psi_tot, True, breakdown, dual_value)


# -- primal route, kept as an independent check ------------------------------

def project_overcount(v, upper, cell: float, need: float) -> np.ndarray:
    """Euclidean projection onto {0 <= h <= upper, cell * sum(h) >= need}."""
    v = np.asarray(v, dtype=float)
    upper = np.asarray(upper, dtype=float)
    h = np.clip(v, 0.0, upper)
    if cell * h.sum() >= need:
        return h
    if cell * upper.sum() < need:
        raise DomainError("the overcount polytope is empty")
    lo, hi = 0.0, float(np.max(upper - v)) + 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if cell * np.clip(v + mid, 0.0, upper).sum() >= need:
            hi = mid
        else:
            lo = mid
    return np.clip(v + hi, 0.0, upper)


def ascend_overcount(geom: FaceGeometry, alpha: float, x: float, y: float,
                     h0=None, iters: int = 5000, tol: float = 1e-12):
    """Projected gradient ascent of psi_com + psi_int(., y) + psi_ext(., x) over h.

    Returns ``(value, h)``. Entries are kept a hair inside the box because
    the entropy gradient is infinite at the faces of the box.
    """
    need = alpha - geom.delta
    eps = 1e-12
    upper = np.maximum(geom.room - eps, 0.0)
    open_ = geom.room > 2 * eps
    f = geom.f

    def value(h):
        return (combinatorial_exponent(geom, h) + internal_exponent(geom, h, y)
                + external_exponent(geom, h, x))

    def grad(h):
        g = np.zeros_like(h)
        _, s = cgf_conjugate(geom, h, y)
        c0 = geom.cell * float(f @ h)
        hh = np.where(open_, h, 1.0)
        ent = np.where(open_, np.log(np.maximum(geom.room - h, eps) / np.maximum(hh, eps)), 0.0)
        g += geom.cell * ent
        g += -geom.cell * f * c0 * y * y / geom.c1
        g += -geom.cell * (f * s * y - specfn.half_normal_cgf(s * f))
        g += geom.cell * (-geom.f2 * x * x - specfn.log_erf(x * f))
        return np.where(open_, g, 0.0)

    h = project_overcount(np.full(geom.r, 0.5) * upper if h0 is None else h0,
                          upper, geom.cell, need)
    h = np.maximum(h, np.where(open_, eps, 0.0))
    cur = value(h)
    step = 1.0
    for _ in range(iters):
        g = grad(h)
        while True:
            cand = project_overcount(h + step * g, upper, geom.cell, need)
            cand = np.where(open_, np.maximum(cand, eps), 0.0)
            new = value(cand)
            if new >= cur + 1e-4 * float(g @ (cand - h)) or step < 1e-16:
                break
            step /= 2
        moved = float(np.max(np.abs(cand - h)))
        if new < cur:
            break
        h, cur = cand, new
        step *= 2
        if moved < tol:
            break
    return cur, h


# -- sparsity bound ----------------------------------------------------------

def free_exponent(geom: FaceGeometry, x_points: int = X_GRID_POINTS) -> BoundResult:
    """Total exponent with the measurement constraint dropped.

    Summed over every covering face, internal times external angles give
    exactly one, so in exact arithmetic this maximum is zero. On a finite
    grid it is a small offset of order 1/r that every constrained value
    shares.
    """
    return maximize_total(geom, geom.delta, x_points)


BINDING = "binding"
NEGATIVE = "negative"


@dataclass(frozen=True)
class DeltaBound:
    delta_bar: float
    psi_at_bound: float
    free_at_bound: float
    monotone: bool
    criterion: str
    scan: tuple = field(repr=False, default=())


def _delta_range(alpha, c):
    if c is None:
        return 1e-4, alpha
    return max(1e-4, c / 2), min(alpha, 1 - c / 2)


def guaranteed_delta_bound(alpha: float, weight: ShapeFunction, r: int,
                           family: Union[str, float] = "leading", criterion: str = BINDING,
                           scan_points: int = 16, tol: float = 1e-4,
                           x_points: int = X_GRID_POINTS) -> DeltaBound:
    """Largest sparsity delta that the exponent certifies.

    ``family`` is ``"leading"`` or the tilt ``c`` of the typical-face family
    p(u) = delta - c (u - 1/2). Two readings of "certified" are offered:

    ``"negative"``
        the total exponent is below ``-CERTIFY_MARGIN``. This is the
        finite-r certificate, but the grid offset of order 1/r in the
        unconstrained maximum makes it pessimistic near the threshold.
    ``"binding"`` (default)
        the total exponent is below the unconstrained maximum at the same
        delta by more than ``CERTIFY_MARGIN``, i.e. the measurement
        constraint is active. Both readings agree as r grows; this one
        cancels the shared offset.

    The range is scanned first; the first uncertified scan point is then
    located to ``tol`` by bisection against its predecessor.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if criterion not in (BINDING, NEGATIVE):
        raise DomainError(f"unknown criterion {criterion!r}")
    c = None if family == "leading" else float(family)
    lo, hi = _delta_range(alpha, c)
    if lo >= hi:
        raise DomainError("the sparsity family is empty for this tilt and alpha")

    def evaluate(delta):
        mode = LeadingFace(delta) if c is None else TypicalFace(linear_probability(delta, c))
        geom = BoundQuery(alpha, r, mode, weight, x_points).geometry()
        psi = maximize_total(geom, alpha, x_points).psi_tot
        free = free_exponent(geom, x_points).psi_tot if criterion == BINDING else 0.0
        return psi, free

    def certified(pair):
        psi, free = pair
        return psi - free < -CERTIFY_MARGIN

    grid = np.linspace(lo, hi, scan_points)
    values = [evaluate(d) for d in grid]
    if not certified(values[0]):
        raise NoSignChangeError(
            f"delta={lo:g} is not certified (exponent {values[0][0]:.4g}, free {values[0][1]:.4g})")
    bad = [i for i, v in enumerate(values) if not certified(v)]
    monotone = all(not certified(v) for v in values[bad[0]:]) if bad else True
    scan = tuple((float(d), v[0], v[1]) for d, v in zip(grid, values))
    if not bad:
        return DeltaBound(float(hi), values[-1][0], values[-1][1], monotone, criterion, scan)
    a, b = grid[bad[0] - 1], grid[bad[0]]
    at_a = values[bad[0] - 1]
    while b - a > tol:
        mid = (a + b) / 2
        v = evaluate(mid)
        if certified(v):
            a, at_a = mid, v
        else:
            b = mid
    return DeltaBound(float(a), at_a[0], at_a[1], monotone, criterion, scan)


@dataclass(frozen=True)
class RhoChoice:
    rho_star: float
    delta_bar: float
    curve: tuple


def optimal_rho(c, alpha: float, r: int, rho_grid: Sequence[float],
                criterion: str = BINDING, x_points: int = X_GRID_POINTS) -> RhoChoice:
    """Weight slope that maximizes the bound; ties go to the smaller slope.

    ``c`` is the prior tilt of the typical-face family, or ``"leading"``.
    """
    curve = []
    for rho in rho_grid:
        try:
            bound = guaranteed_delta_bound(alpha, linear_weight(rho), r, c, criterion,
                                           x_points=x_points)
            curve.append((float(rho), bound.delta_bar))
        except NoSignChangeError:
            curve.append((float(rho), math.nan))
    finite = [(d, -i) for i, (_, d) in enumerate(curve) if not math.isnan(d)]
    if not finite:
        raise NoSignChangeError("no slope in the grid gives a usable bound")
    d_best, neg_i = max(finite)
    return RhoChoice(curve[-neg_i][0], d_best, tuple(curve))
