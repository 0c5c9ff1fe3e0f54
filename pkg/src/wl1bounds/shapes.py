"""Probability and weight shape functions on [0, 1].

Every supported shape is piecewise linear, so moments of ``f`` and ``f**2``
have closed forms. A shape is stored as an ascending list of knots; a knot
position may repeat once to encode a jump, and values are right-continuous
at a jump.

Shape strings used by the command line::

    linear-prob:delta=0.185,c=0.36     p(u) = delta - c (u - 1/2)
    linear-weight:rho=1.0              f(u) = 1 + rho u
    pwl:0=1.0,0.5=1.2,1=2.0            knots u=value
    const:v=1
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError

PROBABILITY = "probability"
WEIGHT = "weight"


@dataclass(frozen=True)
class ShapeFunction:
    """A monotone piecewise-linear function on [0, 1].

    Use the constructors :func:`linear_probability`, :func:`linear_weight`,
    :func:`piecewise_linear` and :func:`constant` rather than building the
    knot arrays by hand.
    """

    kind: str
    role: str
    params: tuple
    knots: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        xs = np.asarray(self.knots, dtype=float)
        ys = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "knots", xs)
        object.__setattr__(self, "values", ys)
        if self.role not in (PROBABILITY, WEIGHT):
            raise ShapeError(f"unknown role {self.role!r}")
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ShapeError("need at least two knots with matching values")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ShapeError("knots and values must be finite")
        if xs[0] != 0.0 or xs[-1] != 1.0:
            raise ShapeError("knots must start at 0 and end at 1")
        steps = np.diff(xs)
        if np.any(steps < 0):
            raise ShapeError("knots must be ascending")
        if np.any((steps[1:] == 0) & (steps[:-1] == 0)) or steps[0] == 0 or steps[-1] == 0:
            raise ShapeError("a jump needs exactly two knots strictly inside (0, 1)")
        rises = np.diff(ys)
        if self.role == PROBABILITY:
            if np.any(ys < 0) or np.any(ys > 1):
                raise ShapeError("probability shape leaves [0, 1]")
            if np.any(rises > 0):
                raise ShapeError("probability shape must be non-increasing")
        else:
            if np.any(ys <= 0):
                raise ShapeError("weight shape must be positive")
            if np.any(rises < 0):
                raise ShapeError("weight shape must be non-decreasing")

    # -- evaluation -----------------------------------------------------
    def _segment(self, u):
        idx = np.searchsorted(self.knots, u, side="right") - 1
        return np.clip(idx, 0, self.knots.size - 2)

    def __call__(self, u):
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr < 0) | (u_arr > 1)):
            raise DomainError("shape functions are defined on [0, 1]")
        i = self._segment(u_arr)
        x0, x1 = self.knots[i], self.knots[i + 1]
        y0, y1 = self.values[i], self.values[i + 1]
        out = y0 + (y1 - y0) * (u_arr - x0) / (x1 - x0)
        return float(out) if u_arr.ndim == 0 else out

    def pieces(self, a: float, b: float):
        """Linear pieces covering [a, b] as (lo, hi, f(lo+), f(hi-)) tuples."""
        out = []
        for j in range(self.knots.size - 1):
            x0, x1 = self.knots[j], self.knots[j + 1]
            if x1 <= x0:
                continue
            lo, hi = max(a, x0), min(b, x1)
            if hi <= lo:
                continue
            slope = (self.values[j + 1] - self.values[j]) / (x1 - x0)
            out.append((lo, hi, self.values[j] + slope * (lo - x0),
                        self.values[j] + slope * (hi - x0)))
        return out

    def integral(self, a: float, b: float) -> float:
        """Closed-form integral of f over [a, b]."""
        _check_interval(a, b)
        return float(sum((hi - lo) * (fl + fh) / 2 for lo, hi, fl, fh in self.pieces(a, b)))

    def integral_sq(self, a: float, b: float) -> float:
        """Closed-form integral of f**2 over [a, b]."""
        _check_interval(a, b)
        return float(sum((hi - lo) * (fl * fl + fl * fh + fh * fh) / 3
                         for lo, hi, fl, fh in self.pieces(a, b)))

    def spec(self) -> str:
        """The shape string this function would be parsed from."""
        if self.kind == "linear-prob":
            return "linear-prob:delta={:g},c={:g}".format(*self.params)
        if self.kind == "linear-weight":
            return "linear-weight:rho={:g}".format(*self.params)
        if self.kind == "const":
            return "const:v={:g}".format(*self.params)
        return "pwl:" + ",".join(f"{x:g}={y:g}" for x, y in zip(self.knots, self.values))


def _check_interval(a, b):
    if not (0.0 <= a <= b <= 1.0):
        raise DomainError(f"need 0 <= a <= b <= 1, got a={a}, b={b}")


def linear_probability(delta: float, c: float) -> ShapeFunction:
    """p(u) = delta - c (u - 1/2); the mean of p over [0, 1] is delta."""
    return ShapeFunction("linear-prob", PROBABILITY, (float(delta), float(c)),
                         [0.0, 1.0], [delta + c / 2, delta - c / 2])


def linear_weight(rho: float) -> ShapeFunction:
    """f(u) = 1 + rho u."""
    return ShapeFunction("linear-weight", WEIGHT, (float(rho),), [0.0, 1.0], [1.0, 1.0 + rho])


def constant(v: float, role: str = WEIGHT) -> ShapeFunction:
    return ShapeFunction("const", role, (float(v),), [0.0, 1.0], [v, v])


def piecewise_linear(knots, values, role: str = WEIGHT) -> ShapeFunction:
    knots = tuple(float(x) for x in knots)
    values = tuple(float(y) for y in values)
    return ShapeFunction("pwl", role, knots + values, knots, values)


def parse_shape(text: str, role: str) -> ShapeFunction:
    """Parse a shape string such as ``linear-weight:rho=1``."""
    kind, _, body = text.strip().partition(":")
    pairs = []
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ShapeError(f"expected key=value in {text!r}")
        pairs.append((key.strip(), val.strip()))
    try:
        if kind == "pwl":
            return piecewise_linear([float(k) for k, _ in pairs], [float(v) for _, v in pairs], role)
        kw = {k: float(v) for k, v in pairs}
        if kind == "linear-prob":
            shape = linear_probability(kw.pop("delta"), kw.pop("c"))
        elif kind == "linear-weight":
            shape = linear_weight(kw.pop("rho"))
        elif kind == "const":
            shape = constant(kw.pop("v"), role)
        else:
            raise ShapeError(f"unknown shape kind {kind!r}")
    except KeyError as exc:
        raise ShapeError(f"missing parameter {exc} in {text!r}") from None
    except ValueError as exc:
        if isinstance(exc, ShapeError):
            raise
        raise ShapeError(f"cannot parse {text!r}: {exc}") from None
    if kw:
        raise ShapeError(f"unexpected parameters {sorted(kw)} in {text!r}")
    if shape.role != role:
        raise ShapeError(f"{text!r} is a {shape.role} shape, expected {role}")
    return shape


# -- grids and face profiles -----------------------------------------------

@dataclass(frozen=True)
class IntervalGrid:
    """``r`` equal cells on [start, stop] with f sampled at each left edge.

    Left-edge sampling makes every Riemann sum of a non-decreasing weight
    shape a one-sided bound, which keeps the computed exponents upper bounds.
    """

    start: float
    stop: float
    r: int
    samples: np.ndarray

    @classmethod
    def sample(cls, f: ShapeFunction, r: int, start: float = 0.0, stop: float = 1.0):
        if r < 1:
            raise DomainError("r must be a positive integer")
        _check_interval(start, stop)
        left = start + (stop - start) * np.arange(r) / r
        return cls(float(start), float(stop), int(r), np.asarray(f(left), dtype=float))

    @property
    def cell(self) -> float:
        return (self.stop - self.start) / self.r

    @property
    def edges(self) -> np.ndarray:
        return self.start + self.cell * np.arange(self.r + 1)


@dataclass(frozen=True)
class FaceProfile:
    """Occupancy of a face class.

    ``g[i]`` is the fraction of grid cell ``i`` taken by face vertices.
    In leading-face mode the face additionally fills [0, head) off the
    grid. ``delta`` is the face's total size as a fraction of n.
    """

    g: np.ndarray
    delta: float
    head: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "g", g)
        if np.any(g < 0) or np.any(g > 1):
            raise DomainError("face occupancies must lie in [0, 1]")


def interval_averages(p: ShapeFunction, r: int) -> np.ndarray:
    """Cell means r * integral of p over [(i-1)/r, i/r], i = 1..r."""
    if r < 1:
        raise DomainError("r must be a positive integer")
    edges = np.arange(r + 1) / r
    return np.array([r * p.integral(edges[i], edges[i + 1]) for i in range(r)])


def typical_face(p: ShapeFunction, r: int) -> FaceProfile:
    """The face whose cell occupancies equal the prior's cell means."""
    if p.role != PROBABILITY:
        raise ShapeError("typical_face needs a probability shape")
    pbar = np.clip(interval_averages(p, r), 0.0, 1.0)
    return FaceProfile(pbar, float(pbar.mean()))


def moment_integrals(f: ShapeFunction, delta: float, tau: float):
    """(c0, c1, c2) = (int_delta^tau f, int_0^delta f^2, int_0^tau f^2)."""
    if not (0.0 <= delta <= tau <= 1.0):
        raise DomainError(f"need 0 <= delta <= tau <= 1, got {delta}, {tau}")
    return f.integral(delta, tau), f.integral_sq(0.0, delta), f.integral_sq(0.0, tau)


def bernoulli_kl(q: float, p: float) -> float:
    """KL divergence D(q || p) between Bernoulli(q) and Bernoulli(p)."""
    if not (0.0 <= q <= 1.0 and 0.0 <= p <= 1.0):
        raise DomainError("probabilities must lie in [0, 1]")
    if p in (0.0, 1.0):
        if q == p:
            return 0.0
        raise DomainError("D(q || p) is infinite for p in {0, 1} and q != p")
    out = 0.0
    if q > 0:
        out += q * math.log(q / p)
    if q < 1:
        out += (1 - q) * math.log((1 - q) / (1 - p))
    return max(out, 0.0)


def typicality_divergence(g, pbar) -> float:
    """Average cell-wise Bernoulli divergence (1/r) sum D(g_i || pbar_i)."""
    g = np.asarray(getattr(g, "g", g), dtype=float)
    pbar = np.asarray(pbar, dtype=float)
    if g.shape != pbar.shape:
        raise DomainError("profile lengths differ")
    return float(np.mean([bernoulli_kl(q, p) for q, p in zip(g, pbar)]))
