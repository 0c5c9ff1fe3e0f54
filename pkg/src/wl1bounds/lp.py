"""Weighted l1 minimization as a linear program.

``min sum(w |x|)  s.t.  A x = y`` is solved through the standard-form LP

    min  w'(u + v)   s.t.  A (u - v) = y,  u, v >= 0

with a Mehrotra predictor-corrector interior-point method. Each iteration
factors the m-by-m normal matrix ``A diag(d_u + d_v) A'`` through a QR
decomposition of its square root, so the cost per iteration is O(m^2 n),
and refines each Newton direction once against the full KKT system. A final support-polishing step replaces
the interior iterate by the exact basic solution when that is feasible and
no worse, which removes the last traces of interior-point smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DomainError

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
NUMERICAL_FAILURE = "numerical-failure"

_STEP_SCALE = 0.995


@dataclass(frozen=True)
class SolveReport:
    minimizer: np.ndarray
    objective: float
    dual_objective: float
    primal_residual: float
    gap: float
    complementarity: float
    iterations: int
    status: str


def _factor(matrix):
    try:
        return linalg.cho_factor(matrix, lower=True, check_finite=False)
    except linalg.LinAlgError:
        jitter = 1e-13 * max(float(np.max(np.diag(matrix))), 1.0)
        try:
            return linalg.cho_factor(matrix + jitter * np.eye(matrix.shape[0]),
                                     lower=True, check_finite=False)
        except linalg.LinAlgError:
            return None


def _normal_factor(A, dsum):
    """Triangular factor R with R'R = A diag(dsum) A', from a QR of sqrt(dsum) A'.

    Factoring the square root keeps the condition number at the square
    root of the normal matrix's, which matters near degenerate optima.
    """
    scaled = np.sqrt(dsum)[:, None] * A.T
    if not np.all(np.isfinite(scaled)):
        return None
    r = linalg.qr(scaled, mode="r", check_finite=False)[0][: A.shape[0]]
    if np.any(np.diag(r) == 0):
        return None
    return r


def _normal_solve(r, rhs):
    t = linalg.solve_triangular(r, rhs, trans="T", check_finite=False)
    return linalg.solve_triangular(r, t, check_finite=False)


def _max_step(z, dz):
    neg = dz < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-z[neg] / dz[neg])))


def solve_weighted_l1(A, y, w, tol: float = 1e-8, max_iter: int = 200,
                      polish: bool = True) -> SolveReport:
    """Minimize the weighted l1 norm subject to ``A x = y``."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    m, n = A.shape
    if y.shape != (m,) or w.shape != (n,):
        raise DomainError("dimension mismatch between A, y and w")
    if np.any(~(w > 0)):
        raise DomainError("weights must be positive")
    if m > n:
        raise DomainError("need m <= n")

    c = np.concatenate([w, w])
    norm_y, norm_c = float(np.linalg.norm(y)), float(np.linalg.norm(c))

    def apply_b(z):
        return A @ (z[:n] - z[n:])

    def apply_bt(lam):
        t = A.T @ lam
        return np.concatenate([t, -t])

    # Mehrotra's starting point; B B' = 2 A A' and B c = 0 because both halves of c agree
    gram = _factor(2.0 * (A @ A.T))
    if gram is None:
        return _failure(n, 0)
    z = apply_bt(linalg.cho_solve(gram, y))
    lam = np.zeros(m)
    s = c.copy()
    z = z + max(-1.5 * float(z.min()), 0.0)
    s = s + max(-1.5 * float(s.min()), 0.0)
    zs = float(z @ s)
    z = z + 0.5 * zs / float(s.sum())
    s = s + 0.5 * zs / float(z.sum())

    status, it = MAX_ITERATIONS, 0
    for it in range(1, max_iter + 1):
        r_p = apply_b(z) - y
        r_d = apply_bt(lam) + s - c
        primal, dual = float(c @ z), float(y @ lam)
        mu = float(z @ s) / (2 * n)
        if (np.linalg.norm(r_p) <= tol * (1 + norm_y)
                and np.linalg.norm(r_d) <= tol * (1 + norm_c)
                and abs(primal - dual) <= tol * (1 + abs(primal))):
            status = OPTIMAL
            break
        d = z / s
        chol = _normal_factor(A, d[:n] + d[n:])
        if chol is None:
            status = NUMERICAL_FAILURE
            break

        def solve_kkt(e_p, e_d, e_xs):
            # solve  B dz = e_p,  B' dlam + ds = e_d,  S dz + Z ds = e_xs
            dlam = _normal_solve(chol, e_p - apply_b((e_xs - z * e_d) / s))
            ds = e_d - apply_bt(dlam)
            return (e_xs - z * ds) / s, dlam, ds

        def direction(r_xs):
            dz, dlam, ds = solve_kkt(-r_p, -r_d, r_xs)
            # one step of iterative refinement; the normal matrix is badly
            # conditioned near a degenerate optimum
            fix = solve_kkt(-r_p - apply_b(dz), -r_d - apply_bt(dlam) - ds,
                            r_xs - s * dz - z * ds)
            return dz + fix[0], dlam + fix[1], ds + fix[2]

        dz_a, dlam_a, ds_a = direction(-z * s)
        ap, ad = _max_step(z, dz_a), _max_step(s, ds_a)
        mu_aff = float((z + ap * dz_a) @ (s + ad * ds_a)) / (2 * n)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dz, dlam, ds = direction(-z * s - dz_a * ds_a + sigma * mu)
        ap = _STEP_SCALE * _max_step(z, dz)
        ad = _STEP_SCALE * _max_step(s, ds)
        z = z + ap * dz
        lam = lam + ad * dlam
        s = s + ad * ds
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(lam))):
            status = NUMERICAL_FAILURE
            break

    x = z[:n] - z[n:]
    dual = float(y @ lam)
    if polish and status == OPTIMAL:
        x = _polish(A, y, w, x)
    objective = float(w @ np.abs(x))
    residual = float(np.linalg.norm(A @ x - y))
    return SolveReport(
        minimizer=x, objective=objective, dual_objective=dual,
        primal_residual=residual, gap=abs(objective - dual) / (1 + abs(objective)),
        complementarity=float(z @ s) / (1 + abs(objective)),
        iterations=it, status=status)


def _polish(A, y, w, x):
    """Snap to the basic solution on the interior iterate's support if it is no worse."""
    m = A.shape[0]
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    if scale == 0.0:
        return x
    support = np.flatnonzero(np.abs(x) > 1e-6 * scale)
    if support.size == 0 or support.size > m:
        return x
    sub, *_ = np.linalg.lstsq(A[:, support], y, rcond=None)
    cand = np.zeros_like(x)
    cand[support] = sub
    feasible = np.linalg.norm(A @ cand - y) <= 1e-10 * (1 + np.linalg.norm(y))
    same_signs = np.all(np.sign(sub) == np.sign(x[support]))
    if feasible and same_signs and w @ np.abs(cand) <= w @ np.abs(x) + 1e-12 * (1 + w @ np.abs(x)):
        return cand
    return x


def _failure(n, it):
    nan = float("nan")
    return SolveReport(np.full(n, nan), nan, nan, nan, nan, nan, it, NUMERICAL_FAILURE)
