"""Monte Carlo recovery experiments for weighted l1 minimization.

Every trial is a pure function of ``(config, trial index)``. The trial seed
comes from a :class:`numpy.random.SeedSequence` keyed by the master seed and
the trial index, and each row of the Gaussian matrix is drawn from its own
Philox counter block. Results are therefore identical for any number of
worker processes.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import DomainError
from .lp import OPTIMAL, SolveReport, solve_weighted_l1
from .shapes import PROBABILITY, WEIGHT, ShapeFunction

RECOVERY_TOL = 1e-4
CSV_COLUMNS = ("trial", "seed", "m", "n", "k", "status", "success",
               "objective", "residual", "iterations")


@dataclass(frozen=True)
class SignalInstance:
    """A sparse vector; ``support`` holds 0-based indices in ascending order."""

    n: int
    support: np.ndarray
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.support.shape != self.values.shape:
            raise DomainError("support and values differ in length")
        if self.support.size and (self.support[0] < 0 or self.support[-1] >= self.n
                                  or np.any(np.diff(self.support) <= 0)):
            raise DomainError("support indices must be distinct and within range")
        if np.any(self.values == 0):
            raise DomainError("values on the support must be nonzero")

    @property
    def k(self) -> int:
        return int(self.support.size)

    def dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.support] = self.values
        return x


def _nonzero_normals(rng, size):
    vals = rng.standard_normal(size)
    while np.any(vals == 0):  # probability zero, but keep the invariant exact
        vals[vals == 0] = rng.standard_normal(int(np.sum(vals == 0)))
    return vals


def index_positions(n: int) -> np.ndarray:
    """Normalized positions i/n of the coordinates i = 1..n."""
    return np.arange(1, n + 1) / n


def sample_signal(p: ShapeFunction, n: int, rng: np.random.Generator) -> SignalInstance:
    """Include coordinate i with probability p(i/n), independently."""
    if p.role != PROBABILITY:
        raise DomainError("sample_signal needs a probability shape")
    support = np.flatnonzero(rng.random(n) < p(index_positions(n)))
    return SignalInstance(n, support, _nonzero_normals(rng, support.size), "model")


def leading_face_signal(k: int, n: int, rng: np.random.Generator) -> SignalInstance:
    """Signal supported on the first ``k`` coordinates with Gaussian values."""
    if not 0 <= k <= n:
        raise DomainError("need 0 <= k <= n")
    return SignalInstance(n, np.arange(k), _nonzero_normals(rng, k), f"leading-face(k={k})")


@dataclass(frozen=True)
class MeasurementEnsemble:
    """An m-by-n i.i.d. standard normal matrix determined by ``seed``.

    Row ``i`` is drawn from a Philox stream whose counter starts at
    ``[0, 0, 0, i]``, so any row can be regenerated on its own.
    """

    m: int
    n: int
    seed: int

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.m:
            raise DomainError("row index out of range")
        bits = np.random.Philox(key=self.seed, counter=[0, 0, 0, i])
        return np.random.Generator(bits).standard_normal(self.n)

    def matrix(self) -> np.ndarray:
        return np.stack([self.row(i) for i in range(self.m)]) if self.m else np.zeros((0, self.n))


def signal_rng(seed: int) -> np.random.Generator:
    """Stream for the signal draw, disjoint from every matrix row stream."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 1, 0]))


def judge_recovery(x_true: SignalInstance, report: SolveReport) -> Optional[bool]:
    """True on recovery, False on failure, None when the solve was not optimal."""
    if report.status != OPTIMAL:
        return None
    truth = x_true.dense()
    err = float(np.linalg.norm(report.minimizer - truth))
    return err <= RECOVERY_TOL * max(1.0, float(np.linalg.norm(truth)))


@dataclass(frozen=True)
class TrialConfig:
    """Experiment definition.

    Exactly one of ``k`` (leading-face signals) and ``prob`` (signals drawn
    from the prior) is set.
    """

    m: int
    n: int
    trials: int
    master_seed: int
    weight: ShapeFunction
    k: Optional[int] = None
    prob: Optional[ShapeFunction] = None

    def __post_init__(self):
        if (self.k is None) == (self.prob is None):
            raise DomainError("set exactly one of k and prob")
        if self.trials < 1:
            raise DomainError("need at least one trial")
        if not 1 <= self.m <= self.n:
            raise DomainError("need 1 <= m <= n")
        if self.weight.role != WEIGHT:
            raise DomainError("weight must be a weight shape")

    def weights(self) -> np.ndarray:
        return np.asarray(self.weight(index_positions(self.n)), dtype=float)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    m: int
    n: int
    k: int
    status: str
    success: Optional[bool]
    objective: float
    residual: float
    iterations: int

    def row(self):
        ok = "" if self.success is None else int(self.success)
        return (self.trial, self.seed, self.m, self.n, self.k, self.status, ok,
                repr(self.objective), repr(self.residual), self.iterations)


@dataclass(frozen=True)
class TrialSummary:
    failures: int
    determinate: int
    indeterminate: int
    records: tuple

    @property
    def failure_rate(self) -> float:
        return self.failures / self.determinate if self.determinate else math.nan


def trial_seed(master_seed: int, trial: int) -> int:
    seq = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    return int(seq.generate_state(1, np.uint64)[0])


def run_trial(config: TrialConfig, trial: int) -> TrialRecord:
    seed = trial_seed(config.master_seed, trial)
    rng = signal_rng(seed)
    if config.k is not None:
        signal = leading_face_signal(config.k, config.n, rng)
    else:
        signal = sample_signal(config.prob, config.n, rng)
    A = MeasurementEnsemble(config.m, config.n, seed).matrix()
    report = solve_weighted_l1(A, A @ signal.dense(), config.weights())
    return TrialRecord(trial, seed, config.m, config.n, signal.k, report.status,
                       judge_recovery(signal, report), report.objective,
                       report.primal_residual, report.iterations)


def _run_indexed(args):
    return run_trial(*args)


def run_trials(config: TrialConfig, workers: int = 1) -> TrialSummary:
    """Run every trial of ``config``; records come back in trial order."""
    jobs = [(config, t) for t in range(config.trials)]
    if workers <= 1:
        records = [_run_indexed(job) for job in jobs]
    else:
        chunk = max(1, len(jobs) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_indexed, jobs, chunksize=chunk))
    failures = sum(1 for r in records if r.success is False)
    undecided = sum(1 for r in records if r.success is None)
    return TrialSummary(failures, len(records) - undecided, undecided, tuple(records))


def write_records(records: Iterable[TrialRecord], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.row())


def wilson_interval(failures: int, total: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion.

    With fewer than two determinate trials the interval is reported as
    the uninformative [0, 1].
    """
    if total < 2:
        return 0.0, 1.0
    phat = failures / total
    denom = 1 + z * z / total
    centre = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if failures == 0 else max(0.0, centre - half)
    hi = 1.0 if failures == total else min(1.0, centre + half)
    return lo, hi
