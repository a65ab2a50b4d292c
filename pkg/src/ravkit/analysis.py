"""Fidelity estimators, their shot-noise variance, and decay fitting."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

EXPONENTIAL = "exp"
GAUSSIAN = "gauss"
MODELS = (EXPONENTIAL, GAUSSIAN)


class DegenerateDistributionError(ValueError):
    """The ideal distribution is uniform, so the XEB normalization vanishes."""


class FitDegenerateError(ValueError):
    pass


def f_xeb(ideal: np.ndarray, counts: np.ndarray, shots: int) -> float:
    """Single-circuit linear cross-entropy fidelity estimate."""
    p = np.asarray(ideal, dtype=float)
    q = np.asarray(counts, dtype=float) / shots
    if p.shape != q.shape:
        raise ValueError("ideal distribution and counts differ in length")
    n = p.size
    denom = p @ p - 1.0 / n
    if abs(denom) < 1e-12:
        raise DegenerateDistributionError("ideal distribution is uniform")
    return float((p @ q - 1.0 / n) / denom)


def f_rav(p_x0: float, q_x0: float, n: int) -> float:
    """RAV fidelity estimate from the ideal and observed return probabilities."""
    if p_x0 <= 1.0 / n:
        raise ValueError("ideal return probability must exceed 1/N")
    return (q_x0 - 1.0 / n) / (p_x0 - 1.0 / n)


def var_frav_ideal(lam: float, epsilon: float, n: int, shots: int) -> float:
    """Approximate RAV estimator variance assuming ``P(x0) = 1 - epsilon``."""
    if epsilon >= 1.0 - 1.0 / n:
        raise ValueError("epsilon must be below 1 - 1/N")
    return _var_rav(1.0 - epsilon, lam, n, shots)


def _var_rav(p0: float, lam: float, n: int, shots: int) -> float:
    q = (1.0 - lam) * p0 + lam / n
    return q * (1.0 - q) / (shots * (p0 - 1.0 / n) ** 2)


def var_fxeb_ideal(lam: float, n: int, shots: int) -> float:
    """Approximate XEB estimator variance with Porter-Thomas moments ``sum P^k = 1/k``."""
    if n <= 2:
        raise ValueError("Porter-Thomas approximation needs N > 2")
    return _var_xeb(1 / 2, 1 / 3, 1 / 4, lam, n, shots)


def _var_xeb(s2: float, s3: float, s4: float, lam: float, n: int, shots: int) -> float:
    a = lam / n
    bracket = a * (1 - a) * s2 + (1 - lam) * (1 - 2 * a) * s3 - (1 - lam) ** 2 * s4
    return bracket / (shots * (s2 - 1.0 / n) ** 2)


def var_single_sequence(
    ideal: np.ndarray,
    lam: float,
    shots: int,
    kind: str,
    x0: int | None = None,
    covariance: bool = True,
) -> float:
    """Variance of one circuit's estimator under depolarization ``lam``.

    RAV needs ``x0`` and is exact: only one outcome count enters.

    For XEB the estimator is a weighted sum of multinomial counts, whose
    variance is ``(sum P^2 Q - (sum P Q)^2) / K`` before normalization.
    Setting ``covariance=False`` drops the cross terms between outcomes and
    gives the per-outcome binomial sum over the second to fourth moments of
    ``ideal``. That form overstates the variance, by a factor of about
    three for eight outcomes.
    """
    p = np.asarray(ideal, dtype=float)
    n = p.size
    if kind == "RAV":
        if x0 is None:
            raise ValueError("RAV variance needs the initial state")
        if p[x0] <= 1.0 / n:
            raise ValueError("ideal return probability must exceed 1/N")
        return _var_rav(float(p[x0]), lam, n, shots)
    if kind == "XEB":
        s2 = float(p @ p)
        if abs(s2 - 1.0 / n) < 1e-12:
            raise DegenerateDistributionError("ideal distribution is uniform")
        s3 = float(np.sum(p**3))
        if not covariance:
            return _var_xeb(s2, s3, float(np.sum(p**4)), lam, n, shots)
        # with Q = (1 - lam) P + lam/N: sum P^2 Q and sum P Q in moments of P
        p2q = (1 - lam) * s3 + lam * s2 / n
        pq = (1 - lam) * s2 + lam / n
        return (p2q - pq * pq) / (shots * (s2 - 1.0 / n) ** 2)
    raise ValueError(f"unknown kind {kind!r}")


def depol_to_state_fidelity(f_bar: float, n: int) -> float:
    if n < 2:
        raise ValueError("dimension must be at least 2")
    return f_bar + (1.0 - f_bar) / n


@dataclass(frozen=True)
class FidelityPoint:
    m: int
    f_hat: float
    kind: str
    shots: int
    sequence_id: str = ""

    def __post_init__(self):
        if self.m < 1 or self.shots < 1:
            raise ValueError("layer count and shots must be positive")


@dataclass(frozen=True)
class Bin:
    m: float
    mean: float
    sem: float
    count: int
    sequence_ids: tuple[str, ...]
    ms: tuple[int, ...]


def bin_points(points: Sequence[FidelityPoint], bin_size: int = 6) -> list[Bin]:
    """Group points by sequence into consecutive sets of ``bin_size`` sequences.

    Sequences are ordered by layer count; every point of a sequence (e.g. one
    per run) lands in that sequence's bin. A trailing remainder forms a
    smaller final bin. SEM is the sample standard deviation over the bin's
    points divided by the square root of their number, and 0 for a single point.
    """
    if bin_size < 1:
        raise ValueError("bin_size must be positive")
    by_seq: dict[str, list[FidelityPoint]] = defaultdict(list)
    for i, p in enumerate(points):
        by_seq[p.sequence_id or f"#{i}"].append(p)
    order = sorted(by_seq, key=lambda s: (by_seq[s][0].m, s))
    bins = []
    for start in range(0, len(order), bin_size):
        ids = tuple(order[start : start + bin_size])
        pts = [p for s in ids for p in by_seq[s]]
        f = np.array([p.f_hat for p in pts])
        sem = float(f.std(ddof=1) / math.sqrt(f.size)) if f.size > 1 else 0.0
        ms = tuple(p.m for p in pts)
        bins.append(Bin(float(np.mean(ms)), float(f.mean()), sem, f.size, ids, ms))
    return bins


@dataclass(frozen=True)
class FitResult:
    model: str
    alpha: float
    chi2_reduced: float

    @property
    def fidelity_loss(self) -> float:
        if self.model == EXPONENTIAL:
            return 1.0 - self.alpha
        return math.sqrt(1.0 - self.alpha)

    def predict(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        return self.alpha ** (m if self.model == EXPONENTIAL else m * m)


def _model_exponent(m: np.ndarray, model: str) -> np.ndarray:
    if model == EXPONENTIAL:
        return m
    if model == GAUSSIAN:
        return m * m
    raise ValueError(f"unknown decay model {model!r}")


def _golden(f, a: float, b: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def _fit_alpha(m: np.ndarray, f: np.ndarray, model: str, w: np.ndarray | None = None) -> float:
    x = _model_exponent(m, model)
    w = np.ones_like(f) if w is None else w

    def sse(alpha: float) -> float:
        return float(np.sum(w * (f - alpha**x) ** 2))

    # bracket on a grid that is dense near alpha = 1, then refine
    grid = np.unique(np.concatenate([1.0 - np.logspace(-12, 0, 241), [1.0]]))
    grid = grid[grid > 0]
    values = np.array([sse(a) for a in grid])
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    alpha = _golden(sse, lo, hi, 1e-14)
    return alpha if sse(alpha) <= values[i] else float(grid[i])


def chi2_reduced(points: Sequence[FidelityPoint], model: str, alpha: float, bin_size: int = 6) -> float:
    """Binned reduced chi-squared with SEM weights and ``bins - 1`` degrees of freedom.

    The model is averaged over the bin's own points so exact model data
    scores zero. Bins with a single point carry no SEM and are skipped.
    """
    terms = []
    for b in bin_points(points, bin_size):
        if b.count < 2:
            continue
        ms = np.array(b.ms, dtype=float)
        model_mean = float(np.mean(alpha ** _model_exponent(ms, model)))
        resid = b.mean - model_mean
        if b.sem == 0.0:
            terms.append(0.0 if abs(resid) < 1e-15 else math.inf)
        else:
            terms.append((resid / b.sem) ** 2)
    dof = len(terms) - 1
    if dof < 1:
        return math.nan
    return float(sum(terms) / dof)


POINTS = "points"
BINNED = "binned"


def fit_decay(
    points: Sequence[FidelityPoint],
    model: str = EXPONENTIAL,
    bin_size: int = 6,
    weighting: str = POINTS,
) -> FitResult:
    """Least-squares fit of ``alpha**m`` (exp) or ``alpha**(m**2)`` (gauss).

    ``alpha`` is restricted to ``(0, 1]`` and found by grid bracketing plus
    golden-section search, so the result does not depend on point order.

    Args:
        points: Per-sequence fidelity estimates.
        model: ``"exp"`` or ``"gauss"``.
        bin_size: Sequences per bin for the reduced chi-squared.
        weighting: ``"points"`` fits every point with equal weight.
            ``"binned"`` fits the bin means weighted by ``1/SEM**2``; bins
            without a positive SEM are left out.
    """
    if weighting not in (POINTS, BINNED):
        raise ValueError(f"unknown weighting {weighting!r}")
    if not points:
        raise FitDegenerateError("no points to fit")
    m = np.array([p.m for p in points], dtype=float)
    f = np.array([p.f_hat for p in points], dtype=float)
    if np.unique(m).size < 2:
        raise FitDegenerateError("need at least two distinct layer counts")
    if np.all(f <= 0):
        raise FitDegenerateError("all fidelity estimates are non-positive")
    if weighting == BINNED:
        bins = [b for b in bin_points(points, bin_size) if b.sem > 0]
        if len({b.m for b in bins}) < 2:
            raise FitDegenerateError("need at least two bins with a positive SEM")
        bm = np.array([b.m for b in bins])
        bf = np.array([b.mean for b in bins])
        w = np.array([b.sem for b in bins]) ** -2.0
        order = np.lexsort((bf, bm))
        alpha = _fit_alpha(bm[order], bf[order], model, w[order])
    else:
        order = np.lexsort((f, m))
        alpha = _fit_alpha(m[order], f[order], model)
    return FitResult(model, alpha, chi2_reduced(points, model, alpha, bin_size))


def split_runs(outcomes: Sequence[int], shots_per_run: int) -> np.ndarray:
    """Chop one sequence's shot record into contiguous runs of ``shots_per_run``."""
    outcomes = np.asarray(outcomes)
    if shots_per_run < 1 or outcomes.size % shots_per_run:
        raise ValueError(f"{shots_per_run} does not divide {outcomes.size} recorded shots")
    return outcomes.reshape(-1, shots_per_run)


@dataclass(frozen=True)
class GroupStats:
    mean: float
    sd: float | None
    sd_per_mean: float | None
    runs: int


@dataclass(frozen=True)
class StatsRow:
    shots: int
    rav: GroupStats | None
    xeb: GroupStats | None

    @property
    def ratio(self) -> float | None:
        """XEB relative SD over RAV relative SD, when both exist."""
        if self.rav is None or self.xeb is None:
            return None
        if self.rav.sd_per_mean in (None, 0.0) or self.xeb.sd_per_mean is None:
            return None
        return self.xeb.sd_per_mean / self.rav.sd_per_mean


def group_stats(losses: Iterable[float]) -> GroupStats:
    x = np.asarray(list(losses), dtype=float)
    mean = float(x.mean())
    if x.size < 2:
        return GroupStats(mean, None, None, int(x.size))
    sd = float(x.std(ddof=1))
    return GroupStats(mean, sd, sd / mean if mean != 0 else None, int(x.size))


def run_statistics(fits: Mapping[tuple[str, int], Sequence[FitResult]]) -> list[StatsRow]:
    """Mean, SD and SD/mean of fidelity loss per ``(kind, shots)`` group, one row per shot count."""
    rows = []
    for k in sorted({k for _, k in fits}):
        groups = {}
        for kind in ("RAV", "XEB"):
            fr = fits.get((kind, k))
            groups[kind] = group_stats(f.fidelity_loss for f in fr) if fr else None
        rows.append(StatsRow(k, groups["RAV"], groups["XEB"]))
    return rows
