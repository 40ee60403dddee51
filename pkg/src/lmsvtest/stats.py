"""Change-point test statistics: CUSUM, Wilcoxon, and self-normalized variants.

Each optimized kernel has a definitional counterpart (suffix `_by_definition`)
that evaluates the formulas by direct summation; the optimized paths are
required to agree with them to 1e-10 relative error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Transform(enum.Enum):
    """Pointwise transform selecting the change-point problem."""

    IDENTITY = "identity"
    SQUARE = "square"
    LOG_ABS = "log_abs"
    LOG_SQUARE = "log_square"

    def apply(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self is Transform.IDENTITY:
            return xs
        if self is Transform.SQUARE:
            return xs * xs
        if np.any(xs == 0.0):
            raise ValueError(f"{self.value} transform is undefined at zero values")
        if self is Transform.LOG_ABS:
            return np.log(np.abs(xs))
        return 2.0 * np.log(np.abs(xs))


@dataclass(frozen=True)
class TrimSpec:
    """Trimming proportions for the self-normalized supremum window."""

    tau1: float = 0.15
    tau2: float = 0.85

    def __post_init__(self) -> None:
        if not 0.0 < self.tau1 < self.tau2 < 1.0:
            raise ValueError(
                f"need 0 < tau1 < tau2 < 1, got ({self.tau1}, {self.tau2})"
            )

    def window(self, n: int) -> tuple[int, int]:
        """Inclusive 1-based cut-point range [floor(n*tau1), floor(n*tau2)]."""
        lo = int(math.floor(n * self.tau1))
        hi = int(math.floor(n * self.tau2))
        if lo < 1:
            raise ValueError(f"trimmed window starts below k=1 for n={n}")
        return lo, min(hi, n - 1)


@dataclass
class ProfileStat:
    """Supremum statistic together with its full cut-point profile."""

    sup_value: float
    argmax_k: int
    k_grid: np.ndarray
    profile: np.ndarray
    degenerate: bool = False


@dataclass
class TestOutcome:
    """One normalized test decision."""

    family: str
    statistic: float
    normalization: float
    argmax_k: int
    critical_value: float | None = None
    reject: bool | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "statistic": self.statistic,
            "normalization": self.normalization,
            "argmax_k": self.argmax_k,
            "critical_value": self.critical_value,
            "reject": self.reject,
            "degenerate": self.degenerate,
        }


def decide(
    stat: ProfileStat,
    family: str,
    normalization: float = 1.0,
    critical_value: float | None = None,
) -> TestOutcome:
    """Normalize a supremum statistic and compare it to a critical value."""
    value = stat.sup_value / normalization
    reject = None if critical_value is None else bool(value > critical_value)
    return TestOutcome(
        family=family,
        statistic=float(value),
        normalization=float(normalization),
        argmax_k=stat.argmax_k,
        critical_value=critical_value,
        reject=reject,
        degenerate=stat.degenerate,
    )


def ranks(xs: np.ndarray) -> np.ndarray:
    """Rank by '<=' counting: R_i = #{j : x_j <= x_i}."""
    xs = np.asarray(xs, dtype=float)
    order = np.sort(xs)
    return np.searchsorted(order, xs, side="right").astype(float)


def _finish(profile: np.ndarray, k_grid: np.ndarray, degenerate: bool = False) -> ProfileStat:
    arg = int(np.argmax(profile))
    return ProfileStat(
        sup_value=float(profile[arg]),
        argmax_k=int(k_grid[arg]),
        k_grid=k_grid,
        profile=profile,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# CUSUM


def cusum(xs: np.ndarray, transform: Transform = Transform.IDENTITY) -> ProfileStat:
    """Supremum of |S_k - (k/n) S_n| over cut points k = 1..n, one prefix pass."""
    y = transform.apply(xs)
    n = y.size
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    s = np.cumsum(y)
    k = np.arange(1, n + 1)
    profile = np.abs(s - k * (s[-1] / n))
    return _finish(profile, k)


def cusum_by_definition(xs: np.ndarray, transform: Transform = Transform.IDENTITY) -> ProfileStat:
    """Direct per-k evaluation of the centered partial sums (test oracle)."""
    y = transform.apply(xs)
    n = y.size
    total = float(np.sum(y))
    profile = np.array(
        [abs(float(np.sum(y[:k])) - (k / n) * total) for k in range(1, n + 1)]
    )
    return _finish(profile, np.arange(1, n + 1))


# ---------------------------------------------------------------------------
# Wilcoxon


def wilcoxon(xs: np.ndarray, transform: Transform = Transform.IDENTITY) -> ProfileStat:
    """Two-sample rank-sum profile |sum_{i<=k} R_i - k(n+1)/2| over cut points.

    The rank identity holds only for tie-free data; with ties the statistic
    falls back to the O(n^2) double-sum definition (a null event under
    continuous generators, so speed there does not matter).
    """
    y = transform.apply(xs)
    n = y.size
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    k = np.arange(1, n + 1)
    if np.unique(y).size == n:
        r = ranks(y)
        profile = np.abs(np.cumsum(r) - k * (n + 1) / 2.0)
    else:
        profile = np.abs(_wilcoxon_pair_counts(y))
    return _finish(profile, k)


def _wilcoxon_pair_counts(y: np.ndarray) -> np.ndarray:
    # W(k) = sum_{i<=k} sum_{j>k} (1{y_i <= y_j} - 1/2) via the O(n) update
    # moving observation k+1 from the right block to the left block.
    n = y.size
    w = np.empty(n)
    w[0] = np.sum(y[0] <= y[1:]) - (n - 1) / 2.0
    for k in range(1, n):
        gained = np.sum(y[k] <= y[k + 1:]) - (n - k - 1) / 2.0
        lost = np.sum(y[:k] <= y[k]) - k / 2.0
        w[k] = w[k - 1] + gained - lost
    return w


def wilcoxon_by_definition(
    xs: np.ndarray, transform: Transform = Transform.IDENTITY
) -> ProfileStat:
    """Literal double-sum over (i, j) pairs for every cut point (test oracle)."""
    y = transform.apply(xs)
    n = y.size
    profile = np.empty(n)
    for k in range(1, n + 1):
        left, right = y[:k], y[k:]
        count = float(np.sum(left[:, None] <= right[None, :]))
        profile[k - 1] = abs(count - k * (n - k) / 2.0)
    return _finish(profile, np.arange(1, n + 1))


# ---------------------------------------------------------------------------
# Self-normalized statistics


def _sn_profile(values: np.ndarray, trim: TrimSpec) -> ProfileStat:
    """Trimmed supremum of the self-normalized CUSUM ratio of `values`.

    The numerator at cut k is the centered partial sum; the denominator
    aggregates squared within-segment demeaned partial sums on both sides of
    the cut. Everything reduces to prefix sums of P_t, P_t^2, t*P_t, so the
    whole profile costs O(n). A vanishing denominator (piecewise-constant
    input) yields +inf and sets the degenerate flag.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    lo, hi = trim.window(n)
    # Centering is a no-op mathematically (the statistic is shift-invariant)
    # but keeps the prefix algebra far from catastrophic cancellation.
    xc = x - x.mean()
    t = np.arange(n + 1, dtype=float)
    p = np.concatenate(([0.0], np.cumsum(xc)))
    cum_p = np.cumsum(p)
    cum_p2 = np.cumsum(p * p)
    cum_tp = np.cumsum(t * p)

    k = np.arange(lo, hi + 1, dtype=float)
    ki = np.arange(lo, hi + 1)
    pk = p[ki]
    numer = np.abs(pk - (k / n) * p[n])

    left = cum_p2[ki] - 2.0 * (pk / k) * cum_tp[ki] + (pk / k) ** 2 * _sum_sq(k)

    u = n - k
    tail_p = cum_p[n] - cum_p[ki]
    tail_p2 = cum_p2[n] - cum_p2[ki]
    tail_tp = cum_tp[n] - cum_tp[ki]
    qn = p[n] - pk
    sum_sq_right = tail_p2 - 2.0 * pk * tail_p + u * pk * pk
    sum_lin_right = tail_tp - k * tail_p - pk * u * (u + 1.0) / 2.0
    sum_wt_right = u * (u + 1.0) * (2.0 * u + 1.0) / 6.0
    right = sum_sq_right - 2.0 * (qn / u) * sum_lin_right + (qn / u) ** 2 * sum_wt_right

    denom_sq = (left + right) / n
    # Segment-constant inputs leave only rounding noise in the denominator;
    # anything at that scale counts as an exact zero. Rounding noise scales
    # with the magnitude of the raw values, not the centered ones.
    noise_floor = (32.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(x)))) * n) ** 2
    zero = denom_sq <= noise_floor
    degenerate = bool(np.any(zero))
    with np.errstate(divide="ignore", invalid="ignore"):
        profile = numer / np.sqrt(np.maximum(denom_sq, 0.0))
    profile[zero] = np.inf
    return _finish(profile, ki, degenerate=degenerate)


def _sum_sq(k: np.ndarray) -> np.ndarray:
    return k * (k + 1.0) * (2.0 * k + 1.0) / 6.0


def sn_cusum(
    xs: np.ndarray,
    transform: Transform = Transform.IDENTITY,
    trim: TrimSpec = TrimSpec(),
) -> ProfileStat:
    """Self-normalized CUSUM statistic over the trimmed cut-point window."""
    return _sn_profile(transform.apply(xs), trim)


def sn_wilcoxon(
    xs: np.ndarray,
    transform: Transform = Transform.IDENTITY,
    trim: TrimSpec = TrimSpec(),
) -> ProfileStat:
    """Self-normalized Wilcoxon statistic: the CUSUM ratio applied to ranks."""
    return _sn_profile(ranks(transform.apply(xs)), trim)


def _sn_profile_by_definition(values: np.ndarray, trim: TrimSpec) -> ProfileStat:
    """Definitional evaluation: demean each segment, accumulate S_t^2 directly."""
    x = np.asarray(values, dtype=float)
    n = x.size
    lo, hi = trim.window(n)
    total = float(np.sum(x))
    ks = np.arange(lo, hi + 1)
    profile = np.empty(ks.size)
    degenerate = False
    for i, k in enumerate(ks):
        numer = abs(float(np.sum(x[:k])) - (k / n) * total)
        s_left = np.cumsum(x[:k] - np.mean(x[:k]))
        s_right = np.cumsum(x[k:] - np.mean(x[k:]))
        denom_sq = (np.sum(s_left**2) + np.sum(s_right**2)) / n
        if denom_sq <= 0.0 or not np.isfinite(1.0 / denom_sq):
            profile[i] = np.inf
            degenerate = True
        else:
            profile[i] = numer / math.sqrt(denom_sq)
    return _finish(profile, ks, degenerate=degenerate)


def sn_cusum_by_definition(
    xs: np.ndarray,
    transform: Transform = Transform.IDENTITY,
    trim: TrimSpec = TrimSpec(),
) -> ProfileStat:
    return _sn_profile_by_definition(transform.apply(xs), trim)


def sn_wilcoxon_by_definition(
    xs: np.ndarray,
    transform: Transform = Transform.IDENTITY,
    trim: TrimSpec = TrimSpec(),
) -> ProfileStat:
    return _sn_profile_by_definition(ranks(transform.apply(xs)), trim)


def profile_to_rows(stat: ProfileStat) -> list[tuple[int, float]]:
    """(k, value) pairs for CSV export of a profile."""
    return [(int(k), float(v)) for k, v in zip(stat.k_grid, stat.profile)]
