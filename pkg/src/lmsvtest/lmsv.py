"""Long-memory stochastic volatility sample paths with change injection.

The generative model is X_j = exp(Y_j) * eps_j with Y fractional Gaussian
noise and eps i.i.d. innovations. Change alternatives (mean shift, variance
rescaling, tail-index shift) touch only the post-change segment, so paths
generated from the same stream are coupled across shift heights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fgn
from .dist import (
    CenteredPareto,
    NoiseSpec,
    Pareto,
    RngStream,
    StandardNormal,
    hill_estimator,
    pareto_from_uniform,
)

_Y_SUBSTREAM = 0
_EPS_SUBSTREAM = 1


@dataclass(frozen=True)
class NoChange:
    kind = "none"


@dataclass(frozen=True)
class MeanShift:
    """Add h to every observation after the break at proportion tau."""

    h: float
    tau: float
    kind = "mean"

    def __post_init__(self) -> None:
        _check_tau(self.tau)


@dataclass(frozen=True)
class VarianceScale:
    """Multiply observations after the break by h (variance scales by h^2)."""

    h: float
    tau: float
    kind = "variance"

    def __post_init__(self) -> None:
        _check_tau(self.tau)
        if not self.h > 0:
            raise ValueError(f"variance scale must be positive, got {self.h}")


@dataclass(frozen=True)
class TailShift:
    """Replace the innovation tail index alpha by alpha + h after the break.

    Only valid for (non-centered) Pareto innovations; post-change draws reuse
    the same uniforms through the inverse CDF so paths couple across h.
    """

    h: float
    tau: float
    kind = "tail"

    def __post_init__(self) -> None:
        _check_tau(self.tau)


ChangeSpec = NoChange | MeanShift | VarianceScale | TailShift


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"change location tau must lie in (0, 1), got {tau}")


@dataclass(frozen=True)
class SeriesSpec:
    """Complete description of one simulated series including its change."""

    fgn: fgn.FgnParams
    noise: NoiseSpec
    change: ChangeSpec = NoChange()
    volatility: str = "exp"

    def __post_init__(self) -> None:
        if self.volatility != "exp":
            raise ValueError(f"unsupported volatility function {self.volatility!r}")
        if isinstance(self.change, TailShift) and not isinstance(self.noise, Pareto):
            raise ValueError("tail-index changes require Pareto innovations")

    @property
    def n(self) -> int:
        return self.fgn.n


def change_point_index(n: int, tau: float) -> int:
    """First 0-based index affected by a change at proportion tau."""
    return int(math.floor(n * tau))


def simulate_components(
    spec: SeriesSpec, stream: RngStream
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (y, eps, x) for one path.

    The latent Gaussian and the innovations use independent substreams of
    `stream`, so the pre-change segment is bit-identical to the null path
    from the same stream whatever the change specification.
    """
    n = spec.n
    y = fgn.sample(spec.fgn, stream.substream(_Y_SUBSTREAM))
    rng = stream.substream(_EPS_SUBSTREAM).generator()

    change = spec.change
    if isinstance(spec.noise, StandardNormal):
        eps = rng.standard_normal(n)
    else:
        u = 1.0 - rng.random(n)
        alpha = np.full(n, spec.noise.alpha)
        if isinstance(change, TailShift):
            alpha[change_point_index(n, change.tau):] += change.h
        eps = pareto_from_uniform(u, alpha, spec.noise.scale)
        if isinstance(spec.noise, CenteredPareto):
            eps -= spec.noise.mean_shift

    x = np.exp(y) * eps
    if isinstance(change, MeanShift):
        x[change_point_index(n, change.tau):] += change.h
    elif isinstance(change, VarianceScale):
        x[change_point_index(n, change.tau):] *= change.h
    return y, eps, x


def simulate_series(spec: SeriesSpec, stream: RngStream) -> np.ndarray:
    """Simulate one LMSV path; see simulate_components for the stream layout."""
    return simulate_components(spec, stream)[2]


@dataclass(frozen=True)
class TailCheck:
    alpha_hat: float
    target_alpha: float


def verify_breiman_tail(
    spec: SeriesSpec,
    n_large: int,
    stream: RngStream,
    tail_fraction: float = 0.005,
) -> TailCheck:
    """Estimate the tail index of X on a long null path.

    The product exp(Y) * eps inherits the power tail of the innovations, so
    the Hill estimate over the top order statistics should recover the
    innovation alpha. Refuses normal innovations (no power tail to estimate).
    """
    if isinstance(spec.noise, StandardNormal):
        raise ValueError("tail check needs Pareto-type innovations")
    null_spec = SeriesSpec(
        fgn=fgn.FgnParams(hurst=spec.fgn.hurst, n=n_large),
        noise=spec.noise,
        change=NoChange(),
    )
    x = simulate_series(null_spec, stream)
    alpha_hat = hill_estimator(x, tail_fraction)
    return TailCheck(alpha_hat=alpha_hat, target_alpha=spec.noise.alpha)
