"""Empirical exceedance frequencies and the ratio estimator of chi_T."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .coefficients import chi_direct
from .errors import OutOfRange, PathTooShort, UndefinedRatio
from .models import FrechetAlpha, LagSet, MaxStableModel, exceedance_prob
from .simulate import SamplePath

DEFAULT_GAMMA = 0.5


class Centering(str, enum.Enum):
    """Reference value for the ratio statistic."""

    LIMIT = "limit"  # chi_T
    FINITE = "finite"  # P(all of T exceed u) / P(X_0 > u)


def threshold_schedule(n: int, gamma: float = DEFAULT_GAMMA, alpha: Union[float, FrechetAlpha] = 1.0) -> float:
    """u_n with p(u_n) = n**(gamma - 1)."""
    if isinstance(alpha, FrechetAlpha):
        alpha = alpha.alpha
    if not 0.0 < gamma < 1.0:
        raise OutOfRange(f"gamma must lie in (0, 1), got {gamma}")
    if n < 2:
        raise OutOfRange(f"n must be >= 2, got {n}")
    q = float(n) ** (gamma - 1.0)
    return (-math.log1p(-q)) ** (-1.0 / alpha)


@dataclass(frozen=True)
class ThresholdSchedule:
    gamma: float = DEFAULT_GAMMA
    alpha: float = 1.0

    def u(self, n: int) -> float:
        return threshold_schedule(n, self.gamma, self.alpha)

    def p(self, n: int) -> float:
        return float(n) ** (self.gamma - 1.0)

    def bias_negligible(self) -> bool:
        """n p(u_n)**3 = n**(3 gamma - 2) -> 0."""
        return self.gamma < 2.0 / 3.0


@dataclass(frozen=True)
class EstimateTriple:
    p_hat: float
    numerator_hat: float
    chi_hat: Optional[float]
    effective_sample: int
    joint_count: int
    n: int

    @property
    def defined(self) -> bool:
        return self.chi_hat is not None


def exceedance_counts(values: np.ndarray, n: int, lags, u: float) -> tuple[int, int]:
    """(# t <= n with X_t > u, # t <= n with X_{t+s} > u for all s in lags)."""
    lags = tuple(lags)
    span = lags[-1]
    if values.size < n + span:
        raise PathTooShort(f"path has {values.size} values, need n + t_N = {n + span}")
    exc = values[: n + span] > u
    joint = exc[:n].copy()
    for s in lags[1:]:
        joint &= exc[s : s + n]
    return int(np.count_nonzero(exc[:n])), int(np.count_nonzero(joint))


def estimate(path: Union[SamplePath, np.ndarray], T: LagSet, u: float, n: Optional[int] = None) -> EstimateTriple:
    if isinstance(path, SamplePath):
        values, n = path.values, path.n if n is None else n
    else:
        values = np.asarray(path, dtype=float)
        if n is None:
            n = values.size - T.span
    den, num = exceedance_counts(values, n, T.lags, u)
    chi = num / den if den > 0 else None
    return EstimateTriple(den / n, num / n, chi, den, num, n)


@dataclass(frozen=True)
class StandardizedStatistics:
    denominator: float
    numerator: float
    ratio: Optional[float]


def reference_chi(model: MaxStableModel, T: LagSet, u: float, centering: Centering = Centering.LIMIT) -> float:
    if Centering(centering) is Centering.LIMIT:
        return chi_direct(model, T.lags)
    p = float(FrechetAlpha(model.alpha).exceedance(u))
    return exceedance_prob(model, T.lags, u) / p


def standardized_statistics(
    triple: EstimateTriple,
    n: int,
    u: float,
    model: MaxStableModel,
    T: LagSet,
    centering: Centering = Centering.LIMIT,
    strict: bool = True,
) -> StandardizedStatistics:
    """sqrt(n p) (p_hat/p - 1), sqrt(n p) (num/p - chi_ref), sqrt(n p) (chi_hat - chi_ref)."""
    p = float(FrechetAlpha(model.alpha).exceedance(u))
    if not p > 0:
        raise OutOfRange(f"p(u) underflows at u={u}")
    ref = reference_chi(model, T, u, centering)
    scale = math.sqrt(n * p)
    ratio = None
    if triple.defined:
        ratio = scale * (triple.chi_hat - ref)
    elif strict:
        raise UndefinedRatio("no exceedances in the estimation window")
    return StandardizedStatistics(
        scale * (triple.p_hat / p - 1.0),
        scale * (triple.numerator_hat / p - ref),
        ratio,
    )
