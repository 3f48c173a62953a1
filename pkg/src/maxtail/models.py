"""Max-stable model catalogue and exact finite-dimensional probabilities.

Every model here is a stationary max-moving-maxima sequence

    X_t = max_j a_j Z_{t-j},   Z iid alpha-Frechet,

written with weights ``w_j = a_j ** alpha`` that sum to one.  Independent
sequences use the single weight ``w_0 = 1``; ARMAX(phi) uses the geometric
weights ``(1 - phi) * phi**j``; the power-law family truncates
``(1 + j/scale) ** -decay``.  The exponent measure of a finite window is then

    mu_S([0, x]^c) = sum_s max_{t in S} w_{t-s} / x_t**alpha,

which gives extremal coefficients, joint exceedances and indicator
covariances in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    EmptySet,
    NonPositiveArgument,
    NotNormalized,
    OutOfRange,
    SetsOverlap,
    SetTooLarge,
)

MAX_SET_SIZE = 20
NORMALIZATION_TOL = 1e-9
DEFAULT_TRUNCATION = 100_000


@dataclass(frozen=True)
class FrechetAlpha:
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise OutOfRange(f"alpha must be positive, got {self.alpha}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-(x ** -self.alpha))

    def exceedance(self, u):
        """p(u) = P(X_0 > u), evaluated without cancellation."""
        return -np.expm1(-(np.asarray(u, dtype=float) ** -self.alpha))


@dataclass(frozen=True)
class Independent:
    alpha: float = 1.0

    variant = "independent"

    @property
    def weights(self) -> np.ndarray:
        return np.ones(1)

    def tail(self, g):
        g = np.asarray(g)
        return np.where(g <= 0, 1.0, 0.0)

    def to_spec(self) -> dict:
        return {"variant": self.variant, "alpha": self.alpha}


@dataclass(frozen=True)
class Armax:
    """X_t = max(phi X_{t-1}, (1 - phi) Z_t) on unit-Frechet scale, then X**(1/alpha)."""

    phi: float
    alpha: float = 1.0

    variant = "armax"

    @property
    def weights(self) -> None:
        # infinite geometric sequence; handled through ``tail``
        return None

    def tail(self, g):
        g = np.asarray(g, dtype=float)
        return np.where(g <= 0, 1.0, self.phi ** np.maximum(g, 0.0))

    def to_spec(self) -> dict:
        return {"variant": self.variant, "alpha": self.alpha, "phi": self.phi}


@dataclass(frozen=True)
class MaxMovingMaxima:
    coeffs: tuple
    alpha: float = 1.0

    variant = "m3"

    @cached_property
    def weights(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float) ** self.alpha

    @cached_property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.weights) <= 0))

    @cached_property
    def _tail_sums(self) -> np.ndarray:
        w = self.weights
        out = np.zeros(w.size + 1)
        out[:-1] = np.cumsum(w[::-1])[::-1]
        return out

    def tail(self, g):
        """Sum of weights with index >= g (clipped to the support)."""
        g = np.clip(np.asarray(g, dtype=np.int64), 0, self.weights.size)
        return self._tail_sums[g]

    def to_spec(self) -> dict:
        return {"variant": self.variant, "alpha": self.alpha, "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class PowerLawMaxMovingMaxima:
    """M3 with weights proportional to (1 + j/scale)**(-decay), j < truncation."""

    decay: float
    scale: float = 1.0
    truncation: int = DEFAULT_TRUNCATION
    alpha: float = 1.0

    variant = "m3_powerlaw"
    monotone = True

    @cached_property
    def raw_mass(self) -> float:
        j = np.arange(self.truncation, dtype=float)
        return float(np.sum(((1.0 + j / self.scale) ** -self.decay)[::-1]))

    @cached_property
    def discarded_mass(self) -> float:
        """Unnormalized weight mass beyond the truncation, relative to the kept mass.

        Bounded by the integral of (1 + x/scale)**(-decay) over [truncation - 1, inf).
        """
        x0 = self.truncation - 1
        integral = self.scale / (self.decay - 1) * (1.0 + x0 / self.scale) ** (1.0 - self.decay)
        return integral / self.raw_mass

    @cached_property
    def weights(self) -> np.ndarray:
        j = np.arange(self.truncation, dtype=float)
        w = (1.0 + j / self.scale) ** -self.decay
        return w / self.raw_mass

    @cached_property
    def _tail_sums(self) -> np.ndarray:
        w = self.weights
        out = np.zeros(w.size + 1)
        out[:-1] = np.cumsum(w[::-1])[::-1]
        return out

    def tail(self, g):
        g = np.clip(np.asarray(g, dtype=np.int64), 0, self.truncation)
        return self._tail_sums[g]

    @property
    def lrd(self) -> bool:
        # 2 - theta_t ~ C t**(1 - decay) for the untruncated family
        return self.decay <= 2.0

    @property
    def memory_exponent(self) -> float:
        """delta in 2 - theta_t ~ C t**(-delta)."""
        return self.decay - 1.0

    def to_spec(self) -> dict:
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "decay": self.decay,
            "scale": self.scale,
            "truncation": self.truncation,
        }


MaxStableModel = Union[Independent, Armax, MaxMovingMaxima, PowerLawMaxMovingMaxima]


def model_id(model: MaxStableModel) -> str:
    return json.dumps(model.to_spec(), sort_keys=True, separators=(",", ":"))


def is_monotone(model: MaxStableModel) -> bool:
    if isinstance(model, (Independent, Armax, PowerLawMaxMovingMaxima)):
        return True
    return model.monotone


@dataclass(frozen=True)
class LagSet:
    lags: tuple = (0,)

    def __post_init__(self):
        lags = tuple(int(t) for t in self.lags)
        object.__setattr__(self, "lags", lags)
        if not lags:
            raise EmptySet("a lag set needs at least the lag 0")
        if lags[0] != 0:
            raise OutOfRange(f"lag set must start at 0, got {lags}")
        if any(b <= a for a, b in zip(lags, lags[1:])):
            raise OutOfRange(f"lags must be strictly increasing, got {lags}")

    @property
    def span(self) -> int:
        return self.lags[-1]

    def __len__(self):
        return len(self.lags)

    def __iter__(self):
        return iter(self.lags)

    def shifted(self, t: int) -> tuple:
        return tuple(s + t for s in self.lags)


# ---------------------------------------------------------------------------
# model construction


def _require(cond: bool, msg: str):
    if not cond:
        raise OutOfRange(msg)


def make_model(spec: dict) -> MaxStableModel:
    """Build a validated model from its JSON description.

    Parameters
    ----------
    spec : dict
        ``{"variant": "independent"|"armax"|"m3"|"m3_powerlaw", "alpha": ...}``
        plus ``phi`` (armax), ``coeffs`` (m3) or ``decay``/``scale``/``truncation``
        (m3_powerlaw).

    Raises
    ------
    OutOfRange
        A numeric field lies outside its admissible range.
    NotNormalized
        M3 coefficients whose ``sum(a_j**alpha)`` is not within 1e-9 of one.
    """
    variant = spec.get("variant")
    alpha = float(spec.get("alpha", 1.0))
    FrechetAlpha(alpha)
    if variant == "independent":
        return Independent(alpha)
    if variant == "armax":
        phi = float(spec["phi"])
        _require(0.0 < phi < 1.0, f"armax phi must lie in (0, 1), got {phi}")
        return Armax(phi, alpha)
    if variant == "m3":
        coeffs = [float(a) for a in spec["coeffs"]]
        _require(len(coeffs) > 0, "m3 needs at least one coefficient")
        _require(all(a >= 0 and math.isfinite(a) for a in coeffs), f"negative coefficient in {coeffs}")
        total = math.fsum(a**alpha for a in coeffs)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NotNormalized(f"sum a_j**alpha = {total!r}, expected 1")
        c = total ** (-1.0 / alpha)
        return MaxMovingMaxima(tuple(a * c for a in coeffs), alpha)
    if variant == "m3_powerlaw":
        decay = float(spec["decay"])
        scale = float(spec.get("scale", 1.0))
        truncation = int(spec.get("truncation", DEFAULT_TRUNCATION))
        _require(decay > 1.0, f"power-law decay must exceed 1, got {decay}")
        _require(scale > 0.0, f"power-law scale must be positive, got {scale}")
        _require(truncation >= 1, f"truncation must be positive, got {truncation}")
        return PowerLawMaxMovingMaxima(decay, scale, truncation, alpha)
    raise OutOfRange(f"unknown model variant {variant!r}")


# ---------------------------------------------------------------------------
# exponent measure


def _as_lags(S: Iterable[int]) -> tuple:
    lags = tuple(sorted(int(t) for t in S))
    if not lags:
        raise EmptySet("empty index set")
    if len(set(lags)) != len(lags):
        raise OutOfRange(f"repeated index in {lags}")
    return lags


def _rows(weights: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """Row i holds w_{t_i - s} over innovation positions s (lags shifted to start at 0)."""
    m = weights.size
    base = lags[0]
    span = lags[-1] - base
    rows = np.zeros((len(lags), m + span))
    wrev = weights[::-1]
    for i, t in enumerate(lags):
        rows[i, t - base : t - base + m] = wrev
    return rows


def _theta_sorted(model: MaxStableModel, lags: tuple) -> float:
    if len(lags) == 1:
        return 1.0
    if is_monotone(model):
        gaps = np.diff(lags)
        return 1.0 + float(np.sum(1.0 - model.tail(gaps)))
    return float(_rows(model.weights, lags).max(axis=0).sum())


@lru_cache(maxsize=200_000)
def _theta_cached(model: MaxStableModel, lags: tuple) -> float:
    return _theta_sorted(model, lags)


def extremal_coefficient(model: MaxStableModel, S: Iterable[int]) -> float:
    """theta_S = mu_S([0,1]^c); shift invariant, in [1, |S|]."""
    lags = _as_lags(S)
    base = lags[0]
    return _theta_cached(model, tuple(t - base for t in lags))


def fdd_cdf(model: MaxStableModel, S: Iterable[int], x) -> float:
    """P(X_t <= x_t for all t in S) in closed form."""
    S = [int(t) for t in S]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(S) == 0:
        raise EmptySet("empty index set")
    if x.shape != (len(S),):
        raise OutOfRange(f"need one threshold per index, got {x.shape} for {len(S)} indices")
    if np.any(~(x > 0)):
        raise NonPositiveArgument(f"thresholds must be positive, got {x}")
    order = np.argsort(S, kind="stable")
    lags = _as_lags(S)
    y = x[order] ** model.alpha
    return math.exp(-_exponent_measure(model, lags, y))


def _exponent_measure(model: MaxStableModel, lags: tuple, y: np.ndarray) -> float:
    if isinstance(model, Independent):
        return float(np.sum(1.0 / y))
    if isinstance(model, Armax):
        phi = model.phi
        # M_i = max_{k >= i} phi**(t_k - t_i) / y_k, accumulated from the right
        k = len(lags)
        M = np.empty(k)
        M[-1] = 1.0 / y[-1]
        for i in range(k - 2, -1, -1):
            M[i] = max(1.0 / y[i], phi ** (lags[i + 1] - lags[i]) * M[i + 1])
        gaps = np.diff(lags)
        return float(M[0] + np.sum((1.0 - phi**gaps) * M[1:]))
    rows = _rows(model.weights, lags) / y[:, None]
    return float(rows.max(axis=0).sum())


# ---------------------------------------------------------------------------
# exceedance probabilities and indicator covariances


def _subsets(items: Sequence[int], nonempty: bool = True):
    """Subsets in order of increasing size."""
    start = 1 if nonempty else 0
    for k in range(start, len(items) + 1):
        yield from combinations(items, k)


def _check_size(n: int):
    if n > MAX_SET_SIZE:
        raise SetTooLarge(f"{n} indices exceed the subset-enumeration cap of {MAX_SET_SIZE}")


def exceedance_prob(model: MaxStableModel, A: Iterable[int], u: float) -> float:
    """P(X_t > u for all t in A), exact.

    Inclusion-exclusion over subsets C of A with ``expm1`` terms, so that the
    constant parts cancel analytically and the alternating sum stays accurate
    at large u.
    """
    A = _as_lags(A)
    _check_size(len(A))
    if not u > 0:
        raise NonPositiveArgument(f"threshold must be positive, got {u}")
    eps = float(u) ** -model.alpha
    terms = [
        (-1) ** len(C) * math.expm1(-eps * extremal_coefficient(model, C)) for C in _subsets(A)
    ]
    return math.fsum(terms)


def _split_pairs(A: Sequence[int], B: Sequence[int]):
    """All (A', B') with A' ⊆ A, B' ⊆ B both nonempty."""
    for a in _subsets(A):
        for b in _subsets(B):
            yield a, b


def _check_disjoint(A, B):
    A = _as_lags(A)
    B = _as_lags(B)
    if set(A) & set(B):
        raise SetsOverlap(f"{A} and {B} share indices")
    _check_size(len(A) + len(B))
    return A, B


def tawn_gap(model: MaxStableModel, CA: Sequence[int], CB: Sequence[int]) -> float:
    """theta_{C∩A} + theta_{C∩B} - theta_C, nonnegative by subadditivity."""
    return (
        extremal_coefficient(model, CA)
        + extremal_coefficient(model, CB)
        - extremal_coefficient(model, tuple(CA) + tuple(CB))
    )


def indicator_cov(model: MaxStableModel, A: Iterable[int], B: Iterable[int], u: float) -> float:
    """Cov(1{X_s > u, s in A}, 1{X_t > u, t in B}) for disjoint A, B, exact."""
    A, B = _check_disjoint(A, B)
    if not u > 0:
        raise NonPositiveArgument(f"threshold must be positive, got {u}")
    eps = float(u) ** -model.alpha
    terms = []
    for a, b in _split_pairs(A, B):
        theta_c = extremal_coefficient(model, a + b)
        gap = extremal_coefficient(model, a) + extremal_coefficient(model, b) - theta_c
        # exp(-eps*theta_C) - exp(-eps*(theta_CA + theta_CB))
        diff = -math.exp(-eps * theta_c) * math.expm1(-eps * gap)
        terms.append((-1) ** (len(a) + len(b)) * diff)
    return math.fsum(terms)


def pairwise_residual(model: MaxStableModel, h: int) -> float:
    """2 - theta_h, the pairwise tail dependence coefficient at lag h."""
    h = abs(int(h))
    if h == 0:
        return 1.0
    return 2.0 - extremal_coefficient(model, (0, h))


def covariance_bound_terms(model: MaxStableModel, A: Sequence[int], B: Sequence[int]) -> float:
    """sum_{s in A} sum_{t in B} (2 - theta_{|s-t|})."""
    return math.fsum(pairwise_residual(model, s - t) for s in A for t in B)
