"""Limiting tail quantities: theta, chi, kappa and the asymptotic variances.

Two routes are kept apart on purpose.  ``chi_joint`` goes through
inclusion-exclusion over extremal coefficients; ``chi_direct`` reads the
joint exceedance mass straight off the moving-maxima weights
(``sum_s min_{t in S} w_{t-s}``).  The variance tables use the direct route
because it is O(1) per lag for monotone weights.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import EmptySet, InsufficientResiduals, LrdModel, OutOfRange, SetTooLarge
from .models import (
    MAX_SET_SIZE,
    Armax,
    Independent,
    LagSet,
    MaxMovingMaxima,
    MaxStableModel,
    PowerLawMaxMovingMaxima,
    _as_lags,
    _check_disjoint,
    _rows,
    _split_pairs,
    _subsets,
    extremal_coefficient,
    is_monotone,
    model_id,
)

DEFAULT_HORIZON = 10_000
DIVERGENCE_THRESHOLD = 1e6
ROUTE_TOL = 1e-10
PSD_TOL = 1e-9


def theta(model: MaxStableModel, S: Iterable[int]) -> float:
    return extremal_coefficient(model, S)


def is_lrd(model: MaxStableModel) -> bool:
    """True when sum_t (2 - theta_t) diverges for the (untruncated) family."""
    return isinstance(model, PowerLawMaxMovingMaxima) and model.lrd


def chi_direct(model: MaxStableModel, S: Iterable[int]) -> float:
    """Joint exceedance mass mu_S(all coordinates > 1) from the weights."""
    lags = _as_lags(S)
    if len(lags) == 1:
        return 1.0
    span = lags[-1] - lags[0]
    if isinstance(model, Independent):
        return 0.0
    if isinstance(model, Armax):
        return model.phi**span
    return float(_rows(model.weights, lags).min(axis=0).sum())


def _chi_fast(model: MaxStableModel, span: np.ndarray) -> np.ndarray:
    """chi over any set with the given span, valid for monotone weights."""
    span = np.asarray(span)
    return np.where(span == 0, 1.0, model.tail(span))


def chi_joint(model: MaxStableModel, S: Iterable[int]) -> float:
    """chi_S by inclusion-exclusion, cross-checked against the direct weight route.

    ``sum_{C ⊆ S, C ≠ ∅} (-1)**(|C|+1) theta_C``; for moving-maxima models
    the min-sum route must agree to 1e-10.
    """
    lags = _as_lags(S)
    if len(lags) > MAX_SET_SIZE:
        raise SetTooLarge(f"{len(lags)} indices exceed the cap of {MAX_SET_SIZE}")
    value = math.fsum(
        (-1) ** (len(C) + 1) * extremal_coefficient(model, C) for C in _subsets(lags)
    )
    if not isinstance(model, Independent):
        direct = chi_direct(model, lags)
        if abs(direct - value) > ROUTE_TOL:
            raise RuntimeError(
                f"chi routes disagree for {model_id(model)} on {lags}: {value!r} vs {direct!r}"
            )
    return min(max(value, 0.0), 1.0)


def chi_cross(model: MaxStableModel, A: Iterable[int], B: Iterable[int]) -> float:
    """Limit of Cov(1{A exceeds}, 1{B exceeds}) / p(u) for disjoint A, B."""
    A, B = _check_disjoint(A, B)
    terms = []
    for a, b in _split_pairs(A, B):
        gap = (
            extremal_coefficient(model, a)
            + extremal_coefficient(model, b)
            - extremal_coefficient(model, a + b)
        )
        terms.append((-1) ** (len(a) + len(b)) * gap)
    return math.fsum(terms)


def kappa(model: MaxStableModel, t: int, T: LagSet) -> float:
    """kappa_{t,T}: joint exceedance of the blocks T and t + T."""
    if t < 0:
        raise OutOfRange(f"kappa needs t >= 0, got {t}")
    T = T if isinstance(T, LagSet) else LagSet(tuple(T))
    union = sorted(set(T.lags) | set(T.shifted(t)))
    return chi_joint(model, union)


# ---------------------------------------------------------------------------
# residual sequences


def residuals(model: MaxStableModel, horizon: int) -> np.ndarray:
    """2 - theta_t for t = 1..horizon."""
    t = np.arange(1, horizon + 1)
    if is_monotone(model):
        return np.asarray(model.tail(t), dtype=float)
    w = model.weights
    out = np.zeros(horizon)
    for h in range(1, min(horizon, w.size - 1) + 1):
        out[h - 1] = np.minimum(w[:-h], w[h:]).sum()
    return out


def residual_tail(model: MaxStableModel, horizon: int) -> float:
    """sum_{t > horizon} (2 - theta_t); exact for every catalogued model."""
    if isinstance(model, Independent):
        return 0.0
    if isinstance(model, Armax):
        return model.phi ** (horizon + 1) / (1.0 - model.phi)
    m = model.weights.size
    if horizon >= m - 1:
        return 0.0
    return float(np.sum(residuals(model, m - 1)[horizon:][::-1]))


# ---------------------------------------------------------------------------
# tables and variances


@dataclass(frozen=True)
class Diverges:
    """Tagged value for an infinite limiting variance (LRD regime)."""

    lower_bound: float
    horizon: int

    def to_dict(self) -> dict:
        return {"diverges": True, "lower_bound": self.lower_bound, "horizon": self.horizon}


@dataclass(frozen=True)
class TruncatedSum:
    value: float
    tail_bound: float
    horizon: int

    def to_dict(self) -> dict:
        return {"value": self.value, "tail_bound": self.tail_bound, "horizon": self.horizon}


@dataclass
class CoefficientTable:
    model: str
    lags: tuple
    horizon: int
    theta_pairwise: np.ndarray
    residuals: np.ndarray
    kappa: np.ndarray
    chi_T: float
    tail_bound: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "theta_t", "residual", "kappa_t"])
        for t in range(self.horizon):
            writer.writerow(
                [t + 1, repr(float(self.theta_pairwise[t])), repr(float(self.residuals[t])),
                 repr(float(self.kappa[t]))]
            )
        return buf.getvalue()


def _kappa_sequence(model: MaxStableModel, T: LagSet, horizon: int) -> np.ndarray:
    t = np.arange(1, horizon + 1)
    if is_monotone(model):
        return _chi_fast(model, t + T.span)
    m = model.weights.size
    out = np.zeros(horizon)
    for i in range(min(horizon, m)):
        union = sorted(set(T.lags) | set(T.shifted(i + 1)))
        out[i] = chi_direct(model, union)
    return out


def _cross_sequence(model: MaxStableModel, T: LagSet, horizon: int) -> np.ndarray:
    """chi(T ∪ {t}) + chi({0} ∪ (t + T)) for t = 1..horizon."""
    t = np.arange(1, horizon + 1)
    if is_monotone(model):
        return _chi_fast(model, np.maximum(t, T.span)) + _chi_fast(model, t + T.span)
    m = model.weights.size
    out = np.zeros(horizon)
    for i in range(min(horizon, m + T.span)):
        k = i + 1
        out[i] = chi_direct(model, sorted(set(T.lags) | {k})) + chi_direct(
            model, sorted({0} | set(T.shifted(k)))
        )
    return out


def coefficient_table(model: MaxStableModel, T: LagSet, horizon: int = DEFAULT_HORIZON) -> CoefficientTable:
    r = residuals(model, horizon)
    return CoefficientTable(
        model=model_id(model),
        lags=T.lags,
        horizon=horizon,
        theta_pairwise=2.0 - r,
        residuals=r,
        kappa=_kappa_sequence(model, T, horizon),
        chi_T=chi_direct(model, T.lags),
        tail_bound=residual_tail(model, horizon),
    )


def sigma0_sq(model: MaxStableModel, horizon: int = DEFAULT_HORIZON) -> Union[TruncatedSum, Diverges]:
    """1 + 2 sum_{t>=1} (2 - theta_t), truncated at ``horizon`` with an exact tail."""
    if horizon < 1:
        raise OutOfRange(f"horizon must be >= 1, got {horizon}")
    partial = 1.0 + 2.0 * float(np.sum(residuals(model, horizon)[::-1]))
    if is_lrd(model) or partial > DIVERGENCE_THRESHOLD:
        return Diverges(partial, horizon)
    return TruncatedSum(partial, 2.0 * residual_tail(model, horizon), horizon)


def _require_srd(model: MaxStableModel):
    if is_lrd(model):
        raise LrdModel(f"{model_id(model)} has non-summable tail dependence")


def sigmaT_sq(model: MaxStableModel, T: LagSet, horizon: int = DEFAULT_HORIZON) -> TruncatedSum:
    """chi_T + 2 sum_{t>=1} kappa_{t,T}; the tail is bounded by 2 sum_{t>H} (2 - theta_t)."""
    _require_srd(model)
    T = T if isinstance(T, LagSet) else LagSet(tuple(T))
    k = _kappa_sequence(model, T, horizon)
    value = chi_direct(model, T.lags) + 2.0 * float(np.sum(k[::-1]))
    return TruncatedSum(value, 2.0 * residual_tail(model, horizon), horizon)


@dataclass
class AsymptoticVariances:
    sigma0_sq: float
    sigmaT_sq: float
    sigma12: float
    chi_T: float
    ratio_var: float
    sigma0_err: float
    sigmaT_err: float
    sigma12_err: float
    ratio_err: float
    horizon: int

    @property
    def sigma_matrix(self) -> np.ndarray:
        return np.array([[self.sigmaT_sq, self.sigma12], [self.sigma12, self.sigma0_sq]])

    @property
    def truncation_error(self) -> float:
        return max(self.sigma0_err, self.sigmaT_err, self.sigma12_err)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sigma_matrix"] = self.sigma_matrix.tolist()
        out["truncation_error"] = self.truncation_error
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def sigma_matrix(model: MaxStableModel, T: LagSet, horizon: int = DEFAULT_HORIZON) -> AsymptoticVariances:
    """Covariance of the (numerator, denominator) CLT and the ratio variance F'ΣF.

    The off-diagonal entry is sum over all integer offsets k of
    chi(T ∪ {k}), split into k = 0, k > 0 and k < 0 (the last written as
    chi({0} ∪ (|k| + T)) by stationarity).
    """
    _require_srd(model)
    T = T if isinstance(T, LagSet) else LagSet(tuple(T))
    s0 = sigma0_sq(model, horizon)
    sT = sigmaT_sq(model, T, horizon)
    chi_T = chi_direct(model, T.lags)
    s12 = chi_T + float(np.sum(_cross_sequence(model, T, horizon)[::-1]))
    tail = residual_tail(model, horizon)
    err12 = 2.0 * tail
    sig = np.array([[sT.value, s12], [s12, s0.value]])
    eig = np.linalg.eigvalsh(sig)
    if eig[0] < -PSD_TOL:
        raise RuntimeError(f"Sigma not positive semidefinite: eigenvalues {eig}")
    F = np.array([1.0, -chi_T])
    ratio = float(F @ sig @ F)
    ratio_err = sT.tail_bound + 2.0 * chi_T * err12 + chi_T**2 * s0.tail_bound
    return AsymptoticVariances(
        sigma0_sq=s0.value,
        sigmaT_sq=sT.value,
        sigma12=s12,
        chi_T=chi_T,
        ratio_var=max(ratio, 0.0),
        sigma0_err=s0.tail_bound,
        sigmaT_err=sT.tail_bound,
        sigma12_err=err12,
        ratio_err=ratio_err,
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# long range dependence


def lrd_variance_limit(C: float, delta: float) -> float:
    """Limit of Var(sqrt(b^delta p) p_hat / p) when 2 - theta_t = C t**(-delta)."""
    if not C > 0:
        raise OutOfRange(f"C must be positive, got {C}")
    if not 0.0 < delta < 1.0:
        raise OutOfRange(f"delta must lie in (0, 1), got {delta}")
    return 2.0 * C / ((1.0 - delta) * (2.0 - delta))


def cesaro_scaled_sum(residuals: Sequence[float], b: int, delta: float) -> float:
    """2 b**(delta-1) sum_{t=1}^{b-1} (1 - t/b) r_t, with ``residuals[0]`` = r_1."""
    if b < 2:
        raise OutOfRange(f"b must be >= 2, got {b}")
    r = np.asarray(residuals, dtype=float)
    if r.size < b - 1:
        raise InsufficientResiduals(f"need {b - 1} residuals, got {r.size}")
    t = np.arange(1, b, dtype=float)
    return 2.0 * b ** (delta - 1.0) * float(np.sum((1.0 - t / b) * r[: b - 1]))


def power_law_residuals(C: float, delta: float, count: int) -> np.ndarray:
    """Exact sequence C t**(-delta), t = 1..count."""
    return C * np.arange(1, count + 1, dtype=float) ** -delta
