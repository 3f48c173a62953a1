"""Reference computations that share no code with the package.

Everything here is written from first principles: moving-maxima sums over
explicit innovation indices, inclusion-exclusion with plain loops, and
Monte Carlo on numpy's default PCG64 stream (the package uses Philox).
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def armax_weights(phi: float, length: int = 400) -> np.ndarray:
    """ARMAX(phi) as a moving maximum: X_t = max_j (1-phi) phi^j Z_{t-j}."""
    return (1.0 - phi) * phi ** np.arange(length)


def mm_theta(w, S) -> float:
    """sum over innovation k of max_{t in S} w_{t-k} (w_j = a_j^alpha)."""
    w = list(w)
    m = len(w)
    total = 0.0
    for k in range(min(S) - m + 1, max(S) + 1):
        total += max((w[t - k] if 0 <= t - k < m else 0.0) for t in S)
    return total


def mm_chi(w, S) -> float:
    w = list(w)
    m = len(w)
    total = 0.0
    for k in range(min(S) - m + 1, max(S) + 1):
        total += min((w[t - k] if 0 <= t - k < m else 0.0) for t in S)
    return total


def mm_fdd(a, alpha, S, x) -> float:
    """P(X_t <= x_t, t in S) = prod_k P(Z_k <= min_t x_t / a_{t-k})."""
    a = list(a)
    m = len(a)
    expo = 0.0
    for k in range(min(S) - m + 1, max(S) + 1):
        expo += max(((a[t - k] / xt) ** alpha if 0 <= t - k < m else 0.0) for t, xt in zip(S, x))
    return math.exp(-expo)


def incl_excl_exceedance(theta_fn, A, u, alpha=1.0) -> float:
    """sum_{C subset A} (-1)^|C| exp(-u^-alpha theta_C), theta_empty = 0."""
    eps = u ** (-alpha)
    total = 0.0
    for r in range(len(A) + 1):
        for C in itertools.combinations(A, r):
            total += (-1) ** r * math.exp(-eps * (theta_fn(C) if C else 0.0))
    return total


def incl_excl_chi(theta_fn, S) -> float:
    total = 0.0
    for r in range(1, len(S) + 1):
        for C in itertools.combinations(S, r):
            total += (-1) ** (r + 1) * theta_fn(C)
    return total


def frechet_draws(rng, size, alpha=1.0):
    return (-np.log(rng.random(size))) ** (-1.0 / alpha)


def mc_mm_window(a, alpha, span, reps, rng):
    """(reps, span+1) array of X_0..X_span from a moving maximum with coefficients a."""
    a = np.asarray(a, dtype=float)
    m = a.size
    z = frechet_draws(rng, (reps, span + m), alpha)
    out = np.zeros((reps, span + 1))
    for t in range(span + 1):
        for j in range(m):
            np.maximum(out[:, t], a[j] * z[:, t + m - 1 - j], out=out[:, t])
    return out


def mc_armax_window(phi, span, reps, rng):
    x = frechet_draws(rng, reps)
    cols = [x]
    for _ in range(span):
        x = np.maximum(phi * x, (1.0 - phi) * frechet_draws(rng, reps))
        cols.append(x)
    return np.column_stack(cols)


def binomial_se(p, n):
    return math.sqrt(p * (1.0 - p) / n)


def cesaro_reference(r, b, delta) -> float:
    """2 b^(delta-1) sum_{t=1}^{b-1} (1 - t/b) r_t, summed in float64 from the largest t down."""
    t = np.arange(b - 1, 0, -1, dtype=float)
    vals = (1.0 - t / b) * np.asarray(r, dtype=float)[b - 2 :: -1]
    return 2.0 * b ** (delta - 1.0) * math.fsum(vals)
