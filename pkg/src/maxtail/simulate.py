"""Exact simulation of the catalogued max-stable sequences.

All generators work on the unit-Frechet scale and apply ``X ** (1/alpha)``
at the end.  Random streams come from Philox, keyed by
``SeedSequence(master_seed, spawn_key=keys)`` so that any replicate can be
regenerated independently of the others.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numba as nb
import numpy as np

from .errors import OutOfRange, UnboundedSpectral
from .models import (
    Armax,
    Independent,
    LagSet,
    MaxMovingMaxima,
    MaxStableModel,
    PowerLawMaxMovingMaxima,
    model_id,
)

PATH_MAGIC = b"MXTL"
_HEADER = struct.Struct("<4sId")


def replicate_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by (master_seed, keys)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def unit_frechet(rng: np.random.Generator, size) -> np.ndarray:
    """Inverse-cdf draws (-log U)**-1 with U uniform on (0, 1]."""
    e = -np.log1p(-rng.random(size))
    np.maximum(e, np.finfo(float).tiny, out=e)
    return 1.0 / e


def frechet(rng: np.random.Generator, size, alpha: float = 1.0) -> np.ndarray:
    x = unit_frechet(rng, size)
    return x if alpha == 1.0 else x ** (1.0 / alpha)


@dataclass
class SamplePath:
    values: np.ndarray
    n: int
    seed: int
    model: str
    span: int = 0
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.values.size


@nb.njit(cache=True, nogil=True)
def _armax_recursion(z, x0, phi):
    out = np.empty_like(z)
    prev = x0
    c = 1.0 - phi
    for i in range(z.size):
        a = phi * prev
        b = c * z[i]
        prev = a if a > b else b
        out[i] = prev
    return out


@nb.njit(cache=True, nogil=True)
def _m3_pruned(z, w, n_out):
    """X_t = max_j w_j z_{t+m-1-j} for nonincreasing w, skipping dominated terms.

    Every X_t is at least w_0 * min(z over the window), so an innovation stops
    contributing once w_j * z_s falls below that floor.
    """
    m = w.size
    x = np.empty(n_out)
    zmin = np.inf
    for t in range(n_out):
        v = z[t + m - 1]
        x[t] = w[0] * v
        if v < zmin:
            zmin = v
    floor = w[0] * zmin
    for s in range(z.size):
        zs = z[s]
        j = m - 1 - s
        if j < 1:
            j = 1
        jend = n_out + m - 1 - s
        if jend > m:
            jend = m
        while j < jend:
            v = w[j] * zs
            if v <= floor:
                break
            t = s - (m - 1) + j
            if v > x[t]:
                x[t] = v
            j += 1
    return x


def _m3_dense(z: np.ndarray, w: np.ndarray, n_out: int) -> np.ndarray:
    m = w.size
    x = w[0] * z[m - 1 : m - 1 + n_out]
    for j in range(1, m):
        np.maximum(x, w[j] * z[m - 1 - j : m - 1 - j + n_out], out=x)
    return x


def simulate_unit(model: MaxStableModel, length: int, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """Stationary unit-Frechet path of the given length plus metadata."""
    meta: dict = {}
    if isinstance(model, Independent):
        return unit_frechet(rng, length), meta
    if isinstance(model, Armax):
        x0 = unit_frechet(rng, 1)[0]
        z = unit_frechet(rng, length)
        return _armax_recursion(z, x0, model.phi), meta
    w = model.weights
    z = unit_frechet(rng, length + w.size - 1)
    if isinstance(model, PowerLawMaxMovingMaxima):
        meta["discarded_mass"] = model.discarded_mass
        meta["truncation"] = model.truncation
    if w.size > 64 and model.monotone:
        return _m3_pruned(z, w, length), meta
    return _m3_dense(z, w, length), meta


def simulate_path(
    model: MaxStableModel,
    n: int,
    T: LagSet = LagSet(),
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> SamplePath:
    """Simulate X_1, ..., X_{n + t_N} exactly from the stationary law."""
    if n < 1:
        raise OutOfRange(f"n must be >= 1, got {n}")
    if rng is None:
        rng = replicate_rng(seed)
    length = n + T.span
    x, meta = simulate_unit(model, length, rng)
    meta["alpha"] = model.alpha
    if model.alpha != 1.0:
        x = x ** (1.0 / model.alpha)
    return SamplePath(x, n, int(seed), model_id(model), T.span, meta)


# ---------------------------------------------------------------------------
# Poisson series representation


class ConstantSpectral:
    """W_t ≡ 1 over a window of n time points."""

    def __init__(self, n: int):
        self.n = n
        self.w_max = 1.0

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return np.ones((k, self.n))


class M3Spectral:
    """Spectral functions of a finite moving-maxima model on a window of n points.

    A point picks an innovation position uniformly among the K = n + m - 1
    positions touching the window and carries ``(K w_{t-s}) ** (1/alpha)``,
    so that E[W_t ** alpha] = 1.
    """

    def __init__(self, model: MaxStableModel, n: int):
        if isinstance(model, Armax):
            raise UnboundedSpectral("ARMAX weights have infinite support; no finite window bound")
        self.alpha = model.alpha
        self.w = model.weights
        self.n = n
        self.K = n + self.w.size - 1
        self.w_max = float((self.K * self.w.max()) ** (1.0 / self.alpha))

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        m = self.w.size
        s = rng.integers(0, self.K, size=k) - (m - 1)
        idx = np.arange(self.n)[None, :] - s[:, None]
        valid = (idx >= 0) & (idx < m)
        vals = self.K * self.w[np.clip(idx, 0, m - 1)]
        if self.alpha != 1.0:
            vals = vals ** (1.0 / self.alpha)
        return np.where(valid, vals, 0.0)


def simulate_poisson_series(
    spectral,
    alpha: float = 1.0,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    batch: int = 64,
) -> SamplePath:
    """X_t = max_i Gamma_i**(-1/alpha) W_t^(i) with an exact stopping rule.

    Arrivals are consumed until the next possible contribution
    ``Gamma_{k+1}**(-1/alpha) * w_max`` falls below the smallest running
    maximum over the window.  ``metadata["points"]`` records k.
    """
    w_max = getattr(spectral, "w_max", None)
    if w_max is None or not (0 < w_max < math.inf):
        raise UnboundedSpectral(f"spectral process has no usable bound (w_max={w_max})")
    if rng is None:
        rng = replicate_rng(seed)
    n = spectral.n
    x = np.zeros(n)
    gamma = 0.0
    used = 0
    while True:
        g = gamma + np.cumsum(rng.standard_exponential(batch))
        W = spectral.sample(rng, batch)
        scale = g ** (-1.0 / alpha)
        if scale[0] * w_max < x.min():
            break
        run = np.maximum.accumulate(np.vstack([x[None, :], scale[:, None] * W]), axis=0)[1:]
        mins = run.min(axis=1)
        stop = np.nonzero(scale[1:] * w_max < mins[:-1])[0]
        if stop.size:
            k = int(stop[0])
            x = run[k]
            used += k + 1
            break
        x = run[-1]
        used += batch
        gamma = g[-1]
    return SamplePath(x, n, int(seed), type(spectral).__name__, 0, {"points": used})


# ---------------------------------------------------------------------------
# binary dump


def write_path_binary(path: SamplePath, target) -> None:
    """Little-endian float64 values after a 16-byte header (magic, n, alpha)."""
    alpha = path.metadata.get("alpha", 1.0)
    with open(target, "wb") as fh:
        fh.write(_HEADER.pack(PATH_MAGIC, path.n, float(alpha)))
        fh.write(np.asarray(path.values, dtype="<f8").tobytes())


def read_path_binary(source) -> tuple[np.ndarray, int, float]:
    data = Path(source).read_bytes()
    magic, n, alpha = _HEADER.unpack_from(data)
    if magic != PATH_MAGIC:
        raise OutOfRange(f"not a maxtail path dump (magic {magic!r})")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).copy()
    return values, n, alpha
