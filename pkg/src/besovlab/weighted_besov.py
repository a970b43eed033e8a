"""Time-dependent dyadic weights and the weighted Besov norms built on them.

The rate ``e_l(t) = sqrt(1 - exp(-c 4^l t))`` feeds the smoothed weight
``omega_k(t) = sum_{l >= k} 2^{k-l} e_l(t)``.  The infinite sum is cut at
``stop = j_max + 16`` and closed with ``2^{-stop} e_{stop+1}(t)``, the
exact lower bound of the missing tail.  That choice keeps ``omega_k(0) = 0``
and leaves every weight inequality valid on the computed numbers, because
all partial sums are accumulated in one fixed order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .littlewood_paley import BesovParams, NormSeries, _lr_sum, _scales, block_norms, time_lq

__all__ = [
    "e_val",
    "WeightSequence",
    "omega",
    "WeightedBesovParams",
    "weighted_besov_norm",
    "weighted_cl_norm",
    "weighted_linf_profile",
    "SmallnessResult",
    "smallness_time",
    "write_weight_table",
]

TAIL_OCTAVES = 16


def e_val(ell, t, c=1.0):
    """``sqrt(1 - exp(-c 4^ell t))``, vectorized over ``ell`` and ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    if not c > 0:
        raise ValueError(f"rate c must be positive, got {c}")
    ell = np.asarray(ell)
    arg = np.ldexp(c * t, 2 * ell.astype(np.int64)) if ell.dtype.kind in "iu" else c * t * 4.0**ell
    out = np.sqrt(-np.expm1(-arg))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightSequence:
    """Weights ``e_l`` and ``omega_k`` for block indices ``j_min..j_max``.

    ``rate`` may replace the parabolic ``e_l``; it must map ``(ell_array, t)``
    to values in [0, 1] that vanish at t = 0 and grow with ell.
    """

    c: float = 1.0
    j_min: int = -1
    j_max: int = 20
    rate: Optional[Callable] = None

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError(f"rate c must be positive, got {self.c}")
        if self.j_max < self.j_min:
            raise ValueError("empty index range")

    @property
    def stop(self):
        return self.j_max + TAIL_OCTAVES

    def e(self, ell, t):
        if self.rate is not None:
            return np.asarray(self.rate(np.asarray(ell), t), dtype=float)
        return e_val(np.asarray(ell, dtype=np.int64), t, self.c)

    def omegas(self, t, k_lo=None):
        """``omega_k(t)`` for ``k = k_lo..j_max``; ``t`` may be an array (rows)."""
        k_lo = self.j_min if k_lo is None else int(k_lo)
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < 0):
            raise ValueError("time must be nonnegative")
        ells = np.arange(k_lo, self.stop + 2)
        e = self.e(ells[None, :], ts[:, None])
        terms = np.ldexp(e[:, :-1], -ells[None, :-1])
        tail = np.ldexp(e[:, -1], -self.stop)
        # S_l = term_l + S_{l+1}, accumulated from the tail downward
        rev = np.concatenate([tail[:, None], terms[:, ::-1]], axis=1)
        partial = np.cumsum(rev, axis=1)[:, :0:-1]
        n_out = self.j_max - k_lo + 1
        om = np.ldexp(partial[:, :n_out], ells[None, :n_out])
        return om[0] if np.ndim(t) == 0 else om

    def omega(self, k, t):
        return float(self.omegas(float(t), k_lo=min(int(k), self.j_min))[int(k) - min(int(k), self.j_min)])

    def table(self, ks, ts):
        """Rows (k, t, e_k(t), omega_k(t)) for every pair."""
        ks = np.asarray(ks, dtype=np.int64)
        lo = min(int(ks.min()), self.j_min)
        om = self.omegas(np.asarray(ts, dtype=float), k_lo=lo)
        rows = []
        for a, t in enumerate(ts):
            ev = self.e(ks, float(t))
            for b, k in enumerate(ks):
                rows.append((int(k), float(t), float(ev[b]), float(om[a, k - lo])))
        return rows

    @classmethod
    def for_partition(cls, part, c=1.0, rate=None):
        return cls(c=c, j_min=part.j_min, j_max=part.j_max, rate=rate)


def omega(k, t, w):
    return w.omega(k, t)


@dataclass(frozen=True)
class WeightedBesovParams:
    base: BesovParams
    weights: WeightSequence
    T: float

    def __post_init__(self):
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon must be finite and >= 0, got {self.T}")

    def at(self, T):
        return WeightedBesovParams(self.base, self.weights, T)


def _weights_for(w, j_min, n, T):
    om = w.omegas(float(T), k_lo=min(j_min, w.j_min))
    off = j_min - min(j_min, w.j_min)
    if j_min + n - 1 > w.j_max:
        raise ValueError("weight sequence does not cover the block range")
    return om[off : off + n]


def weighted_besov_norm(f, wp, part, norms=None):
    """Besov norm with block ``k`` multiplied by ``omega_k(T)``."""
    if norms is None:
        norms = block_norms(f, part, wp.base.p)
    n = len(norms)
    w = _scales(part.j_min, n, wp.base.s) * _weights_for(wp.weights, part.j_min, n, wp.T)
    return _lr_sum(w * norms, wp.base.r)


def weighted_cl_norm(series, wp):
    """Chemin-Lerner norm on [0, T] with block ``k`` multiplied by ``omega_k(T)``."""
    if len(series) == 0:
        raise ValueError("empty norm series")
    sub = series.upto(wp.T)
    n = sub.block_norms.shape[1]
    if len(sub) == 0:
        return 0.0
    per_block = time_lq(sub.block_norms, sub.times, wp.base.q)
    w = _scales(sub.j_min, n, wp.base.s) * _weights_for(wp.weights, sub.j_min, n, wp.T)
    return _lr_sum(w * per_block, wp.base.r)


def weighted_linf_profile(series, wp):
    """Weighted L-infinity-in-time norm over [0, t_i] for every sample t_i."""
    n = series.block_norms.shape[1]
    running = np.maximum.accumulate(series.block_norms, axis=0)
    om = wp.weights.omegas(series.times, k_lo=min(series.j_min, wp.weights.j_min))
    off = series.j_min - min(series.j_min, wp.weights.j_min)
    om = om[:, off : off + n]
    s = _scales(series.j_min, n, wp.base.s)
    return np.array([_lr_sum(s * om[i] * running[i], wp.base.r) for i in range(len(series))])


@dataclass
class SmallnessResult:
    T_tilde: Optional[float]
    value: float
    next_value: Optional[float]
    found: bool
    index: int

    def as_dict(self):
        return dict(T_tilde=self.T_tilde, value=self.value, next_value=self.next_value,
                    found=self.found)


def smallness_time(series, wp, eps):
    """Largest sample time ``<= T`` at which the weighted sup-in-time norm is ``<= eps``.

    The profile is nondecreasing in time, so the search is a bisection over
    sample indices.  When even the first sample exceeds ``eps`` the result has
    ``found=False`` and ``value`` holds the smallest value attained.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    sub = series.upto(wp.T)
    if len(sub) == 0:
        raise ValueError("no samples at or before the horizon")
    prof = weighted_linf_profile(sub, wp)
    lo, hi = -1, len(prof)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prof[mid] <= eps:
            lo = mid
        else:
            hi = mid
    if lo < 0:
        return SmallnessResult(None, float(prof.min()), float(prof[0]), False, -1)
    nxt = float(prof[lo + 1]) if lo + 1 < len(prof) else None
    return SmallnessResult(float(sub.times[lo]), float(prof[lo]), nxt, True, lo)


def write_weight_table(w, ks, ts, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["k", "t", "e", "omega"])
        for k, t, e, om in w.table(ks, ts):
            out.writerow([k, repr(t), repr(e), repr(om)])
