"""Dyadic frequency blocks, Besov norms and time-blocked Chemin-Lerner norms."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from ._validation import check_exponent, check_multi_index, inv
from .fourier_field import Field, derivative, lp_norm, sup_norm

__all__ = [
    "ANNULUS",
    "plateau",
    "bump",
    "DyadicPartition",
    "build_partition",
    "delta_j",
    "s_j",
    "low_part",
    "block_norms",
    "BesovParams",
    "besov_norm",
    "NormSeries",
    "chemin_lerner_norm",
    "bernstein_ratio",
    "reverse_bernstein_ratio",
]

ANNULUS = (0.75, 8.0 / 3.0)
_PLATEAU_IN = 0.75
_PLATEAU_OUT = 4.0 / 3.0


@lru_cache(maxsize=1)
def _gauss_legendre(n=64):
    return np.polynomial.legendre.leggauss(n)


def _mollifier(x):
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _mollifier_primitive(x):
    """Integral of the mollifier from -1 to x, for x in [-1, 1]."""
    nodes, weights = _gauss_legendre()
    x = np.asarray(x, dtype=float)
    half = (x + 1.0) / 2.0
    pts = -1.0 + half[..., None] * (nodes + 1.0)
    return half * (_mollifier(pts) @ weights)


_MOLLIFIER_MASS = float(_mollifier_primitive(np.array(1.0)))


def plateau(r):
    """Smooth radial cutoff: 1 on [0, 3/4], 0 on [4/3, inf)."""
    r = np.asarray(r, dtype=float)
    x = 2.0 * (r - _PLATEAU_IN) / (_PLATEAU_OUT - _PLATEAU_IN) - 1.0
    mid = (r > _PLATEAU_IN) & (r < _PLATEAU_OUT)
    out = np.where(r <= _PLATEAU_IN, 1.0, 0.0)
    if np.any(mid):
        out[mid] = 1.0 - _mollifier_primitive(x[mid]) / _MOLLIFIER_MASS
    # quadrature roundoff can leave the unit interval by ~1e-13
    return np.clip(out, 0.0, 1.0)


def bump(r):
    """Annulus profile plateau(r/2) - plateau(r), supported in [3/4, 8/3]."""
    r = np.asarray(r, dtype=float)
    return np.clip(plateau(r / 2.0) - plateau(r), 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    """Blocks ``phi(2^-j |xi|)`` for ``j_min <= j <= j_max`` on one grid.

    ``low`` is the multiplier of everything below the first block (always
    containing the zero mode), so ``low + sum(phi)`` is the identity.
    """

    grid: object
    j_min: int
    j_max: int
    phi: np.ndarray = field(repr=False)
    low: np.ndarray = field(repr=False)

    @property
    def indices(self):
        return range(self.j_min, self.j_max + 1)

    @property
    def n_blocks(self):
        return self.j_max - self.j_min + 1

    def multiplier(self, j):
        self._check(j)
        return self.phi[j - self.j_min]

    def s_multiplier(self, j):
        """Multiplier of S_j, i.e. plateau(2^-j |xi|), for j up to j_max + 1."""
        if not self.j_min <= j <= self.j_max + 1:
            raise ValueError(f"S_j index {j} outside [{self.j_min}, {self.j_max + 1}]")
        return _radial(self.grid, lambda r: plateau(r), j)

    def _check(self, j):
        if not self.j_min <= j <= self.j_max:
            raise ValueError(f"block index {j} outside [{self.j_min}, {self.j_max}]")

    @property
    def phi_squared(self):
        """``phi_j^2`` flattened to (blocks, lattice points), built on first use."""
        sq = self.__dict__.get("_phi_sq")
        if sq is None:
            sq = np.ascontiguousarray((self.phi**2).reshape(self.n_blocks, -1))
            sq.setflags(write=False)
            self.__dict__["_phi_sq"] = sq
        return sq

    def partition_sum(self):
        return self.phi.sum(axis=0)

    def covered(self):
        """Lattice points where the blocks alone must sum to one."""
        return self.low == 0.0

    def block_hats(self, f):
        """Array of block spectra, first axis the block index."""
        return self.phi.reshape((self.n_blocks,) + (1,) * f.rank + self.grid.shape) * f.hat[None]

    def low_hat(self, f):
        return self.low * f.hat

    def block_of(self, k):
        """Index of the block whose annulus contains frequency magnitude k (or None)."""
        for j in self.indices:
            if bump(np.array(k * 2.0**-j)) > 0:
                return j
        return None


def _radial(grid, fn, j):
    # evaluate a radial profile at 2^-j |xi| using the distinct magnitudes only
    uniq, inverse = _unique_kmag(grid)
    return fn(np.ldexp(uniq, -j))[inverse].reshape(grid.shape)


_KMAG_CACHE = {}


def _unique_kmag(grid):
    hit = _KMAG_CACHE.get(grid)
    if hit is None:
        uniq, inverse = np.unique(grid.kmag.ravel(), return_inverse=True)
        hit = (uniq, inverse)
        _KMAG_CACHE[grid] = hit
    return hit


_PARTITIONS = {}


def build_partition(grid, margin=1):
    """Dyadic partition covering every resolved frequency of ``grid``.

    ``j_max`` follows ceil(log2(Nyquist)) + 1 and ``j_min`` sits ``margin``
    octaves below the lowest nonzero lattice shell.  With ``margin >= 1`` the
    low remainder is exactly the zero mode.
    """
    margin = int(margin)
    if margin < 0:
        raise ValueError("margin must be >= 0")
    key = (grid, margin)
    if key in _PARTITIONS:
        return _PARTITIONS[key]
    j_max = math.ceil(math.log2(grid.nyquist)) + 1
    j_min = math.floor(math.log2(grid.scale)) - margin
    if j_max - j_min + 1 < 3:
        raise ValueError(f"grid hosts only {j_max - j_min + 1} dyadic shells, need >= 3")
    uniq, inverse = _unique_kmag(grid)
    phi = np.empty((j_max - j_min + 1,) + grid.shape)
    for i, j in enumerate(range(j_min, j_max + 1)):
        phi[i] = bump(np.ldexp(uniq, -j))[inverse].reshape(grid.shape)
    low = plateau(np.ldexp(uniq, -j_min))[inverse].reshape(grid.shape)
    phi.setflags(write=False)
    low.setflags(write=False)
    part = DyadicPartition(grid, j_min, j_max, phi, low)
    _PARTITIONS[key] = part
    return part


def _check_part(f, part):
    if f.grid != part.grid:
        raise ValueError("field and partition live on different grids")


def delta_j(f, j, part):
    """Block ``Delta_j f``."""
    _check_part(f, part)
    return Field.from_spectral(f.grid, part.multiplier(j) * f.hat, hermitian=True)


def s_j(f, j, part):
    """Low-pass ``S_j f`` including the zero mode; ``s_j(f, j_max + 1)`` is ``f``."""
    _check_part(f, part)
    return Field.from_spectral(f.grid, part.s_multiplier(j) * f.hat, hermitian=True)


def low_part(f, part):
    _check_part(f, part)
    return Field.from_spectral(f.grid, part.low * f.hat, hermitian=True)


def block_norms(f, part, p=2.0):
    """``||Delta_j f||_p`` for every block, as an array indexed from ``j_min``.

    p = 2 goes through Parseval; other exponents synthesize all blocks in one
    batched inverse FFT.
    """
    _check_part(f, part)
    p = check_exponent(p)
    if p == 2.0:
        power = np.abs(f.hat) ** 2
        if f.rank:
            power = power.reshape((-1,) + f.grid.shape).sum(axis=0)
        return np.sqrt(np.maximum(part.phi_squared @ power.ravel(), 0.0))
    hats = part.block_hats(f)
    vals = sfft.ifftn(hats, axes=tuple(range(-f.grid.dim, 0)), norm="forward").real
    if f.rank:
        mag = np.sqrt(np.sum(vals.reshape((part.n_blocks, -1) + f.grid.shape) ** 2, axis=1))
    else:
        mag = np.abs(vals)
    mag = mag.reshape(part.n_blocks, -1)
    top = mag.max(axis=1)
    if math.isinf(p):
        return top
    safe = np.where(top > 0, top, 1.0)
    return top * np.mean((mag / safe[:, None]) ** p, axis=1) ** (1.0 / p)


@dataclass(frozen=True)
class BesovParams:
    """Regularity ``s``, integrability ``p``, summation ``r`` and time exponent ``q``."""

    s: float
    p: float = 2.0
    r: float = 1.0
    q: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        for name in ("p", "r", "q"):
            object.__setattr__(self, name, check_exponent(getattr(self, name), name))

    def as_dict(self):
        return {"s": self.s, "p": _num(self.p), "r": _num(self.r), "q": _num(self.q)}


def _num(x):
    return "inf" if math.isinf(x) else x


def _lr_sum(vals, r):
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return 0.0
    if math.isinf(r):
        return float(vals.max())
    if r == 1.0:
        return float(vals.sum())
    top = float(vals.max())
    if top == 0.0:
        return 0.0
    return top * float(np.sum((vals / top) ** r)) ** (1.0 / r)


def besov_norm(f, params, part, norms=None):
    """l^r sum over blocks of ``2^{js} ||Delta_j f||_p``; the zero mode is ignored."""
    if norms is None:
        norms = block_norms(f, part, params.p)
    return _lr_sum(_scales(part.j_min, len(norms), params.s) * norms, params.r)


def _scales(j_min, n, s):
    return np.exp2(s * np.arange(j_min, j_min + n, dtype=float))


def time_lq(values, times, q):
    """L^q(0, T) norm of sampled values along axis 0, trapezoidal in time."""
    values = np.asarray(values, dtype=float)
    if math.isinf(q):
        return values.max(axis=0)
    if len(times) < 2:
        return np.zeros(values.shape[1:])
    return np.trapezoid(values**q, times, axis=0) ** (1.0 / q)


@dataclass
class NormSeries:
    """Block norms ``||Delta_k f(t)||_p`` sampled at increasing times.

    ``block_norms[i, k - j_min]`` belongs to ``times[i]``.
    """

    times: np.ndarray
    block_norms: np.ndarray
    j_min: int
    params: BesovParams

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.block_norms = np.atleast_2d(np.asarray(self.block_norms, dtype=float))
        if self.times.ndim != 1 or self.block_norms.shape[0] != self.times.size:
            raise ValueError("need one row of block norms per sample time")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if np.any(self.block_norms < 0) or not np.all(np.isfinite(self.block_norms)):
            raise ValueError("block norms must be finite and nonnegative")

    @classmethod
    def from_fields(cls, times, fields, part, params):
        rows = [block_norms(f, part, params.p) for f in fields]
        return cls(np.asarray(times, float), np.array(rows).reshape(len(rows), part.n_blocks),
                   part.j_min, params)

    @classmethod
    def empty(cls, part, params):
        return cls(np.zeros(0), np.zeros((0, part.n_blocks)), part.j_min, params)

    def append(self, t, norms):
        if self.times.size and t <= self.times[-1]:
            raise ValueError("sample times must be strictly increasing")
        self.times = np.append(self.times, float(t))
        self.block_norms = np.vstack([self.block_norms, np.asarray(norms, float)[None]])

    @property
    def j_max(self):
        return self.j_min + self.block_norms.shape[1] - 1

    @property
    def horizon(self):
        return float(self.times[-1]) if self.times.size else 0.0

    def __len__(self):
        return self.times.size

    def upto(self, T):
        """Prefix of samples with time <= T."""
        n = int(np.searchsorted(self.times, T, side="right"))
        return NormSeries(self.times[:n], self.block_norms[:n], self.j_min, self.params)

    def with_params(self, **kw):
        p = dict(s=self.params.s, p=self.params.p, r=self.params.r, q=self.params.q)
        p.update(kw)
        if p["p"] != self.params.p:
            raise ValueError("stored block norms fix the integrability exponent p")
        return NormSeries(self.times, self.block_norms, self.j_min, BesovParams(**p))

    def block_time_norms(self, q=None):
        q = self.params.q if q is None else check_exponent(q, "q")
        return time_lq(self.block_norms, self.times, q)

    def besov_in_time(self):
        """Besov norm at each sample time."""
        w = _scales(self.j_min, self.block_norms.shape[1], self.params.s)
        return np.array([_lr_sum(w * row, self.params.r) for row in self.block_norms])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "k", "block_norm"])
            for i, t in enumerate(self.times):
                for c, val in enumerate(self.block_norms[i]):
                    w.writerow([repr(float(t)), self.j_min + c, repr(float(val))])

    def summary(self):
        d = self.params.as_dict()
        d.update(T=self.horizon, value=chemin_lerner_norm(self))
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def chemin_lerner_norm(series):
    """Per-block time L^q norm first, then the weighted l^r sum."""
    if len(series) == 0:
        raise ValueError("empty norm series")
    per_block = series.block_time_norms()
    w = _scales(series.j_min, per_block.size, series.params.s)
    return _lr_sum(w * per_block, series.params.r)


def bernstein_ratio(f, gamma, p, q, j):
    """``||d^gamma f||_q / (2^{j|gamma| + jN(1/p - 1/q)} ||f||_p)``."""
    gamma = check_multi_index(gamma, f.grid.dim)
    p = check_exponent(p, "p")
    q = check_exponent(q, "q")
    base = _norm(f, p)
    if base == 0.0:
        raise ValueError("||f||_p = 0: ratio undefined")
    order = sum(gamma)
    scale = 2.0 ** (j * order + j * f.grid.dim * (inv(p) - inv(q)))
    return _norm(derivative(f, gamma), q) / (scale * base)


def _norm(f, p):
    # sampled maxima of fine-scale data read low; use the interpolant's sup
    return sup_norm(f) if math.isinf(p) else lp_norm(f, p)


def _multi_indices(dim, order):
    if dim == 1:
        yield (order,)
        return
    for first in range(order + 1):
        for rest in _multi_indices(dim - 1, order - first):
            yield (first,) + rest


def reverse_bernstein_ratio(f, order, p, j):
    """``||f||_p / (2^{-j order} max_{|beta| = order} ||d^beta f||_p)`` for annulus data."""
    p = check_exponent(p)
    top = max(lp_norm(derivative(f, b), p) for b in _multi_indices(f.grid.dim, order))
    if top == 0.0:
        raise ValueError("all derivatives vanish: ratio undefined")
    return lp_norm(f, p) / (2.0 ** (-j * order) * top)
