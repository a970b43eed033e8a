"""Periodic grids and fields with spectral calculus.

Coefficients follow the ``norm="forward"`` FFT convention, so ``hat`` holds
true Fourier coefficients: a constant 3 has zero mode 3, and ``cos(x_1)``
has coefficient 1/2 at each of ``k = +e_1`` and ``k = -e_1``.  The torus is
given unit volume, so every L^p norm is a grid mean.
"""

from __future__ import annotations

import csv
import itertools
import math
import struct
import threading
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from ._validation import check_exponent, check_finite, check_multi_index, same_grid

__all__ = [
    "Grid",
    "Field",
    "transform",
    "inverse_transform",
    "lp_norm",
    "sup_norm",
    "derivative",
    "gradient",
    "divergence",
    "curl",
    "curl2d",
    "strain",
    "laplacian",
    "vector_calculus",
    "VectorCalculus",
    "multiply",
    "dot",
    "advect",
    "padded_values",
    "padded_from_hat",
    "bandwidth",
    "product_size",
    "hat_from_padded",
    "from_padded",
    "resample",
    "hermitian_defect",
    "write_binary",
    "read_binary",
    "write_csv",
    "read_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``resolution`` points per axis."""

    dim: int
    resolution: int
    period: float = 2 * math.pi

    def __post_init__(self):
        dim, m = int(self.dim), int(self.resolution)
        if dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if m < 8 or m & (m - 1):
            raise ValueError(f"resolution must be a power of two >= 8, got {self.resolution}")
        if not (float(self.period) > 0 and math.isfinite(self.period)):
            raise ValueError(f"period must be positive, got {self.period}")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "resolution", m)
        object.__setattr__(self, "period", float(self.period))

    @property
    def shape(self):
        return (self.resolution,) * self.dim

    @property
    def spacing(self):
        return self.period / self.resolution

    @property
    def scale(self):
        """Angular wavenumber of the unit lattice step, 2*pi/L."""
        return 2 * math.pi / self.period

    @property
    def nyquist(self):
        """Largest resolved |k_i| in angular units."""
        return self.scale * self.resolution / 2

    @cached_property
    def int_freqs(self):
        return np.rint(sfft.fftfreq(self.resolution, 1.0 / self.resolution)).astype(np.int64)

    def axis_wavenumbers(self, axis):
        """1-D wavenumbers broadcastable along ``axis`` of a grid array."""
        shape = [1] * self.dim
        shape[axis] = self.resolution
        return (self.scale * self.int_freqs).reshape(shape)

    def axis_nyquist(self, axis):
        shape = [1] * self.dim
        shape[axis] = self.resolution
        return (self.int_freqs == -self.resolution // 2).reshape(shape)

    @cached_property
    def kvec(self):
        k = np.stack(np.broadcast_arrays(*[self.axis_wavenumbers(a) for a in range(self.dim)]))
        k.setflags(write=False)
        return k

    @cached_property
    def ksq(self):
        out = sum(self.axis_wavenumbers(a) ** 2 for a in range(self.dim))
        out = np.broadcast_to(out, self.shape).copy()
        out.setflags(write=False)
        return out

    @cached_property
    def kmag(self):
        out = np.sqrt(self.ksq)
        out.setflags(write=False)
        return out

    @cached_property
    def nyquist_mask(self):
        """True on modes with any component at the unpaired Nyquist index."""
        mask = np.zeros(self.shape, dtype=bool)
        for a in range(self.dim):
            mask |= self.axis_nyquist(a)
        mask.setflags(write=False)
        return mask

    @cached_property
    def coords(self):
        x = np.arange(self.resolution) * self.spacing
        out = np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))
        out.setflags(write=False)
        return out

    @property
    def padded_resolution(self):
        return 3 * self.resolution // 2


def _real_spectrum(grid, values):
    m = grid.resolution
    h = m // 2
    half = sfft.rfftn(values, axes=_axes(grid), norm="forward")
    full = np.empty(values.shape, dtype=np.complex128)
    full[..., : h + 1] = half
    tail = half[..., 1:h][..., ::-1]
    for ax in range(-grid.dim, -1):
        tail = np.roll(np.flip(tail, axis=ax), 1, axis=ax)
    full[..., h + 1 :] = np.conj(tail)
    return full


def _frozen(arr):
    arr = np.array(arr, copy=True) if not arr.flags.owndata else arr
    arr.setflags(write=False)
    return arr


def _rank_of(shape, grid):
    extra = len(shape) - grid.dim
    if extra < 0 or tuple(shape[extra:]) != grid.shape:
        raise ValueError(f"array of shape {shape} does not sit on grid {grid.shape}")
    comp = tuple(shape[:extra])
    if extra == 1 and comp != (grid.dim,):
        raise ValueError(f"vector field needs {grid.dim} components, got {comp[0]}")
    if extra == 2 and comp != (grid.dim, grid.dim):
        raise ValueError(f"tensor field needs shape {(grid.dim, grid.dim)}, got {comp}")
    if extra > 2:
        raise ValueError("fields of rank > 2 are not supported")
    return extra


def _axes(grid):
    return tuple(range(-grid.dim, 0))


class Field:
    """Real field sampled on a periodic grid.

    ``values`` has shape ``component_shape + grid.shape`` where the component
    shape is ``()``, ``(N,)`` or ``(N, N)``.  Both representations are
    read-only; the spectral one is computed lazily under a lock.
    """

    __slots__ = ("grid", "rank", "_values", "_hat", "_lock", "_band")

    def __init__(self, grid, values, *, _hat=None):
        arr = np.array(values, dtype=np.float64, copy=True)
        rank = _rank_of(arr.shape, grid)
        check_finite(arr, "field samples")
        arr.setflags(write=False)
        self.grid = grid
        self.rank = rank
        self._values = arr
        self._hat = _hat
        self._band = None
        self._lock = threading.Lock()

    @classmethod
    def from_spectral(cls, grid, hat, *, hermitian=False):
        """Build from coefficients.

        With ``hermitian=True`` the caller vouches that ``hat`` is the
        spectrum of a real field and it is cached as is, saving one FFT.
        """
        hat = np.asarray(hat, dtype=np.complex128)
        _rank_of(hat.shape, grid)
        check_finite(hat, "spectral coefficients")
        if hermitian:
            half = hat[..., : grid.resolution // 2 + 1]
            values = sfft.irfftn(half, s=grid.shape, axes=_axes(grid), norm="forward")
            hat = hat.copy()
            hat.setflags(write=False)
            return cls(grid, values, _hat=hat)
        values = sfft.ifftn(hat, axes=_axes(grid), norm="forward").real
        return cls(grid, values)

    @classmethod
    def zeros(cls, grid, rank=0):
        return cls(grid, np.zeros((grid.dim,) * rank + grid.shape))

    @classmethod
    def from_function(cls, grid, fn):
        """Sample ``fn(x)`` where ``x`` is the stacked coordinate array."""
        return cls(grid, fn(grid.coords))

    @property
    def values(self):
        return self._values

    @property
    def components(self):
        return self._values.shape[: self.rank]

    @property
    def hat(self):
        if self._hat is None:
            with self._lock:
                if self._hat is None:
                    h = _real_spectrum(self.grid, self._values)
                    h.setflags(write=False)
                    self._hat = h
        return self._hat

    @property
    def mean(self):
        """Zero Fourier mode (a scalar, or one value per component)."""
        zero = (Ellipsis,) + (0,) * self.grid.dim
        out = self.hat[zero].real
        return float(out) if self.rank == 0 else np.array(out)

    def __getitem__(self, idx):
        if self.rank == 0:
            raise TypeError("scalar fields have no components")
        hat = None if self._hat is None else _frozen(self._hat[idx])
        return Field(self.grid, self._values[idx], _hat=hat)

    def _combine(self, other, sign):
        # cached spectra are carried along so exact zeros stay exact
        if isinstance(other, Field):
            same_grid(self, other)
            hat = None
            if self._hat is not None and other._hat is not None:
                hat = _frozen(self._hat + sign * other._hat)
            return Field(self.grid, self._values + sign * other._values, _hat=hat)
        c = float(other)
        hat = None
        if self._hat is not None and self.rank == 0:
            hat = self._hat.copy()
            hat[(0,) * self.grid.dim] += sign * c
            hat = _frozen(hat)
        return Field(self.grid, self._values + sign * c, _hat=hat)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self * -1.0

    def __mul__(self, c):
        if isinstance(c, Field):
            raise TypeError("use multiply() for dealiased field products")
        c = float(c)
        hat = None if self._hat is None else _frozen(self._hat * c)
        return Field(self.grid, self._values * c, _hat=hat)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    @property
    def bandwidth(self):
        """Largest |n_i| (integer lattice units) carrying a non-negligible coefficient."""
        if self._band is None:
            self._band = bandwidth(self.grid, self.hat)
        return self._band

    def __repr__(self):
        kind = ("scalar", "vector", "tensor")[self.rank]
        return f"Field({kind}, dim={self.grid.dim}, M={self.grid.resolution})"

    def allclose(self, other, rtol=1e-12, atol=1e-12):
        return np.allclose(self._values, other._values, rtol=rtol, atol=atol)

    @staticmethod
    def stack(fields):
        same_grid(*fields)
        hat = None
        if all(f._hat is not None for f in fields):
            hat = _frozen(np.stack([f._hat for f in fields]))
        return Field(fields[0].grid, np.stack([f.values for f in fields]), _hat=hat)


def transform(f):
    """Spectral coefficients of ``f`` (a read-only complex array)."""
    return f.hat


def inverse_transform(grid, hat):
    """Field whose coefficients are ``hat``; the imaginary residue is dropped."""
    return Field.from_spectral(grid, hat)


def hermitian_defect(grid, hat):
    """Max of |c(k) - conj(c(-k))|, zero for coefficients of a real field."""
    flipped = hat
    for ax in _axes(grid):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    return float(np.max(np.abs(hat - np.conj(flipped)), initial=0.0))


def _pointwise_magnitude(f):
    v = f.values
    if f.rank == 0:
        return np.abs(v)
    return np.sqrt(np.sum(v.reshape((-1,) + f.grid.shape) ** 2, axis=0))


def lp_norm(f, p=2.0):
    """(mean |f|^p)^(1/p) with the Euclidean/Frobenius magnitude for non-scalars."""
    p = check_exponent(p)
    mag = _pointwise_magnitude(f)
    top = float(mag.max())
    if math.isinf(p) or top == 0.0:
        return top
    return top * float(np.mean((mag / top) ** p)) ** (1.0 / p)


def sup_norm(f, candidates=4, iters=30):
    """Sup of the trigonometric interpolant of ``f``, not just of its samples.

    The grid maximum can sit a fraction of a cell away from the true peak and
    read several percent low once the spectrum reaches a few points per
    wavelength.  Starting from the ``candidates`` largest grid local maxima,
    the squared magnitude is climbed with safeguarded Newton steps on the
    exact series.
    """
    grid = f.grid
    mag = _pointwise_magnitude(f)
    top = float(mag.max())
    if top == 0.0:
        return top
    m, dim = grid.resolution, grid.dim
    half = m // 2
    comps = np.array(f.hat.reshape((-1,) + grid.shape)[..., : half + 1])
    # a real field is twice the real part of its upper half spectrum; the
    # Nyquist planes have no unambiguous interpolant and are left out
    comps[..., 1:half] *= 2.0
    comps[..., half] = 0.0
    for ax in range(1, dim):
        idx = [slice(None)] * comps.ndim
        idx[ax] = half
        comps[tuple(idx)] = 0.0
    kk = grid.scale * grid.int_freqs.astype(float)
    kk_last = kk[: half + 1]
    h = grid.spacing

    def contract(vecs):
        out = comps
        for v in reversed(vecs):
            out = out @ v
        return out.real

    def local(x, derivs=True):
        phases = [np.exp(1j * (kk if a < dim - 1 else kk_last) * x[a]) for a in range(dim)]
        val = contract(phases)
        if not derivs:
            return float(val @ val), None, None
        ik = [1j * (kk if a < dim - 1 else kk_last) for a in range(dim)]
        grad = np.empty((val.size, dim))
        hess = np.empty((val.size, dim, dim))
        for a in range(dim):
            vecs = list(phases)
            vecs[a] = ik[a] * phases[a]
            grad[:, a] = contract(vecs)
            for b in range(a, dim):
                vecs2 = list(vecs)
                vecs2[b] = ik[b] * vecs2[b]
                hess[:, a, b] = hess[:, b, a] = contract(vecs2)
        g = 2.0 * val @ grad
        H = 2.0 * (grad.T @ grad + np.einsum("c,cab->ab", val, hess))
        return float(val @ val), g, H

    # local maxima of the samples, largest first
    peak = np.ones(mag.shape, dtype=bool)
    for ax in range(grid.dim):
        for step in (1, -1):
            peak &= mag >= np.roll(mag, step, axis=ax)
    idx = np.argwhere(peak)
    order = np.argsort(mag[tuple(idx.T)])[::-1][:candidates]
    best = top * top
    for i in idx[order]:
        x = i * h
        F, g, H = local(x)
        for _ in range(iters):
            try:
                dx = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                dx = g.copy()
            if dx @ g <= 0:  # not an ascent direction, fall back to the gradient
                dx = g.copy()
            n = float(np.linalg.norm(dx))
            if n > h:
                dx *= h / n
            for _ in range(30):
                F_new = local(x + dx, derivs=False)[0]
                if F_new >= F:
                    break
                dx *= 0.5
            else:
                break
            x = x + dx
            F, g, H = local(x)
            if float(np.linalg.norm(dx)) < 1e-12 * h:
                break
        best = max(best, F)
    return math.sqrt(best)


def _derivative_multiplier(grid, gamma):
    mult = np.ones((1,) * grid.dim, dtype=np.complex128)
    for axis, g in enumerate(gamma):
        if g == 0:
            continue
        factor = (1j * grid.axis_wavenumbers(axis)) ** g
        if g % 2:
            factor = np.where(grid.axis_nyquist(axis), 0.0, factor)
        mult = mult * factor
    return mult


def derivative(f, gamma):
    """Spectral derivative with multiplier (i k)^gamma.

    Odd orders drop the unpaired Nyquist coefficient so the result stays real.
    """
    gamma = check_multi_index(gamma, f.grid.dim)
    if not any(gamma):
        return f
    return Field.from_spectral(f.grid, f.hat * _derivative_multiplier(f.grid, gamma), hermitian=True)


def _unit(dim, i, order=1):
    g = [0] * dim
    g[i] = order
    return tuple(g)


def gradient(f):
    """Gradient; for a vector ``u`` returns the tensor ``G[i, j] = d_j u^i``."""
    if f.rank > 1:
        raise ValueError("gradient of a tensor field is not supported")
    grid = f.grid
    hat = f.hat
    parts = [hat * _derivative_multiplier(grid, _unit(grid.dim, j)) for j in range(grid.dim)]
    return Field.from_spectral(grid, np.stack(parts, axis=f.rank), hermitian=True)


def divergence(u):
    """Divergence of a vector (scalar result) or row-wise of a tensor."""
    if u.rank == 0:
        raise ValueError("divergence needs a vector or tensor field, got a scalar")
    grid = u.grid
    hat = u.hat
    acc = 0
    for j in range(grid.dim):
        acc = acc + hat[(Ellipsis, j) + (slice(None),) * grid.dim] * _derivative_multiplier(
            grid, _unit(grid.dim, j)
        )
    return Field.from_spectral(grid, acc, hermitian=True)


def curl(u):
    """Antisymmetric matrix ``w[i, j] = d_j u^i - d_i u^j``."""
    if u.rank != 1:
        raise ValueError("curl needs a vector field")
    g = gradient(u).hat
    return Field.from_spectral(u.grid, g - np.swapaxes(g, 0, 1), hermitian=True)


def curl2d(u):
    """Scalar vorticity ``d_2 u^1 - d_1 u^2`` for planar fields."""
    if u.grid.dim != 2:
        raise ValueError("curl2d is only defined for dim = 2")
    return curl(u)[0, 1]


def strain(u):
    if u.rank != 1:
        raise ValueError("strain needs a vector field")
    g = gradient(u).hat
    return Field.from_spectral(u.grid, 0.5 * (g + np.swapaxes(g, 0, 1)), hermitian=True)


def laplacian(f):
    return Field.from_spectral(f.grid, -f.grid.ksq * f.hat, hermitian=True)


class VectorCalculus(NamedTuple):
    gradient: Field
    divergence: Field
    curl: Field
    strain: Field


def vector_calculus(u):
    if u.rank != 1:
        raise ValueError("vector_calculus needs a vector field")
    g = gradient(u)
    gh = g.hat
    mk = lambda h: Field.from_spectral(u.grid, h, hermitian=True)
    return VectorCalculus(
        g,
        mk(np.trace(gh, axis1=0, axis2=1)),
        mk(gh - np.swapaxes(gh, 0, 1)),
        mk(0.5 * (gh + np.swapaxes(gh, 0, 1))),
    )


# dealiased products

def _corner_slices(m_from, m_to, dim):
    """Matching slices that move the |k_i| < m/2 modes between two grid sizes.

    The last axis keeps only nonnegative frequencies (real-FFT layout).
    """
    h = min(m_from, m_to) // 2
    pairs = [((slice(0, h), slice(0, h)), (slice(m_from - h + 1, m_from), slice(m_to - h + 1, m_to)))
             for _ in range(dim - 1)]
    for choice in itertools.product((0, 1), repeat=dim - 1):
        src = tuple(pairs[a][c][0] for a, c in enumerate(choice)) + (slice(0, h),)
        dst = tuple(pairs[a][c][1] for a, c in enumerate(choice)) + (slice(0, h),)
        yield src, dst


BAND_TOL = 1e-14


def bandwidth(grid, hat):
    """Max |n_i| over modes whose modulus exceeds ``BAND_TOL`` times the peak."""
    mag = np.abs(hat).reshape((-1,) + grid.shape).max(axis=0)
    top = mag.max()
    if top == 0:
        return 0
    live = mag > BAND_TOL * top
    freqs = np.abs(grid.int_freqs)
    band = 0
    for ax in range(grid.dim):
        other = tuple(a for a in range(grid.dim) if a != ax)
        used = live.any(axis=other) if other else live
        band = max(band, int(freqs[used].max()))
    return band


def product_size(grid, *bands):
    """Grid size on which a product of fields with these bandwidths is alias-free.

    The base grid suffices when the bands add up below the Nyquist index;
    otherwise the 3/2 rule is used.  Both choices give the same coefficients.
    """
    if bands and sum(bands) < grid.resolution // 2:
        return grid.resolution
    return grid.padded_resolution


def padded_from_hat(grid, hat, size=None):
    """Physical samples on a grid of ``size`` points per axis (default 3M/2).

    ``hat`` must be the spectrum of a real field; the Nyquist modes are dropped.
    """
    m, dim = grid.resolution, grid.dim
    mp = grid.padded_resolution if size is None else int(size)
    lead = hat.shape[: hat.ndim - dim]
    out = np.zeros(lead + (mp,) * (dim - 1) + (mp // 2 + 1,), dtype=np.complex128)
    for src, dst in _corner_slices(m, mp, dim):
        out[(Ellipsis,) + dst] = hat[(Ellipsis,) + src]
    return sfft.irfftn(out, s=(mp,) * dim, axes=_axes(grid), norm="forward")


def _full_from_half(grid, half):
    # rebuild the negative last-axis frequencies from Hermitian symmetry
    m, dim = grid.resolution, grid.dim
    h = m // 2
    lead = half.shape[: half.ndim - dim]
    full = np.zeros(lead + grid.shape, dtype=np.complex128)
    full[..., :h] = half
    tail = half[..., 1:h][..., ::-1]
    for ax in range(-dim, -1):
        tail = np.roll(np.flip(tail, axis=ax), 1, axis=ax)
    full[..., h + 1 :] = np.conj(tail)
    return full


def hat_from_padded(grid, values):
    """Coefficients on ``grid`` of real samples taken on a finer (or equal) grid.

    Modes with some |n_i| >= M/2 are discarded.
    """
    m, dim = grid.resolution, grid.dim
    mp = values.shape[-1]
    hp = sfft.rfftn(values, axes=_axes(grid), norm="forward")
    lead = hp.shape[: hp.ndim - dim]
    half = np.zeros(lead + (m,) * (dim - 1) + (m // 2,), dtype=np.complex128)
    for dst, src in _corner_slices(m, mp, dim):
        half[(Ellipsis,) + dst] = hp[(Ellipsis,) + src]
    return _full_from_half(grid, half)


def padded_values(f, size=None):
    """Samples of ``f`` on the 3/2-refined grid (or ``size``), Nyquist mode dropped."""
    return padded_from_hat(f.grid, f.hat, size)


def from_padded(grid, values):
    """Project samples on a refined grid back onto ``grid``."""
    return Field.from_spectral(grid, hat_from_padded(grid, values), hermitian=True)


def resample(f, grid):
    """Trigonometric interpolant of ``f`` on another grid of the same torus.

    Refining keeps every coefficient; coarsening drops the modes the target
    grid cannot hold.  Nyquist modes are dropped either way.
    """
    if grid.dim != f.grid.dim or grid.period != f.grid.period:
        raise ValueError("resampling needs the same dimension and period")
    if grid.resolution >= f.grid.resolution:
        return Field(grid, padded_from_hat(f.grid, f.hat, grid.resolution))
    return from_padded(grid, f.values)


def _broadcast_pair(a, b, grid):
    ra = a.ndim - grid.dim
    rb = b.ndim - grid.dim
    if ra and rb and a.shape[:ra] != b.shape[:rb]:
        raise ValueError("component shapes do not match")
    if ra < rb:
        a = a.reshape(a.shape[:ra] + (1,) * (rb - ra) + a.shape[ra:])
    elif rb < ra:
        b = b.reshape(b.shape[:rb] + (1,) * (ra - rb) + b.shape[rb:])
    return a, b


def multiply(f, g):
    """Alias-free product; a scalar factor multiplies every component."""
    grid = same_grid(f, g)
    if f.rank and g.rank and f.rank != g.rank:
        raise ValueError("products of a vector and a tensor are not supported")
    size = product_size(grid, f.bandwidth, g.bandwidth)
    a, b = _broadcast_pair(padded_values(f, size), padded_values(g, size), grid)
    return from_padded(grid, a * b)


def dot(u, v):
    """Alias-free pointwise inner product of two vector fields."""
    grid = same_grid(u, v)
    if u.rank != 1 or v.rank != 1:
        raise ValueError("dot needs two vector fields")
    size = product_size(grid, u.bandwidth, v.bandwidth)
    return from_padded(grid, np.sum(padded_values(u, size) * padded_values(v, size), axis=0))


def advect(v, f):
    """Alias-free ``v . grad f`` for a scalar or vector ``f``."""
    grid = same_grid(v, f)
    if v.rank != 1:
        raise ValueError("advecting velocity must be a vector field")
    if f.rank > 1:
        raise ValueError("advected field must be scalar or vector")
    size = product_size(grid, v.bandwidth, f.bandwidth)
    vp = padded_values(v, size)
    gp = np.moveaxis(padded_values(gradient(f), size), f.rank, 0)
    vp = vp.reshape(vp.shape[:1] + (1,) * f.rank + vp.shape[1:])
    return from_padded(grid, np.sum(vp * gp, axis=0))


# serialization

_HEADER = struct.Struct("<qqqd")


def write_binary(f, path):
    """Header (dim, resolution, rank as int64, period as float64), then the samples."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(f.grid.dim, f.grid.resolution, f.rank, f.grid.period))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    dim, m, rank, period = _HEADER.unpack_from(raw)
    grid = Grid(dim, m, period)
    shape = (dim,) * rank + grid.shape
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if payload.size != math.prod(shape):
        raise ValueError(f"{path}: expected {math.prod(shape)} samples, found {payload.size}")
    return Field(grid, payload.reshape(shape))


_CSV_LIMIT = 1 << 16


def write_csv(f, path):
    """One row per grid point: integer indices then component values."""
    grid = f.grid
    n = math.prod(grid.shape)
    if n > _CSV_LIMIT:
        raise ValueError(f"CSV export is for small grids (<= {_CSV_LIMIT} points), got {n}")
    comps = int(math.prod(f.components))
    flat = f.values.reshape(comps, n)
    idx = np.indices(grid.shape).reshape(grid.dim, n)
    with open(path, "w", newline="") as fh:
        fh.write(f"# dim={grid.dim} resolution={grid.resolution} rank={f.rank} period={grid.period!r}\n")
        w = csv.writer(fh)
        w.writerow([f"i{a}" for a in range(grid.dim)] + [f"c{c}" for c in range(comps)])
        for p in range(n):
            w.writerow([int(i) for i in idx[:, p]] + [repr(float(x)) for x in flat[:, p]])


def read_csv(path):
    with open(path, newline="") as fh:
        meta = fh.readline().lstrip("#").split()
        info = dict(item.split("=", 1) for item in meta)
        grid = Grid(int(info["dim"]), int(info["resolution"]), float(info["period"]))
        rank = int(info["rank"])
        rows = list(csv.reader(fh))[1:]
    comps = grid.dim**rank
    out = np.zeros((comps,) + grid.shape)
    for row in rows:
        pos = tuple(int(x) for x in row[: grid.dim])
        for c in range(comps):
            out[(c,) + pos] = float(row[grid.dim + c])
    return Field(grid, out.reshape((grid.dim,) * rank + grid.shape))
