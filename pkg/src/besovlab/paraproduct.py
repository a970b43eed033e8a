"""Bony decomposition, product and commutator estimates, composition.

Every pointwise product is formed on the 3/2-refined grid, so all pieces
are exact trigonometric polynomials and the decomposition

    u v = T_u v + T_v u + R(u, v)

holds to roundoff.  Blocks are indexed with the low remainder (the zero
mode when the partition has a margin) sitting below every dyadic block:
``S_{j-1} u`` always contains it, and ``R`` carries the product of the two
low remainders.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ._validation import HypothesisError, inv, same_grid
from .fourier_field import (
    Field,
    divergence,
    gradient,
    hat_from_padded,
    inverse_transform,
    lp_norm,
    multiply,
    padded_from_hat,
    product_size,
)
from .littlewood_paley import BesovParams, NormSeries, besov_norm, block_norms, chemin_lerner_norm
from .weighted_besov import WeightedBesovParams, weighted_besov_norm, weighted_cl_norm

__all__ = [
    "BonySplit",
    "bony_split",
    "paraproduct",
    "remainder",
    "product_estimate_ratio",
    "weighted_paraproduct_ratio",
    "weighted_paraproduct_ratio_time",
    "commutator",
    "commutator_blocks",
    "transport_commutator_blocks",
    "commutator_ratio",
    "transport_commutator_ratio",
    "weighted_commutator_ratio_time",
    "compose",
    "compose_telescoping",
    "compose_ratio",
    "compose_ratio_time",
]


class BonySplit(NamedTuple):
    Tuv: Field
    Tvu: Field
    Ruv: Field

    def total(self):
        return self.Tuv + self.Tvu + self.Ruv


def _stacked_padded(f, part, size):
    """Padded samples of [low, Delta_{j_min}, ..., Delta_{j_max}] of a scalar."""
    if f.rank != 0:
        raise ValueError("Bony pieces are implemented for scalar fields")
    hats = np.concatenate([(part.low * f.hat)[None], part.block_hats(f)])
    active = np.flatnonzero(np.any(hats.reshape(len(hats), -1) != 0, axis=1))
    out = np.zeros((len(hats),) + (size,) * f.grid.dim)
    if active.size:
        out[active] = padded_from_hat(f.grid, hats[active], size)
    return out


def _pieces(u, v, part):
    grid = same_grid(u, v)
    if grid != part.grid:
        raise ValueError("fields and partition live on different grids")
    size = product_size(grid, u.bandwidth, v.bandwidth)
    bu = _stacked_padded(u, part, size)
    bv = _stacked_padded(v, part, size)
    return grid, bu, bv


def _para_sum(bu, bv):
    # sum_j S_{j-1}u Delta_j v, S_{j-1}u = low + blocks up to j-2
    low_prefix = np.cumsum(bu, axis=0)
    acc = bu[0] * bv[1]
    if bu.shape[0] > 2:
        acc = acc + bu[0] * bv[2]
    for i in range(3, bu.shape[0]):
        acc += low_prefix[i - 2] * bv[i]
    return acc


def _rem_sum(bu, bv):
    n = bu.shape[0]
    acc = bu[0] * bv[0]
    for i in range(1, n):
        lo, hi = max(1, i - 1), min(n, i + 2)
        acc = acc + bu[i] * bv[lo:hi].sum(axis=0)
    return acc


def bony_split(u, v, part):
    grid, bu, bv = _pieces(u, v, part)
    tuv = hat_from_padded(grid, _para_sum(bu, bv))
    tvu = hat_from_padded(grid, _para_sum(bv, bu))
    ruv = hat_from_padded(grid, _rem_sum(bu, bv))
    mk = lambda h: Field.from_spectral(grid, h, hermitian=True)
    return BonySplit(mk(tuv), mk(tvu), mk(ruv))


def paraproduct(u, v, part):
    """``T_u v = sum_j S_{j-1} u Delta_j v``."""
    grid, bu, bv = _pieces(u, v, part)
    return Field.from_spectral(grid, hat_from_padded(grid, _para_sum(bu, bv)), hermitian=True)


def remainder(u, v, part):
    """``R(u, v) = sum_j Delta_j u (Delta_{j-1} + Delta_j + Delta_{j+1}) v`` plus the low-low term."""
    grid, bu, bv = _pieces(u, v, part)
    return Field.from_spectral(grid, hat_from_padded(grid, _rem_sum(bu, bv)), hermitian=True)


def _ratio(lhs, rhs, what):
    if not rhs > 0:
        raise ValueError(f"degenerate right-hand side ({what} = {rhs})")
    return lhs / rhs


def _bn(f, s, p, r, part):
    return besov_norm(f, BesovParams(s, p, r), part)


PRODUCT_LAWS = ("linf", "product", "endpoint")


def check_product_hypothesis(law, s1, s2, p, dim):
    """Raise :class:`HypothesisError` naming the first violated condition."""
    np_ = dim * inv(p)
    floor = dim * max(0.0, 2 * inv(p) - 1)
    if law == "linf":
        if not s1 > 0:
            raise HypothesisError("s > 0", f"s={s1}")
    elif law == "product":
        if s1 > np_:
            raise HypothesisError("s1 <= N/p", f"s1={s1}, N/p={np_}")
        if s2 > np_:
            raise HypothesisError("s2 <= N/p", f"s2={s2}, N/p={np_}")
        if not s1 + s2 > floor:
            raise HypothesisError("s1+s2 <= N*max(0,2/p-1)", f"s1+s2={s1 + s2}, bound={floor}")
    elif law == "endpoint":
        if s1 > np_:
            raise HypothesisError("s1 <= N/p", f"s1={s1}, N/p={np_}")
        if not s2 < np_:
            raise HypothesisError("s2 < N/p", f"s2={s2}, N/p={np_}")
        if not s1 + s2 >= floor:
            raise HypothesisError("s1+s2 < N*max(0,2/p-1)", f"s1+s2={s1 + s2}, bound={floor}")
    else:
        raise ValueError(f"unknown product law {law!r}; choose from {PRODUCT_LAWS}")


def product_estimate_ratio(f, g, s1, s2, p, part, law="product"):
    """LHS/RHS of a two-factor product law.

    ``linf``: ``||fg||_{B^s} / (||f||_{B^s}||g||_inf + ||f||_inf||g||_{B^s})`` with s = s1.
    ``product``: ``||fg||_{B^{s1+s2-N/p}_{p,1}} / (||f||_{B^{s1}_{p,1}}||g||_{B^{s2}_{p,1}})``.
    ``endpoint``: as ``product`` with r = inf on the product and on g.
    """
    dim = f.grid.dim
    check_product_hypothesis(law, s1, s2, p, dim)
    fg = multiply(f, g)
    if law == "linf":
        bf, bg = _bn(f, s1, p, 1, part), _bn(g, s1, p, 1, part)
        rhs = bf * lp_norm(g, math.inf) + lp_norm(f, math.inf) * bg
        return _ratio(_bn(fg, s1, p, 1, part), rhs, "RHS")
    s = s1 + s2 - dim * inv(p)
    if law == "product":
        rhs = _bn(f, s1, p, 1, part) * _bn(g, s2, p, 1, part)
        return _ratio(_bn(fg, s, p, 1, part), rhs, "RHS")
    rhs = _bn(f, s1, p, 1, part) * _bn(g, s2, p, math.inf, part)
    return _ratio(_bn(fg, s, p, math.inf, part), rhs, "RHS")


WEIGHTED_PIECES = ("Tgf", "Tfg", "R", "product", "product-endpoint")


def check_weighted_hypothesis(which, s1, s2, p, dim):
    np_ = dim * inv(p)
    floor = dim * max(0.0, 2 * inv(p) - 1)
    if which == "Tgf":
        if s2 > np_:
            raise HypothesisError("s2 <= N/p", f"s2={s2}, N/p={np_}")
    elif which == "Tfg":
        if s1 > np_ - 1:
            raise HypothesisError("s1 <= N/p-1", f"s1={s1}, N/p-1={np_ - 1}")
    elif which == "R":
        if not s1 + s2 > floor:
            raise HypothesisError("s1+s2 <= N*max(0,2/p-1)", f"s1+s2={s1 + s2}, bound={floor}")
    elif which == "product":
        if s1 > np_ - 1:
            raise HypothesisError("s1 <= N/p-1", f"s1={s1}, N/p-1={np_ - 1}")
        if s2 > np_:
            raise HypothesisError("s2 <= N/p", f"s2={s2}, N/p={np_}")
        if not s1 + s2 > floor:
            raise HypothesisError("s1+s2 <= N*max(0,2/p-1)", f"s1+s2={s1 + s2}, bound={floor}")
    elif which == "product-endpoint":
        if s1 > np_ - 1:
            raise HypothesisError("s1 <= N/p-1", f"s1={s1}, N/p-1={np_ - 1}")
        if not s2 < np_:
            raise HypothesisError("s2 < N/p", f"s2={s2}, N/p={np_}")
        if not s1 + s2 >= floor:
            raise HypothesisError("s1+s2 < N*max(0,2/p-1)", f"s1+s2={s1 + s2}, bound={floor}")
    else:
        raise ValueError(f"unknown piece {which!r}; choose from {WEIGHTED_PIECES}")


def _weighted_lhs_field(f, g, which, part):
    if which == "Tgf":
        return paraproduct(g, f, part)
    if which == "Tfg":
        return paraproduct(f, g, part)
    if which == "R":
        return remainder(f, g, part)
    return multiply(f, g)


def _wp(s, p, r, wp, q=math.inf):
    return WeightedBesovParams(BesovParams(s, p, r, q), wp.weights, wp.T)


def weighted_paraproduct_ratio(f, g, s1, s2, p, wp, part, which="R"):
    """Weighted LHS over ``||f||_{B^{s1}_{p,1}(omega)} ||g||_{B^{s2}_{p,1}}``.

    ``which`` picks the piece: ``Tgf`` (T_g f), ``Tfg`` (T_f g), ``R``, the
    full ``product``, or ``product-endpoint`` (r = inf on the product and g).
    """
    dim = f.grid.dim
    check_weighted_hypothesis(which, s1, s2, p, dim)
    s = s1 + s2 - dim * inv(p)
    r_out = math.inf if which == "product-endpoint" else 1.0
    lhs = weighted_besov_norm(_weighted_lhs_field(f, g, which, part), _wp(s, p, r_out, wp), part)
    rhs = weighted_besov_norm(f, _wp(s1, p, 1, wp), part) * _bn(g, s2, p, r_out, part)
    return _ratio(lhs, rhs, "RHS")


def _series(fields, times, part, s, p, r, q):
    return NormSeries.from_fields(times, fields, part, BesovParams(s, p, r, q))


def time_exponent(q1, q2):
    """q with 1/q = 1/q1 + 1/q2; raises if the sum exceeds 1."""
    total = inv(q1) + inv(q2)
    if total > 1 + 1e-12:
        raise HypothesisError("1/q1+1/q2 <= 1", f"1/q1+1/q2={total}")
    return math.inf if total == 0 else 1.0 / total


def weighted_paraproduct_ratio_time(fs, gs, times, s1, s2, p, q1, q2, wp, part, which="R"):
    """Time-blocked version: ``L~^q`` of the piece against ``L~^{q1}`` and ``L~^{q2}`` norms."""
    dim = part.grid.dim
    check_weighted_hypothesis(which, s1, s2, p, dim)
    q = time_exponent(q1, q2)
    s = s1 + s2 - dim * inv(p)
    r_out = math.inf if which == "product-endpoint" else 1.0
    lhs_fields = [_weighted_lhs_field(f, g, which, part) for f, g in zip(fs, gs)]
    lhs = weighted_cl_norm(_series(lhs_fields, times, part, s, p, r_out, q), _wp(s, p, r_out, wp, q))
    rf = weighted_cl_norm(_series(fs, times, part, s1, p, 1, q1), _wp(s1, p, 1, wp, q1))
    rg = chemin_lerner_norm(_series(gs, times, part, s2, p, r_out, q2))
    return _ratio(lhs, rf * rg, "RHS")


# commutators

def commutator_blocks(f, g, part, form="div"):
    """Coefficients of ``[Delta_j, f] grad g`` (or its divergence) for every block j."""
    grid = same_grid(f, g)
    if f.rank or g.rank:
        raise ValueError("commutator expects scalar f and g")
    grad_g = gradient(g)
    fgrad = multiply(f, grad_g)
    size = product_size(grid, f.bandwidth, g.bandwidth)
    fp = padded_from_hat(grid, f.hat, size)
    out = []
    for i in range(part.n_blocks):
        mult = part.phi[i]
        first = mult * fgrad.hat
        block = mult * grad_g.hat
        if block.any():
            first = first - hat_from_padded(grid, fp * padded_from_hat(grid, block, size))
        out.append(first)
    hats = np.array(out)
    if form == "div":
        k = grid.kvec
        ny = [grid.axis_nyquist(a) for a in range(grid.dim)]
        ik = np.stack([np.where(ny[a], 0.0, 1j * k[a]) for a in range(grid.dim)])
        return np.sum(ik[None] * hats, axis=1)
    if form != "grad":
        raise ValueError("form must be 'grad' or 'div'")
    return hats


def commutator(j, f, g, part, form="grad"):
    """``[Delta_j, f] grad g = Delta_j(f grad g) - f Delta_j grad g``; ``form='div'`` adds a divergence."""
    grid = same_grid(f, g)
    grad_g = gradient(g)
    mult = part.multiplier(j)
    first = mult * multiply(f, grad_g).hat
    second = multiply(f, Field.from_spectral(grid, mult * grad_g.hat, hermitian=True)).hat
    out = Field.from_spectral(grid, first - second, hermitian=True)
    if form == "div":
        return divergence(out)
    if form != "grad":
        raise ValueError("form must be 'grad' or 'div'")
    return out


def transport_commutator_blocks(v, f, part):
    """``[v, Delta_j] . grad f = v . Delta_j grad f - Delta_j(v . grad f)`` for every j."""
    grid = same_grid(v, f)
    if v.rank != 1 or f.rank != 0:
        raise ValueError("expects a vector v and a scalar f")
    grad_f = gradient(f)
    size = product_size(grid, v.bandwidth, f.bandwidth)
    vp = padded_from_hat(grid, v.hat, size)
    adv = hat_from_padded(grid, np.sum(vp * padded_from_hat(grid, grad_f.hat, size), axis=0))
    out = []
    for i in range(part.n_blocks):
        mult = part.phi[i]
        block = mult * grad_f.hat
        term = -mult * adv
        if block.any():
            term = term + hat_from_padded(grid, np.sum(vp * padded_from_hat(grid, block, size), axis=0))
        out.append(term)
    return np.array(out)


def _block_lp(grid, hats, p):
    """L^p norms of the fields with the given coefficient arrays (first axis)."""
    if p == 2:
        return np.sqrt(np.sum(np.abs(hats.reshape(len(hats), -1)) ** 2, axis=1))
    fields = [Field.from_spectral(grid, h, hermitian=True) for h in hats]
    return np.array([lp_norm(f, p) for f in fields])


def _hyp_low(s, p, dim, upper, upper_name):
    lo = -dim * min(inv(p), 1 - inv(p))
    if not s > lo:
        raise HypothesisError("s > -N*min(1/p,1/p')", f"s={s}, bound={lo}")
    if s > upper:
        raise HypothesisError(upper_name, f"s={s}, bound={upper}")


def commutator_ratio(f, g, s, p, part):
    """``sum_j 2^{j(s-1)} ||div[Delta_j,f] grad g||_p / (||f||_{B^{N/p+1}} ||g||_{B^s})``."""
    dim = part.grid.dim
    _hyp_low(s, p, dim, dim * inv(p) + 1, "s <= N/p+1")
    norms = _block_lp(part.grid, commutator_blocks(f, g, part, "div"), p)
    js = np.arange(part.j_min, part.j_max + 1)
    lhs = float(np.sum(np.exp2(js * (s - 1.0)) * norms))
    rhs = _bn(f, dim * inv(p) + 1, p, 1, part) * _bn(g, s, p, 1, part)
    return _ratio(lhs, rhs, "RHS")


def transport_commutator_ratio(v, f, s, p, wp, part):
    """``sum_j omega_j(T) 2^{js} ||[v,Delta_j].grad f||_p / (||v||_{B^{N/p+1}} ||f||_{B^s(omega)})``."""
    dim = part.grid.dim
    _hyp_low(s, p, dim, dim * inv(p), "s <= N/p")
    norms = _block_lp(part.grid, transport_commutator_blocks(v, f, part), p)
    om = wp.weights.omegas(wp.T)[part.j_min - wp.weights.j_min :][: part.n_blocks]
    js = np.arange(part.j_min, part.j_max + 1)
    lhs = float(np.sum(om * np.exp2(js * s) * norms))
    vn = sum(_bn(v[i], dim * inv(p) + 1, p, 1, part) for i in range(dim))
    rhs = vn * weighted_besov_norm(f, _wp(s, p, 1, wp), part)
    return _ratio(lhs, rhs, "RHS")


def weighted_commutator_ratio_time(fs, gs, times, s, p, wp, part):
    """Weighted time-integrated divergence commutator against
    ``||f||_{L~inf(B^{N/p}(omega))} ||g||_{L~1(B^{s+1})}``."""
    dim = part.grid.dim
    if p > dim:
        raise HypothesisError("p <= N", f"p={p}, N={dim}")
    _hyp_low(s, p, dim, dim * inv(p), "s <= N/p")
    rows = [_block_lp(part.grid, commutator_blocks(f, g, part, "div"), p) for f, g in zip(fs, gs)]
    sub = NormSeries(times, np.array(rows), part.j_min, BesovParams(s - 1, p, 1, 1))
    lhs = weighted_cl_norm(sub, _wp(s - 1, p, 1, wp, 1))
    rf = weighted_cl_norm(_series(fs, times, part, dim * inv(p), p, 1, math.inf),
                          _wp(dim * inv(p), p, 1, wp, math.inf))
    rg = chemin_lerner_norm(_series(gs, times, part, s + 1, p, 1, 1))
    return _ratio(lhs, rf * rg, "RHS")


# composition

def _check_map(F):
    f0 = float(np.asarray(F(np.zeros(1)))[0])
    if abs(f0) > 1e-14:
        raise ValueError(f"composition needs F(0) = 0, got F(0) = {f0}")


def compose(F, f):
    """``F(f)`` evaluated on the 3/2-refined grid and projected back.

    For polynomial F of degree two this is exactly the alias-free product.
    """
    _check_map(F)
    grid = f.grid
    vals = padded_from_hat(grid, f.hat)
    return Field.from_spectral(grid, hat_from_padded(grid, np.asarray(F(vals), float)), hermitian=True)


_GL8 = np.polynomial.legendre.leggauss(8)


def compose_telescoping(F, dF, f, part):
    """Rebuild ``F(f)`` as ``F(low f) + sum_j Delta_j f * m_j(f)``.

    ``m_j(f) = int_0^1 F'(S_j f + tau Delta_j f) dtau`` by 8-point
    Gauss-Legendre.  Works on grid samples; returns the rebuilt samples and
    the max deviation from ``F(f)``.
    """
    _check_map(F)
    nodes, weights = _GL8
    taus, wts = (nodes + 1) / 2, weights / 2
    s_cur = inverse_transform(f.grid, part.low * f.hat).values
    total = np.asarray(F(s_cur), float).copy()
    for i in range(part.n_blocks):
        d = inverse_transform(f.grid, part.phi[i] * f.hat).values
        m = sum(w * np.asarray(dF(s_cur + t * d), float) for t, w in zip(taus, wts))
        total += d * m
        s_cur = s_cur + d
    return total, float(np.max(np.abs(total - np.asarray(F(f.values), float))))


def compose_ratio(F, f, s, p, part, wp=None):
    """``||F(f)|| / ((1 + ||f||_inf)^{[s]+2} ||f||)`` in ``B^s_{p,1}`` or its weighted version."""
    if not s > 0:
        raise HypothesisError("s > 0", f"s={s}")
    Ff = compose(F, f)
    amp = (1 + lp_norm(f, math.inf)) ** (math.floor(s) + 2)
    if wp is None:
        return _ratio(_bn(Ff, s, p, 1, part), amp * _bn(f, s, p, 1, part), "RHS")
    prm = _wp(s, p, 1, wp)
    return _ratio(weighted_besov_norm(Ff, prm, part), amp * weighted_besov_norm(f, prm, part), "RHS")


def compose_ratio_time(F, fs, times, s, p, q, part, wp=None):
    """Time-blocked composition law with ``||f||_{L^inf_T(L^inf)}`` in the amplitude factor."""
    if not s > 0:
        raise HypothesisError("s > 0", f"s={s}")
    Fs = [compose(F, f) for f in fs]
    amp = (1 + max(lp_norm(f, math.inf) for f in fs)) ** (math.floor(s) + 2)
    a = _series(Fs, times, part, s, p, 1, q)
    b = _series(fs, times, part, s, p, 1, q)
    if wp is None:
        return _ratio(chemin_lerner_norm(a), amp * chemin_lerner_norm(b), "RHS")
    prm = _wp(s, p, 1, wp, q)
    return _ratio(weighted_cl_norm(a, prm), amp * weighted_cl_norm(b, prm), "RHS")
