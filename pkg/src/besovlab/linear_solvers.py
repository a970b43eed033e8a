"""Linear transport and linearized momentum solvers with estimate checkers.

Transport ``df/dt + v . grad f = g`` is advanced with the Shu-Osher RK3
scheme and alias-free products.  The momentum equation
``du/dt - div(mu grad u) - grad((lam + mu) div u) = G`` is split into the
constant-coefficient part built from the spatial means, which is applied as
an exact per-mode exponential, and a variable-coefficient remainder that is
integrated explicitly (integrating-factor Kutta RK3).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ._validation import HypothesisError, NonFiniteError, check_exponent, inv, same_grid
from .fourier_field import (
    Field,
    _derivative_multiplier,
    _unit,
    bandwidth,
    curl,
    divergence,
    gradient,
    hat_from_padded,
    lp_norm,
    multiply,
    padded_from_hat,
    product_size,
)
from .littlewood_paley import BesovParams, NormSeries, _lr_sum, _scales, block_norms, build_partition, time_lq
from .weighted_besov import WeightedBesovParams, WeightSequence, _weights_for

__all__ = [
    "CFLError",
    "SolverError",
    "TransportProblem",
    "TransportRun",
    "solve_transport",
    "transport_estimate_check",
    "TransportReport",
    "DivCurlState",
    "div_curl_split",
    "reconstruct",
    "coupling_sources",
    "momentum_operator",
    "MomentumProblem",
    "MomentumRun",
    "solve_momentum",
    "mode_decay_fit",
    "DecayFit",
    "poincare_ratio",
    "momentum_estimate_check",
    "MomentumReport",
    "amplification_factor",
    "momentum_step",
    "ssp_rk3_step",
]

CFL_ADV = 0.5

TimeField = Union[None, Field, Callable[[float], Field]]


class CFLError(ValueError):
    """Step rejected by the advective CFL bound; ``suggested`` is an admissible dt."""

    def __init__(self, dt, suggested):
        self.dt = dt
        self.suggested = suggested
        super().__init__(f"dt = {dt:.3g} violates the advective CFL bound; use dt <= {suggested:.3g}")


class SolverError(RuntimeError):
    pass


def _schedule(x, grid, rank, name):
    """Turn a steady Field, a callable of t, or None into a callable of t."""
    if x is None:
        zero = Field.zeros(grid, rank)
        return (lambda t: zero), True
    if isinstance(x, Field):
        if x.grid != grid or x.rank != rank:
            raise ValueError(f"{name} must be a rank-{rank} field on the solution grid")
        return (lambda t: x), True
    if callable(x):
        def sample(t):
            out = x(t)
            if not isinstance(out, Field) or out.grid != grid or out.rank != rank:
                raise ValueError(f"{name}(t) must return a rank-{rank} field on the solution grid")
            return out
        return sample, False
    raise TypeError(f"{name} must be a Field, a callable of t, or None")


def _n_steps(T, dt):
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"horizon must be positive and finite, got {T}")
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"time step must be positive and finite, got {dt}")
    n = max(1, math.ceil(T / dt - 1e-9))
    return n, T / n


def _ik(grid):
    return np.stack([np.broadcast_to(_derivative_multiplier(grid, _unit(grid.dim, a)), grid.shape)
                     for a in range(grid.dim)])


# transport

@dataclass
class TransportProblem:
    """``df/dt + v . grad f = g`` on [0, T] with ``f(0) = f0``.

    ``v`` and ``g`` are steady fields, callables of ``t``, or None (zero).
    """

    f0: Field
    v: TimeField = None
    g: TimeField = None
    T: float = 1.0
    dt: float = 1e-3

    def __post_init__(self):
        if self.f0.rank != 0:
            raise ValueError("transported quantity must be a scalar field")


@dataclass
class TransportRun:
    problem: TransportProblem
    times: np.ndarray
    snapshots: list
    series: NormSeries
    g_series: NormSeries
    grad_v_series: NormSeries
    grad_v_linf: np.ndarray
    dt: float
    steps: int

    @property
    def final(self):
        return self.snapshots[-1]

    def V(self, p=None, r=1.0, with_linf=True):
        """``int_0^t ||grad v||_{B^{N/p}_{p,r}} (+ ||grad v||_inf) dtau`` at the samples."""
        p = self.series.params.p if p is None else p
        if p != self.grad_v_series.params.p:
            raise ValueError("grad v block norms were recorded for a different p")
        dim = self.problem.f0.grid.dim
        w = _scales(self.grad_v_series.j_min, self.grad_v_series.block_norms.shape[1], dim * inv(p))
        dens = np.array([_lr_sum(w * row, r) for row in self.grad_v_series.block_norms])
        if with_linf:
            dens = dens + self.grad_v_linf
        return cumulative_trapezoid(dens, self.times, initial=0.0)


def _sup_speed(v):
    if v.rank != 1:
        raise ValueError("convecting velocity must be a vector field")
    return float(np.sqrt(np.sum(v.values**2, axis=0)).max())


def solve_transport(prob, part=None, p=2.0, sample_every=1, cfl=CFL_ADV):
    """Integrate the transport problem and record block norms of f, g and grad v."""
    f0 = prob.f0
    grid = f0.grid
    p = check_exponent(p)
    part = build_partition(grid) if part is None else part
    v_at, v_steady = _schedule(prob.v, grid, 1, "v")
    g_at, g_steady = _schedule(prob.g, grid, 0, "g")
    steps, dt = _n_steps(prob.T, prob.dt)
    h = min(grid.spacing) if np.ndim(grid.spacing) else grid.spacing
    ik = _ik(grid)

    cache = {}

    def padded_v(t, size):
        key = (None if v_steady else t, size)
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            v = v_at(t)
            cache[key] = (padded_from_hat(grid, v.hat, size), v)
        return cache[key][0]

    def check_cfl(t):
        speed = _sup_speed(v_at(t))
        if speed > 0:
            limit = cfl * h / speed
            if dt > limit * (1 + 1e-12):
                raise CFLError(dt, limit)

    def rhs(fhat, t):
        out = g_at(t).hat.copy()
        v = v_at(t)
        if not np.any(v.hat):
            return out
        size = product_size(grid, v.bandwidth, bandwidth(grid, fhat))
        gp = padded_from_hat(grid, ik * fhat[None], size)
        out -= hat_from_padded(grid, np.sum(padded_v(t, size) * gp, axis=0))
        return out

    params = BesovParams(0.0, p)
    times, snaps, f_rows, g_rows, gv_rows, gv_inf = [], [], [], [], [], []

    steady_rows = {}

    def coefficient_rows(t):
        # norms of g, grad v and sup |grad v|; computed once when both are steady
        if v_steady and g_steady and steady_rows:
            return steady_rows["rows"]
        gv = gradient(v_at(t))
        rows = (block_norms(g_at(t), part, p), block_norms(gv, part, p), lp_norm(gv, math.inf))
        if v_steady and g_steady:
            steady_rows["rows"] = rows
        return rows

    def record(t, fhat):
        f = Field.from_spectral(grid, fhat, hermitian=True)
        times.append(t)
        snaps.append(f)
        f_rows.append(block_norms(f, part, p))
        g_row, gv_row, gv_sup = coefficient_rows(t)
        g_rows.append(g_row)
        gv_rows.append(gv_row)
        gv_inf.append(gv_sup)

    fhat = f0.hat.copy()
    record(0.0, fhat)
    if v_steady:
        check_cfl(0.0)
    for n in range(steps):
        t = n * dt
        if not v_steady:
            for tau in (t, t + dt, t + 0.5 * dt):
                check_cfl(tau)
        fhat = ssp_rk3_step(fhat, t, dt, rhs)
        if not np.all(np.isfinite(fhat)):
            raise NonFiniteError(f"transport solution blew up at t = {t + dt:.4g}")
        if (n + 1) % sample_every == 0 or n + 1 == steps:
            record((n + 1) * dt, fhat)
    mk = lambda rows: NormSeries(np.array(times), np.array(rows), part.j_min, params)
    return TransportRun(prob, np.array(times), snaps, mk(f_rows), mk(g_rows), mk(gv_rows),
                        np.array(gv_inf), dt, steps)


@dataclass
class TransportReport:
    s: float
    p: float
    r: float
    weighted: bool
    C: float
    max_ratio: float
    min_C: float
    V_T: float
    lhs: np.ndarray = field(repr=False)
    bracket: np.ndarray = field(repr=False)

    def as_dict(self):
        return dict(s=self.s, p=self.p, r=self.r, weighted=self.weighted, C=self.C,
                    max_ratio=self.max_ratio, min_C=self.min_C, V_T=self.V_T)


def check_transport_hypothesis(s, p, r, dim, weighted=False):
    p = check_exponent(p)
    lower = -dim * min(inv(p), 1.0 - inv(p))
    if not s > lower:
        raise HypothesisError("s > -N min(1/p, 1/p')", f"s = {s}, bound {lower:.4g}")
    if weighted:
        if r != 1:
            raise HypothesisError("r = 1", f"r = {r}")
        if not s <= dim * inv(p):
            raise HypothesisError("s <= N/p", f"s = {s}, N/p = {dim * inv(p):.4g}")
    else:
        top = 1.0 + dim * inv(p)
        if not (s < top or (s == top and r == 1)):
            raise HypothesisError("s < 1 + N/p (or s = 1 + N/p with r = 1)", f"s = {s}, 1 + N/p = {top:.4g}")


def _weighted_sums(series, s, r, w, Ts):
    # rows: horizon T_i, columns: sample k; sum_j 2^{js} omega_j(T_i) ||Delta_j g(t_k)||
    n_blocks = series.block_norms.shape[1]
    sc = _scales(series.j_min, n_blocks, s)
    out = np.empty((len(Ts), len(series)))
    for i, T in enumerate(Ts):
        om = _weights_for(w, series.j_min, n_blocks, T)
        out[i] = [_lr_sum(sc * om * row, r) for row in series.block_norms]
    return out


def transport_estimate_check(run, s, p=None, r=1.0, weighted=False, wp=None, C=1.0):
    """Compare ``||f||_{L~inf_t(B^s_{p,r})}`` with ``e^{CV}(||f0|| + int e^{-CV} ||g||)``.

    ``max_ratio`` is the largest LHS / bracket over the samples at the given
    ``C``; ``min_C`` is the smallest exponent constant for which the bracket
    dominates at every sample (``inf`` if none does).  With ``weighted`` the
    block weights omega_j(t) are evaluated at each sample time t.
    """
    p = run.series.params.p if p is None else check_exponent(p)
    dim = run.problem.f0.grid.dim
    check_transport_hypothesis(s, p, r, dim, weighted)
    times = run.times
    if weighted:
        w = wp.weights if isinstance(wp, WeightedBesovParams) else (wp or WeightSequence())
        V = run.V(p, 1.0, with_linf=False)
        S = run.series.with_params(s=s, r=r, q=math.inf)
        lhs = np.empty(len(times))
        f_sums = _weighted_sums(S, s, r, w, times)
        g_sums = _weighted_sums(run.g_series, s, r, w, times)
        for i in range(len(times)):
            running = S.block_norms[: i + 1].max(axis=0)
            om = _weights_for(w, S.j_min, running.size, times[i])
            lhs[i] = _lr_sum(_scales(S.j_min, running.size, s) * om * running, r)
        f0_norm = f_sums[:, 0]
    else:
        V = run.V(p, r, with_linf=True)
        S = run.series.with_params(s=s, r=r)
        per_t = S.besov_in_time()
        lhs = np.empty(len(times))
        for i in range(len(times)):
            running = S.block_norms[: i + 1].max(axis=0)
            lhs[i] = _lr_sum(_scales(S.j_min, running.size, s) * running, r)
        g_vals = run.g_series.with_params(s=s, r=r).besov_in_time()
        f0_norm = np.full(len(times), per_t[0])
        g_sums = np.broadcast_to(g_vals, (len(times), len(times)))

    def bracket(c):
        out = np.empty(len(times))
        for i in range(len(times)):
            integrand = np.exp(-c * V[: i + 1]) * g_sums[i, : i + 1]
            integral = np.trapezoid(integrand, times[: i + 1]) if i else 0.0
            out[i] = math.exp(c * V[i]) * (f0_norm[i] + integral)
        return out

    def worst(c):
        b = bracket(c)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(lhs > 0, lhs / np.where(b > 0, b, np.nan), 0.0)
        if np.any(np.isnan(q)):
            return math.inf
        return float(q.max())

    b = bracket(C)
    max_ratio = worst(C)
    tol = 1e-12
    if worst(0.0) <= 1 + tol:
        min_C = 0.0
    elif V[-1] <= 0:
        min_C = math.inf
    else:
        lo, hi = 0.0, 1.0
        while worst(hi) > 1 + tol and hi < 1e6:
            lo, hi = hi, 2 * hi
        if worst(hi) > 1 + tol:
            min_C = math.inf
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if worst(mid) > 1 + tol:
                    lo = mid
                else:
                    hi = mid
            min_C = hi
    return TransportReport(s, p, r, weighted, C, max_ratio, min_C, float(V[-1]), lhs, b)


# div / curl

@dataclass
class DivCurlState:
    d: Field
    w: Field
    nu_bar: Optional[Field] = None
    mean: Optional[np.ndarray] = None

    @property
    def vorticity(self):
        """Scalar ``w[0, 1]`` for planar fields."""
        if self.d.grid.dim != 2:
            raise ValueError("scalar vorticity is only defined for dim = 2")
        return self.w[0, 1]


def div_curl_split(u, mu_bar=None, lam_bar=None):
    """``d = div u`` and the antisymmetric ``w = curl u``; ``nu_bar = lam + 2 mu`` if given."""
    if u.rank != 1:
        raise ValueError("div/curl split needs a vector field")
    nu = None
    if mu_bar is not None:
        nu = mu_bar * 2.0 + (lam_bar if lam_bar is not None else Field.zeros(u.grid))
    return DivCurlState(divergence(u), curl(u), nu, np.asarray(u.mean, dtype=float))


def reconstruct(d, w, mean=None, tol=1e-8):
    """Vector field with divergence ``d`` and curl ``w`` (zero mode from ``mean``).

    Uses ``lap u = grad d + div w``.  Nyquist modes carry no derivative
    information and come back as zero.  Data that is not the div/curl pair of
    any field is rejected.
    """
    grid = same_grid(d, w)
    if d.rank != 0 or w.rank != 2:
        raise ValueError("reconstruct needs a scalar d and an antisymmetric tensor w")
    wv = w.values
    scale = max(lp_norm(d, 2.0), lp_norm(w, 2.0), 1e-300)
    if np.abs(wv + np.swapaxes(wv, 0, 1)).max() > tol * max(scale, np.abs(wv).max()):
        raise ValueError("curl data is not antisymmetric")
    ik = _ik(grid)
    rhs = ik * d.hat[None] + np.einsum(_einsum_spec(grid.dim), ik, w.hat)
    ksq = grid.ksq
    inv_ksq = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    hat = -rhs * inv_ksq[None]
    if mean is not None:
        hat[(slice(None),) + (0,) * grid.dim] = np.asarray(mean, dtype=float)
    u = Field.from_spectral(grid, hat, hermitian=True)
    resid = max(lp_norm(divergence(u) - d, 2.0), lp_norm(curl(u) - w, 2.0))
    if resid > tol * scale:
        raise ValueError(f"d and w are not a compatible div/curl pair (residual {resid:.2e})")
    return u


def _einsum_spec(dim):
    letters = "abcdefgh"[:dim]
    return f"j{letters},ij{letters}->i{letters}"


def momentum_operator(u, mu_bar, lam_bar):
    """``div(mu grad u) + grad((lam + mu) div u)`` with alias-free products."""
    flux = multiply(mu_bar, gradient(u))
    out = divergence(flux)
    return out + gradient(multiply(lam_bar + mu_bar, divergence(u)))


def coupling_sources(u, mu_bar, lam_bar):
    """Sources of the div/curl system.

    ``F1 = div(grad mu . grad u) + div(grad(lam + mu) d)`` where
    ``(grad mu . grad u)_j = sum_i d_i mu d_j u^i``, and
    ``F2[i, j] = div(d_j mu grad u^i - d_i mu grad u^j)``.
    """
    G = gradient(u)
    gm = gradient(mu_bar)
    d = divergence(u)
    dim = u.grid.dim
    # sum_i d_i mu * G[i, :]
    acc = None
    for i in range(dim):
        term = multiply(gm[i], G[i])
        acc = term if acc is None else acc + term
    f1 = divergence(acc) + divergence(multiply(d, gradient(lam_bar + mu_bar)))
    rows = []
    for i in range(dim):
        row = []
        for j in range(dim):
            vec = multiply(gm[j], G[i]) - multiply(gm[i], G[j])
            row.append(divergence(vec).values)
        rows.append(row)
    return f1, Field(u.grid, np.array(rows))


# momentum

@dataclass
class MomentumProblem:
    """``du/dt - div(mu grad u) - grad((lam + mu) div u) = G``, ``u(0) = u0``.

    ``rho`` (optional, time-sampled) is the density behind the coefficients;
    the estimate checker needs it for ``A(T)`` and the perturbation term, with
    ``rho_ref`` the reference state (default: spatial mean of rho at t = 0).
    """

    u0: Field
    mu_bar: TimeField
    lam_bar: TimeField = None
    G: TimeField = None
    T: float = 0.1
    dt: float = 1e-3
    rho: TimeField = None
    rho_ref: Optional[float] = None
    c1: Optional[float] = None

    def __post_init__(self):
        if self.u0.rank != 1:
            raise ValueError("momentum solver needs a vector initial velocity")
        if self.mu_bar is None:
            raise ValueError("mu_bar is required")


def _ellipticity(mu, lam, c1, t):
    mu_min = float(mu.values.min())
    nu_min = float((lam + mu * 2.0).values.min())
    bad = mu_min <= 0 or nu_min <= 0
    if c1 is not None:
        bad = bad or mu_min < c1 or nu_min < c1
    if bad:
        raise HypothesisError(
            "mu >= c1 > 0 and lam + 2 mu >= c1",
            f"min mu = {mu_min:.4g}, min(lam + 2 mu) = {nu_min:.4g} at t = {t:.4g}",
        )
    return mu_min, nu_min


@dataclass
class MomentumRun:
    problem: MomentumProblem
    times: np.ndarray
    snapshots: list
    series_u: NormSeries
    series_d: NormSeries
    series_w: NormSeries
    series_G: NormSeries
    rho_series: Optional[NormSeries]
    rho_sup: Optional[np.ndarray]
    energy_times: np.ndarray
    energy: np.ndarray
    dt: float
    steps: int

    @property
    def final(self):
        return self.snapshots[-1]

    def energy_monotone(self, rtol=1e-8):
        """True when ``||u||_2^2`` never rose by more than ``rtol`` of its value in one step."""
        e = self.energy
        return bool(np.all(np.diff(e) <= rtol * e[:-1] + 1e-300))


def _exp_factors(grid, mu0, nu0, h):
    ksq = grid.ksq
    return np.exp(-mu0 * ksq * h), np.exp(-nu0 * ksq * h)


def _apply_exp(kv, inv_ksq, factors, hat):
    eT, eL = factors
    kdot = np.sum(kv * hat, axis=0)
    return eT[None] * hat + ((eL - eT) * kdot * inv_ksq)[None] * kv


def momentum_step(grid, uhat, t, dt, coeffs, source):
    """One integrating-factor Kutta RK3 step of the momentum equation.

    ``coeffs(t)`` returns the fields ``(mu_bar, lam_bar)``; ``source(uhat, t)``
    returns the coefficients of the explicit forcing.  The spatial means of
    the coefficients at ``t`` form the exactly integrated part, so constant
    coefficients with zero forcing are reproduced to roundoff.
    """
    mu, lam = coeffs(t)
    mu0, lam0 = float(mu.mean), float(lam.mean)
    nu0 = lam0 + 2.0 * mu0
    kv = grid.kvec
    ksq = grid.ksq
    inv_ksq = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    half = _exp_factors(grid, mu0, nu0, 0.5 * dt)
    full = _exp_factors(grid, mu0, nu0, dt)

    def E(fac, h):
        return _apply_exp(kv, inv_ksq, fac, h)

    def N(uh, tau):
        m, l = coeffs(tau)
        dmu, dlam = m - mu0, l - lam0
        out = source(uh, tau)
        if np.any(dmu.hat) or np.any(dlam.hat):
            u = Field.from_spectral(grid, uh, hermitian=True)
            out = out + momentum_operator(u, dmu, dlam).hat
        return out

    N1 = N(uhat, t)
    N2 = N(E(half, uhat + 0.5 * dt * N1), t + 0.5 * dt)
    N3 = N(E(full, uhat - dt * N1) + 2.0 * dt * E(half, N2), t + dt)
    out = E(full, uhat) + (dt / 6.0) * (E(full, N1) + 4.0 * E(half, N2) + N3)
    if not np.all(np.isfinite(out)):
        raise SolverError(
            f"momentum solution blew up at t = {t + dt:.4g} (dt = {dt:.3g}, mean mu = {mu0:.4g}, "
            f"max |mu - mean| = {np.abs(mu.values - mu0).max():.3g}); reduce dt or the coefficient contrast"
        )
    return out


def ssp_rk3_step(y, t, dt, rhs):
    """Shu-Osher three-stage step for ``y' = rhs(y, t)``.

    Written in increment form so a vanishing right-hand side leaves ``y``
    bit-for-bit unchanged.
    """
    k1 = rhs(y, t)
    k2 = rhs(y + dt * k1, t + dt)
    k3 = rhs(y + (0.25 * dt) * (k1 + k2), t + 0.5 * dt)
    return y + dt * ((k1 + k2) / 6.0 + (2.0 / 3.0) * k3)


def solve_momentum(prob, part=None, p=2.0, sample_every=1):
    """Integrating-factor RK3 for the momentum equation; see the module docstring."""
    u0 = prob.u0
    grid = u0.grid
    p = check_exponent(p)
    part = build_partition(grid) if part is None else part
    mu_at, mu_steady = _schedule(prob.mu_bar, grid, 0, "mu_bar")
    lam_at, _ = _schedule(prob.lam_bar, grid, 0, "lam_bar")
    G_at, _ = _schedule(prob.G, grid, 1, "G")
    rho_at = _schedule(prob.rho, grid, 0, "rho")[0] if prob.rho is not None else None
    steps, dt = _n_steps(prob.T, prob.dt)

    checked = {}

    def coeffs(t):
        if t not in checked:
            mu, lam = mu_at(t), lam_at(t)
            _ellipticity(mu, lam, prob.c1, t)
            if len(checked) > 4:
                checked.clear()
            checked[t] = (mu, lam)
        return checked[t]

    params = BesovParams(0.0, p)
    times, snaps, rows_u, rows_d, rows_w, rows_G, rows_rho, sup_rho = [], [], [], [], [], [], [], []
    rho_ref = prob.rho_ref
    if rho_at is not None and rho_ref is None:
        rho_ref = float(rho_at(0.0).mean)

    def record(t, uhat):
        u = Field.from_spectral(grid, uhat, hermitian=True)
        times.append(t)
        snaps.append(u)
        rows_u.append(block_norms(u, part, p))
        rows_d.append(block_norms(divergence(u), part, p))
        rows_w.append(block_norms(curl(u), part, p))
        rows_G.append(block_norms(G_at(t), part, p))
        if rho_at is not None:
            rho = rho_at(t)
            rows_rho.append(block_norms(rho, part, p))
            sup_rho.append(float(np.abs(rho.values).max()))

    def energy(uhat):
        return float(np.sum(np.abs(uhat) ** 2))

    uhat = u0.hat.copy()
    record(0.0, uhat)
    e_t, e_v = [0.0], [energy(uhat)]
    source = lambda uh, t: G_at(t).hat
    for n in range(steps):
        t = n * dt
        uhat = momentum_step(grid, uhat, t, dt, coeffs, source)
        e_t.append((n + 1) * dt)
        e_v.append(energy(uhat))
        if (n + 1) % sample_every == 0 or n + 1 == steps:
            record((n + 1) * dt, uhat)
    mk = lambda rows: NormSeries(np.array(times), np.array(rows), part.j_min, params)
    return MomentumRun(
        prob, np.array(times), snaps, mk(rows_u), mk(rows_d), mk(rows_w), mk(rows_G),
        mk(rows_rho) if rho_at is not None else None,
        np.array(sup_rho) if rho_at is not None else None,
        np.array(e_t), np.array(e_v), dt, steps,
    )


def amplification_factor(grid, mu0, nu0, t, longitudinal=True):
    """Exact per-mode decay ``exp(-rate |k|^2 t)`` of the constant-coefficient problem."""
    rate = nu0 if longitudinal else mu0
    return np.exp(-rate * grid.ksq * t)


@dataclass
class DecayFit:
    c: float
    per_block: dict
    spread: float
    residual: float
    warning: Optional[str] = None

    def as_dict(self):
        return dict(c=self.c, per_block={int(k): v for k, v in self.per_block.items()},
                    spread=self.spread, residual=self.residual, warning=self.warning)


def _edge_shell(grid, part, j):
    """Lattice modes on the smallest magnitude that block j resolves."""
    inside = part.multiplier(j) > 0
    shell = grid.kmag[inside].min()
    return inside & (np.abs(grid.kmag - shell) < 1e-9)


def _potential_data(grid, psi, curl_free):
    kv = grid.kvec
    if curl_free:
        hat = 1j * kv * psi[None]
    else:
        if grid.dim != 2:
            raise ValueError("divergence-free data is built for dim = 2")
        hat = np.stack([1j * kv[1] * psi, -1j * kv[0] * psi])
    from .estimate_lab import _hermitian  # local import avoids a cycle

    return Field.from_spectral(grid, np.stack([_hermitian(grid, h) for h in hat]), hermitian=True)


def mode_decay_fit(grid, mu0, nu0, p=2.0, blocks=(3, 4, 5, 6), seed=0, curl_free=True,
                   data="edge", window=(0.05, 4.0), n_samples=12):
    """Measure the block decay constant of the constant-coefficient solver.

    For each block j the solver is sampled at times with dimensionless value
    ``c_ref 4^j t`` log-spaced over ``window`` (``c_ref`` is the decay rate at
    the lower annulus edge 3/4), and ``c_j`` is the largest constant with
    ``||Delta_j d(t)||_p <= ||Delta_j d0||_p exp(-c_j 4^j t)`` at every sample,
    ``d = div u`` for curl-free data and ``curl u`` otherwise.

    ``edge`` data (default) puts random amplitudes on the slowest lattice
    shell of the block being measured, one run per block; this is the worst
    case for the bound.  ``broad`` data fills every resolved mode at once.
    ``c`` is the smallest ``c_j``, ``residual`` the relative variation of
    ``c_j`` over the last quarter of the window.  A spread above 10% across
    blocks attaches a warning.
    """
    p = check_exponent(p)
    if not 1 < p < math.inf:
        raise ValueError("p must lie in (1, inf)")
    if data not in ("edge", "broad"):
        raise ValueError("data must be 'edge' or 'broad'")
    part = build_partition(grid)
    for j in blocks:
        if not part.j_min <= j <= part.j_max:
            raise ValueError(f"block {j} is outside the partition range")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    mu_f = Field(grid, np.full(grid.shape, float(mu0)))
    lam_f = Field(grid, np.full(grid.shape, float(nu0 - 2 * mu0)))
    rate = nu0 if curl_free else mu0
    c_ref = rate * 0.75**2
    broad = None
    if data == "broad":
        broad = _potential_data(grid, noise * ((grid.kmag < 0.9 * grid.nyquist) & (grid.kmag > 0)), curl_free)
    per_block, resid = {}, []
    for j in blocks:
        u0 = broad if broad is not None else _potential_data(grid, noise * _edge_shell(grid, part, j), curl_free)
        # measure on div u (curl u): roundoff in the other family decays at the
        # other rate and would dominate the velocity blocks at late times
        base = block_norms(divergence(u0) if curl_free else curl(u0), part, p)[j - part.j_min]
        ts = np.geomspace(*window, n_samples) / (c_ref * 4.0**j)
        rates = []
        for t in ts:
            run = solve_momentum(MomentumProblem(u0, mu_f, lam_f, None, T=float(t), dt=float(t)), part, p)
            series = run.series_d if curl_free else run.series_w
            ratio = series.block_norms[-1, j - part.j_min] / base
            rates.append(-math.log(ratio) / (4.0**j * t) if ratio > 0 else math.inf)
        rates = np.array(rates)
        per_block[j] = float(rates.min())
        tail = rates[-max(2, n_samples // 4):]
        resid.append(float((tail.max() - tail.min()) / tail.min()))
    vals = np.array(list(per_block.values()))
    c = float(vals.min())
    spread = float((vals.max() - vals.min()) / vals.min())
    warn = None
    if spread > 0.1:
        warn = f"per-block constants differ by {spread:.1%} (> 10%)"
        warnings.warn(warn, RuntimeWarning, stacklevel=2)
    return DecayFit(c, per_block, spread, max(resid), warn)


def poincare_ratio(u, a, R1, p=2.0, a_bar=None):
    """``a_bar R1^2 (p-1)/p^2 int |u|^p`` over ``-int div(a grad u) |u|^{p-2} u``.

    ``u`` must have its spectrum in ``|xi| >= R1``; ``a_bar`` defaults to min a.
    The value bounds the constant ``1/c`` for this sample.
    """
    p = check_exponent(p)
    if not 1 < p < math.inf:
        raise HypothesisError("1 < p < inf", f"p = {p}")
    if u.rank != 0:
        raise ValueError("poincare_ratio takes a scalar u")
    if np.any(u.hat[u.grid.kmag < R1 * (1 - 1e-12)] != 0):
        raise HypothesisError("supp u_hat in |xi| >= R1", "u has modes below R1")
    a_min = float(a.values.min())
    if not a_min > 0:
        raise HypothesisError("a >= a_bar > 0", f"min a = {a_min}")
    a_bar = a_min if a_bar is None else a_bar
    if a_bar > a_min:
        raise HypothesisError("a >= a_bar", f"a_bar = {a_bar} exceeds min a = {a_min}")
    flux = divergence(multiply(a, gradient(u))).values
    uv = u.values
    rhs = -float(np.mean(flux * np.abs(uv) ** (p - 2) * uv))
    lhs = a_bar * R1**2 * (p - 1) / p**2 * float(np.mean(np.abs(uv) ** p))
    if not rhs > 0:
        raise ValueError(f"degenerate right-hand side {rhs:.3e}")
    return lhs / rhs


# momentum estimates

VARIANTS = ("a1", "a2", "b", "end")


def check_momentum_hypothesis(variant, s, p, dim):
    p = check_exponent(p)
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if variant == "end":
        if not 2 <= p <= dim:
            raise HypothesisError("2 <= p <= N", f"p = {p}, N = {dim}")
        return
    lower = -dim * min(inv(p), 1.0 - inv(p)) + 1.0
    if variant == "a2":
        if not 1 < p < math.inf:
            raise HypothesisError("1 < p < inf", f"p = {p}")
        upper, name = dim * inv(p) + 1.0, "s <= N/p + 1"
    else:
        if not 1 < p <= dim:
            raise HypothesisError("1 < p <= N", f"p = {p}, N = {dim}")
        upper, name = dim * inv(p), "s <= N/p"
    if not s > lower:
        raise HypothesisError("s > 1 - N min(1/p, 1/p')", f"s = {s}, bound {lower:.4g}")
    if not s <= upper:
        raise HypothesisError(name, f"s = {s}, bound {upper:.4g}")


@dataclass
class MomentumReport:
    variant: str
    s: float
    p: float
    q: float
    lhs: float
    rhs: float
    ratio: float
    A: float
    exponent: int
    terms: dict

    def as_dict(self):
        return dict(variant=self.variant, s=self.s, p=self.p, q=self.q, lhs=self.lhs,
                    rhs=self.rhs, ratio=self.ratio, A=self.A, exponent=self.exponent,
                    terms=dict(self.terms))


def _cl(series, s, q, r=1.0, weights=None, T=None):
    sub = series if T is None else series.upto(T)
    per = time_lq(sub.block_norms, sub.times, q)
    w = _scales(sub.j_min, per.size, s)
    if weights is not None:
        w = w * _weights_for(weights, sub.j_min, per.size, sub.horizon)
    return _lr_sum(w * per, r)


def momentum_estimate_check(run, s, p=None, q=1.0, variant="a1", wp=None, exponent=None):
    """Evaluate both sides of the linear momentum estimate; ``ratio`` is the minimal C.

    Variants: ``a1`` (density perturbation in B^{N/p}), ``a2`` (in B^{N/p+1}),
    ``b`` (weighted right-hand side, unweighted smoothing norms on the left)
    and ``end`` (the B^{-N/p}_{p,inf} endpoint, where ``s`` is ignored).
    ``exponent`` in ``A(T) = (1 + ||rho||_inf)^exponent`` defaults to
    ``floor(N/p) + 2``.
    """
    p = run.series_u.params.p if p is None else check_exponent(p)
    if p != run.series_u.params.p:
        raise ValueError("run recorded block norms for a different p")
    q = check_exponent(q, "q")
    dim = run.problem.u0.grid.dim
    check_momentum_hypothesis(variant, s, p, dim)
    exponent = int(math.floor(dim * inv(p)) + 2) if exponent is None else int(exponent)
    rho_sup = float(run.rho_sup.max()) if run.rho_sup is not None else 0.0
    A = (1.0 + rho_sup) ** exponent
    weights = None
    if variant in ("b", "end"):
        weights = wp.weights if isinstance(wp, WeightedBesovParams) else (wp or WeightSequence())
    su, sG, srho = run.series_u, run.series_G, run.rho_series
    Np = dim * inv(p)

    def rho_term(index, w=None):
        if srho is None:
            return 0.0
        return _cl(srho, index, math.inf, 1.0, w)

    if variant in ("a1", "a2"):
        lhs = _cl(su, s - 1 + 2 * inv(q), q)
        u0 = _cl(su.upto(0.0), s - 1, math.inf)
        G = _cl(sG, s - 1, 1.0)
        if variant == "a1":
            pert = A * rho_term(Np) * _cl(su, s + 1, 1.0)
        else:
            pert = A * rho_term(Np + 1) * _cl(su, s, 1.0)
    elif variant == "b":
        lhs = _cl(su, s + 1, 1.0) + _cl(su, s, 2.0)
        T = su.horizon
        u0 = _lr_sum(_scales(su.j_min, su.block_norms.shape[1], s - 1)
                     * _weights_for(weights, su.j_min, su.block_norms.shape[1], T) * su.block_norms[0], 1.0)
        G = _cl(sG, s - 1, 1.0, 1.0, weights)
        pert = A * rho_term(Np, weights) * _cl(su, s + 1, 1.0)
    else:
        lhs = _cl(su, -Np + 2, 1.0, math.inf) + _cl(su, -Np + 1, 2.0, math.inf)
        u0 = _lr_sum(_scales(su.j_min, su.block_norms.shape[1], -Np) * su.block_norms[0], math.inf)
        G = _cl(sG, -Np, 1.0, math.inf, weights)
        pert = A * rho_term(Np, weights) * _cl(su, -Np + 2, 1.0, math.inf)
    rhs = u0 + G + pert
    if not rhs > 0:
        raise ValueError(f"degenerate right-hand side ({rhs})")
    return MomentumReport(variant, s, p, q, float(lhs), float(rhs), float(lhs / rhs), A, exponent,
                          dict(u0=float(u0), G=float(G), perturbation=float(pert)))
