"""Compressible Navier-Stokes in density-fluctuation form, with hypothesis monitoring.

The unknowns are ``a = (rho - rho_bar0) / rho_bar0`` and the velocity ``u``:

    da/dt + div((1 + a) u) = 0
    du/dt - div(mu_bar grad u) - grad((lam_bar + mu_bar) div u) = G(a, u)

with ``mu_bar = mu(rho)/rho``, ``lam_bar = lam(rho)/rho`` and

    G = -u.grad u - (rho_bar0 P'(rho)/rho) grad a
        + (mu/rho^2) grad rho . grad u + ((mu + lam)/rho^2) grad rho div u.

A step is a Strang splitting: half a step of the density equation with the
velocity frozen (Shu-Osher RK3), a full momentum step with the coefficients
and the density frozen (integrating-factor RK3, see ``linear_solvers``),
and another density half step.  The density update is written as a
divergence, so the mean density is conserved to roundoff.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
from scipy.integrate import quad

from ._validation import HypothesisError, check_exponent, inv, same_grid
from .estimate_lab import FieldRecipe, generate
from .fourier_field import (
    Field,
    Grid,
    advect,
    divergence,
    dot,
    gradient,
    hat_from_padded,
    lp_norm,
    multiply,
    padded_from_hat,
    read_binary,
    write_binary,
)
from .linear_solvers import (
    CFLError,
    MomentumProblem,
    MomentumRun,
    TransportProblem,
    TransportRun,
    momentum_estimate_check,
    momentum_step,
    ssp_rk3_step,
    transport_estimate_check,
)
from .littlewood_paley import BesovParams, NormSeries, _lr_sum, _scales, block_norms, build_partition, time_lq
from .weighted_besov import WeightedBesovParams, WeightSequence, _weights_for

__all__ = [
    "MaterialLaws",
    "shallow_water_preset",
    "reformulate",
    "source_F",
    "source_G",
    "mollify_data",
    "HypothesisStatus",
    "BudgetConstants",
    "BudgetError",
    "Predicate",
    "SolverState",
    "initial_state",
    "step",
    "SchemeConfig",
    "SchemeRun",
    "run_scheme",
    "cauchy_family",
    "CauchyReport",
    "UniquenessReport",
    "uniqueness_distance",
    "osgood_integral",
    "log_interpolation_ratio",
    "load_config",
    "Setup",
]


# material laws

def _poly(coeffs):
    return np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class MaterialLaws:
    """Viscosities ``mu(rho)``, ``lam(rho)`` and pressure ``P(rho)`` with derivatives.

    Ellipticity ``mu > 0`` and ``lam + 2 mu > 0`` is checked on
    ``[c0/2, rho_max]`` at construction.  ``coefficients`` holds the
    polynomial coefficients when the laws came from ``polynomial``.
    """

    mu: Callable
    lam: Callable
    P: Callable
    dmu: Callable
    dlam: Callable
    dP: Callable
    rho_bar0: float = 1.0
    c0: float = 0.5
    rho_max: Optional[float] = None
    name: str = "custom"
    dim_hint: Optional[int] = None
    coefficients: Optional[dict] = None

    def __post_init__(self):
        if not (self.rho_bar0 > 0 and math.isfinite(self.rho_bar0)):
            raise ValueError(f"reference density must be positive, got {self.rho_bar0}")
        if not (0 < self.c0 <= self.rho_bar0):
            raise ValueError(f"density floor c0 must lie in (0, rho_bar0], got {self.c0}")
        if self.rho_max is None:
            object.__setattr__(self, "rho_max", 4.0 * self.rho_bar0)
        rho = np.linspace(self.c0 / 2, self.rho_max, 513)
        mu = np.broadcast_to(np.asarray(self.mu(rho), float), rho.shape)
        nu = np.broadcast_to(np.asarray(self.lam(rho), float), rho.shape) + 2 * mu
        if mu.min() <= 0 or nu.min() <= 0:
            raise HypothesisError(
                "mu > 0 and lam + 2 mu > 0",
                f"min mu = {mu.min():.4g}, min(lam + 2 mu) = {nu.min():.4g} on [{self.c0 / 2:.3g}, {self.rho_max:.3g}]",
            )

    @classmethod
    def polynomial(cls, mu, lam, P, rho_bar0=1.0, c0=0.5, rho_max=None, name="polynomial", dim_hint=None):
        """Laws given by ascending polynomial coefficients in rho."""
        pm, pl, pp = _poly(mu), _poly(lam), _poly(P)
        coeffs = {"mu": [float(x) for x in pm.coef], "lam": [float(x) for x in pl.coef],
                  "P": [float(x) for x in pp.coef]}
        return cls(pm, pl, pp, pm.deriv(), pl.deriv(), pp.deriv(), rho_bar0, c0, rho_max, name,
                   dim_hint, coeffs)

    def mu_bar(self, rho):
        return np.asarray(self.mu(rho), float) / rho

    def lam_bar(self, rho):
        return np.asarray(self.lam(rho), float) / rho

    def as_dict(self):
        return dict(name=self.name, rho_bar0=self.rho_bar0, c0=self.c0, rho_max=self.rho_max,
                    coefficients=self.coefficients)


def shallow_water_preset(rho_bar0=1.0, c0=0.5, rho_max=None):
    """``mu = rho``, ``lam = 0``, ``P = rho^2``: so ``mu_bar = 1``, ``lam_bar = 0``."""
    return MaterialLaws.polynomial([0.0, 1.0], [0.0], [0.0, 0.0, 1.0], rho_bar0, c0, rho_max,
                                   name="shallow_water", dim_hint=2)


def _warn_dim(laws, grid):
    if laws.dim_hint is not None and grid.dim != laws.dim_hint:
        warnings.warn(f"{laws.name} laws are meant for dimension {laws.dim_hint}, grid has {grid.dim}",
                      stacklevel=3)


def reformulate(rho0, u0, laws):
    """``a0 = (rho0 - rho_bar0) / rho_bar0``; rejects densities below ``c0``."""
    same_grid(rho0, u0)
    if rho0.rank != 0 or u0.rank != 1:
        raise ValueError("need a scalar density and a vector velocity")
    low = float(rho0.values.min())
    if low < laws.c0:
        raise HypothesisError("rho0 >= c0", f"min rho0 = {low:.4g}, c0 = {laws.c0}")
    _warn_dim(laws, rho0.grid)
    return (rho0 - laws.rho_bar0) / laws.rho_bar0, u0


def _nodal(fn, a, laws):
    # fn(rho) sampled on the 3/2 grid and projected back
    grid = a.grid
    rho = laws.rho_bar0 * (1.0 + padded_from_hat(grid, a.hat))
    vals = np.broadcast_to(np.asarray(fn(rho), float), rho.shape)
    return Field.from_spectral(grid, hat_from_padded(grid, vals), hermitian=True)


def source_F(a, u):
    """``-(1 + a) div u``."""
    d = divergence(u)
    return -d - multiply(a, d)


def source_G(a, u, laws):
    """Right-hand side of the velocity equation; pressure enters as ``-(rho_bar0 P'/rho) grad a``."""
    rb = laws.rho_bar0
    grad_a = gradient(a)
    out = -advect(u, u)
    out = out - multiply(_nodal(lambda r: rb * np.asarray(laws.dP(r), float) / r, a, laws), grad_a)
    Gu = gradient(u)
    # (grad rho . grad u)^i = sum_j d_j rho d_j u^i
    visc = Field.stack([dot(grad_a, Gu[i]) for i in range(u.grid.dim)]) * rb
    out = out + multiply(_nodal(lambda r: np.asarray(laws.mu(r), float) / r**2, a, laws), visc)
    bulk = multiply(divergence(u), grad_a) * rb
    mix = _nodal(lambda r: (np.asarray(laws.mu(r), float) + np.asarray(laws.lam(r), float)) / r**2, a, laws)
    return out + multiply(mix, bulk)


def _density_rhs(u):
    # -div((1 + a) u) with u frozen
    grid = u.grid

    def rhs(ahat, t):
        a = Field.from_spectral(grid, ahat, hermitian=True)
        return -divergence(u + multiply(a, u)).hat

    return rhs


# data mollification

def mollify_data(a0, u0, n, part, laws):
    """``(S_{n + shift} a0, S_n u0, shift)`` with the least shift keeping density >= 3/4 c0."""
    same_grid(a0, u0)
    top = part.j_max + 1
    if not part.j_min <= n <= top:
        raise ValueError(f"mollification level {n} outside [{part.j_min}, {top}]")
    un = Field.from_spectral(u0.grid, part.s_multiplier(n)[None] * u0.hat, hermitian=True)
    floor = 0.75 * laws.c0
    for shift in range(0, top - n + 1):
        an = Field.from_spectral(a0.grid, part.s_multiplier(n + shift) * a0.hat, hermitian=True)
        if laws.rho_bar0 * (1.0 + float(an.values.min())) >= floor:
            return an, un, shift
    raise HypothesisError(
        "rho_bar0 (1 + S_{n+shift} a0) >= 3/4 c0",
        f"no shift up to {top - n} works at level {n}; data too rough for this resolution",
    )


# hypothesis monitoring

@dataclass(frozen=True)
class HypothesisStatus:
    """Values behind (H1)-(H4) at one time; the booleans are derived, never stored."""

    t: float
    min_density: float
    density_floor: float
    density_target: float
    min_mu: float
    min_nu: float
    c1: float
    h3_value: float
    h3_budget: float
    h4_a: float
    h4_a_budget: float
    h4_u: float
    h4_u_budget: float

    @property
    def h1(self):
        return self.min_density >= self.density_floor

    @property
    def h2(self):
        return self.min_mu >= self.c1 and self.min_nu >= self.c1

    @property
    def h3(self):
        return self.h3_value <= self.h3_budget

    @property
    def h4(self):
        return self.h4_a <= self.h4_a_budget and self.h4_u <= self.h4_u_budget

    @property
    def healthy(self):
        return self.h1 and self.h2 and self.h3 and self.h4

    def margins(self):
        """Relative slack against the strict targets (positive means the target is met)."""
        def up(value, target):
            # nothing spent counts as full slack, even against a zero budget
            if value <= 0:
                return 1.0
            return 1.0 - value / target if target > 0 else -math.inf

        return dict(
            h1=self.min_density / self.density_target - 1.0,
            h2=min(self.min_mu, self.min_nu) / self.c1 - 1.0,
            h3=up(self.h3_value, 7 / 8 * self.h3_budget),
            h4_a=up(self.h4_a, 7 / 8 * self.h4_a_budget),
            h4_u=up(self.h4_u, 2 / 3 * self.h4_u_budget),
        )

    def row(self):
        m = self.margins()
        return [self.t, int(self.h1), self.min_density, m["h1"], int(self.h2), min(self.min_mu, self.min_nu),
                m["h2"], int(self.h3), self.h3_value, m["h3"], int(self.h4), self.h4_a, m["h4_a"],
                self.h4_u, m["h4_u"]]

    ROW_HEADER = ["t", "h1", "min_density", "h1_margin", "h2", "min_ellipticity", "h2_margin", "h3",
                  "h3_value", "h3_margin", "h4", "h4_a", "h4_a_margin", "h4_u", "h4_u_margin"]


@dataclass(frozen=True)
class Predicate:
    name: str
    lhs: float
    rhs: float
    strict: bool

    @property
    def holds(self):
        return self.lhs < self.rhs if self.strict else self.lhs <= self.rhs * (1 + 1e-12)

    def as_dict(self):
        return dict(name=self.name, lhs=self.lhs, rhs=self.rhs, strict=self.strict, holds=self.holds)


class BudgetError(ValueError):
    """The smallness predicates cannot all hold; ``predicate`` is the first failure."""

    def __init__(self, predicate):
        self.predicate = predicate
        super().__init__(f"budget predicate fails: {predicate.name} ({predicate.lhs:.4g} vs {predicate.rhs:.4g})")


@dataclass
class BudgetConstants:
    """Smallness budget: ``C0 = 4 C1`` and ``A0 = 2 C2 (1 + C0 E0)`` are derived.

    ``a0_w`` and ``u0_w`` are the weighted data norms at ``T_star``;
    ``exponent`` is ``[N/p] + 3``.
    """

    E0: float
    eta: float
    c1: float
    c0: float
    T_star: float
    exponent: int
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    C4: float = 1.0
    a0_w: float = 0.0
    u0_w: float = 0.0
    fitted: bool = False

    @property
    def C0(self):
        return 4.0 * self.C1

    @property
    def A0(self):
        return 2.0 * self.C2 * (1.0 + self.C0 * self.E0)

    def predicates(self):
        E0, eta, C0, A0, m = self.E0, self.eta, self.C0, self.A0, self.exponent
        big = (C0 * E0 + 1.0) ** m
        T = self.T_star
        return [
            Predicate("e^{C1 eta} < 3/2", math.exp(self.C1 * eta), 1.5, True),
            Predicate("(C0 E0 + 1) eta <= E0", (C0 * E0 + 1.0) * eta, E0, False),
            Predicate("C1 (C0 E0 + 1)^m eta <= 1/16", self.C1 * big * eta, 1 / 16, False),
            Predicate("C3 eta <= 1/6", self.C3 * eta, 1 / 6, False),
            Predicate("C3 A0 (1 + C0 E0)^m eta <= 1/6", self.C3 * A0 * big * eta, 1 / 6, False),
            Predicate("C4 (1 + C0 E0) eta < c0/8", self.C4 * (1.0 + C0 * E0) * eta, self.c0 / 8, True),
            Predicate("C1 (C0 E0 + 1)^m T <= 1/16", self.C1 * big * T, 1 / 16, False),
            Predicate("C3 A0 (1 + C0 E0)^m T <= 1/6", self.C3 * A0 * big * T, 1 / 6, False),
            Predicate("||a0||_w <= A0 eta / 12", self.a0_w, A0 * eta / 12, False),
            Predicate("||u0||_w <= eta / (6 C3)", self.u0_w, eta / (6 * self.C3), False),
        ]

    @property
    def first_failure(self):
        for pr in self.predicates():
            if not pr.holds:
                return pr
        return None

    def largest_eta(self):
        """Largest eta allowed by the eta-only predicates (strict ones shaded by 1e-9)."""
        E0, C0, m = self.E0, self.C0, self.exponent
        big = (C0 * E0 + 1.0) ** m
        A0 = self.A0
        shade = 1.0 - 1e-9
        return min(
            math.log(1.5) / self.C1 * shade,
            E0 / (C0 * E0 + 1.0),
            1 / (16 * self.C1 * big),
            1 / (6 * self.C3),
            1 / (6 * self.C3 * A0 * big),
            self.c0 / (8 * self.C4 * (1.0 + C0 * E0)) * shade,
        )

    def as_dict(self):
        d = asdict(self)
        d.update(C0=self.C0, A0=self.A0, predicates=[p.as_dict() for p in self.predicates()])
        fail = self.first_failure
        d["first_failure"] = None if fail is None else fail.name
        return d


# state and one step

class _History:
    """Per-step block norms plus running accumulators for the monitor."""

    NAMES = ("a", "u", "F", "G", "grad_u")

    def __init__(self, part, p):
        self.part = part
        self.p = p
        self.times = []
        self.rows = {k: [] for k in self.NAMES}
        self.grad_u_linf = []
        self.rho_sup = []
        self.mass = []
        self.run_max_a = None
        self.run_max_u = None
        self.int1_u = None
        self.int2_u = None

    def append(self, t, a, u, laws):
        part, p = self.part, self.p
        na, nu = block_norms(a, part, p), block_norms(u, part, p)
        gu = gradient(u)
        rows = dict(a=na, u=nu, F=block_norms(source_F(a, u), part, p),
                    G=block_norms(source_G(a, u, laws), part, p), grad_u=block_norms(gu, part, p))
        if self.times:
            dt = t - self.times[-1]
            prev = self.rows["u"][-1]
            self.int1_u = self.int1_u + 0.5 * dt * (prev + nu)
            self.int2_u = self.int2_u + 0.5 * dt * (prev**2 + nu**2)
            self.run_max_a = np.maximum(self.run_max_a, na)
            self.run_max_u = np.maximum(self.run_max_u, nu)
        else:
            self.int1_u = np.zeros_like(nu)
            self.int2_u = np.zeros_like(nu)
            self.run_max_a, self.run_max_u = na.copy(), nu.copy()
        self.times.append(float(t))
        for k, v in rows.items():
            self.rows[k].append(v)
        self.grad_u_linf.append(lp_norm(gu, math.inf))
        rho = laws.rho_bar0 * (1.0 + a.values)
        self.rho_sup.append(float(np.abs(rho).max()))
        self.mass.append(laws.rho_bar0 * (1.0 + a.mean))

    def series(self, name, upto=None):
        n = len(self.times) if upto is None else upto
        rows = np.array(self.rows[name][:n]).reshape(n, self.part.n_blocks)
        return NormSeries(np.array(self.times[:n]), rows, self.part.j_min, BesovParams(0.0, self.p))


@dataclass
class _Settings:
    part: object
    p: float
    weights: WeightSequence
    c1: float
    budget: BudgetConstants
    cfl: float = 0.5


@dataclass
class SolverState:
    """Solution at time ``t`` with its norm history and latest monitor reading.

    ``norm_history`` is shared by every state of one run (it is appended to,
    never copied).  ``first_breach`` is the first time the monitor failed.
    """

    a: Field
    u: Field
    t: float
    norm_history: _History
    monitor: HypothesisStatus
    settings: _Settings = field(repr=False)
    first_breach: Optional[float] = None

    @property
    def healthy(self):
        return self.monitor.healthy


def _monitor(hist, t, a, laws, settings):
    part, p = settings.part, settings.p
    dim = a.grid.dim
    Np = dim * inv(p)
    n = part.n_blocks
    rho = laws.rho_bar0 * (1.0 + padded_from_hat(a.grid, a.hat))
    rho_min = min(float(rho.min()), laws.rho_bar0 * (1.0 + float(a.values.min())))
    mu = laws.mu_bar(rho)
    nu = laws.lam_bar(rho) + 2 * mu
    sc = lambda s: _scales(part.j_min, n, s)
    h3 = float(np.sum(sc(Np) * hist.run_max_a) + np.sum(sc(Np - 1) * hist.run_max_u))
    om = _weights_for(settings.weights, part.j_min, n, t)
    h4a = float(np.sum(sc(Np) * om * hist.run_max_a))
    h4u = float(np.sum(sc(Np + 1) * hist.int1_u) + np.sum(sc(Np) * np.sqrt(hist.int2_u)))
    b = settings.budget
    return HypothesisStatus(
        t=float(t), min_density=rho_min, density_floor=laws.c0 / 2, density_target=5 / 8 * laws.c0,
        min_mu=float(np.min(mu)), min_nu=float(np.min(nu)), c1=settings.c1,
        h3_value=h3, h3_budget=b.C0 * b.E0, h4_a=h4a, h4_a_budget=b.A0 * b.eta,
        h4_u=h4u, h4_u_budget=b.eta,
    )


def _data_size(a0, u0, part, p):
    Np = a0.grid.dim * inv(p)
    na, nu = block_norms(a0, part, p), block_norms(u0, part, p)
    n = part.n_blocks
    return float(np.sum(_scales(part.j_min, n, Np) * na) + np.sum(_scales(part.j_min, n, Np - 1) * nu))


def initial_state(a0, u0, laws, p=2.0, part=None, c=1.0, c1=None, eta=None, cfl=0.5):
    """State at t = 0 with a default budget (all fitted constants equal to 1).

    ``c1`` defaults to half the smallest ellipticity constant of the data and
    ``eta`` to the largest value the eta-only predicates allow.
    """
    same_grid(a0, u0)
    if a0.rank != 0 or u0.rank != 1:
        raise ValueError("need a scalar a and a vector u")
    p = check_exponent(p)
    grid = a0.grid
    _warn_dim(laws, grid)
    part = build_partition(grid) if part is None else part
    rho = laws.rho_bar0 * (1.0 + a0.values)
    if c1 is None:
        c1 = 0.5 * float(min(np.min(laws.mu_bar(rho)), np.min(laws.lam_bar(rho) + 2 * laws.mu_bar(rho))))
    budget = BudgetConstants(E0=_data_size(a0, u0, part, p), eta=0.0, c1=float(c1), c0=laws.c0, T_star=0.0,
                             exponent=int(math.floor(grid.dim * inv(p)) + 3))
    budget.eta = budget.largest_eta() if eta is None else float(eta)
    settings = _Settings(part, p, WeightSequence.for_partition(part, c=c), float(c1), budget, cfl)
    hist = _History(part, p)
    hist.append(0.0, a0, u0, laws)
    mon = _monitor(hist, 0.0, a0, laws, settings)
    return SolverState(a0, u0, 0.0, hist, mon, settings, None if mon.healthy else 0.0)


def _check_cfl(u, dt, cfl):
    speed = float(np.sqrt(np.sum(u.values**2, axis=0)).max())
    if speed > 0:
        limit = cfl * u.grid.spacing / speed
        if dt > limit * (1 + 1e-12):
            raise CFLError(dt, limit)


def step(state, laws, dt):
    """Advance by ``dt``; the returned state carries the new monitor reading.

    A monitor failure does not stop anything: the state is returned with
    ``healthy == False`` and ``first_breach`` set.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"time step must be positive, got {dt}")
    settings = state.settings
    _check_cfl(state.u, dt, settings.cfl)
    grid = state.a.grid
    t = state.t
    ahat = ssp_rk3_step(state.a.hat, t, 0.5 * dt, _density_rhs(state.u))
    a_half = Field.from_spectral(grid, ahat, hermitian=True)
    mu = _nodal(laws.mu_bar, a_half, laws)
    lam = _nodal(laws.lam_bar, a_half, laws)

    def source(uh, tau):
        return source_G(a_half, Field.from_spectral(grid, uh, hermitian=True), laws).hat

    uhat = momentum_step(grid, state.u.hat, t, dt, lambda tau: (mu, lam), source)
    u_new = Field.from_spectral(grid, uhat, hermitian=True)
    ahat = ssp_rk3_step(ahat, t + 0.5 * dt, 0.5 * dt, _density_rhs(u_new))
    a_new = Field.from_spectral(grid, ahat, hermitian=True)
    t_new = t + dt
    hist = state.norm_history
    hist.append(t_new, a_new, u_new, laws)
    mon = _monitor(hist, t_new, a_new, laws, settings)
    breach = state.first_breach
    if breach is None and not mon.healthy:
        breach = t_new
    return SolverState(a_new, u_new, t_new, hist, mon, settings, breach)


# full runs

@dataclass
class SchemeConfig:
    T: float = 0.1
    dt: float = 1e-3
    p: float = 2.0
    n: Optional[int] = None
    sample_every: int = 1
    c: float = 1.0
    c1: Optional[float] = None
    eta: Optional[float] = None
    cfl: float = 0.5
    exponent: Optional[int] = None
    strict_budget: bool = False

    def as_dict(self):
        return asdict(self)


@dataclass
class SchemeRun:
    """Result of ``run_scheme``: sampled snapshots, monitor trace and fitted budget."""

    grid: Grid
    laws: MaterialLaws
    config: SchemeConfig
    times: np.ndarray
    a: List[Field]
    u: List[Field]
    trace: List[HypothesisStatus]
    budget: BudgetConstants
    n_shift: Optional[int]
    first_breach: Optional[float]
    history: _History = field(repr=False)
    fits: dict = field(default_factory=dict)
    symbols: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.a[-1], self.u[-1]

    @property
    def mass(self):
        return np.array(self.history.mass)

    @property
    def mass_drift(self):
        m = self.mass
        return float(np.max(np.abs(m - m[0])) / abs(m[0]))

    @property
    def min_density(self):
        return float(min(s.min_density for s in self.trace))

    def norm_series(self, name):
        return self.history.series(name)

    def manifest(self, timestamp=True):
        out = dict(
            grid=dict(dim=self.grid.dim, resolution=self.grid.resolution, period=self.grid.period),
            laws=self.laws.as_dict(),
            config=self.config.as_dict(),
            n_shift=self.n_shift,
            steps=len(self.history.times) - 1,
            first_breach=self.first_breach,
            healthy_horizon=self.budget.T_star,
            min_density=self.min_density,
            mass_drift=self.mass_drift,
            budget=self.budget.as_dict(),
            fits=self.fits,
            symbols=self.symbols,
            final_margins=self.trace[-1].margins(),
        )
        if timestamp:
            out["created"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        return out

    def write(self, out_dir, timestamp=True):
        """Manifest JSON, final snapshots, norm-series CSVs and the hypothesis trace."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(_clean(self.manifest(timestamp)), fh, indent=2, sort_keys=True)
        write_binary(self.a[-1], os.path.join(out_dir, "a_final.bin"))
        write_binary(self.u[-1], os.path.join(out_dir, "u_final.bin"))
        for name in ("a", "u"):
            self.history.series(name).to_csv(os.path.join(out_dir, f"norms_{name}.csv"))
        with open(os.path.join(out_dir, "hypothesis_trace.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HypothesisStatus.ROW_HEADER)
            for s in self.trace:
                w.writerow([repr(float(x)) if isinstance(x, float) else x for x in s.row()])
        return out_dir


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _fit_constants(state, laws, a0, u0, hist, settings, T_star, exponent):
    """Fit C1..C4 from the linear checkers applied to the nonlinear run (floored at 1)."""
    grid = a0.grid
    p = settings.p
    Np = grid.dim * inv(p)
    n = len(hist.times)
    if n < 2:
        return dict(C1=1.0, C2=1.0, C3=1.0, C4=1.0)
    times = np.array(hist.times)
    tr = TransportRun(TransportProblem(a0, T=times[-1]), times, [], hist.series("a"), hist.series("F"),
                      hist.series("grad_u"), np.array(hist.grad_u_linf), float(times[1] - times[0]), n - 1)
    fits = {}
    fits["transport"] = transport_estimate_check(tr, Np, p).min_C
    fits["transport_weighted"] = transport_estimate_check(tr, Np, p, weighted=True,
                                                          wp=settings.weights).min_C
    rho_series = NormSeries(times, laws.rho_bar0 * np.array(hist.rows["a"]), settings.part.j_min,
                            BesovParams(0.0, p))
    mr = MomentumRun(MomentumProblem(u0, mu_bar=Field.zeros(grid) + 1.0), times, [], hist.series("u"),
                     hist.series("u"), hist.series("u"), hist.series("G"), rho_series,
                     np.array(hist.rho_sup), times, np.zeros(n), float(times[1] - times[0]), n - 1)
    for key, variant in (("momentum_a1", "a1"), ("momentum_b", "b")):
        try:
            fits[key] = momentum_estimate_check(mr, Np, p, 1.0, variant, wp=settings.weights,
                                                exponent=exponent).ratio
        except ValueError:
            # zero velocity and source: nothing to fit
            fits[key] = 0.0
    h4u = state.monitor.h4_u
    drift = float(np.max(np.abs(np.array(hist.rho_sup) - hist.rho_sup[0])))
    fits["density_drift"] = drift
    b = settings.budget
    denom = (1.0 + b.C0 * b.E0) * h4u
    fits["density"] = drift / denom if denom > 0 else 0.0
    finite = lambda x: x if math.isfinite(x) else 1e300
    return dict(
        fits=fits,
        C1=max(1.0, finite(fits["transport"]), finite(fits["momentum_a1"])),
        C2=max(1.0, finite(fits["transport_weighted"])),
        C3=max(1.0, finite(fits["momentum_b"])),
        C4=max(1.0, fits["density"]),
    )


def _weighted_data(a0, u0, part, p, weights, T):
    Np = a0.grid.dim * inv(p)
    n = part.n_blocks
    om = _weights_for(weights, part.j_min, n, T)
    aw = _lr_sum(_scales(part.j_min, n, Np) * om * block_norms(a0, part, p), 1.0)
    uw = _lr_sum(_scales(part.j_min, n, Np - 1) * om * block_norms(u0, part, p), 1.0)
    return aw, uw


def run_scheme(a0, u0, laws, config=None, part=None):
    """Mollify (when ``config.n`` is set), integrate to ``config.T`` and fit the budget.

    The run always reaches ``T``; ``budget.T_star`` is the last sample time
    up to which every hypothesis held, and ``first_breach`` the first time
    one failed.  With ``strict_budget`` a failing predicate of the initial
    (unfitted) budget raises ``BudgetError`` before any step is taken.
    """
    config = SchemeConfig() if config is None else config
    grid = a0.grid
    part = build_partition(grid) if part is None else part
    n_shift = None
    if config.n is not None:
        a0, u0, n_shift = mollify_data(a0, u0, config.n, part, laws)
    state = initial_state(a0, u0, laws, config.p, part, config.c, config.c1, config.eta, config.cfl)
    settings = state.settings
    budget = settings.budget
    steps = max(1, math.ceil(config.T / config.dt - 1e-9))
    dt = config.T / steps
    budget.T_star = dt
    budget.a0_w, budget.u0_w = _weighted_data(a0, u0, part, config.p, settings.weights, dt)
    if config.strict_budget and budget.first_failure is not None:
        raise BudgetError(budget.first_failure)
    sample = max(1, int(config.sample_every))
    times, a_snaps, u_snaps, trace = [0.0], [a0], [u0], [state.monitor]
    T_star = 0.0 if not state.healthy else None
    for k in range(steps):
        state = step(state, laws, dt)
        if T_star is None and not state.healthy:
            T_star = state.t - dt
        trace.append(state.monitor)
        if (k + 1) % sample == 0 or k + 1 == steps:
            times.append(state.t)
            a_snaps.append(state.a)
            u_snaps.append(state.u)
    T_star = state.t if T_star is None else T_star
    exponent = budget.exponent if config.exponent is None else int(config.exponent)
    fit = _fit_constants(state, laws, a0, u0, state.norm_history, settings, T_star, exponent)
    fitted = replace(budget, C1=fit["C1"], C2=fit["C2"], C3=fit["C3"], C4=fit["C4"], T_star=T_star,
                     fitted=True)
    fitted.a0_w, fitted.u0_w = _weighted_data(a0, u0, part, config.p, settings.weights, T_star)
    hist = state.norm_history
    tr_V = np.cumsum(np.r_[0.0, np.diff(hist.times)] * np.array(hist.grad_u_linf))
    symbols = dict(V=float(tr_V[-1]), A=float((1.0 + max(hist.rho_sup)) ** exponent), exponent=exponent)
    return SchemeRun(grid, laws, config, np.array(times), a_snaps, u_snaps, trace, fitted, n_shift,
                     state.first_breach, hist, fit.get("fits", {}), symbols)


@dataclass
class CauchyReport:
    levels: list
    distances: list
    runs: list = field(repr=False)

    @property
    def decreasing(self):
        d = self.distances
        return all(d[i + 1] < d[i] for i in range(len(d) - 1))

    def as_dict(self):
        return dict(levels=self.levels, distances=self.distances, decreasing=self.decreasing)


def cauchy_family(a0, u0, laws, config, levels, part=None):
    """Runs at successive mollification levels; ``distances[i]`` is the sup distance at T
    between the solutions at ``levels[i]`` and ``levels[i + 1]``."""
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("need at least two mollification levels")
    part = build_partition(a0.grid) if part is None else part
    runs = [run_scheme(a0, u0, laws, replace(config, n=n), part) for n in levels]
    dist = []
    for r1, r2 in zip(runs, runs[1:]):
        (a1, v1), (a2, v2) = r1.final, r2.final
        dist.append(max(lp_norm(a1 - a2, math.inf), lp_norm(v1 - v2, math.inf)))
    return CauchyReport(levels, dist, runs)


# uniqueness diagnostics

def osgood_integral(C_T, eps):
    """``int_eps^1 dr / (r log(e + C_T / r))`` computed in ``x = log(1/r)``."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if C_T < 0:
        raise ValueError("C_T must be nonnegative")
    X = -math.log(eps)
    if X == 0:
        return 0.0
    if C_T == 0:
        return X

    def integrand(x):
        # log(e + C e^x) without overflow
        z = math.log(C_T) + x
        return 1.0 / (z + math.log1p(math.e * math.exp(-z)) if z > 0 else math.log(math.e + math.exp(z)))

    val, _ = quad(integrand, 0.0, X, limit=400)
    return float(val)


def _block_time_l1(rows, times):
    if len(times) < 2:
        return np.zeros(rows.shape[1])
    return np.trapezoid(rows, times, axis=0)


def log_interpolation_ratio(series, s, eps, q=1.0, T=None):
    """Smallest C in ``||f||_{s,1} <= C ||f||_{s,inf}/eps * log(e + (||f||_{s-eps,inf} + ||f||_{s+eps,inf}) / ||f||_{s,inf})``.

    All norms are Chemin-Lerner norms over the series with time exponent
    ``q``.  Returns ``(ratio, lhs, rhs)``; a zero function gives ratio 0.
    """
    if not 0 < eps <= 1:
        raise HypothesisError("0 < eps <= 1", f"eps = {eps}")
    sub = series if T is None else series.upto(T)
    per = time_lq(sub.block_norms, sub.times, check_exponent(q, "q"))
    j0, n = sub.j_min, per.size

    def nrm(sv, r):
        return _lr_sum(_scales(j0, n, sv) * per, r)

    lhs = nrm(s, 1.0)
    mid = nrm(s, math.inf)
    if mid == 0:
        return 0.0, 0.0, 0.0
    rhs = mid / eps * math.log(math.e + (nrm(s - eps, math.inf) + nrm(s + eps, math.inf)) / mid)
    return float(lhs / rhs), float(lhs), float(rhs)


@dataclass
class UniquenessReport:
    times: np.ndarray
    da_norm: np.ndarray
    du_norm: np.ndarray
    p: float
    C_T: float
    log_ratio: float
    osgood: dict
    growth: float

    @property
    def osgood_diverges(self):
        vals = list(self.osgood.values())
        return all(b > a for a, b in zip(vals, vals[1:]))

    def as_dict(self):
        return dict(times=self.times.tolist(), da_norm=self.da_norm.tolist(), du_norm=self.du_norm.tolist(),
                    p=self.p, C_T=self.C_T, log_ratio=self.log_ratio,
                    osgood={f"{k:.0e}": v for k, v in self.osgood.items()}, growth=self.growth,
                    osgood_diverges=self.osgood_diverges)


def uniqueness_distance(run1, run2, p=None, eps=0.25, part=None):
    """Distance between two runs: ``delta a`` in B^0_{p,inf} and ``delta u`` in L~^1_t(B^1_{p,inf}).

    ``p`` defaults to the dimension.  ``C_T`` is the sum of the L~^1_T norms
    of ``delta u`` in B^0_{p,inf} and B^2_{p,inf}; the Osgood integral is
    reported for eps = 1e-1 ... 1e-20.  ``growth`` is the largest ratio of
    the combined distance to its initial value (1 when both vanish).
    """
    if run1.grid != run2.grid:
        raise ValueError("runs live on different grids")
    if run1.laws.as_dict() != run2.laws.as_dict():
        raise ValueError("runs use different material laws")
    if len(run1.times) != len(run2.times) or not np.allclose(run1.times, run2.times, rtol=0, atol=1e-12):
        raise ValueError("runs were sampled at different times")
    grid = run1.grid
    p = float(grid.dim) if p is None else check_exponent(p)
    part = build_partition(grid) if part is None else part
    times = np.asarray(run1.times)
    da_rows = np.array([block_norms(x - y, part, p) for x, y in zip(run1.a, run2.a)])
    du_rows = np.array([block_norms(x - y, part, p) for x, y in zip(run1.u, run2.u)])
    n = part.n_blocks
    da = da_rows.max(axis=1)
    du = np.zeros(len(times))
    for i in range(1, len(times)):
        du[i] = float(np.max(_scales(part.j_min, n, 1.0) * _block_time_l1(du_rows[: i + 1], times[: i + 1])))
    series = NormSeries(times, du_rows, part.j_min, BesovParams(0.0, p))
    ratio, _, _ = log_interpolation_ratio(series, 1.0, eps, q=1.0)
    l1 = _block_time_l1(du_rows, times)
    C_T = float(np.max(_scales(part.j_min, n, 0.0) * l1) + np.max(_scales(part.j_min, n, 2.0) * l1))
    osg = {10.0**-k: osgood_integral(C_T, 10.0**-k) for k in range(1, 21)}
    size = da_rows.sum(axis=1) + du_rows.sum(axis=1)
    growth = float(size.max() / size[0]) if size[0] > 0 else (1.0 if size.max() == 0 else math.inf)
    return UniquenessReport(times, da, du, p, C_T, ratio, osg, growth)


# configuration files

@dataclass
class Setup:
    grid: Grid
    laws: MaterialLaws
    a0: Field
    u0: Field
    config: SchemeConfig
    source: dict


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _modes(text, dim):
    out = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        vals = _floats(chunk)
        k = tuple(int(v) for v in vals[:dim])
        rest = vals[dim:]
        entry = (k, rest[0], rest[1] if len(rest) > 1 else 0.0)
        if len(rest) > 2:
            entry = entry + (int(rest[2]),)
        out.append(entry)
    return tuple(out)


def load_config(path):
    """Read an INI file with sections [grid], [laws], [data], [run] and [budget].

    [laws] takes ``preset = shallow_water`` or polynomial coefficient lists
    ``mu``, ``lam``, ``P`` (ascending powers).  [data] ``kind`` is
    ``packets`` (``seed``, ``j``, ``amplitude_a``, ``amplitude_u``), ``modes``
    (``modes_a`` and ``modes_u`` as ``k1 k2 amp phase [component]`` entries
    separated by ``;``) or ``file`` (``file_a``, ``file_u`` binary snapshots).
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    g = cp["grid"] if cp.has_section("grid") else {}
    grid = Grid(int(g.get("dim", 2)), int(g.get("resolution", 64)), float(g.get("period", 2 * math.pi)))
    lw = cp["laws"] if cp.has_section("laws") else {}
    rb, c0 = float(lw.get("rho_bar0", 1.0)), float(lw.get("c0", 0.5))
    rho_max = float(lw["rho_max"]) if "rho_max" in lw else None
    preset = lw.get("preset", "shallow_water" if "mu" not in lw else "")
    if preset == "shallow_water":
        laws = shallow_water_preset(rb, c0, rho_max)
    elif preset:
        raise ValueError(f"unknown laws preset {preset!r}")
    else:
        laws = MaterialLaws.polynomial(_floats(lw["mu"]), _floats(lw.get("lam", "0")), _floats(lw["P"]),
                                       rb, c0, rho_max)
    d = cp["data"] if cp.has_section("data") else {}
    kind = d.get("kind", "packets")
    base = os.path.dirname(os.path.abspath(path))
    if kind == "packets":
        seed, j = int(d.get("seed", 0)), int(d.get("j", 2))
        aa, au = float(d.get("amplitude_a", 0.01)), float(d.get("amplitude_u", 0.01))
        a0 = generate(FieldRecipe(seed=seed, amplitude=aa, j=j, octaves=0), grid)
        u0 = generate(FieldRecipe(seed=seed + 1, amplitude=au, j=j, octaves=0, rank=1), grid)
    elif kind == "modes":
        a0 = generate(FieldRecipe(spectrum="multimode", modes=_modes(d.get("modes_a", ""), grid.dim),
                                  normalize=None), grid) if d.get("modes_a", "").strip() else Field.zeros(grid)
        u0 = generate(FieldRecipe(spectrum="multimode", modes=_modes(d.get("modes_u", ""), grid.dim),
                                  normalize=None, rank=1), grid) if d.get("modes_u", "").strip() \
            else Field.zeros(grid, 1)
    elif kind == "file":
        a0 = read_binary(os.path.join(base, d["file_a"]))
        u0 = read_binary(os.path.join(base, d["file_u"]))
        if a0.grid != grid or u0.grid != grid:
            raise ValueError("data files do not match the [grid] section")
    else:
        raise ValueError(f"unknown data kind {kind!r}")
    r = cp["run"] if cp.has_section("run") else {}
    b = cp["budget"] if cp.has_section("budget") else {}
    opt = lambda sec, key, cast: cast(sec[key]) if key in sec and str(sec[key]).strip() else None
    config = SchemeConfig(
        T=float(r.get("T", 0.1)), dt=float(r.get("dt", 1e-3)), p=check_exponent(r.get("p", 2.0)),
        n=opt(r, "n", int), sample_every=int(r.get("sample_every", 1)), c=float(r.get("c", 1.0)),
        cfl=float(r.get("cfl", 0.5)), exponent=opt(r, "exponent", int),
        c1=opt(b, "c1", float), eta=opt(b, "eta", float),
        strict_budget=str(b.get("strict", "false")).lower() in ("1", "true", "yes"),
    )
    src = {s: dict(cp[s]) for s in cp.sections()}
    return Setup(grid, laws, a0, u0, config, src)
