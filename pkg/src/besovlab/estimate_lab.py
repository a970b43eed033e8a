"""Random field recipes and inequality-ratio campaigns."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .fourier_field import Field, lp_norm
from .littlewood_paley import ANNULUS, build_partition, plateau

__all__ = [
    "FieldRecipe",
    "generate",
    "packet_window",
    "RatioReport",
    "CampaignConfig",
    "register",
    "registered",
    "campaign",
]

# packet windows sit strictly inside the block annulus [3/4, 8/3]
PACKET_BAND = (0.8, 2.5)


def packet_window(r, band=PACKET_BAND):
    """Smooth bump on ``band``, zero outside, peak value 1."""
    lo, hi = band
    r = np.asarray(r, dtype=float)
    x = 2.0 * (r - lo) / (hi - lo) - 1.0
    out = np.zeros_like(r)
    inside = np.abs(x) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


@dataclass(frozen=True)
class FieldRecipe:
    """Deterministic description of a random field.

    spectrum:
      ``annulus``   random phases on a smooth window inside ``2^j`` times the block annulus;
      ``powerlaw``  ``|f(k)| ~ |k|^-alpha`` with random phases up to ``2^j_cut``;
      ``multimode`` explicit ``(k, amplitude, phase)`` triples;
      ``packets``   localized wave packets at octaves ``j..j+octaves``; raising
                    ``shift`` by one is a dilation by 2 about the cluster centre.
    ``band`` is the radial support of each packet in units of ``2^j``; it must
    sit inside the block annulus.  ``amplitude`` is the sup norm of the samples
    unless ``normalize`` is None.
    """

    seed: int = 0
    spectrum: str = "packets"
    amplitude: float = 1.0
    rank: int = 0
    j: int = 2
    alpha: Optional[float] = None
    j_cut: Optional[int] = None
    modes: Tuple = ()
    n_packets: int = 4
    octaves: int = 1
    spread: float = 2.0
    shift: int = 0
    normalize: Optional[str] = "linf"
    band: Tuple[float, float] = PACKET_BAND

    def scaled(self, octaves):
        return replace(self, shift=self.shift + octaves)

    def as_dict(self):
        d = asdict(self)
        d["modes"] = [list(map(_jsonable, m)) for m in self.modes]
        return d


def _jsonable(x):
    if isinstance(x, (tuple, list)):
        return [_jsonable(y) for y in x]
    return x


def _hermitian(grid, hat):
    flipped = hat
    for ax in range(-grid.dim, 0):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    out = 0.5 * (hat + np.conj(flipped))
    return np.where(grid.nyquist_mask, 0.0, out)


def _annulus(recipe, grid, rng, n_comp):
    scale = 2.0 ** (recipe.j + recipe.shift)
    lo, hi = ANNULUS
    if hi * scale * 0.98 > grid.nyquist * 0.999 or lo * scale < grid.scale:
        raise ValueError(f"annulus at j={recipe.j + recipe.shift} is outside the resolved range")
    w = packet_window(grid.kmag / scale)
    noise = rng.standard_normal((n_comp,) + grid.shape) + 1j * rng.standard_normal((n_comp,) + grid.shape)
    return w * noise


def _powerlaw(recipe, grid, rng, n_comp):
    alpha = grid.dim / 2 + 1 if recipe.alpha is None else recipe.alpha
    cut = 2.0 ** ((recipe.j_cut if recipe.j_cut is not None else recipe.j) + recipe.shift)
    if cut > grid.nyquist:
        raise ValueError("power-law cutoff beyond the resolved range")
    k = grid.kmag
    amp = np.where(k > 0, np.where(k > 0, k, 1.0) ** -alpha, 0.0) * (1.0 - _smoothstep(k / cut))
    phase = rng.uniform(0, 2 * np.pi, (n_comp,) + grid.shape)
    return amp * np.exp(1j * phase)


def _smoothstep(x):
    return 1.0 - plateau(np.asarray(x) * 0.75)


def _multimode(recipe, grid, n_comp):
    hat = np.zeros((n_comp,) + grid.shape, dtype=complex)
    for entry in recipe.modes:
        k, amp, phase = entry[0], entry[1], entry[2]
        comp = int(entry[3]) if len(entry) > 3 else 0
        k = tuple(int(x) for x in np.atleast_1d(k))
        if len(k) != grid.dim or any(abs(x) >= grid.resolution // 2 for x in k):
            raise ValueError(f"mode {k} is not resolved on this grid")
        idx = tuple(x % grid.resolution for x in k)
        hat[(comp,) + idx] += amp * np.exp(1j * phase)
    return hat


def _packets(recipe, grid, rng, n_comp):
    dim = grid.dim
    base = recipe.j + recipe.shift
    lo, hi = recipe.band
    if not ANNULUS[0] <= lo < hi <= ANNULUS[1]:
        raise ValueError(f"packet band {recipe.band} leaves the block annulus {ANNULUS}")
    top = 2.0 ** (base + recipe.octaves) * hi
    if top >= grid.nyquist:
        raise ValueError(f"packets up to |k|={top:.1f} exceed the resolved range")
    if lo * 2.0 ** base < 2 * grid.scale:
        raise ValueError("packets too coarse for the torus")
    # every recipe dilates about the same point, so pairs of fields scale jointly
    centre = np.full(dim, grid.period / 2)
    kmag = grid.kmag
    support = np.nonzero((kmag > lo * 2.0**base) & (kmag < top))
    k = grid.kvec[(slice(None),) + support]
    kabs = kmag[support]
    khat = k / kabs
    sub = np.zeros((n_comp, kabs.size), dtype=complex)
    for _ in range(recipe.n_packets):
        octave = int(rng.integers(0, recipe.octaves + 1))
        amp = rng.standard_normal(n_comp)
        phase = rng.uniform(0, 2 * np.pi)
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        offset = rng.uniform(-recipe.spread, recipe.spread, dim) * 2.0 ** (-base)
        scale = 2.0 ** (base + octave)
        profile = packet_window(kabs / scale, recipe.band) * 0.5 * (1.0 + direction @ khat)
        wave = np.exp(1j * (phase - (centre + offset) @ k))
        sub += amp[:, None] * (scale**-dim * profile * wave)[None]
    hat = np.zeros((n_comp,) + grid.shape, dtype=complex)
    hat[(slice(None),) + support] = sub
    return hat


def generate(recipe, grid):
    """Field described by ``recipe``; identical recipes give identical samples."""
    if recipe.rank not in (0, 1):
        raise ValueError("recipes produce scalar or vector fields")
    n_comp = grid.dim if recipe.rank == 1 else 1
    if recipe.amplitude == 0:
        return Field.zeros(grid, recipe.rank)
    rng = np.random.default_rng(np.random.SeedSequence(int(recipe.seed) & (2**64 - 1)))
    kind = recipe.spectrum
    if kind == "annulus":
        hat = _annulus(recipe, grid, rng, n_comp)
    elif kind == "powerlaw":
        hat = _powerlaw(recipe, grid, rng, n_comp)
    elif kind == "multimode":
        hat = _multimode(recipe, grid, n_comp)
    elif kind == "packets":
        hat = _packets(recipe, grid, rng, n_comp)
    else:
        raise ValueError(f"unknown spectrum {kind!r}")
    hat = _hermitian(grid, hat)
    hat[(slice(None),) + (0,) * grid.dim] = 0.0
    if recipe.rank == 0:
        hat = hat[0]
    f = Field.from_spectral(grid, hat, hermitian=True)
    if recipe.normalize is None:
        return f * recipe.amplitude
    ref = lp_norm(f, math.inf if recipe.normalize == "linf" else 2.0)
    if ref == 0:
        raise ValueError("recipe produced an identically zero field")
    return f * (recipe.amplitude / ref)


# campaigns

@dataclass
class CampaignConfig:
    """Campaign settings; ``grid=None`` uses the lemma's default resolution.

    ``params`` overrides the lemma's default hypothesis parameters.
    """

    grid: Optional[int] = None
    dim: int = 2
    trials: int = 100
    seed: int = 0
    scalings: Tuple[int, ...] = (0, 1)
    drift_bound: float = 0.15
    identity_tol: float = 1e-10
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if len(self.scalings) < 2:
            raise ValueError("campaigns compare at least two dyadic scalings")
        if not self.drift_bound >= 0:
            raise ValueError("drift bound must be nonnegative")


@dataclass
class RatioReport:
    """Outcome of one campaign.

    For estimates the verdict is pass iff ``max_ratio`` is finite and
    ``scale_drift <= drift_bound``; for exact identities ``max_ratio`` is the
    largest relative error and must not exceed ``tolerance``.
    """

    lemma: str
    params: dict
    trials: int
    ratios: Dict[int, list]
    max_ratio: float
    scale_drift: float
    drift_bound: float
    kind: str = "estimate"
    tolerance: float = 1e-10
    statistic: str = "ratio"

    @property
    def per_scale_max(self):
        return {k: max(v) for k, v in self.ratios.items()}

    @property
    def verdict(self):
        if self.kind == "identity":
            return "pass" if self.max_ratio <= self.tolerance else "fail"
        ok = math.isfinite(self.max_ratio) and self.scale_drift <= self.drift_bound
        return "pass" if ok else "fail"

    @property
    def passed(self):
        return self.verdict == "pass"

    def as_dict(self):
        return dict(
            lemma=self.lemma, params=_echo(self.params), trials=self.trials, max_ratio=_num(self.max_ratio),
            scale_drift=_num(self.scale_drift), verdict=self.verdict, kind=self.kind,
            statistic=self.statistic, drift_bound=self.drift_bound, tolerance=self.tolerance,
            per_scale_max={str(k): _num(v) for k, v in self.per_scale_max.items()},
            ratios={str(k): [_num(x) for x in v] for k, v in self.ratios.items()},
        )

    def to_json(self, path=None):
        text = json.dumps(self.as_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def line(self):
        return (f"{self.lemma}: {self.verdict} max_ratio={self.max_ratio:.4g} "
                f"scale_drift={self.scale_drift:.3%} trials={self.trials}")


def _num(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf" if x < 0 else "nan"


def _echo(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, float):
            out[k] = _num(v)
        elif isinstance(v, tuple):
            out[k] = list(v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class _Entry:
    lemma: str
    description: str
    trial: Callable
    validate: Callable
    defaults: dict
    grid: int = 128
    kind: str = "estimate"
    statistic: str = "ratio"


_REGISTRY: Dict[str, _Entry] = {}


def register(lemma, description, defaults=None, grid=128, kind="estimate", statistic="ratio",
             validate=None):
    """Decorator adding ``trial(ctx, seed, shift, params) -> float`` to the campaign registry."""
    def deco(fn):
        if lemma in _REGISTRY:
            raise ValueError(f"lemma id {lemma!r} is already registered")
        _REGISTRY[lemma] = _Entry(lemma, description, fn, validate or (lambda prm, dim: None),
                                  dict(defaults or {}), grid, kind, statistic)
        return fn
    return deco


def registered():
    """``{lemma_id: description}`` in sorted order."""
    return {k: _REGISTRY[k].description for k in sorted(_REGISTRY)}


class _Context:
    """Grid, partition and weights shared by the trials of one campaign."""

    def __init__(self, grid):
        from .weighted_besov import WeightSequence

        self.grid = grid
        self.part = build_partition(grid)
        self.weights = WeightSequence.for_partition(self.part)

    def field(self, seed, shift, rank=0, **kw):
        kw.setdefault("octaves", 0)
        return generate(FieldRecipe(seed=seed, shift=shift, rank=rank, **kw), self.grid)

    def wp(self, shift, T0=0.05, s=0.0, p=2.0):
        from .littlewood_paley import BesovParams
        from .weighted_besov import WeightedBesovParams

        return WeightedBesovParams(BesovParams(s, p), self.weights, T0 / 4.0**shift)


def campaign(lemma, config=None):
    """Run the registered trials at every scaling and aggregate a :class:`RatioReport`.

    Trial ``i`` uses the same seed at every scaling, so each scaling sees the
    dilated copy of the same family.  Hypotheses are validated before any
    trial runs.
    """
    if lemma not in _REGISTRY:
        raise KeyError(f"unknown lemma id {lemma!r}; see registered()")
    from .fourier_field import Grid

    entry = _REGISTRY[lemma]
    config = CampaignConfig() if config is None else config
    params = dict(entry.defaults)
    unknown = set(config.params) - set(params)
    if unknown:
        raise ValueError(f"unknown parameters for {lemma}: {sorted(unknown)}")
    params.update(config.params)
    entry.validate(params, config.dim)
    grid = Grid(config.dim, config.grid or entry.grid)
    ctx = _Context(grid)
    ratios = {}
    for shift in config.scalings:
        ratios[shift] = [float(entry.trial(ctx, config.seed * 1_000_003 + 2 * i, shift, params))
                         for i in range(config.trials)]
    maxes = [max(ratios[s]) for s in config.scalings]
    drift = 0.0
    for a, b in zip(maxes, maxes[1:]):
        if entry.kind == "identity":
            continue
        drift = max(drift, abs(b - a) / a if a > 0 else (0.0 if b == 0 else math.inf))
    echo = dict(params, dim=config.dim, grid=grid.resolution, scalings=tuple(config.scalings),
                seed=config.seed)
    return RatioReport(lemma, echo, config.trials, ratios, max(maxes), drift, config.drift_bound,
                       entry.kind, config.identity_tol, entry.statistic)


# registered checkers

def _hyp(condition, ok, detail=""):
    if not ok:
        from ._validation import HypothesisError

        raise HypothesisError(condition, detail)


def _v_bernstein(prm, dim):
    from ._validation import check_exponent

    p, q = check_exponent(prm["p"]), check_exponent(prm["q"], "q")
    _hyp("p <= q", p <= q, f"p={p}, q={q}")
    _hyp("|gamma| <= 2", sum(prm["gamma"]) <= 2 and len(prm["gamma"]) == dim, f"gamma={prm['gamma']}")


@register("bernstein", "derivative and L^p-L^q bound for annulus-supported fields",
          dict(p=2.0, q=math.inf, gamma=(1, 0), j=3, band=(0.8, 1.95)), grid=256, validate=_v_bernstein)
def _bernstein(ctx, seed, shift, prm):
    from .littlewood_paley import bernstein_ratio

    # packets sit strictly inside the annulus and dilate with the shift; the
    # narrow band lets j = 3 and j = 6 share a 256 grid, and j = 3 keeps the
    # wrap-around of the coarse packets to a few percent in L^1
    f = ctx.field(seed, shift, j=prm["j"], band=tuple(prm["band"]))
    return bernstein_ratio(f, tuple(prm["gamma"]), prm["p"], prm["q"], prm["j"] + shift)


def _v_poincare(prm, dim):
    _hyp("1 < p < inf", 1 < prm["p"] < math.inf, f"p={prm['p']}")


@register("poincare", "high-frequency lower bound for -div(a grad u)|u|^{p-2}u",
          dict(p=2.0, contrast=0.5), validate=_v_poincare)
def _poincare(ctx, seed, shift, prm):
    from .linear_solvers import poincare_ratio

    g = ctx.grid
    u = ctx.field(seed, shift, j=3)
    a = ctx.field(seed + 1, shift, amplitude=prm["contrast"]) + 1.0
    live = np.abs(u.hat) > 0
    R1 = float(g.kmag[live].min())
    return poincare_ratio(u, a, R1, prm["p"])


def _product_trial(law):
    def trial(ctx, seed, shift, prm):
        from .paraproduct import product_estimate_ratio

        f, h = ctx.field(seed, shift), ctx.field(seed + 1, shift)
        return product_estimate_ratio(f, h, prm["s1"], prm["s2"], prm["p"], ctx.part, law)
    return trial


def _v_product(law):
    def validate(prm, dim):
        from .paraproduct import check_product_hypothesis

        check_product_hypothesis(law, prm["s1"], prm["s2"], prm["p"], dim)
    return validate


for _law, _id, _desc in (
    ("linf", "product-linf", "tame product bound with sup norms"),
    ("product", "product", "two-factor product law with loss N/p"),
    ("endpoint", "product-endpoint", "product law with l^inf summation on one factor"),
):
    register(_id, _desc, dict(s1=0.5, s2=0.5, p=2.0), validate=_v_product(_law))(_product_trial(_law))


def _v_comm_div(prm, dim):
    from .paraproduct import _hyp_low

    _hyp_low(prm["s"], prm["p"], dim, dim / prm["p"] + 1, "s <= N/p+1")


@register("commutator-div", "divergence commutator [Delta_j, f] grad g", dict(s=0.5, p=2.0),
          validate=_v_comm_div)
def _comm_div(ctx, seed, shift, prm):
    from .paraproduct import commutator_ratio

    return commutator_ratio(ctx.field(seed, shift), ctx.field(seed + 1, shift), prm["s"], prm["p"], ctx.part)


def _v_comm_tr(prm, dim):
    from .paraproduct import _hyp_low

    _hyp_low(prm["s"], prm["p"], dim, dim / prm["p"], "s <= N/p")


@register("commutator-transport", "weighted transport commutator [v, Delta_j].grad f",
          dict(s=0.5, p=2.0, T0=0.05), validate=_v_comm_tr)
def _comm_tr(ctx, seed, shift, prm):
    from .paraproduct import transport_commutator_ratio

    v = ctx.field(seed + 1, shift, rank=1)
    return transport_commutator_ratio(v, ctx.field(seed, shift), prm["s"], prm["p"], ctx.wp(shift, prm["T0"]),
                                      ctx.part)


def _v_compose(prm, dim):
    _hyp("s > 0", prm["s"] > 0, f"s={prm['s']}")
    # F(x) = x / (1 + x) is smooth only while 1 + f stays positive
    _hyp("|f|_inf < 1", 0 < prm["amplitude"] < 1, f"amplitude={prm['amplitude']}")


def _rational(x):
    return x / (1.0 + x)


@register("composition", "F(f) with F(0) = 0 against (1 + |f|_inf)^{[s]+2} |f|",
          dict(s=1.0, p=2.0, amplitude=0.4), validate=_v_compose)
def _compose(ctx, seed, shift, prm):
    from .paraproduct import compose_ratio

    f = ctx.field(seed, shift, amplitude=prm["amplitude"])
    return compose_ratio(_rational, f, prm["s"], prm["p"], ctx.part)


@register("composition-weighted", "weighted composition law", dict(s=1.0, p=2.0, amplitude=0.4, T0=0.05),
          validate=_v_compose)
def _compose_w(ctx, seed, shift, prm):
    from .paraproduct import compose_ratio

    f = ctx.field(seed, shift, amplitude=prm["amplitude"])
    return compose_ratio(_rational, f, prm["s"], prm["p"], ctx.part, ctx.wp(shift, prm["T0"]))


_PIECE_DEFAULTS = {"Tgf": (0.5, 0.5), "Tfg": (-0.25, 0.75), "R": (0.75, 0.75),
                   "product": (-0.25, 0.75), "product-endpoint": (-0.25, 0.75)}


def _v_weighted(prm, dim):
    from .paraproduct import check_weighted_hypothesis

    check_weighted_hypothesis(prm["which"], prm["s1"], prm["s2"], prm["p"], dim)


def _weighted_trial(ctx, seed, shift, prm):
    from .paraproduct import weighted_paraproduct_ratio

    f, h = ctx.field(seed, shift), ctx.field(seed + 1, shift)
    return weighted_paraproduct_ratio(f, h, prm["s1"], prm["s2"], prm["p"], ctx.wp(shift, prm["T0"]), ctx.part,
                                      prm["which"])


for _which, _id, _desc in (
    ("R", "paraproduct-weighted", "weighted paraproduct and remainder pieces (which = Tgf, Tfg or R)"),
    ("product", "product-weighted", "weighted product law"),
    ("product-endpoint", "product-weighted-endpoint", "weighted product law, l^inf endpoint"),
):
    _s1, _s2 = _PIECE_DEFAULTS[_which]
    register(_id, _desc, dict(which=_which, s1=_s1, s2=_s2, p=2.0, T0=0.05), validate=_v_weighted)(_weighted_trial)


def _v_weighted_time(prm, dim):
    from .paraproduct import time_exponent

    _v_weighted(prm, dim)
    time_exponent(prm["q1"], prm["q2"])


@register("paraproduct-weighted-time", "time-blocked weighted paraproduct pieces",
          dict(which="R", s1=0.75, s2=0.75, p=2.0, q1=2.0, q2=2.0, T0=0.05, samples=4),
          validate=_v_weighted_time)
def _weighted_time(ctx, seed, shift, prm):
    from .paraproduct import weighted_paraproduct_ratio_time

    T = prm["T0"] / 4.0**shift
    times = np.linspace(0.0, T, int(prm["samples"]))
    f1, f2 = ctx.field(seed, shift), ctx.field(seed + 2, shift)
    h1, h2 = ctx.field(seed + 1, shift), ctx.field(seed + 3, shift)
    theta = np.pi * times / (2 * T)
    fs = [f1 * math.cos(x) + f2 * math.sin(x) for x in theta]
    hs = [h1 * math.cos(x) - h2 * math.sin(x) for x in theta]
    return weighted_paraproduct_ratio_time(fs, hs, times, prm["s1"], prm["s2"], prm["p"], prm["q1"], prm["q2"],
                                           ctx.wp(shift, prm["T0"]), ctx.part, prm["which"])


# solver campaigns: f(t, x) = F(4t, 2x) per octave, so T and dt shrink by 4

def _v_transport(weighted):
    def validate(prm, dim):
        from .linear_solvers import check_transport_hypothesis

        check_transport_hypothesis(prm["s"], prm["p"], prm["r"], dim, weighted)
    return validate


def _transport_trial(weighted):
    def trial(ctx, seed, shift, prm):
        from .linear_solvers import TransportProblem, solve_transport, transport_estimate_check

        # unnormalized packets are exact dilations of each other in amplitude
        k = 4.0**shift
        f0 = ctx.field(seed, shift, normalize=None)
        v = ctx.field(seed + 1, shift, rank=1, amplitude=prm["speed"] * 2.0**shift, normalize=None)
        g = ctx.field(seed + 2, shift, amplitude=prm["forcing"] * k, normalize=None)
        run = solve_transport(TransportProblem(f0, v, g, T=prm["T0"] / k, dt=prm["dt0"] / k), p=prm["p"])
        rep = transport_estimate_check(run, prm["s"], prm["p"], prm["r"], weighted=weighted, wp=ctx.weights)
        return rep.min_C
    return trial


for _w, _id, _desc in ((False, "transport", "transport estimate; statistic is the least exponent constant"),
                       (True, "transport-weighted", "weighted transport estimate; least exponent constant")):
    register(_id, _desc, dict(s=0.5, p=2.0, r=1.0, speed=0.2, forcing=0.2, T0=0.1, dt0=0.005), grid=128,
             statistic="min_C", validate=_v_transport(_w))(_transport_trial(_w))


def _v_momentum(variant):
    def validate(prm, dim):
        from .linear_solvers import check_momentum_hypothesis

        check_momentum_hypothesis(prm.get("variant", variant), prm["s"], prm["p"], dim)
    return validate


def _momentum_trial(variant):
    def trial(ctx, seed, shift, prm):
        from .linear_solvers import MomentumProblem, momentum_estimate_check, solve_momentum

        k = 4.0**shift
        u0 = ctx.field(seed, shift, rank=1, amplitude=2.0**shift)
        G = ctx.field(seed + 1, shift, rank=1, amplitude=prm["forcing"] * 8.0**shift)
        b = ctx.field(seed + 2, shift, amplitude=prm["contrast"])
        rho = b + 1.0
        mu = b * 0.5 + 1.0
        prob = MomentumProblem(u0, mu, None, G, T=prm["T0"] / k, dt=prm["dt0"] / k, rho=rho, rho_ref=1.0)
        run = solve_momentum(prob, p=prm["p"])
        return momentum_estimate_check(run, prm["s"], prm["p"], prm["q"], prm.get("variant", variant),
                                       wp=ctx.weights).ratio
    return trial


register("momentum-a", "smoothing estimate for the variable-coefficient momentum equation (variant a1 or a2)",
         dict(variant="a1", s=1.0, p=2.0, q=1.0, forcing=1.0, contrast=0.2, T0=0.1, dt0=0.01), grid=64,
         validate=_v_momentum("a1"))(_momentum_trial("a1"))
register("momentum-b", "weighted smoothing estimate for the momentum equation",
         dict(s=1.0, p=2.0, q=1.0, forcing=1.0, contrast=0.2, T0=0.1, dt0=0.01), grid=64,
         validate=_v_momentum("b"))(_momentum_trial("b"))
register("momentum-endpoint", "momentum estimate in the negative endpoint space",
         dict(s=0.0, p=2.0, q=1.0, forcing=1.0, contrast=0.2, T0=0.1, dt0=0.01), grid=64,
         validate=_v_momentum("end"))(_momentum_trial("end"))


def _v_logint(prm, dim):
    _hyp("0 < eps <= 1", 0 < prm["eps"] <= 1, f"eps={prm['eps']}")


@register("log-interpolation", "l^1 summation bounded by l^inf times a logarithm of neighbouring regularities",
          dict(s=1.0, p=2.0, eps=0.25, octaves=1), validate=_v_logint)
def _logint(ctx, seed, shift, prm):
    from .cns_solver import log_interpolation_ratio
    from .littlewood_paley import BesovParams, NormSeries, block_norms

    f = ctx.field(seed, shift, octaves=int(prm["octaves"]))
    series = NormSeries(np.zeros(1), block_norms(f, ctx.part, prm["p"])[None], ctx.part.j_min,
                        BesovParams(0.0, prm["p"]))
    return log_interpolation_ratio(series, prm["s"], prm["eps"], q=math.inf)[0]


@register("bony", "T_u v + T_v u + R(u, v) = uv (relative L^2 error)", dict(), kind="identity",
          statistic="relative_error")
def _bony(ctx, seed, shift, prm):
    from .fourier_field import multiply
    from .paraproduct import bony_split

    u = ctx.field(seed, shift, spectrum="powerlaw", j_cut=4)
    v = ctx.field(seed + 1, shift, spectrum="powerlaw", j_cut=4)
    parts = bony_split(u, v, ctx.part)
    uv = multiply(u, v)
    err = lp_norm(parts.total() - uv, 2.0)
    return err / lp_norm(uv, 2.0)
