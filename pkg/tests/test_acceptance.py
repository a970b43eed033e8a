"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The printed lines bypass output capture so they appear in a plain
``pytest -v`` log.  Tolerances are the ones the criteria state; nothing is
loosened to make a line green.
"""

import math
import time

import numpy as np
import pytest

from besovlab._validation import HypothesisError
from besovlab.cns_solver import SchemeConfig, run_scheme, shallow_water_preset, uniqueness_distance
from besovlab.estimate_lab import CampaignConfig, FieldRecipe, _Context, campaign, generate
from besovlab.fourier_field import Field, Grid, derivative, divergence, gradient, lp_norm, multiply, resample, sup_norm
from besovlab.linear_solvers import (
    MomentumProblem,
    TransportProblem,
    mode_decay_fit,
    solve_momentum,
    solve_transport,
)
from besovlab.littlewood_paley import (
    BesovParams,
    NormSeries,
    bernstein_ratio,
    build_partition,
    delta_j,
    low_part,
    s_j,
)
from besovlab.paraproduct import bony_split
from besovlab.weighted_besov import (
    WeightSequence,
    WeightedBesovParams,
    e_val,
    smallness_time,
    weighted_cl_norm,
    weighted_linf_profile,
)


@pytest.fixture
def report(capsys):
    start = time.perf_counter()

    def emit(number, title, ok, detail):
        line = f"[criterion {number:>2}] {title}: {'PASS' if ok else 'FAIL'} ({detail}; {time.perf_counter() - start:.1f} s)"
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def test_criterion_01_partition_and_reconstruction(report):
    g = Grid(2, 128)
    part = build_partition(g)
    sum_err = float(np.abs(part.partition_sum()[part.covered()] - 1.0).max())
    worst, low_err = 0.0, 0.0
    for i in range(50):
        f = generate(FieldRecipe(seed=i, spectrum="powerlaw", j_cut=5, alpha=1.0 + (i % 4) / 2), g) + (i % 7) / 3
        mean = Field(g, np.full(g.shape, f.mean))
        low_err = max(low_err, lp_norm(low_part(f, part) - mean, 2))
        rebuilt = mean
        for j in part.indices:
            rebuilt = rebuilt + delta_j(f, j, part)
        worst = max(worst, lp_norm(rebuilt - f, 2) / lp_norm(f, 2))
    ok = sum_err <= 1e-10 and worst <= 1e-10 and low_err <= 1e-14
    report(1, "partition of unity and reconstruction", ok,
           f"partition sum error {sum_err:.1e}, worst reconstruction {worst:.1e} over 50 fields, tol 1e-10")
    assert ok


def test_criterion_02_exact_identities(report):
    g = Grid(2, 128)
    part = build_partition(g)
    bony = 0.0
    for i in range(50):
        u = generate(FieldRecipe(seed=2 * i, spectrum="powerlaw", j_cut=5), g)
        v = generate(FieldRecipe(seed=2 * i + 1, spectrum="powerlaw", j_cut=5), g) + 0.5
        exact = multiply(u, v)
        bony = max(bony, lp_norm(bony_split(u, v, part).total() - exact, 2) / lp_norm(exact, 2))
    f = generate(FieldRecipe(seed=99, spectrum="powerlaw", j_cut=5), g)
    blocks = {j: delta_j(f, j, part) for j in part.indices}
    nonzero = sum(int(delta_j(blocks[k], j, part).hat.any())
                  for j in part.indices for k in part.indices if abs(j - k) >= 2)
    # the localized product is computed with FFTs, so "zero" means rounding level
    loc = 0.0
    for k in part.indices[1:]:
        prod = multiply(s_j(f, k - 1, part), blocks[k])
        scale = lp_norm(prod, 2)
        for j in part.indices:
            if abs(j - k) >= 5 and scale > 0:
                loc = max(loc, lp_norm(delta_j(prod, j, part), 2) / scale)
    ok = bony <= 1e-10 and nonzero == 0 and loc <= 1e-14
    report(2, "exact identities", ok,
           f"Bony error {bony:.1e} (tol 1e-10), {nonzero} nonzero Delta_j Delta_k pairs, "
           f"localized product residual {loc:.1e} (rounding level, tol 1e-14)")
    assert ok


BERNSTEIN_CASES = [(2.0, 2.0), (2.0, math.inf), (1.0, 2.0)]
GAMMAS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_criterion_03_bernstein(report):
    # one field per (trial, scaling) feeds every (p, q, gamma) case; the recipe
    # and seeds are those of the registered bernstein campaign
    ctx = _Context(Grid(2, 256))
    j, band, trials, shifts = 3, (0.8, 1.95), 200, (0, 3)
    norms = {}
    for shift in shifts:
        rows = []
        for i in range(trials):
            f = ctx.field(2 * i, shift, j=j, band=band)
            row = {"f1": lp_norm(f, 1.0), "f2": lp_norm(f, 2.0)}
            for gm in GAMMAS:
                d = derivative(f, gm)
                row[gm, 2.0] = lp_norm(d, 2.0)
                row[gm, math.inf] = sup_norm(d)
            rows.append(row)
            if i < 3:
                # the shared norms reproduce the library ratio
                for p, q in BERNSTEIN_CASES:
                    for gm in GAMMAS[:3]:
                        base = row["f1"] if p == 1.0 else row["f2"]
                        scale = 2.0 ** ((j + shift) * (sum(gm) + 2 * (1 / p - 1 / q)))
                        assert row[gm, q] / (scale * base) == pytest.approx(
                            bernstein_ratio(f, gm, p, q, j + shift), rel=1e-12)
        norms[shift] = rows
    worst_drift, worst_case, finite = 0.0, None, True
    for p, q in BERNSTEIN_CASES:
        for gm in GAMMAS:
            maxes = []
            for shift in shifts:
                scale = 2.0 ** ((j + shift) * (sum(gm) + 2 * (1 / p - 1 / q)))
                vals = [r[gm, q] / (scale * (r["f1"] if p == 1.0 else r["f2"])) for r in norms[shift]]
                maxes.append(max(vals))
            finite &= all(math.isfinite(m) and m > 0 for m in maxes)
            drift = abs(maxes[1] - maxes[0]) / maxes[0]
            if drift > worst_drift:
                worst_drift, worst_case = drift, (p, q, gm)
    ok = finite and worst_drift <= 0.10
    report(3, "Bernstein ratios agree across scales", ok,
           f"18 cases x 200 fields at j=3 and j=6, worst drift {worst_drift:.2%} at (p,q,gamma)={worst_case}, tol 10%")
    assert ok


def test_criterion_04_weight_law(report):
    ks = np.arange(-10, 30)
    ts = np.concatenate([[0.0], np.geomspace(1e-6, 10.0, 39)])
    K = ks[:, None] - ks[None, :]
    violations, trunc = 0, 0.0
    for c in (0.5, 1.0, 2.0):
        w = WeightSequence(c=c, j_min=-10, j_max=29)
        long = WeightSequence(c=c, j_min=-10, j_max=29 + 64)
        zero = w.omegas(0.0)
        violations += int(np.count_nonzero(zero))
        for t in ts:
            om, e = w.omegas(t), w.e(ks, t)
            trunc = max(trunc, float(np.abs(om - long.omegas(t)[: ks.size]).max()))
            A, B = om[:, None], om[None, :]
            EA, EB = e[:, None], e[None, :]
            near = np.abs(K) <= 2
            violations += int(np.count_nonzero(om > 2.0))
            violations += int(np.count_nonzero(e > om))
            violations += int(np.count_nonzero((K >= 0) & (A > 2.0**K * B)))
            violations += int(np.count_nonzero((K <= 0) & (A > 3.0 * B)))
            violations += int(np.count_nonzero((e < 0) | (e > 1)))
            violations += int(np.count_nonzero((K <= 0) & (EA > EB)))
            if t > 0:
                violations += int(np.count_nonzero(near & ((A > 8 * B) | (8 * A < B))))
                violations += int(np.count_nonzero(near & ((EA > 8 * EB) | (8 * EA < EB))))
        assert e_val(3, 0.0, c) == 0.0
    ok = violations == 0 and trunc < 2.0**-16
    report(4, "weight inequalities on a 40x40 (k, t) lattice", ok,
           f"{violations} violations for c in (0.5, 1, 2), omega_k(0) = 0, truncation error {trunc:.1e} < 2^-16")
    assert ok


def test_criterion_05_momentum_oracle(report):
    g = Grid(2, 64)
    x, y = g.coords
    mu_bar, lam_bar = 0.7, 0.4
    nu_bar = lam_bar + 2 * mu_bar
    mu = Field(g, np.full(g.shape, mu_bar))
    lam = Field(g, np.full(g.shape, lam_bar))
    k = (3, 2)
    phase = k[0] * x + k[1] * y
    u0 = Field(g, np.stack([k[0] * np.cos(phase), k[1] * np.cos(phase)]))  # gradient of sin(k.x)
    T = 0.5
    run = solve_momentum(MomentumProblem(u0, mu, lam, None, T=T, dt=1e-3), sample_every=500)
    measured = divergence(run.final).hat[k] / divergence(u0).hat[k]
    exact = math.exp(-nu_bar * (k[0] ** 2 + k[1] ** 2) * T)
    mode_err = abs(measured.real / exact - 1.0) + abs(measured.imag) / exact
    fits = [mode_decay_fit(Grid(2, 128), 1.0, 1.0, blocks=(3, 4, 5, 6), curl_free=cf) for cf in (True, False)]
    spread = max(fit.spread for fit in fits)
    ok = mode_err <= 5e-3 and spread <= 0.10
    report(5, "constant-coefficient momentum decay", ok,
           f"single-mode decay error {mode_err:.2e} (tol 0.5%), block-rate spread {spread:.2%} over j=3..6 (tol 10%)")
    assert ok


def test_criterion_06_transport_conservation(report):
    g = Grid(2, 128)
    f0 = generate(FieldRecipe(seed=1, j=2, octaves=0), g)
    psi = generate(FieldRecipe(seed=5, j=2, octaves=0), g) * 0.05
    gp = gradient(psi)
    v = Field(g, np.stack([gp.values[1], -gp.values[0]]))
    div_v = lp_norm(divergence(v), 2)
    run = solve_transport(TransportProblem(f0, v, None, T=1.0, dt=1e-3), sample_every=1000)
    drift = {p: abs(lp_norm(run.final, p) - lp_norm(f0, p)) / lp_norm(f0, p) for p in (2, 4)}
    c = np.array([1.0, 0.5])
    vc = Field(g, np.stack([np.full(g.shape, c[0]), np.full(g.shape, c[1])]))
    run_c = solve_transport(TransportProblem(f0, vc, None, T=1.0, dt=1e-3), sample_every=1000)
    shifted = Field.from_spectral(g, f0.hat * np.exp(-1j * (g.kvec[0] * c[0] + g.kvec[1] * c[1])))
    trans = lp_norm(run_c.final - shifted, math.inf) / lp_norm(f0, math.inf)
    ok = div_v < 1e-12 and max(drift.values()) <= 1e-6 and trans < 1e-6
    report(6, "transport conservation and translation", ok,
           f"L2 drift {drift[2]:.1e}, L4 drift {drift[4]:.1e} (tol 1e-6), translation error {trans:.1e} (tol 1e-6)")
    assert ok


CAMPAIGN_IDS = [
    "product-linf", "product", "product-endpoint", "commutator-div", "composition",
    "paraproduct-weighted", "product-weighted", "product-weighted-endpoint", "composition-weighted",
    "transport", "transport-weighted", "momentum-a", "momentum-b", "momentum-endpoint", "log-interpolation",
]

VIOLATIONS = {
    "product-linf": ({"s1": -0.5}, "s > 0"),
    "product": ({"p": 1.0}, "s1+s2 <= N*max(0,2/p-1)"),
    "product-endpoint": ({"s1": 1.5}, "s1 <= N/p"),
    "commutator-div": ({"s": 2.5}, "s <= N/p+1"),
    "composition": ({"s": 0.0}, "s > 0"),
    "paraproduct-weighted": ({"which": "Tfg", "s1": 0.5}, "s1 <= N/p-1"),
    "product-weighted": ({"s2": 1.5}, "s2 <= N/p"),
    "product-weighted-endpoint": ({"s2": 1.5}, "s2 < N/p"),
    "composition-weighted": ({"amplitude": 1.5}, "|f|_inf < 1"),
    "transport": ({"s": 3.0}, "s < 1 + N/p"),
    "transport-weighted": ({"s": 3.0}, "s <= N/p"),
    "momentum-a": ({"s": 5.0}, "s <= N/p"),
    "momentum-b": ({"s": 5.0}, "s <= N/p"),
    "momentum-endpoint": ({"p": 3.0}, "2 <= p <= N"),
    "log-interpolation": ({"eps": 2.0}, "0 < eps <= 1"),
}


@pytest.mark.slow
def test_criterion_07_estimate_campaigns(report):
    failures, worst = [], (0.0, None)
    for lemma in CAMPAIGN_IDS:
        rep = campaign(lemma, CampaignConfig(trials=100))
        if not (rep.passed and math.isfinite(rep.max_ratio) and rep.scale_drift <= 0.15):
            failures.append(f"{lemma} (max {rep.max_ratio:.3g}, drift {rep.scale_drift:.1%})")
        if rep.scale_drift > worst[0]:
            worst = (rep.scale_drift, lemma)
    unnamed = []
    for lemma, (params, condition) in VIOLATIONS.items():
        try:
            campaign(lemma, CampaignConfig(trials=1, params=params))
            unnamed.append(f"{lemma} accepted")
        except HypothesisError as exc:
            if exc.condition != condition and condition not in str(exc):
                unnamed.append(f"{lemma}: {exc}")
    ok = not failures and not unnamed
    report(7, "estimate-ratio campaigns", ok,
           f"{len(CAMPAIGN_IDS) - len(failures)}/{len(CAMPAIGN_IDS)} campaigns pass at 100 trials, "
           f"worst drift {worst[0]:.1%} ({worst[1]}), tol 15%; "
           f"{len(VIOLATIONS) - len(unnamed)}/{len(VIOLATIONS)} violations rejected by name"
           + (f"; failing: {failures + unnamed}" if not ok else ""))
    assert ok


def _shallow_data(grid, amplitude):
    a0 = generate(FieldRecipe(seed=1, amplitude=amplitude, j=2, octaves=0), grid)
    u0 = generate(FieldRecipe(seed=2, amplitude=amplitude, j=2, octaves=0, rank=1), grid)
    return a0, u0


@pytest.mark.slow
def test_criterion_08_shallow_water(report):
    laws = shallow_water_preset()
    g = Grid(2, 64)
    eq = run_scheme(Field.zeros(g), Field.zeros(g, 1), laws, SchemeConfig(T=0.1, dt=0.01))
    eq_err = max(lp_norm(eq.final[0], math.inf), lp_norm(eq.final[1], math.inf))

    small = run_scheme(*_shallow_data(g, 0.01), laws, SchemeConfig(T=0.1, dt=0.01))
    target = 5 / 8 * laws.c0
    h1_ok = all(s.h1 for s in small.trace) and small.min_density >= target

    a0, u0 = _shallow_data(g, 0.1)
    finals, mass = [], 0.0
    for m, dt in ((64, 0.01), (128, 0.005), (256, 0.0025)):
        gg = Grid(2, m)
        r = run_scheme(resample(a0, gg), resample(u0, gg), laws, SchemeConfig(T=0.1, dt=dt))
        finals.append(r.final)
        mass = max(mass, r.mass_drift)

    def dist(x, y):
        gx = x[0].grid
        return max(lp_norm(x[0] - resample(y[0], gx), 2), lp_norm(x[1] - resample(y[1], gx), 2))

    e1, e2 = dist(finals[0], finals[1]), dist(finals[1], finals[2])
    order = math.log2(e1 / e2)
    ok = eq_err <= 1e-14 and mass <= 1e-8 and h1_ok and order >= 1.5
    report(8, "shallow-water solver sanity", ok,
           f"equilibrium drift {eq_err:.1e}, mass drift {mass:.1e} (tol 1e-8), "
           f"min density {small.min_density:.4f} >= {target:.4f}, self-convergence order {order:.2f} (tol 1.5)")
    assert ok


@pytest.mark.slow
def test_criterion_09_uniqueness(report):
    laws = shallow_water_preset()
    g = Grid(2, 64)
    a0, u0 = _shallow_data(g, 0.01)
    cfg = SchemeConfig(T=0.1, dt=0.005)
    r1 = run_scheme(a0, u0, laws, cfg)
    r2 = run_scheme(a0, u0, laws, cfg)
    same = uniqueness_distance(r1, r2)
    zero = float(max(same.da_norm.max(), same.du_norm.max()))
    pert = generate(FieldRecipe(seed=9, amplitude=1e-6, j=2, octaves=0), g)
    r3 = run_scheme(a0 + pert, u0, laws, cfg)
    near = uniqueness_distance(r1, r3)
    osgood = near.osgood[1e-20]
    ok = zero == 0.0 and math.isfinite(near.growth) and near.growth <= 10.0 and osgood > 10.0
    report(9, "uniqueness diagnostics", ok,
           f"identical-run distance {zero:.1e}, perturbed growth {near.growth:.3f} over [0, 0.1] (bound 10), "
           f"Osgood integral at 1e-20 = {osgood:.2f} (> 10)")
    assert ok


def test_criterion_10_smallness_time(report):
    g = Grid(2, 64)
    part = build_partition(g)
    weights = WeightSequence.for_partition(part)
    params = BesovParams(0.0, 2.0, 1.0, math.inf)
    times = np.linspace(0.0, 0.5, 51)
    checks, monotone = [], True
    for seed in range(5):
        f = generate(FieldRecipe(seed=seed, spectrum="powerlaw", j_cut=4), g)
        series = NormSeries.from_fields(times, [f] * len(times), part, params)
        wp = WeightedBesovParams(params, weights, 0.5)
        prof = weighted_linf_profile(series, wp)
        monotone &= bool(np.all(np.diff(prof) >= 0))
        eps = 0.5 * prof[-1]
        res = smallness_time(series, wp, eps)
        # recompute the weighted L~inf norm on [0, T~] independently of the search
        value = weighted_cl_norm(series.upto(res.T_tilde), wp.at(res.T_tilde))
        checks.append(res.found and value <= eps and (res.next_value is None or res.next_value > eps))
    # a decaying transport run gives a genuinely time-dependent series
    f0 = generate(FieldRecipe(seed=11, j=2, octaves=0), g)
    v = generate(FieldRecipe(seed=12, j=2, octaves=0, rank=1, amplitude=0.3), g)
    run = solve_transport(TransportProblem(f0, v, None, T=0.5, dt=0.005), part=part, sample_every=10)
    series = run.series.with_params(q=math.inf)
    wp = WeightedBesovParams(series.params, weights, float(series.times[-1]))
    prof = weighted_linf_profile(series, wp)
    monotone &= bool(np.all(np.diff(prof) >= 0))
    eps = 0.3 * prof[-1]
    res = smallness_time(series, wp, eps)
    checks.append(res.found and weighted_cl_norm(series.upto(res.T_tilde), wp.at(res.T_tilde)) <= eps)
    ok = all(checks) and monotone
    report(10, "smallness time", ok,
           f"{sum(checks)}/{len(checks)} searches return T~ with weighted norm <= eps, profiles monotone: {monotone}")
    assert ok
