import math

import numpy as np
import pytest
from scipy.optimize import brentq

from besovlab.fourier_field import Field
from besovlab.littlewood_paley import BesovParams, NormSeries, besov_norm, block_norms, bump
from besovlab.weighted_besov import (
    WeightSequence,
    WeightedBesovParams,
    e_val,
    omega,
    smallness_time,
    weighted_besov_norm,
    weighted_cl_norm,
    write_weight_table,
)
from conftest import mode, random_field

TIMES = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0]


def direct_omega(k, t, c, upto=200):
    return sum(2.0 ** (k - ell) * math.sqrt(-math.expm1(-c * 4.0**ell * t)) for ell in range(k, upto))


class TestE:
    def test_zero_time(self):
        assert np.all(e_val(np.arange(-3, 10), 0.0) == 0)

    def test_large_time(self):
        assert e_val(0, 50.0) == pytest.approx(1.0)

    def test_ln2(self):
        assert e_val(0, math.log(2)) == pytest.approx(1 / math.sqrt(2), rel=1e-14)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            e_val(1, -1e-3)

    def test_monotone_in_index(self):
        for t in TIMES:
            e = e_val(np.arange(-2, 25), t)
            assert np.all(np.diff(e) >= 0) and np.all((e >= 0) & (e <= 1))


class TestOmega:
    def test_zero_time(self):
        w = WeightSequence()
        assert np.all(w.omegas(0.0) == 0)

    def test_limit_is_two(self):
        w = WeightSequence(j_max=10)
        assert omega(3, 1e6, w) == pytest.approx(2.0, abs=2.0**-16)

    def test_direct_summation(self):
        w = WeightSequence(c=1.0, j_max=20)
        assert omega(0, 1.0, w) == pytest.approx(direct_omega(0, 1.0, 1.0), abs=1e-8)

    def test_truncation_refinement(self):
        coarse = WeightSequence(c=1.0, j_max=20).omega(0, 1.0)
        fine = WeightSequence(c=1.0, j_max=200).omega(0, 1.0)
        assert abs(coarse - fine) < 1e-8

    def test_below_range(self):
        w = WeightSequence(j_min=0, j_max=8)
        assert w.omega(-3, 0.2) == pytest.approx(direct_omega(-3, 0.2, 1.0), rel=1e-10)

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_weight_relations(self, c):
        w = WeightSequence(c=c, j_min=-2, j_max=20)
        ks = np.arange(-2, 21)
        for t in TIMES:
            om = w.omegas(t)
            e = w.e(ks, t)
            assert np.all(om <= 2.0 + 1e-15) and np.all(e <= om + 1e-15)
            for a in range(len(ks)):
                for b in range(len(ks)):
                    if ks[a] >= ks[b]:
                        assert om[a] <= 2.0 ** (ks[a] - ks[b]) * om[b] * (1 + 1e-14) + 1e-300
                    else:
                        assert om[a] <= 3 * om[b] * (1 + 1e-14) + 1e-300
                    if abs(ks[a] - ks[b]) <= 2 and om[b] > 0:
                        assert 1 / 8 <= om[a] / om[b] <= 8

    def test_monotone_in_time(self):
        w = WeightSequence(j_min=-1, j_max=12)
        prof = w.omegas(np.linspace(0, 2, 101))
        assert np.all(np.diff(prof, axis=0) >= 0)

    def test_table_csv(self, tmp_path):
        w = WeightSequence(c=1.0, j_min=0, j_max=20)
        ks = list(range(21))
        write_weight_table(w, ks, [0.0, 0.5], tmp_path / "w.csv")
        rows = (tmp_path / "w.csv").read_text().splitlines()
        assert rows[0] == "k,t,e,omega"
        k, t, e, om = rows[1 + 21 + 5].split(",")
        assert (int(k), float(t)) == (5, 0.5)
        assert float(om) == w.omega(5, 0.5) and float(e) == e_val(5, 0.5)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            WeightSequence(c=0.0)


class TestWeightedNorms:
    def _wp(self, T, s=0.0, q=math.inf, j_max=8, c=1.0):
        return WeightedBesovParams(BesovParams(s, 2, 1, q), WeightSequence(c=c, j_min=-1, j_max=j_max), T)

    def test_zero_horizon(self, g64, part64):
        assert weighted_besov_norm(random_field(g64, 0), self._wp(0.0), part64) == 0.0

    def test_at_most_twice_unweighted(self, g64, part64):
        f = random_field(g64, 1)
        for T in TIMES:
            wb = weighted_besov_norm(f, self._wp(T, 0.5), part64)
            assert wb <= 2 * besov_norm(f, BesovParams(0.5), part64) * (1 + 1e-14)

    def test_single_mode(self, g64, part64):
        f = mode(g64, (8, 0))
        wp = self._wp(0.01)
        expect = sum(bump(np.array(8 * 2.0**-j)) * wp.weights.omega(j, 0.01) for j in part64.indices)
        assert weighted_besov_norm(f, wp, part64) == pytest.approx(expect / math.sqrt(2), rel=1e-12)

    def test_monotone_in_horizon(self, g64, part64):
        f = random_field(g64, 2)
        vals = [weighted_besov_norm(f, self._wp(T, 0.5), part64) for T in TIMES]
        assert np.all(np.diff(vals) >= 0)

    def test_time_constant_series(self, g64, part64):
        f = random_field(g64, 3)
        series = NormSeries.from_fields([0, 0.05, 0.1], [f] * 3, part64, BesovParams(0.5, 2, 1, math.inf))
        wp = self._wp(0.1, 0.5)
        assert weighted_cl_norm(series, wp) == pytest.approx(weighted_besov_norm(f, wp, part64), rel=1e-13)
        assert weighted_cl_norm(series, wp.at(0.0)) == 0.0

    def test_single_active_block(self, part64):
        times = np.linspace(0, 0.2, 21)
        norms = np.zeros((21, part64.n_blocks))
        k = 3
        norms[:, k - part64.j_min] = 1.0 + times
        series = NormSeries(times, norms, part64.j_min, BesovParams(0.5, 2, 1, 1.0))
        wp = self._wp(0.2, 0.5, q=1.0)
        expect = 2**1.5 * wp.weights.omega(k, 0.2) * np.trapezoid(1.0 + times, times)
        assert weighted_cl_norm(series, wp) == pytest.approx(expect, rel=1e-13)


class TestSmallness:
    def _wp(self, T, c=1.0):
        return WeightedBesovParams(BesovParams(0.0, 2, 1, math.inf), WeightSequence(c=c, j_min=-1, j_max=8), T)

    def _static(self, f, part, times):
        return NormSeries.from_fields(times, [f] * len(times), part, BesovParams(0.0, 2, 1, math.inf))

    def test_generous_eps_returns_horizon(self, g64, part64):
        f = random_field(g64, 4)
        times = np.linspace(0, 0.5, 11)
        eps = 2 * besov_norm(f, BesovParams(0.0), part64)
        res = smallness_time(self._static(f, part64, times), self._wp(0.5), eps)
        assert res.found and res.T_tilde == 0.5

    def test_zero_field(self, g64, part64):
        times = np.linspace(0, 0.5, 11)
        res = smallness_time(self._static(Field.zeros(g64), part64, times), self._wp(0.5), 1e-12)
        assert res.T_tilde == 0.5

    def test_single_mode_root(self, g64, part64):
        f = mode(g64, (8, 0))
        times = np.geomspace(1e-7, 1.0, 400)
        times[0] = 0.0
        wp = self._wp(1.0)
        norms = block_norms(f, part64)
        prof = lambda t: sum(n * wp.weights.omega(j, t) for j, n in zip(part64.indices, norms))
        eps = 1e-2
        root = brentq(lambda t: prof(t) - eps, 1e-9, 1.0)
        res = smallness_time(self._static(f, part64, times), wp, eps)
        assert res.found and res.value <= eps < res.next_value
        assert res.T_tilde <= root < times[res.index + 1]

    def test_not_found_reports_infimum(self, g64, part64):
        f = random_field(g64, 5)
        times = np.linspace(0.1, 0.5, 5)
        res = smallness_time(self._static(f, part64, times), self._wp(0.5), 1e-9)
        assert not res.found and res.T_tilde is None and res.value > 1e-9

    def test_bad_eps(self, g64, part64):
        with pytest.raises(ValueError):
            smallness_time(self._static(Field.zeros(g64), part64, [0, 1]), self._wp(1.0), 0.0)
