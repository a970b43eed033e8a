import math

import numpy as np
import pytest

from besovlab._validation import NonFiniteError
from besovlab.fourier_field import (
    Field,
    Grid,
    curl,
    curl2d,
    derivative,
    divergence,
    from_padded,
    gradient,
    hermitian_defect,
    inverse_transform,
    laplacian,
    lp_norm,
    multiply,
    padded_values,
    read_binary,
    read_csv,
    resample,
    strain,
    sup_norm,
    transform,
    vector_calculus,
    write_binary,
    write_csv,
)
from conftest import mode, random_field


class TestGrid:
    @pytest.mark.parametrize("dim,res", [(0, 16), (4, 16), (2, 4), (2, 24)])
    def test_rejects_bad_shapes(self, dim, res):
        with pytest.raises(ValueError):
            Grid(dim, res)

    def test_period_scales_frequencies(self):
        g = Grid(1, 16, period=math.pi)
        assert g.kmag.max() == pytest.approx(2 * 8)

    def test_lattice_extent(self, g32):
        assert np.abs(g32.int_freqs).max() == 16


class TestTransform:
    def test_constant_has_only_zero_mode(self, g32):
        hat = transform(Field(g32, np.full(g32.shape, 3.0)))
        assert hat[0, 0] == pytest.approx(3.0)
        hat = hat.copy()
        hat[0, 0] = 0
        assert np.abs(hat).max() < 1e-15

    def test_cosine_modes(self, g32):
        hat = transform(mode(g32, (1, 0)))
        nz = np.argwhere(np.abs(hat) > 1e-14)
        assert len(nz) == 2
        assert hat[1, 0] == pytest.approx(0.5)
        assert hat[-1, 0] == pytest.approx(0.5)

    def test_round_trip(self, g32):
        rng = np.random.default_rng(3)
        vals = rng.standard_normal(g32.shape)
        back = inverse_transform(g32, transform(Field(g32, vals))).values
        assert np.linalg.norm(back - vals) <= 1e-12 * np.linalg.norm(vals)

    def test_plancherel(self, g32):
        f = random_field(g32, 1)
        assert lp_norm(f, 2) ** 2 == pytest.approx(np.sum(np.abs(f.hat) ** 2), rel=1e-10)

    def test_non_finite_rejected(self, g32):
        vals = np.zeros(g32.shape)
        vals[3, 4] = np.nan
        with pytest.raises(NonFiniteError):
            Field(g32, vals)

    def test_real_field_is_hermitian(self, g32):
        assert hermitian_defect(g32, random_field(g32, 2).hat) < 1e-14


class TestNorms:
    def test_constant(self, g32):
        f = Field(g32, np.full(g32.shape, 2.0))
        for p in (1, 1.5, 2, 7, math.inf):
            assert lp_norm(f, p) == pytest.approx(2.0)

    def test_cosine_l2(self, g32):
        assert lp_norm(mode(g32, (1, 0)), 2) == pytest.approx(1 / math.sqrt(2), rel=1e-14)

    def test_cosine_l4(self, g32):
        assert lp_norm(mode(g32, (1, 0)), 4) == pytest.approx((3 / 8) ** 0.25, rel=1e-14)

    def test_sup_is_grid_max(self, g32):
        f = random_field(g32, 4)
        assert lp_norm(f, math.inf) == np.abs(f.values).max()

    def test_p_below_one_rejected(self, g32):
        with pytest.raises(ValueError):
            lp_norm(mode(g32, (1, 0)), 0.5)


class TestSupNorm:
    def test_off_grid_peak(self, g32):
        # the peak of cos(7 x1 + 0.3) falls between samples, cos(pi/32) at worst
        f = mode(g32, (7, 0), phase=0.3)
        assert lp_norm(f, math.inf) < 0.996
        assert sup_norm(f) == pytest.approx(1.0, abs=1e-12)

    def test_product_of_modes(self):
        for dim in (1, 2, 3):
            g = Grid(dim, 16)
            x = g.coords
            vals = np.cos(3 * x[0] + 0.4)
            if dim > 1:
                vals = vals * np.cos(5 * x[-1] + 0.2)
            assert sup_norm(Field(g, vals)) == pytest.approx(1.0, abs=1e-12)

    def test_vector_magnitude(self, g32):
        x, y = g32.coords
        # |(cos t, sin t)| = 1 everywhere
        u = Field(g32, np.stack([np.cos(3 * x + 5 * y + 0.1), np.sin(3 * x + 5 * y + 0.1)]))
        assert sup_norm(u) == pytest.approx(1.0, abs=1e-12)

    def test_dominates_refined_samples(self, g64):
        f = random_field(g64, 11, kmax=30)
        fine = np.abs(padded_values(f, 8 * 64)).max()
        s = sup_norm(f)
        assert lp_norm(f, math.inf) <= fine <= s * (1 + 1e-12)
        assert s <= fine * 1.01

    def test_zero(self, g32):
        assert sup_norm(Field.zeros(g32)) == 0.0


class TestDerivatives:
    def test_cosine(self, g32):
        d = derivative(mode(g32, (1, 0)), (1, 0))
        assert np.abs(d.values + np.sin(g32.coords[0])).max() < 1e-13

    def test_constant_derivative_vanishes(self, g32):
        f = Field(g32, np.full(g32.shape, 5.0))
        assert np.abs(derivative(f, (0, 2)).values).max() < 1e-14

    def test_laplacian_eigenfunction(self, g32):
        f = mode(g32, (3, 2), phase=0.3)
        assert np.abs(laplacian(f).values + 13 * f.values).max() < 1e-11

    def test_curl_of_gradient_vanishes(self, g32):
        w = curl(gradient(random_field(g32, 5)))
        assert np.abs(w.values).max() < 1e-11

    def test_shear_flow(self, g32):
        x = g32.coords
        u = Field(g32, np.stack([np.sin(x[1]), np.zeros(g32.shape)]))
        assert np.abs(divergence(u).values).max() < 1e-14
        assert np.abs(curl2d(u).values - np.cos(x[1])).max() < 1e-13

    def test_curl_antisymmetric_and_strain_symmetric(self):
        g = Grid(3, 8)
        u = random_field(g, 6, rank=1)
        w, s = curl(u).values, strain(u).values
        assert np.abs(w + np.swapaxes(w, 0, 1)).max() < 1e-14
        assert np.abs(s - np.swapaxes(s, 0, 1)).max() < 1e-14

    def test_vector_calculus_bundle(self, g32):
        u = random_field(g32, 7, rank=1)
        vc = vector_calculus(u)
        assert vc.divergence.allclose(divergence(u))
        assert vc.curl.allclose(curl(u))

    def test_scalar_rejected(self, g32):
        f = random_field(g32, 8)
        with pytest.raises(ValueError):
            divergence(f)
        with pytest.raises(ValueError):
            curl(f)


class TestProducts:
    def test_dealiased_product_of_modes(self, g32):
        f, g = mode(g32, (3, 0)), mode(g32, (0, 5))
        prod = multiply(f, g)
        assert np.abs(prod.values - f.values * g.values).max() < 1e-13

    def test_high_modes_alias_free(self, g32):
        # the exact product has frequency 24 > Nyquist; the dealiased product drops it
        f = mode(g32, (12, 0))
        prod = multiply(f, f)
        assert prod.hat[0, 0] == pytest.approx(0.5)
        assert np.abs(prod.hat[8, 0]) < 1e-14

    def test_padding_round_trip(self, g32):
        f = random_field(g32, 9)
        assert from_padded(g32, padded_values(f)).allclose(f)

    def test_resample_refines_and_coarsens(self, g32):
        f = random_field(g32, 10, kmax=6)
        fine = resample(f, Grid(2, 64))
        assert resample(fine, g32).allclose(f)
        assert lp_norm(fine, 2) == pytest.approx(lp_norm(f, 2), rel=1e-12)


class TestSerialization:
    def test_binary(self, g32, tmp_path):
        u = random_field(g32, 11, rank=1)
        path = tmp_path / "u.bin"
        write_binary(u, path)
        back = read_binary(path)
        assert back.grid == g32 and np.array_equal(back.values, u.values)
        raw = path.read_bytes()
        assert np.frombuffer(raw[:24], dtype="<i8").tolist() == [2, 32, 1]
        assert np.frombuffer(raw[24:32], dtype="<f8")[0] == g32.period

    def test_csv(self, tmp_path):
        g = Grid(1, 16)
        f = random_field(g, 12)
        write_csv(f, tmp_path / "f.csv")
        assert read_csv(tmp_path / "f.csv").allclose(f, rtol=1e-15, atol=1e-15)
