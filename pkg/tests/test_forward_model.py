import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upnet.forward_model import (
    LinearGaussianModel,
    TabulatedModel,
    ToyCanopyModel,
    eval_canopy,
    eval_linear,
    eval_tabulated,
    sensor_preset,
    soil_reflectance,
)

# Golden reflectances from an independent scalar (math-module) evaluation of
# the canopy formula with the default band constants.
GOLDEN = {
    (3.0, 55.0, 30.0, 0.5, 0.8): [0.0373245140838415, 0.07532865002016845, 0.05115236624003547,
                                  0.3632990774144435, 0.24568349534400621, 0.1611197674028567],
    (1.2, 45.0, 60.0, 0.2, 1.0): [0.05668942150531697, 0.09433644271212285, 0.09730342965339253,
                                  0.31601123072607595, 0.2744673207503455, 0.2282587673560713],
}


class TestLinear:
    def test_zero_theta_returns_offset(self):
        m = LinearGaussianModel(np.ones((3, 2)), [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(eval_linear(m, [0.0, 0.0]), [0.1, 0.2, 0.3])

    def test_identity(self):
        m = LinearGaussianModel(np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(m([0.3, 0.7]), [0.3, 0.7])

    def test_hand_multiply(self):
        m = LinearGaussianModel([[2, 0], [0, 3], [1, 1]], [0.1, 0.1, 0.1])
        np.testing.assert_allclose(m([0.2, 0.1]), [0.5, 0.4, 0.4], rtol=0, atol=1e-15)

    def test_batch_shape(self):
        m = LinearGaussianModel(np.ones((3, 2)), np.zeros(3))
        assert m(np.zeros((5, 2))).shape == (5, 3)

    def test_dimension_mismatch(self):
        m = LinearGaussianModel(np.ones((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            m([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            LinearGaussianModel(np.ones((3, 2)), np.zeros(2))


class TestSoil:
    def test_endpoints(self):
        rw, rd = np.array([0.1, 0.2]), np.array([0.3, 0.4])
        np.testing.assert_array_equal(soil_reflectance(1.0, 1.0, rw, rd), rw)
        np.testing.assert_array_equal(soil_reflectance(1.0, 0.0, rw, rd), rd)

    def test_mixture_arithmetic(self):
        assert soil_reflectance(0.8, 0.5, [0.1], [0.3])[0] == pytest.approx(0.16, abs=1e-15)

    def test_affine_in_psoil(self):
        rw, rd = np.array([0.05, 0.12, 0.2]), np.array([0.1, 0.25, 0.33])
        mid = soil_reflectance(0.7, 0.5, rw, rd)
        ends = 0.5 * (soil_reflectance(0.7, 0.0, rw, rd) + soil_reflectance(0.7, 1.0, rw, rd))
        np.testing.assert_allclose(mid, ends, rtol=0, atol=1e-16)

    @pytest.mark.parametrize("psoil", [-0.1, 1.2])
    def test_rejects_bad_psoil(self, psoil):
        with pytest.raises(ValueError):
            soil_reflectance(1.0, psoil, [0.1], [0.2])


class TestCanopy:
    model = ToyCanopyModel()

    def test_bare_soil_limit(self):
        r = eval_canopy(self.model, [0.0, 50.0, 40.0, 0.3, 0.8])
        soil = soil_reflectance(0.8, 0.3, self.model.r_wet, self.model.r_dry)
        np.testing.assert_array_equal(r, soil)

    def test_dense_canopy_saturates(self):
        cab = 40.0
        r = eval_canopy(self.model, [50.0, 45.0, cab, 0.3, 0.8])
        veg = self.model.rho_max * np.exp(-self.model.alpha * cab)
        assert np.all(np.abs(r - veg) < 1e-6)

    @pytest.mark.parametrize("theta", list(GOLDEN))
    def test_golden(self, theta):
        np.testing.assert_allclose(self.model(np.array(theta)), GOLDEN[theta], rtol=1e-13)

    def test_batch_matches_rows(self):
        thetas = np.array(list(GOLDEN))
        np.testing.assert_allclose(self.model(thetas), np.array(list(GOLDEN.values())), rtol=1e-13)

    @pytest.mark.parametrize("bad", [
        [-1.0, 50, 30, 0.5, 0.8], [2.0, 90, 30, 0.5, 0.8], [2.0, 50, -3, 0.5, 0.8],
        [2.0, 50, 30, 1.5, 0.8], [2.0, 50, 30, 0.5, -0.1],
    ])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError):
            self.model(bad)

    def test_monotone_in_lai_toward_vegetation(self):
        lai = np.linspace(0, 12, 200)
        theta = np.column_stack([lai, np.full_like(lai, 50), np.full_like(lai, 20),
                                 np.full_like(lai, 0.5), np.full_like(lai, 0.8)])
        r = self.model(theta)
        veg = self.model.rho_max * np.exp(-self.model.alpha * 20)
        soil = soil_reflectance(0.8, 0.5, self.model.r_wet, self.model.r_dry)
        up = veg > soil
        assert up.any()
        assert np.all(np.diff(r[:, up], axis=0) >= 0)
        assert np.all(np.diff(r[:, ~up], axis=0) <= 0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 10), st.floats(0, 89), st.floats(0, 100), st.floats(0, 1), st.floats(0, 1.5))
    def test_pure_and_finite(self, lai, ala, cab, psoil, rsoil):
        theta = np.array([lai, ala, cab, psoil, rsoil])
        a, b = self.model(theta), self.model(theta.copy())
        assert np.array_equal(a, b)
        assert np.all(np.isfinite(a))

    def test_constant_validation(self):
        with pytest.raises(ValueError):
            ToyCanopyModel(k=(0.0,) * 6)
        with pytest.raises(ValueError):
            ToyCanopyModel(sza=90)
        with pytest.raises(ValueError):
            ToyCanopyModel(k=(0.5,) * 5)


class TestTabulated:
    def _grid(self):
        a, b = np.meshgrid([0.0, 1.0, 2.0], [10.0, 20.0], indexing="ij")
        thetas = np.column_stack([a.ravel(), b.ravel()])
        refl = np.column_stack([0.1 * thetas[:, 0] + 0.01 * thetas[:, 1], thetas[:, 0] ** 2])
        return thetas, refl

    @pytest.mark.parametrize("mode", ["nearest", "multilinear"])
    def test_grid_points_exact(self, mode):
        thetas, refl = self._grid()
        m = TabulatedModel(thetas, refl, mode)
        np.testing.assert_array_equal(eval_tabulated(m, thetas), refl)

    def test_single_entry_nearest(self):
        m = TabulatedModel([[1.0, 2.0]], [[0.3, 0.4]])
        np.testing.assert_array_equal(m([100.0, -5.0]), [0.3, 0.4])

    def test_1d_linear_interp(self):
        m = TabulatedModel([[0.0], [1.0]], [[0.1], [0.3]], "multilinear")
        assert m([0.25])[0] == pytest.approx(0.15, abs=1e-15)

    def test_multilinear_recovers_linear_function(self):
        thetas, refl = self._grid()
        m = TabulatedModel(thetas, refl, "multilinear")
        assert m([0.5, 15.0])[0] == pytest.approx(0.1 * 0.5 + 0.01 * 15.0, abs=1e-14)

    def test_nearest_uses_standardised_distance(self):
        # raw distance would pick the first entry; range-scaled distance picks the second
        m = TabulatedModel([[0.0, 0.0], [1.0, 100.0]], [[1.0], [2.0]])
        assert m([0.9, 45.0])[0] == 2.0

    def test_errors(self):
        with pytest.raises(ValueError):
            TabulatedModel(np.empty((0, 2)), np.empty((0, 3)))
        m = TabulatedModel([[0.0], [1.0]], [[0.1], [0.3]], "multilinear")
        with pytest.raises(ValueError):
            m([1.5])
        with pytest.raises(ValueError):
            TabulatedModel([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [[1], [2], [3]], "multilinear")

    def test_degenerate_axis(self):
        m = TabulatedModel([[0.0, 5.0], [1.0, 5.0]], [[0.1], [0.3]], "multilinear")
        assert m([0.5, 5.0])[0] == pytest.approx(0.2)


class TestSensors:
    def test_landsat8(self):
        s = sensor_preset("landsat8")
        assert len(s) == 6
        assert s.bands[2].band_name == "Red"
        assert s.bands[2].central_wavelength == 655
        assert s.bands[5].bandwidth == 187

    def test_sentinel2(self):
        s = sensor_preset("sentinel2")
        assert len(s) == 10
        assert [b.central_wavelength for b in s.bands] == [490, 560, 665, 705, 740, 783, 842, 865, 1610, 2190]

    def test_unknown(self):
        with pytest.raises(ValueError):
            sensor_preset("modis")
