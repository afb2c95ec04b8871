import math

import numpy as np
import pytest

from conftest import random_direction
from eprsim import bell
from eprsim.bell import ChshSetting, Distribution, LhvModel, QuadratureError
from eprsim.correlations import MeasurementSetting
from eprsim.qlinalg import Direction

Z = Direction(0, 0, 1)
OPTIMAL = ChshSetting.planar(0, math.pi / 2, math.pi / 4, 3 * math.pi / 4)


def smooth_models():
    """Local response functions bounded by 1 and smooth enough for the sphere rule."""
    return {
        "projection": bell.projection_model(),
        "tanh": LhvModel(lambda a, lam: np.tanh(3 * (lam @ a)), lambda b, lam: -np.tanh(2 * (lam @ b))),
        "cubic": LhvModel(lambda a, lam: (lam @ a) ** 3, lambda b, lam: -(lam @ b)),
        "shifted": LhvModel(lambda a, lam: 0.5 * (lam @ a) + 0.5 * lam[:, 2] ** 2,
                            lambda b, lam: np.cos(2 * (lam @ b))),
        "independent": bell.projection_model(Distribution.INDEPENDENT_ISOTROPIC),
    }


class TestChsh:
    def test_entangled_optimum(self):
        r = bell.chsh(bell.entangled_correlation, OPTIMAL)
        assert abs(abs(r.s_value) - 2 * math.sqrt(2)) < 1e-9
        assert r.s_value < 0

    def test_disentangled_per_pairs(self):
        r = bell.chsh(bell.disentangled_per_pairs_correlation, OPTIMAL)
        assert abs(abs(r.s_value) - math.sqrt(2)) < 1e-9

    def test_convention(self):
        r = bell.chsh(bell.entangled_correlation, OPTIMAL)
        assert r.s_value == pytest.approx(r.e_ab - r.e_abp + r.e_apb + r.e_apbp)

    def test_all_settings_equal(self):
        # with every setting equal the convention collapses to S = 2 E(a, a)
        x = Direction.planar(0.3)
        for e in (bell.entangled_correlation, bell.disentangled_per_pairs_correlation):
            r = bell.chsh(e, ChshSetting(x, x, x, x))
            assert r.s_value == pytest.approx(2 * r.e_ab) and abs(r.e_ab) <= 1 + 1e-12
            assert abs(r.s_value) <= 2 + 1e-12

    def test_linear_in_e(self, rng):
        for _ in range(20):
            s = ChshSetting(*(random_direction(rng) for _ in range(4)))
            alpha = rng.uniform(-2, 2)
            r1 = bell.chsh(bell.entangled_correlation, s)
            r2 = bell.chsh(lambda x, y: alpha * bell.entangled_correlation(x, y), s)
            assert r2.s_value == pytest.approx(alpha * r1.s_value, abs=1e-12)

    def test_built_in_bounds_on_random_settings(self, rng):
        for _ in range(500):
            angles = rng.uniform(0, 2 * math.pi, 4)
            s = ChshSetting.planar(*angles)
            assert abs(bell.chsh(bell.entangled_correlation, s).s_value) <= 2 * math.sqrt(2) + 1e-12
            assert abs(bell.chsh(bell.disentangled_per_pairs_correlation, s).s_value) <= 2 + 1e-12


class TestScan:
    def test_entangled_at_360(self):
        r = bell.chsh_scan(bell.entangled_correlation, 360)
        assert abs(r.s_value) >= 2.828 - 1e-3
        assert abs(r.s_value) >= abs(bell.chsh(bell.entangled_correlation, OPTIMAL).s_value) - 1e-12

    @pytest.mark.parametrize("resolution", [4, 16, 72])
    def test_disentangled_never_exceeds_two(self, resolution):
        r = bell.chsh_scan(bell.disentangled_per_pairs_correlation, resolution)
        assert abs(r.s_value) <= 2 + 1e-12

    def test_constant_zero(self):
        assert bell.chsh_scan(lambda a, b: 0.0, 8).s_value == 0

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError):
            bell.chsh_scan(bell.entangled_correlation, 3)

    def test_scan_matches_brute_force(self):
        n = 8
        angles = 2 * math.pi * np.arange(n) / n
        brute = max(
            abs(bell.chsh(bell.entangled_correlation, ChshSetting.planar(a, ap, b, bp)).s_value)
            for a in angles for ap in angles for b in angles for bp in angles
        )
        assert abs(bell.chsh_scan(bell.entangled_correlation, n).s_value) == pytest.approx(brute, abs=1e-12)


class TestSphereRule:
    def test_weights_sum_to_one(self):
        _, w = bell.sphere_rule(24)
        assert w.sum() == pytest.approx(1, abs=1e-14)

    def test_moments(self):
        nodes, w = bell.sphere_rule(24)
        assert w @ nodes[:, 0] ** 2 == pytest.approx(1 / 3, abs=1e-14)
        assert w @ nodes[:, 2] ** 4 == pytest.approx(1 / 5, abs=1e-14)
        assert w @ (nodes[:, 0] ** 2 * nodes[:, 1] ** 2) == pytest.approx(1 / 15, abs=1e-14)


class TestLhv:
    def test_equal_settings(self):
        assert bell.lhv_correlation(bell.projection_model(), MeasurementSetting(Z, Z)) == pytest.approx(-1 / 3, abs=1e-9)

    def test_orthogonal(self):
        s = MeasurementSetting.planar(0, math.pi / 2)
        assert abs(bell.lhv_correlation(bell.projection_model(), s)) < 1e-9

    def test_minus_third_cos(self, rng):
        for _ in range(50):
            s = MeasurementSetting(random_direction(rng), random_direction(rng))
            assert bell.lhv_correlation(bell.projection_model(), s) == pytest.approx(-s.cos_ab / 3, abs=1e-9)

    def test_quarter_of_it_is_the_isotropic_prefactor(self):
        from eprsim.correlations import ensemble_corr_isotropic
        s = MeasurementSetting.planar(0, 1.0)
        assert 0.25 * bell.lhv_correlation(bell.projection_model(), s) == pytest.approx(ensemble_corr_isotropic(s), abs=1e-9)

    def test_independent_is_zero(self, rng):
        m = bell.projection_model(Distribution.INDEPENDENT_ISOTROPIC)
        for _ in range(20):
            s = MeasurementSetting(random_direction(rng), random_direction(rng))
            assert abs(bell.lhv_correlation(m, s)) < 1e-12

    def test_product_bound_random_quadruples(self, rng):
        models = smooth_models()
        worst = 0.0
        for k in range(1000):
            m = list(models.values())[k % len(models)]
            s = ChshSetting(*(random_direction(rng) for _ in range(4)))
            worst = max(worst, abs(bell.lhv_chsh(m, s).s_value))
        assert worst <= 2 + 1e-6

    def test_sign_model_fails_to_converge(self):
        m = LhvModel(lambda a, lam: np.sign(lam @ a), lambda b, lam: -np.sign(lam @ b))
        with pytest.raises(QuadratureError) as info:
            bell.lhv_correlation(m, MeasurementSetting.planar(0, 1.0))
        assert info.value.achieved > info.value.tol

    def test_rejects_unbounded_response(self):
        m = LhvModel(lambda a, lam: 2 * (lam @ a), lambda b, lam: lam @ b)
        with pytest.raises(ValueError):
            bell.lhv_correlation(m, MeasurementSetting(Z, Z))
