import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import directions, random_direction
from eprsim import correlations as C
from eprsim.correlations import CoincidenceTable, MeasurementSetting, TableNorm
from eprsim.qlinalg import EPS, ContractError, Direction

Z = Direction(0, 0, 1)


def unit_sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def amplitude_table(a, b):
    """Joint probabilities from the singlet via eigenvectors found numerically."""
    def eigvecs(d):
        m = d.x * np.array([[0, 1], [1, 0]]) + d.y * np.array([[0, -1j], [1j, 0]]) + d.z * np.diag([1, -1])
        w, v = np.linalg.eigh(m)
        return {+1: v[:, np.argmax(w)], -1: v[:, np.argmin(w)]}

    psi = np.array([0, 1, -1, 0]) / math.sqrt(2)
    ea, eb = eigvecs(a), eigvecs(b)
    return tuple(abs(np.vdot(np.kron(ea[sa], eb[sb]), psi)) ** 2 for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)))


class TestEntangled:
    def test_forty_five_degrees(self):
        s = MeasurementSetting.planar(0, math.pi / 4)
        assert C.corr_entangled(s) == pytest.approx(-0.70710678, abs=1e-8)

    def test_parallel_and_antiparallel(self):
        assert C.corr_entangled(MeasurementSetting(Z, Z)) == pytest.approx(-1, abs=EPS)
        assert C.corr_entangled(MeasurementSetting(Z, -Z)) == pytest.approx(1, abs=EPS)

    def test_dual_path_random(self, rng):
        for _ in range(1000):
            s = MeasurementSetting(random_direction(rng), random_direction(rng))
            assert abs(C.corr_entangled_trace(s) + s.cos_ab) < EPS
            assert abs(C.corr_entangled(s) - C.corr_entangled_trace(s)) < EPS

    def test_table_examples(self):
        t = C.coincidence_entangled(MeasurementSetting.planar(0, 0))
        assert np.allclose(t.as_tuple(), (0, 0.5, 0.5, 0), atol=EPS)
        t = C.coincidence_entangled(MeasurementSetting.planar(0, math.pi / 2))
        assert np.allclose(t.as_tuple(), (0.25,) * 4, atol=EPS)

    def test_table_against_amplitudes(self, rng):
        for _ in range(200):
            a, b = random_direction(rng), random_direction(rng)
            t = C.coincidence_entangled(MeasurementSetting(a, b))
            assert np.allclose(t.as_tuple(), amplitude_table(a, b), atol=1e-12)
            assert abs(t.total() - 1) < EPS


class TestFixedAxis:
    def test_single_expectations_along_axis(self):
        assert C.single_expectations(MeasurementSetting(Z, Z), Z) == pytest.approx((0.5, -0.5))

    def test_pair_product_maximum(self):
        assert C.pair_product_fixed_axis(MeasurementSetting(Z, Z), Z) == pytest.approx(-0.25, abs=EPS)

    def test_pair_product_transverse_axis(self):
        x = Direction(1, 0, 0)
        assert abs(C.pair_product_fixed_axis(MeasurementSetting(Z, Z), x)) < EPS

    def test_single_side_probs(self):
        p = C.single_side_probs(MeasurementSetting(Z, Z), Z)
        assert np.allclose(p, (0.5, 0, 0, 0.5), atol=EPS)

    @given(directions, directions, directions)
    def test_single_side_probs_sum(self, a, b, p):
        assert abs(sum(C.single_side_probs(MeasurementSetting(a, b), p)) - 1) < 1e-12

    def test_fixed_table_example(self):
        t = C.coincidence_disentangled_fixed(MeasurementSetting(Z, Z), Z)
        assert np.allclose(t.as_tuple(), (0, 1 / 8, 1 / 8, 0), atol=EPS)
        assert t.normalization is TableNorm.RAW

    def test_fixed_table_correlation_is_pair_product(self, rng):
        for _ in range(200):
            s = MeasurementSetting(random_direction(rng), random_direction(rng))
            p = random_direction(rng)
            t = C.coincidence_disentangled_fixed(s, p)
            assert abs(t.total() - 0.25) < EPS
            assert abs(t.correlation() - C.pair_product_fixed_axis(s, p)) < EPS


class TestAngleDecomposition:
    def test_axis_along_z(self):
        a = Direction.from_polar(math.pi / 3, 0.2)
        b = Direction.from_polar(math.pi / 4, 1.1)
        c, i = C.angle_decomposition(MeasurementSetting(a, b), Z)
        assert c == pytest.approx(math.cos(math.pi / 3) * math.cos(math.pi / 4), abs=EPS)
        assert i == pytest.approx(math.sin(math.pi / 3) * math.sin(math.pi / 4) * math.cos(0.2 - 1.1), abs=EPS)

    def test_degenerate_azimuth(self):
        b = Direction.from_polar(0.7, 0.3)
        c, i = C.angle_decomposition(MeasurementSetting(Z, b), Z)
        assert i == 0.0 and c == pytest.approx(math.cos(0.7), abs=EPS)

    def test_random_triples(self, rng):
        for _ in range(1000):
            s = MeasurementSetting(random_direction(rng), random_direction(rng))
            p = random_direction(rng)
            c, i = C.angle_decomposition(s, p)
            assert abs(c + i - s.cos_ab) < 1e-12
            assert abs(c - s.a.dot(p) * s.b.dot(p)) < 1e-12
            # interference part = entangled correlation minus the classical part
            assert abs(-i - (C.corr_entangled(s) + c)) < 1e-12
            ta, pa = C.frame_angles(s.a, p)
            tb, pb = C.frame_angles(s.b, p)
            assert abs(i - math.sin(ta) * math.sin(tb) * math.cos(pa - pb)) < 1e-9


class TestEnsembleAverages:
    def test_isotropic_sixty_degrees(self):
        assert C.ensemble_corr_isotropic(MeasurementSetting.planar(0, math.pi / 3)) == pytest.approx(-1 / 24)

    @pytest.mark.slow
    def test_isotropic_by_sphere_sampling(self):
        # mean of -(a.P)(b.P)/4 over isotropic P, 10^7 samples in chunks
        rng = np.random.default_rng(7)
        s = MeasurementSetting.planar(0, math.pi / 3)
        a, b = s.a.as_array(), s.b.as_array()
        total, total2, n = 0.0, 0.0, 0
        for _ in range(10):
            p = unit_sphere(rng, 10**6)
            x = -0.25 * (p @ a) * (p @ b)
            total += x.sum()
            total2 += (x * x).sum()
            n += x.size
        mean = total / n
        se = math.sqrt((total2 / n - mean**2) / (n - 1))
        assert abs(mean - C.ensemble_corr_isotropic(s)) < 3 * se

    def test_nonpair_by_sampling(self):
        rng = np.random.default_rng(11)
        n = 10**6
        s = MeasurementSetting.planar(0, 0)
        p, q = unit_sphere(rng, n), unit_sphere(rng, n)
        x = -0.25 * (p @ s.a.as_array()) * (q @ s.b.as_array())
        assert C.nonpair_corr() == 0.0
        assert abs(x.mean()) < 3 / math.sqrt(n)


class TestPlanar:
    def test_raw_table_at_zero(self):
        t = C.coincidence_disentangled_planar(MeasurementSetting.planar(0, 0))
        assert np.allclose(t.as_tuple(), (1 / 32, 3 / 32, 3 / 32, 1 / 32), atol=EPS)
        assert abs(t.total() - 0.25) < EPS
        assert C.corr_disentangled_planar(MeasurementSetting.planar(0, 0)) == pytest.approx(-0.125, abs=EPS)

    def test_per_pairs_table(self):
        s = MeasurementSetting.planar(0, 0)
        t = C.coincidence_disentangled_planar(s, TableNorm.PER_PAIRS)
        assert np.allclose(t.as_tuple(), (1 / 8, 3 / 8, 3 / 8, 1 / 8), atol=EPS)
        assert C.corr_disentangled_planar(s, TableNorm.PER_PAIRS) == pytest.approx(-0.5, abs=EPS)

    def test_per_pairs_is_four_times_raw(self, rng):
        for ang in rng.uniform(0, 2 * math.pi, size=(100, 2)):
            s = MeasurementSetting.planar(*ang)
            raw = C.coincidence_disentangled_planar(s)
            pairs = C.coincidence_disentangled_planar(s, TableNorm.PER_PAIRS)
            assert np.allclose(np.array(raw.as_tuple()) * 4, pairs.as_tuple(), atol=EPS)
            assert abs(pairs.total() - 1) < EPS
            assert abs(raw.correlation() + s.cos_ab / 8) < EPS

    def test_planar_average_by_sampling(self, rng):
        # sampled planar axes reproduce the raw planar table from the fixed-axis tables
        s = MeasurementSetting.planar(0.3, 1.4)
        acc = np.zeros(4)
        phis = rng.uniform(0, 2 * math.pi, 2000)
        for phi in phis:
            acc += C.coincidence_disentangled_fixed(s, Direction.planar(phi)).as_tuple()
        acc /= len(phis)
        assert np.allclose(acc, C.coincidence_disentangled_planar(s).as_tuple(), atol=5e-4)

    def test_out_of_plane_rejected(self):
        s = MeasurementSetting(Direction.from_polar(1.0, 0), Direction.planar(0))
        with pytest.raises(ContractError):
            C.coincidence_disentangled_planar(s)
        with pytest.raises(ContractError):
            C.corr_disentangled_planar(MeasurementSetting(Z, Z))


class TestTables:
    def test_rejects_bad_probability(self):
        with pytest.raises(ContractError):
            CoincidenceTable(1.5, 0, 0, 0, TableNorm.RAW)

    def test_per_pairs_must_sum_to_one(self):
        with pytest.raises(ContractError):
            CoincidenceTable(0.1, 0.1, 0.1, 0.1, TableNorm.PER_PAIRS)

    def test_to_pairs(self):
        t = CoincidenceTable(0.05, 0.1, 0.05, 0.05, TableNorm.RAW).to_pairs()
        assert t.as_tuple() == pytest.approx((0.2, 0.4, 0.2, 0.2))


class TestDetection:
    def test_report_values(self):
        r = C.detection_report(MeasurementSetting.planar(0, 0))
        assert r.raw_sum == pytest.approx(0.25, abs=EPS)
        assert r.per_channel_scale == 1 / 16
        assert r.per_channel_max == pytest.approx(3 / 32)
        assert r.entangled_sum == pytest.approx(1.0, abs=EPS)
        assert r.raw_correlation == pytest.approx(-0.125, abs=EPS)
        assert any("cos^2" in n for n in r.notes)


class TestProperties:
    @settings(max_examples=200)
    @given(directions, directions, directions)
    def test_decomposition_sums(self, a, b, p):
        s = MeasurementSetting(a, b)
        c, i = C.angle_decomposition(s, p)
        assert abs(c + i - a.dot(b)) < 1e-12

    @given(directions, directions)
    def test_entangled_table_is_probability(self, a, b):
        t = C.coincidence_entangled(MeasurementSetting(a, b))
        assert all(v >= -EPS for v in t.as_tuple())
        assert abs(t.correlation() + a.dot(b)) < 1e-12
