import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnlap.errors import DomainError, FormatError, ParameterError
from knnlap.knn import (
    BandwidthProfile,
    PointCloud,
    bandwidth_profile,
    knn_all,
    knn_distance,
    knn_query,
    weighted_knn_distance,
)

LINE = PointCloud([0.0, 1.0, 3.0, 7.0])


class TestPointCloud:
    def test_line_input(self):
        assert LINE.points.shape == (4, 1)

    def test_read_only(self):
        with pytest.raises(ValueError):
            LINE.points[0, 0] = 5.0

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            PointCloud([[0.0, np.nan]])

    def test_intrinsic_range(self):
        with pytest.raises(DomainError):
            PointCloud([[0.0], [1.0]], intrinsic=[0.2, 1.0])

    def test_intrinsic_length(self):
        with pytest.raises(FormatError):
            PointCloud([[0.0], [1.0]], intrinsic=[0.2])

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        cloud = PointCloud(rng.normal(size=(50, 3)), intrinsic=rng.random(50))
        path = tmp_path / "cloud.csv"
        cloud.to_csv(path)
        assert path.read_text().splitlines()[0] == "x1,x2,x3,t"
        back = PointCloud.from_csv(path)
        assert np.array_equal(back.points, cloud.points)
        assert np.array_equal(back.intrinsic, cloud.intrinsic)

    def test_csv_without_intrinsic(self, tmp_path):
        path = tmp_path / "cloud.csv"
        LINE.to_csv(path)
        back = PointCloud.from_csv(path)
        assert back.intrinsic is None
        assert np.array_equal(back.points, LINE.points)

    @pytest.mark.parametrize("text", ["a,b\n1,2\n", "x1,x2\n1,2,3\n", "x1\nfoo\n", "x1,x2\n"])
    def test_bad_csv(self, tmp_path, text):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(FormatError):
            PointCloud.from_csv(path)


class TestKnnDistance:
    def test_second_neighbor_at_origin(self):
        assert knn_distance(LINE, [0.0], 2) == 1.0

    def test_off_cloud_query(self):
        assert knn_distance(LINE, [2.0], 1) == 1.0

    def test_self_counts(self):
        rng = np.random.default_rng(0)
        cloud = PointCloud(rng.random((20, 3)))
        assert knn_distance(cloud, cloud.points[0], 1) == 0.0

    def test_k_equal_n_allowed(self):
        assert knn_distance(LINE, [0.0], 4) == 7.0

    @pytest.mark.parametrize("k", [0, 5, 1.5])
    def test_bad_k(self, k):
        with pytest.raises(ParameterError):
            knn_distance(LINE, [0.0], k)

    def test_bad_query(self):
        with pytest.raises(DomainError):
            knn_distance(LINE, [np.inf], 1)

    def test_bad_method(self):
        with pytest.raises(ParameterError):
            knn_query(LINE, [0.0], 1, method="approx")


class TestKnnAll:
    @pytest.mark.parametrize("method", ["brute", "indexed", "auto"])
    def test_line_example(self, method):
        assert knn_all(LINE, 2, method).tolist() == [1.0, 1.0, 2.0, 4.0]

    @pytest.mark.parametrize("method", ["brute", "indexed"])
    def test_duplicates(self, method):
        assert knn_all(PointCloud([0.0, 0.0, 5.0]), 2, method).tolist() == [0.0, 0.0, 5.0]

    def test_k_one_is_zero(self):
        rng = np.random.default_rng(1)
        assert np.all(knn_all(PointCloud(rng.random((30, 2))), 1) == 0.0)

    def test_k_equal_n_rejected(self):
        with pytest.raises(ParameterError):
            knn_all(LINE, 4)

    def test_indexed_equals_brute_on_random_clouds(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n = int(rng.integers(2, 2001))
            m = int(rng.integers(1, 9))
            pts = rng.normal(size=(n, m))
            if rng.random() < 0.3:
                pts = np.round(pts, 1)  # force exact ties
            cloud = PointCloud(pts)
            k = int(rng.integers(1, min(n, 80)))
            assert np.array_equal(knn_all(cloud, k, "brute"), knn_all(cloud, k, "indexed"))

    @pytest.mark.slow
    def test_indexed_equals_brute_large(self):
        rng = np.random.default_rng(5)
        cloud = PointCloud(rng.random((5000, 4)))
        for k in (1, 7, 64, 600):
            assert np.array_equal(knn_all(cloud, k, "brute"), knn_all(cloud, k, "indexed"))

    def test_monotone_in_k(self):
        rng = np.random.default_rng(7)
        cloud = PointCloud(rng.random((400, 3)))
        prev = knn_all(cloud, 1)
        for k in range(2, 40):
            cur = knn_all(cloud, k)
            assert np.all(cur >= prev)
            prev = cur

    def test_lipschitz(self):
        rng = np.random.default_rng(11)
        cloud = PointCloud(rng.normal(size=(500, 3)))
        x = rng.normal(size=(1000, 3)) * 1.5
        y = x + rng.normal(size=(1000, 3)) * rng.uniform(0.001, 1.0, (1000, 1))
        for k in (1, 10, 100):
            gap = np.abs(knn_query(cloud, x, k) - knn_query(cloud, y, k))
            assert np.all(gap <= np.linalg.norm(x - y, axis=1) * (1 + 1e-12))


class TestBandwidthProfile:
    def test_rescaling_example(self):
        prof = BandwidthProfile.from_radii(np.array([0.1]), 32, 2000, 1)
        assert prof.rho_hat[0] == pytest.approx(12.5, rel=1e-12)
        assert prof.r_k == pytest.approx(6.4e-5, rel=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_consistency(self, d):
        rng = np.random.default_rng(d)
        prof = bandwidth_profile(PointCloud(rng.random((300, 3))), 12, d)
        np.testing.assert_allclose(math.sqrt(prof.r_k) * prof.rho_hat, prof.r_hat, rtol=1e-12)

    def test_bad_dimension(self):
        with pytest.raises(DomainError):
            bandwidth_profile(LINE, 2, 0)


class TestWeightedKnn:
    @pytest.mark.parametrize("method", ["brute", "indexed"])
    def test_unit_weights_match_knn(self, method):
        rng = np.random.default_rng(4)
        cloud = PointCloud(rng.random((300, 2)))
        q = rng.random((50, 2))
        expected = knn_query(cloud, q, 9, "brute")
        assert np.array_equal(weighted_knn_distance(cloud, np.ones(300), q, 9.0, method), expected)

    def test_methods_agree(self):
        rng = np.random.default_rng(8)
        pts = rng.random((1500, 3))
        pts[::5] = np.round(pts[::5], 1)
        cloud = PointCloud(pts)
        w = rng.uniform(0.1, 3.0, 1500)
        q = np.vstack([rng.random((100, 3)), pts[:20]])
        for mass in (0.05, 4.0, 300.0, w.sum()):
            a = weighted_knn_distance(cloud, w, q, mass, "brute")
            b = weighted_knn_distance(cloud, w, q, mass, "indexed")
            assert np.array_equal(a, b)

    def test_bad_method(self):
        with pytest.raises(ParameterError):
            weighted_knn_distance(LINE, np.ones(4), [[0.0]], 1.0, "approx")

    def test_fractional_mass(self):
        cloud = PointCloud([0.0, 1.0, 2.0, 3.0])
        w = np.array([0.5, 0.5, 2.0, 1.0])
        # cumulative mass from 0: 0.5, 1.0, 3.0, 4.0
        assert weighted_knn_distance(cloud, w, [[0.0]], 1.2)[0] == 2.0
        assert weighted_knn_distance(cloud, w, [[0.0]], 1.0)[0] == 1.0

    def test_bad_weights(self):
        with pytest.raises(DomainError):
            weighted_knn_distance(LINE, [1, 1, 0, 1], [[0.0]], 1.0)

    def test_bad_mass(self):
        with pytest.raises(ParameterError):
            weighted_knn_distance(LINE, np.ones(4), [[0.0]], 5.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), mass=st.floats(0.5, 30.0))
    def test_matches_sorted_cumsum(self, seed, mass):
        rng = np.random.default_rng(seed)
        pts = rng.random((60, 2))
        w = rng.uniform(0.2, 2.0, 60)
        q = rng.random(2)
        got = weighted_knn_distance(PointCloud(pts), w, q[None, :], mass)[0]
        d = np.sqrt(((pts - q) ** 2).sum(axis=1))
        order = np.argsort(d, kind="stable")
        idx = np.searchsorted(np.cumsum(w[order]), mass * (1 - 1e-15))
        assert got == pytest.approx(d[order][idx], rel=1e-12)
