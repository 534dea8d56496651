import math

import numpy as np
import pytest

from camrad import (
    CfarConfig,
    ConfigError,
    DbscanConfig,
    RadarPoint,
    RfImage,
    cfar_detect,
    cluster_peaks,
)
from camrad.rf_detect import RadarPeak, weighted_centroid

from reference_detect import cfar_cells_reference, dbscan_partition_reference


def make_image(data, range_res=0.25, range_min=0.5, frame_id=0):
    data = np.asarray(data, dtype=float)
    grid = np.linspace(-math.radians(45), math.radians(45), data.shape[1])
    return RfImage(data, range_res, range_min, grid, frame_id)


def peak_at(x, z, magnitude=1.0, cell=(0, 0)):
    return RadarPeak(RadarPoint(math.hypot(x, z), math.atan2(x, z)),
                     magnitude, cell)


class TestCfar:
    def test_constant_image_is_empty(self):
        img = make_image(np.full((32, 32), 3.7))
        assert cfar_detect(img) == []

    def test_single_hot_cell_thresholding(self):
        # Full training ring: N = 13*13 - 5*5 = 144, so the multiplier
        # is 144*(0.001**(-1/144) - 1) ~ 7.076 against a unit-mean ring.
        n = 144
        alpha = n * (0.001 ** (-1.0 / n) - 1.0)
        assert 7.0 < alpha < 7.1

        base = np.ones((32, 32))
        base[16, 16] = alpha + 0.1
        hits = cfar_detect(make_image(base))
        assert [p.cell for p in hits] == [(16, 16)]

        base[16, 16] = alpha - 0.1
        assert cfar_detect(make_image(base)) == []

    def test_peak_coordinates(self):
        data = np.ones((20, 9))
        data[10, 4] = 50.0
        img = make_image(data, range_res=0.5, range_min=1.0)
        (p,) = cfar_detect(img)
        assert p.point.r == pytest.approx(1.0 + 10 * 0.5)
        assert p.point.theta == pytest.approx(0.0, abs=1e-12)
        assert p.magnitude == 50.0

    def test_zero_range_bin_is_skipped(self):
        data = np.ones((24, 8))
        data[0, 3] = 100.0
        data[12, 5] = 100.0
        img = make_image(data, range_res=0.25, range_min=0.0)
        assert [p.cell for p in cfar_detect(img)] == [(12, 5)]

    @pytest.mark.parametrize("shape,cfg_kw,seed", [
        ((16, 12), {}, 0),
        ((16, 12), dict(guard_range=1, guard_azimuth=1,
                        train_range=2, train_azimuth=2, pfa=1e-2), 1),
        ((9, 20), dict(pfa=0.05), 2),
        ((7, 7), dict(guard_range=0, guard_azimuth=0,
                      train_range=3, train_azimuth=2, pfa=0.02), 3),
    ])
    def test_matches_direct_scan(self, shape, cfg_kw, seed):
        """Vectorized detector equals the per-cell loop reference."""
        rng = np.random.default_rng(seed)
        data = rng.exponential(1.0, size=shape)
        for ri, ai in [(shape[0] // 2, shape[1] // 3), (1, shape[1] - 2)]:
            data[ri, ai] += rng.exponential(20.0)
        cfg = CfarConfig(**cfg_kw)
        got = {p.cell for p in cfar_detect(make_image(data), cfg)}
        want = cfar_cells_reference(data.tolist(), cfg.guard_range,
                                    cfg.guard_azimuth, cfg.train_range,
                                    cfg.train_azimuth, cfg.pfa)
        assert got == want

    def test_interior_shift_equivariance(self):
        rng = np.random.default_rng(7)
        data = rng.exponential(1.0, size=(40, 40))
        data[20, 20] = 300.0
        shifted = np.roll(np.roll(data, 3, axis=0), -2, axis=1)
        cfg = CfarConfig()
        margin = cfg.guard_range + cfg.train_range + 3
        inner = lambda cells: {(i, j) for i, j in cells
                               if margin <= i < 40 - margin
                               and margin <= j < 40 - margin}
        a = inner(p.cell for p in cfar_detect(make_image(data), cfg))
        b = {(i - 3, j + 2) for i, j
             in inner(p.cell for p in cfar_detect(make_image(shifted), cfg))}
        assert a and a == b

    def test_scale_invariance(self):
        rng = np.random.default_rng(11)
        data = rng.exponential(1.0, size=(24, 24)) + 0.01
        data[12, 12] = 80.0
        base = {p.cell for p in cfar_detect(make_image(data))}
        for c in (1e-3, 7.3, 1e4):
            scaled = {p.cell for p in cfar_detect(make_image(c * data))}
            assert scaled == base

    def test_detections_monotone_in_pfa(self):
        rng = np.random.default_rng(13)
        data = rng.exponential(1.0, size=(30, 30))
        counts = [len(cfar_detect(make_image(data), CfarConfig(pfa=p)))
                  for p in (1e-4, 1e-3, 1e-2, 0.1, 0.3)]
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        assert counts[-1] > 0

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            CfarConfig(guard_range=-1)
        with pytest.raises(ConfigError):
            CfarConfig(train_range=0)
        with pytest.raises(ConfigError):
            CfarConfig(pfa=0.0)
        with pytest.raises(ConfigError):
            CfarConfig(pfa=1.0)


class TestRfImage:
    def test_rejects_bad_data(self):
        grid = np.linspace(-0.5, 0.5, 4)
        with pytest.raises(ValueError):
            RfImage(np.zeros((0, 4)), 0.25, 0.0, grid)
        with pytest.raises(ValueError):
            RfImage(-np.ones((3, 4)), 0.25, 0.0, grid)
        with pytest.raises(ValueError):
            RfImage(np.full((3, 4), np.nan), 0.25, 0.0, grid)
        with pytest.raises(ValueError):
            RfImage(np.ones((3, 4)), 0.0, 0.0, grid)
        with pytest.raises(ValueError):
            RfImage(np.ones((3, 4)), 0.25, -1.0, grid)

    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            RfImage(np.ones((3, 4)), 0.25, 0.0, np.zeros(3))
        with pytest.raises(ValueError):
            RfImage(np.ones((3, 4)), 0.25, 0.0, np.array([0.3, 0.2, 0.1, 0.0]))
        with pytest.raises(ValueError):
            RfImage(np.ones((3, 4)), 0.25, 0.0, np.array([-2.0, 0.0, 1.0, 2.0]))

    def test_data_is_frozen(self):
        img = make_image(np.ones((4, 4)))
        with pytest.raises(ValueError):
            img.data[0, 0] = 5.0

    def test_geometry_helpers(self):
        img = make_image(np.ones((8, 5)), range_res=0.5, range_min=1.0)
        assert img.range_of_bin(3) == pytest.approx(2.5)
        r_lo, r_hi, th_lo, th_hi = img.fov()
        assert (r_lo, r_hi) == (1.0, 4.5)
        assert th_lo == pytest.approx(-math.radians(45))
        assert th_hi == pytest.approx(math.radians(45))


class TestClustering:
    def test_nearby_peaks_merge(self):
        peaks = [peak_at(0.0, 5.0, cell=(0, 0)), peak_at(0.5, 5.0, cell=(1, 0))]
        clusters = cluster_peaks(peaks)
        assert len(clusters) == 1
        assert len(clusters[0].peaks) == 2

    def test_distant_peaks_split(self):
        peaks = [peak_at(0.0, 5.0, cell=(0, 0)),
                 peak_at(0.3, 5.2, cell=(1, 0)),
                 peak_at(0.0, 12.0, cell=(2, 0))]
        clusters = cluster_peaks(peaks)
        assert sorted(len(c.peaks) for c in clusters) == [1, 2]

    def test_cluster_ids_follow_cell_order(self):
        far = peak_at(0.0, 12.0, cell=(3, 0))
        near = peak_at(0.0, 5.0, cell=(9, 1))
        clusters = cluster_peaks([near, far])
        assert clusters[0].peaks[0].cell == (3, 0)
        assert [c.cluster_id for c in clusters] == [0, 1]

    def test_border_point_joins_nearest_core(self):
        cfg = DbscanConfig(eps_m=1.0, min_pts=3)
        pts = [(0.0, 5.0), (0.8, 5.0), (-0.8, 5.0), (1.7, 5.0), (8.0, 14.0)]
        peaks = [peak_at(x, z, cell=(i, 0)) for i, (x, z) in enumerate(pts)]
        clusters = cluster_peaks(peaks, cfg)
        assert len(clusters) == 1
        members = {p.cell[0] for p in clusters[0].peaks}
        assert members == {0, 1, 2, 3}

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        pts = [(float(x), float(z)) for x, z in
               zip(rng.uniform(-6, 6, 25), rng.uniform(2, 18, 25))]
        peaks = [peak_at(x, z, magnitude=float(rng.uniform(1, 9)), cell=(i, 0))
                 for i, (x, z) in enumerate(pts)]
        cfg = DbscanConfig(eps_m=1.5, min_pts=2)

        def signature(cs):
            return {frozenset(p.cell for p in c.peaks): c.cluster_id for c in cs}

        base = signature(cluster_peaks(peaks, cfg))
        for seed in range(5):
            shuffled = list(peaks)
            np.random.default_rng(seed).shuffle(shuffled)
            assert signature(cluster_peaks(shuffled, cfg)) == base

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_union_find_reference(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(1, 14))
        pts = []
        for _ in range(n):
            if rng.random() < 0.5 and pts:
                px, pz = pts[int(rng.integers(len(pts)))]
                pts.append((px + float(rng.normal(0, 0.5)),
                            max(0.5, pz + float(rng.normal(0, 0.5)))))
            else:
                pts.append((float(rng.uniform(-8, 8)),
                            float(rng.uniform(1, 18))))
        eps = float(rng.uniform(0.4, 2.5))
        min_pts = int(rng.integers(1, 5))

        peaks = [peak_at(x, z, cell=(i, 0)) for i, (x, z) in enumerate(pts)]
        clusters = cluster_peaks(peaks, DbscanConfig(eps_m=eps, min_pts=min_pts))
        got = {frozenset(p.cell[0] for p in c.peaks) for c in clusters}
        got_noise = frozenset(range(n)) - frozenset().union(*got) if got else \
            frozenset(range(n))

        xy = [(r * math.sin(t), r * math.cos(t))
              for r, t in ((p.point.r, p.point.theta) for p in peaks)]
        want, want_noise = dbscan_partition_reference(xy, eps, min_pts)
        assert got == want
        assert got_noise == want_noise

    def test_weighted_centroid(self):
        peaks = [peak_at(0.0, 4.0, magnitude=1.0), peak_at(0.0, 8.0, magnitude=3.0)]
        c = weighted_centroid(peaks)
        assert c.r == pytest.approx(7.0, rel=1e-12)
        assert c.theta == pytest.approx(0.0, abs=1e-12)

    def test_centroid_uniform_fallback(self):
        peaks = [peak_at(0.0, 4.0, magnitude=0.0), peak_at(0.0, 8.0, magnitude=0.0)]
        assert weighted_centroid(peaks).r == pytest.approx(6.0, rel=1e-12)

    def test_empty_input(self):
        assert cluster_peaks([]) == []

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            DbscanConfig(eps_m=0.0)
        with pytest.raises(ConfigError):
            DbscanConfig(min_pts=0)
