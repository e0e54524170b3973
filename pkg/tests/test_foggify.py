import math

import numpy as np
import pytest

from lidarfog import (
    DEFAULT_ALPHA_SCHEDULE,
    FogParams,
    Point,
    PointCloud,
    Provenance,
    SensorModel,
    alpha_to_mor,
    build_table,
    fog_from_alpha,
    fog_from_mor,
    foggify_cloud,
    foggify_point,
    mor_to_alpha,
    mor_to_beta,
    query_soft_max,
    sample_alpha,
)
from lidarfog.rng import uniform01


@pytest.fixture(scope="module")
def fog_heavy():
    # dense enough that a 30 m target is overtaken by the fog return
    return fog_from_alpha(0.2)


@pytest.fixture(scope="module")
def table_heavy(fog_heavy, sensor):
    return build_table(fog_heavy, sensor)


@pytest.fixture(scope="module")
def fog_zero():
    return FogParams(alpha=0.0, beta=0.0)


@pytest.fixture(scope="module")
def table_zero(fog_zero, sensor):
    return build_table(fog_zero, sensor)


def random_cloud(n, seed=0, span=120.0, scale=255.0):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-span / np.sqrt(3), span / np.sqrt(3), (n, 3))
    inten = rng.uniform(0.0, scale, n)
    return PointCloud(xyz, inten, intensity_scale=scale)


class TestConversions:
    def test_alpha_to_mor_table(self):
        assert alpha_to_mor(0.06) == pytest.approx(50.0, rel=1e-12)
        assert alpha_to_mor(0.005) == pytest.approx(600.0, rel=1e-12)
        assert alpha_to_mor(0.01) == pytest.approx(300.0, rel=1e-12)
        assert alpha_to_mor(0.0) == float("inf")

    def test_mor_to_beta(self):
        assert mor_to_beta(50.0) == pytest.approx(0.00092, rel=1e-12)
        assert mor_to_beta(float("inf")) == 0.0

    def test_roundtrip(self):
        for a in (0.005, 0.01, 0.02, 0.03, 0.06):
            assert mor_to_alpha(alpha_to_mor(a)) == pytest.approx(a, rel=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            alpha_to_mor(-0.1)
        with pytest.raises(ValueError):
            mor_to_beta(0.0)
        with pytest.raises(ValueError):
            mor_to_alpha(-5.0)

    def test_factories_agree(self):
        # the same atmosphere reached through alpha or through MOR
        a = fog_from_alpha(0.06)
        m = fog_from_mor(50.0)
        assert (a.alpha, a.beta, a.beta_0) == (m.alpha, m.beta, m.beta_0)
        assert fog_from_alpha(0.0).beta == 0.0


class TestSampleAlpha:
    def test_singleton(self):
        assert sample_alpha([0.06], 0.0) == 0.06
        assert sample_alpha([0.06], 0.999) == 0.06

    def test_first_element_at_zero_draw(self):
        assert sample_alpha(DEFAULT_ALPHA_SCHEDULE, 0.0) == 0.0

    def test_empirical_uniformity(self):
        draws = uniform01(42, np.arange(60_000, dtype=np.uint64))
        picks = [sample_alpha(DEFAULT_ALPHA_SCHEDULE, float(d)) for d in draws]
        counts = {a: 0 for a in DEFAULT_ALPHA_SCHEDULE}
        for p in picks:
            counts[p] += 1
        for a, c in counts.items():
            assert abs(c / 60_000 - 1 / 6) <= 0.02 * (1 / 6), f"alpha {a} frequency off"

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_alpha([], 0.5)
        with pytest.raises(ValueError):
            sample_alpha([0.06], 1.0)
        with pytest.raises(ValueError):
            sample_alpha([0.06], -0.1)


class TestFoggifyPoint:
    def test_identity_in_clear_air(self, fog_zero, table_zero, sensor):
        p = Point(12.5, -3.25, 1.125, 87.5)
        out, tag = foggify_point(p, fog_zero, sensor, table_zero, 0.77)
        assert out == p
        assert tag == Provenance.HARD_KEPT

    def test_median_draw_lands_on_argmax_range(self, fog_heavy, table_heavy, sensor):
        p = Point(30.0, 0.0, 0.0, 100.0)
        out, tag = foggify_point(p, fog_heavy, sensor, table_heavy, 0.5)
        assert tag == Provenance.SOFT_REPLACED
        i_tmp, r_tmp = query_soft_max(table_heavy, 30.0)
        assert (out.x, out.y, out.z) == (r_tmp, 0.0, 0.0)
        i_soft = (100.0 * 30.0 * 30.0 / fog_heavy.beta_0) * fog_heavy.beta * i_tmp
        assert out.intensity == i_soft

    def test_hard_branch_attenuates_only(self, fog06, table06, sensor):
        p = Point(0.0, 15.0, 0.0, 200.0)  # near target: solid return wins
        out, tag = foggify_point(p, fog06, sensor, table06, 0.1)
        assert tag == Provenance.HARD_KEPT
        assert (out.x, out.y, out.z) == (0.0, 15.0, 0.0)
        assert out.intensity == 200.0 * np.exp(-2.0 * fog06.alpha * 15.0)

    def test_noise_envelope(self, fog_heavy, table_heavy, sensor):
        p = Point(30.0, 0.0, 0.0, 100.0)
        _, r_tmp = query_soft_max(table_heavy, 30.0)
        for draw in np.linspace(0.0, 0.999999, 41):
            out, tag = foggify_point(p, fog_heavy, sensor, table_heavy, float(draw))
            assert tag == Provenance.SOFT_REPLACED
            rng_out = math.sqrt(out.x**2 + out.y**2 + out.z**2)
            assert r_tmp / 2 <= rng_out < 2 * r_tmp

    def test_zero_intensity_point_kept(self, fog06, table06, sensor):
        out, tag = foggify_point(Point(40.0, 0.0, 0.0, 0.0), fog06, sensor, table06, 0.3)
        assert tag == Provenance.HARD_KEPT
        assert out == Point(40.0, 0.0, 0.0, 0.0)

    def test_degenerate_points_pass_through(self, fog06, table06, sensor):
        for p in (Point(0.0, 0.0, 0.0, 10.0),
                  Point(np.nan, 1.0, 1.0, 10.0),
                  Point(500.0, 0.0, 0.0, 10.0),
                  Point(1.0, 1.0, 1.0, np.inf)):
            out, tag = foggify_point(p, fog06, sensor, table06, 0.5)
            assert tag == Provenance.HARD_KEPT
            assert (out.x != out.x) if p.x != p.x else out.x == p.x
            assert (out.intensity != out.intensity) if p.intensity != p.intensity \
                else out.intensity == p.intensity

    def test_bad_noise_draw_rejected(self, fog06, table06, sensor):
        with pytest.raises(ValueError):
            foggify_point(Point(1, 1, 1, 1), fog06, sensor, table06, 1.0)
        with pytest.raises(ValueError):
            foggify_point(Point(1, 1, 1, 1), fog06, sensor, table06, -0.5)

    def test_table_alpha_mismatch_rejected(self, fog06, table_heavy, sensor):
        with pytest.raises(ValueError):
            foggify_point(Point(1, 1, 1, 1), fog06, sensor, table_heavy, 0.5)


class TestFoggifyCloud:
    def test_rerun_bit_identical(self, fog06, table06, sensor):
        cloud = random_cloud(20_000, seed=11)
        a = foggify_cloud(cloud, fog06, sensor, seed=5, table=table06)
        b = foggify_cloud(cloud, fog06, sensor, seed=5, table=table06)
        assert np.array_equal(a.cloud.xyz, b.cloud.xyz)
        assert np.array_equal(a.cloud.intensity, b.cloud.intensity)
        assert np.array_equal(a.provenance, b.provenance)

    def test_seed_changes_noise_only(self, fog06, table06, sensor):
        cloud = random_cloud(5_000, seed=12)
        a = foggify_cloud(cloud, fog06, sensor, seed=1, table=table06)
        b = foggify_cloud(cloud, fog06, sensor, seed=2, table=table06)
        assert np.array_equal(a.provenance, b.provenance)  # branch is seed-free
        assert np.array_equal(a.cloud.intensity, b.cloud.intensity)
        soft = a.provenance == 1
        assert not np.array_equal(a.cloud.xyz[soft], b.cloud.xyz[soft])
        assert np.array_equal(a.cloud.xyz[~soft], b.cloud.xyz[~soft])

    def test_identity_configuration(self, fog_zero, table_zero, sensor):
        cloud = random_cloud(10_000, seed=13)
        out = foggify_cloud(cloud, fog_zero, sensor, seed=9, rescale=False, table=table_zero)
        assert np.array_equal(out.cloud.xyz, cloud.xyz)
        assert np.array_equal(out.cloud.intensity, cloud.intensity)
        assert np.all(out.provenance == Provenance.HARD_KEPT)

    def test_matches_per_point_api(self, fog06, table06, sensor):
        cloud = random_cloud(257, seed=14)
        out = foggify_cloud(cloud, fog06, sensor, seed=21, rescale=False, table=table06)
        for i in range(len(cloud)):
            p, tag = foggify_point(cloud.point(i), fog06, sensor, table06,
                                   uniform01(21, i))
            assert (p.x, p.y, p.z, p.intensity) == (
                out.cloud.xyz[i, 0], out.cloud.xyz[i, 1], out.cloud.xyz[i, 2],
                out.cloud.intensity[i])
            assert tag == out.provenance[i]

    def test_worker_count_invariance(self, fog06, table06, sensor):
        cloud = random_cloud(200_000, seed=15)
        ref = foggify_cloud(cloud, fog06, sensor, seed=3, table=table06, workers=1)
        for workers in (3, 7):
            out = foggify_cloud(cloud, fog06, sensor, seed=3, table=table06, workers=workers)
            assert np.array_equal(ref.cloud.xyz, out.cloud.xyz)
            assert np.array_equal(ref.cloud.intensity, out.cloud.intensity)

    def test_block_size_invariance(self, fog06, table06, sensor):
        cloud = random_cloud(10_000, seed=16)
        ref = foggify_cloud(cloud, fog06, sensor, seed=3, table=table06, block_size=10_000)
        out = foggify_cloud(cloud, fog06, sensor, seed=3, table=table06, block_size=999)
        assert np.array_equal(ref.cloud.xyz, out.cloud.xyz)
        assert np.array_equal(ref.cloud.intensity, out.cloud.intensity)

    def test_direction_preserved(self, fog06, table06, sensor):
        cloud = random_cloud(5_000, seed=17)
        out = foggify_cloud(cloud, fog06, sensor, seed=4, table=table06)
        r_in = np.linalg.norm(cloud.xyz, axis=1, keepdims=True)
        r_out = np.linalg.norm(out.cloud.xyz, axis=1, keepdims=True)
        assert np.allclose(cloud.xyz / r_in, out.cloud.xyz / r_out, rtol=0, atol=1e-12)

    def test_hard_kept_intensity_exact(self, fog06, table06, sensor):
        cloud = random_cloud(5_000, seed=18)
        out = foggify_cloud(cloud, fog06, sensor, seed=4, rescale=False, table=table06)
        hard = out.provenance == Provenance.HARD_KEPT
        x, y, z = (np.ascontiguousarray(cloud.xyz[:, j]) for j in range(3))
        r0 = np.sqrt(x * x + y * y + z * z)
        expect = cloud.intensity * np.exp(-2.0 * fog06.alpha * r0)
        assert np.array_equal(out.cloud.intensity[hard], expect[hard])

    def test_soft_range_bound(self, fog06, table06, sensor):
        cloud = random_cloud(20_000, seed=19)
        out = foggify_cloud(cloud, fog06, sensor, seed=6, rescale=False, table=table06)
        soft = out.provenance == Provenance.SOFT_REPLACED
        assert np.count_nonzero(soft) > 0
        r0 = np.linalg.norm(cloud.xyz, axis=1)
        r_out = np.linalg.norm(out.cloud.xyz, axis=1)
        r_tmp = np.array([query_soft_max(table06, float(r))[1] for r in r0[soft]])
        assert np.all(r_out[soft] > r_tmp / 2)
        assert np.all(r_out[soft] < 2 * r_tmp)
        assert np.all(r_tmp <= r0[soft])

    def test_rescale_hits_scale_exactly(self, fog06, table06, sensor):
        cloud = random_cloud(5_000, seed=20)
        out = foggify_cloud(cloud, fog06, sensor, seed=7, rescale=True, table=table06)
        assert out.cloud.intensity.max() == cloud.intensity_scale
        raw = foggify_cloud(cloud, fog06, sensor, seed=7, rescale=False, table=table06)
        ratio_out = out.cloud.intensity[1:] / out.cloud.intensity[0]
        ratio_raw = raw.cloud.intensity[1:] / raw.cloud.intensity[0]
        assert np.allclose(ratio_out, ratio_raw, rtol=1e-12)
        assert out.stats.rescale_factor == pytest.approx(
            cloud.intensity_scale / raw.cloud.intensity.max(), rel=1e-12)

    def test_rescale_skipped_for_all_zero(self, fog06, table06, sensor):
        cloud = PointCloud(np.array([[20.0, 0, 0], [0, 30.0, 0]]), np.zeros(2))
        out = foggify_cloud(cloud, fog06, sensor, table=table06)
        assert out.stats.rescale_factor == 1.0
        assert np.all(out.cloud.intensity == 0.0)

    def test_degenerate_points_counted_and_passed_through(self, fog06, table06, sensor):
        xyz = np.array([[0.0, 0.0, 0.0],
                        [np.nan, 1.0, 2.0],
                        [300.0, 0.0, 0.0],
                        [30.0, 0.0, 0.0]])
        cloud = PointCloud(xyz, np.array([5.0, 6.0, 7.0, 8.0]))
        out = foggify_cloud(cloud, fog06, sensor, rescale=False, table=table06)
        assert out.stats.n_skipped == 3
        assert np.array_equal(out.cloud.xyz[0], xyz[0])
        assert np.isnan(out.cloud.xyz[1, 0])
        assert np.array_equal(out.cloud.xyz[2], xyz[2])
        assert out.cloud.intensity[0] == 5.0
        assert out.cloud.intensity[2] == 7.0
        assert np.all(out.provenance[:3] == Provenance.HARD_KEPT)

    def test_stats_bookkeeping(self, fog06, table06, sensor):
        cloud = random_cloud(1_000, seed=21)
        out = foggify_cloud(cloud, fog06, sensor, seed=1, table=table06)
        s = out.stats
        assert s.n_points == 1_000
        assert len(out.provenance) == 1_000
        assert s.n_soft_replaced == int(np.count_nonzero(out.provenance))
        assert s.fraction_replaced == s.n_soft_replaced / s.n_points
        assert s.intensity_in_max == cloud.intensity.max()
        assert s.intensity_out_max == out.cloud.intensity.max()
        assert set(s.to_dict()) >= {"n_points", "n_soft_replaced", "fraction_replaced",
                                    "rescale_factor"}

    def test_empty_cloud_rejected(self, fog06, table06, sensor):
        cloud = PointCloud(np.empty((0, 3)), np.empty(0))
        with pytest.raises(ValueError):
            foggify_cloud(cloud, fog06, sensor, table=table06)

    def test_replacement_threshold_monotone_in_alpha(self, sensor):
        # constant-reflectivity ray: beyond a threshold range the fog return
        # wins; denser fog pulls the threshold inward
        thresholds = []
        ranges = np.arange(1, 2001) * 0.1
        ca_ref = 100.0 * 900.0 / (1e-6 / np.pi)
        for alpha in (0.03, 0.06):
            fog = fog_from_alpha(alpha)
            table = build_table(fog, sensor)
            xyz = np.column_stack((ranges, np.zeros_like(ranges), np.zeros_like(ranges)))
            inten = ca_ref * fog.beta_0 / ranges**2
            out = foggify_cloud(PointCloud(xyz, inten), fog, sensor, rescale=False, table=table)
            replaced = np.nonzero(out.provenance == 1)[0]
            assert len(replaced) > 0
            assert np.all(out.provenance[replaced[0]:] == 1)  # clean threshold
            thresholds.append(ranges[replaced[0]])
        assert thresholds[1] < thresholds[0]


class TestPointCloudType:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 3)), np.zeros(4))
        with pytest.raises(ValueError):
            PointCloud(np.zeros((1, 3)), np.zeros(1), intensity_scale=0.0)

    def test_from_points_roundtrip(self):
        pts = [Point(1.0, 2.0, 3.0, 4.0), Point(-1.0, 0.5, 0.25, 9.0)]
        cloud = PointCloud.from_points(pts, frame_id="f")
        assert len(cloud) == 2
        assert cloud.point(1) == pts[1]
        assert cloud.frame_id == "f"
