import numpy as np
import pytest
from hypothesis import given, strategies as st

from mups.cloud import PointCloud, ScaleSpec, build_index, extract_patch
from mups.errors import ConfigError, DataError, DegeneratePatchError

from oracles import ball_scan


def test_pointcloud_validates_normals():
    pts = np.zeros((2, 3))
    with pytest.raises(DataError):
        PointCloud(pts, np.array([[0, 0, 1.0], [0, 0, 2.0]]))
    with pytest.raises(DataError):
        PointCloud(pts, np.array([[0, 0, 1.0]]))
    c = PointCloud([[0, 0, 0], [3, 4, 0]], [[0, 0, 1], [1, 0, 0]])
    assert c.diag == pytest.approx(5.0)


def test_empty_cloud_rejected():
    with pytest.raises(DataError, match="empty cloud"):
        build_index(PointCloud(np.empty((0, 3))))


def test_singleton_infinite_radius():
    idx = build_index(PointCloud([[1.0, 2.0, 3.0]]))
    assert list(idx.radius([1.0, 2.0, 3.0], np.inf)) == [0]


def test_cube_corners_from_center():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    idx = build_index(PointCloud(corners))
    half_diag = np.sqrt(3) / 2
    assert list(idx.radius([0.5, 0.5, 0.5], half_diag + 1e-9)) == list(range(8))


def test_radius_matches_linear_scan(rng):
    pts = rng.random((1000, 3))
    idx = build_index(PointCloud(pts))
    for _ in range(50):
        q = rng.random(3)
        r = rng.uniform(0.01, 0.4)
        assert list(idx.radius(q, r)) == ball_scan(pts, q, r)


@given(st.integers(0, 2**32 - 1))
def test_radius_matches_linear_scan_property(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(int(rng.integers(1, 200)), 3))
    idx = build_index(PointCloud(pts))
    q = pts[rng.integers(len(pts))] + rng.normal(scale=0.1, size=3)
    r = rng.uniform(0, 2)
    assert list(idx.radius(q, r)) == ball_scan(pts, q, r)


def test_scale_spec_validation():
    with pytest.raises(ConfigError):
        ScaleSpec(0.0)
    with pytest.raises(ConfigError):
        ScaleSpec(1.5)
    with pytest.raises(ConfigError):
        ScaleSpec(0.1, t_max=0)


def test_flat_patch(grid_plane):
    cloud = PointCloud(grid_plane)
    idx = build_index(cloud)
    center = int(np.argmin(np.linalg.norm(grid_plane, axis=1)))
    # spacing 0.05: radius just over one diagonal step catches the 3 x 3 block
    frac = 0.05 * np.sqrt(2) * 1.01 / cloud.diag
    patch = extract_patch(idx, center, ScaleSpec(frac, 512), np.random.default_rng(0))
    assert patch.raw_count == 9 and len(patch) == 9
    assert np.all(patch.points[:, 2] == 0)
    assert np.linalg.norm(patch.points, axis=1).max() <= 1 + 1e-9
    # query maps exactly to the origin
    assert np.any(np.all(patch.points == 0.0, axis=1))


def test_sampling_is_capped_and_reproducible(rng):
    pts = rng.normal(scale=0.01, size=(2000, 3))
    pts = np.vstack([pts, [[1, 1, 1], [-1, -1, -1]]])
    idx = build_index(PointCloud(pts))
    spec = ScaleSpec(0.2, 512)
    a = extract_patch(idx, 0, spec, np.random.default_rng(7))
    b = extract_patch(idx, 0, spec, np.random.default_rng(7))
    assert a.raw_count == 2000
    assert len(a) == 512
    np.testing.assert_array_equal(a.points, b.points)


def test_all_points_kept_below_cap(rng):
    pts = rng.random((300, 3))
    idx = build_index(PointCloud(pts))
    patch = extract_patch(idx, 5, ScaleSpec(0.2, 512), np.random.default_rng(0))
    r = 0.2 * idx.diag
    expected = (pts[ball_scan(pts, pts[5], r)] - pts[5]) / r
    np.testing.assert_array_equal(patch.points, expected)


def test_degenerate_patch_carries_count():
    pts = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0]], float)
    idx = build_index(PointCloud(pts))
    with pytest.raises(DegeneratePatchError) as exc:
        extract_patch(idx, 0, ScaleSpec(0.01), np.random.default_rng(0))
    assert exc.value.raw_count == 1


def test_rescaling_by_ten_matches(rng):
    pts = rng.random((3000, 3))
    spec = ScaleSpec(0.1, 64)
    base = extract_patch(build_index(PointCloud(pts)), 11, spec, np.random.default_rng(3))
    big = extract_patch(build_index(PointCloud(pts * 10)), 11, spec, np.random.default_rng(3))
    np.testing.assert_allclose(big.points, base.points, rtol=0, atol=1e-12)


def test_rescaling_by_power_of_two_is_bit_identical(rng):
    pts = rng.random((3000, 3))
    spec = ScaleSpec(0.1, 64)
    base = extract_patch(build_index(PointCloud(pts)), 11, spec, np.random.default_rng(3))
    big = extract_patch(build_index(PointCloud(pts * 8)), 11, spec, np.random.default_rng(3))
    np.testing.assert_array_equal(big.points, base.points)


@given(
    st.integers(0, 2**32 - 1),
    st.floats(0.1, 100.0),
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
)
def test_similarity_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    pts = rng.random((400, 3))
    spec = ScaleSpec(0.15, 32)
    q = int(rng.integers(len(pts)))
    try:
        base = extract_patch(build_index(PointCloud(pts)), q, spec, np.random.default_rng(seed))
    except DegeneratePatchError:
        return
    moved = extract_patch(
        build_index(PointCloud(pts * scale + np.array(shift))), q, spec, np.random.default_rng(seed)
    )
    np.testing.assert_allclose(moved.points, base.points, rtol=0, atol=1e-12)


def test_permutation_of_cloud_keeps_sampled_multiset(rng):
    pts = rng.random((5000, 3))
    perm = rng.permutation(len(pts))
    spec = ScaleSpec(0.2, 100)
    a = extract_patch(build_index(PointCloud(pts)), 0, spec, np.random.default_rng(1))
    b = extract_patch(
        build_index(PointCloud(pts[perm])), int(np.argmax(perm == 0)), spec, np.random.default_rng(1)
    )
    key = lambda p: p[np.lexsort(p.T[::-1])]
    np.testing.assert_array_equal(key(a.points), key(b.points))


def test_knn_includes_query(rng):
    pts = rng.random((100, 3))
    idx = build_index(PointCloud(pts))
    nn, dist = idx.knn(pts[4], 5)
    assert nn[0] == 4 and dist[0] == 0
    brute = np.argsort(np.linalg.norm(pts - pts[4], axis=1))[:5]
    assert set(nn) == set(brute)


def test_non_finite_points_rejected():
    with pytest.raises(DataError, match="point 1"):
        PointCloud(np.array([[0.0, 0, 0], [np.nan, 0, 0]]))
