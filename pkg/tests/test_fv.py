import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mups.cloud import PointCloud, ScaleSpec, build_index, extract_patch
from mups.errors import ConfigError, DataError, DegeneratePatchError
from mups.fv import (
    CHANNEL_NAMES,
    N_CHANNELS,
    apply_symmetry,
    compute_3dmfv,
    compute_mups,
    encode_queries,
    grid_symmetries,
    orbit_standardization,
    per_point_terms,
    read_dump,
    symmetry_matrix,
    write_csv,
    write_dump,
)
from mups.gmm import build_grid

from oracles import dmfv, point_terms

unit_ball_points = arrays(
    np.float64, st.tuples(st.integers(1, 40), st.just(3)), elements=st.floats(-0.577, 0.577)
)


def test_channel_layout():
    assert N_CHANNELS == len(CHANNEL_NAMES) == 20
    assert CHANNEL_NAMES[0] == "sum_alpha" and CHANNEL_NAMES[14] == "min_mu_x"


def test_terms_at_origin_single_gaussian():
    t = per_point_terms(build_grid(1), [[0.0, 0.0, 0.0]])[0, 0]
    np.testing.assert_allclose(t, [0, 0, 0, 0] + [-1 / np.sqrt(2)] * 3, atol=1e-15)


def test_terms_offset_single_gaussian():
    t = per_point_terms(build_grid(1), [[0.3, 0.0, 0.0]])[0, 0]
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(t, [0, 0.3, 0, 0, (0.09 - 1) * s, -s, -s], atol=1e-15)


def test_terms_match_oracle(rng):
    pts = rng.uniform(-1, 1, size=(10, 3))
    np.testing.assert_allclose(per_point_terms(build_grid(2), pts), point_terms(pts, 2), atol=1e-12)


def test_single_point_aggregation():
    d = compute_3dmfv(build_grid(1), [[0.2, -0.1, 0.4]])
    t = per_point_terms(build_grid(1), [[0.2, -0.1, 0.4]])[0, 0]
    flat = d.tensor.reshape(20)
    np.testing.assert_array_equal(flat[:7], t)
    np.testing.assert_array_equal(flat[7:14], t)
    np.testing.assert_array_equal(flat[14:], t[1:])


@pytest.mark.parametrize("m", [1, 2, 4])
def test_matches_loop_oracle(rng, m):
    pts = rng.uniform(-1, 1, size=(40, 3))
    pts /= np.maximum(1, np.linalg.norm(pts, axis=1, keepdims=True))
    np.testing.assert_allclose(compute_3dmfv(build_grid(m), pts).tensor, dmfv(pts, m), rtol=0, atol=1e-12)


def test_duplication_invariance(rng):
    g = build_grid(4)
    pts = rng.uniform(-0.5, 0.5, size=(100, 3))
    a = compute_3dmfv(g, pts).tensor
    b = compute_3dmfv(g, np.vstack([pts, pts, pts])).tensor
    np.testing.assert_allclose(b[:7], a[:7], rtol=0, atol=1e-12)
    np.testing.assert_array_equal(b[7:], a[7:])


def test_literal_normalization_flag(rng):
    g = build_grid(2)
    pts = rng.uniform(-0.5, 0.5, size=(25, 3))
    plain = compute_3dmfv(g, pts).tensor
    lit = compute_3dmfv(g, pts, normalize_extrema=True).tensor
    np.testing.assert_array_equal(lit[:7], plain[:7])
    np.testing.assert_allclose(lit[7:], plain[7:] / 25, rtol=1e-15)


@given(unit_ball_points, st.integers(0, 2**32 - 1))
def test_permutation_invariance(pts, seed):
    g = build_grid(2)
    perm = np.random.default_rng(seed).permutation(len(pts))
    a = compute_3dmfv(g, pts).tensor
    b = compute_3dmfv(g, pts[perm]).tensor
    np.testing.assert_allclose(b[:7], a[:7], rtol=0, atol=1e-9)
    np.testing.assert_array_equal(b[7:], a[7:])


@given(unit_ball_points)
def test_extrema_ordering_and_finiteness(pts):
    d = compute_3dmfv(build_grid(4), pts)
    assert np.all(np.isfinite(d.tensor))
    assert np.all(d.maxima[1:] >= d.minima)


@given(unit_ball_points, st.sampled_from(range(48)))
def test_lattice_symmetry_matches_reencoding(pts, which):
    g = build_grid(2)
    perm, signs = grid_symmetries()[which]
    R = symmetry_matrix(perm, signs)
    direct = compute_3dmfv(g, pts @ R.T).tensor
    mapped = apply_symmetry(compute_3dmfv(g, pts).tensor, perm, signs)
    np.testing.assert_allclose(mapped, direct, rtol=0, atol=1e-12)


def test_symmetry_group_is_complete():
    mats = {symmetry_matrix(p, s).tobytes() for p, s in grid_symmetries()}
    assert len(mats) == 48


def test_nonfinite_propagates():
    with pytest.raises(DataError):
        compute_3dmfv(build_grid(2), [[np.inf, 0, 0]])


def _plane_cloud(n=40_000, seed=0):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-0.5, 0.5, size=(n, 2))
    return PointCloud(np.column_stack([xy, np.zeros(n)]))


def test_single_scale_mups_equals_3dmfv():
    cloud = _plane_cloud(5000)
    idx = build_index(cloud)
    g = build_grid(2)
    spec = ScaleSpec(0.05, 64)
    f = compute_mups(idx, g, 0, [spec], np.random.default_rng(4))
    patch = extract_patch(idx, 0, spec, np.random.default_rng(4))
    assert f.n == 1
    np.testing.assert_array_equal(f.tensor, compute_3dmfv(g, patch.points).tensor)


def test_flat_patch_is_z_antisymmetric():
    cloud = _plane_cloud()
    idx = build_index(cloud)
    g = build_grid(4)
    q = int(np.argmin(np.linalg.norm(cloud.points, axis=1)))
    f = compute_mups(idx, g, q, [ScaleSpec(0.01, 512), ScaleSpec(0.05, 512)], np.random.default_rng(0))
    for d in f.scales:
        mu_z = d.sums[3]
        # reflecting the lattice in z maps cell l to m-1-l and negates the z offset
        np.testing.assert_allclose(mu_z, -mu_z[:, :, ::-1], atol=1e-12)
        # in-plane sums are mirror images too
        np.testing.assert_allclose(d.sums[1], d.sums[1][:, :, ::-1], atol=1e-12)


def test_scales_must_ascend():
    idx = build_index(_plane_cloud(1000))
    with pytest.raises(ConfigError):
        compute_mups(idx, build_grid(2), 0, [ScaleSpec(0.05), ScaleSpec(0.01)], np.random.default_rng(0))


def test_degenerate_reports_scale():
    pts = np.vstack([np.zeros((1, 3)), np.random.default_rng(0).uniform(0.5, 1, size=(50, 3))])
    idx = build_index(PointCloud(pts))
    with pytest.raises(DegeneratePatchError) as exc:
        compute_mups(idx, build_grid(2), 0, [ScaleSpec(0.01), ScaleSpec(0.02)], np.random.default_rng(0))
    assert exc.value.scale_index == 0


def test_permuted_cloud_gives_same_feature(rng):
    pts = rng.uniform(-0.5, 0.5, size=(20_000, 3))
    perm = rng.permutation(len(pts))
    g = build_grid(2)
    scales = [ScaleSpec(0.05, 64), ScaleSpec(0.1, 64)]
    a = compute_mups(build_index(PointCloud(pts)), g, 0, scales, np.random.default_rng(9)).tensor
    q = int(np.argmax(perm == 0))
    b = compute_mups(build_index(PointCloud(pts[perm])), g, q, scales, np.random.default_rng(9)).tensor
    sums = np.r_[0:7, 20:27]
    ext = np.setdiff1d(np.arange(40), sums)
    np.testing.assert_allclose(b[sums], a[sums], rtol=0, atol=1e-9)
    np.testing.assert_array_equal(b[ext], a[ext])


def test_encode_queries_is_worker_independent():
    cloud = _plane_cloud(3000)
    idx = build_index(cloud)
    g = build_grid(2)
    scales = [ScaleSpec(0.02, 32), ScaleSpec(0.05, 32)]
    qs = np.arange(0, 3000, 37)
    a, va = encode_queries(idx, g, qs, scales, seed=3, workers=1)
    b, vb = encode_queries(idx, g, qs, scales, seed=3, workers=4)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(va, vb)
    assert a.shape == (len(qs), 40, 2, 2, 2)


def test_encode_queries_flags_degenerate():
    pts = np.vstack([[[5.0, 5.0, 5.0]], np.random.default_rng(0).uniform(0, 1, size=(500, 3))])
    idx = build_index(PointCloud(pts))
    feats, valid = encode_queries(idx, build_grid(2), [0, 1, 2], [ScaleSpec(0.05)], seed=0)
    assert not valid[0] and valid[1:].all()
    assert np.all(feats[0] == 0)


def test_dump_round_trip(tmp_path, rng):
    feats = rng.normal(size=(5, 60, 2, 2, 2)).astype(np.float32)
    path = tmp_path / "f.mups"
    write_dump(path, feats, n=3, m=2)
    raw = path.read_bytes()
    assert raw[:4] == b"MUPS"
    header, back = read_dump(path)
    assert (header.n, header.m, header.count) == (3, 2, 5)
    np.testing.assert_array_equal(back, feats)
    assert len(raw) == 24 + 5 * 60 * 8 * 4


def test_dump_rejects_bad_input(tmp_path, rng):
    with pytest.raises(DataError):
        write_dump(tmp_path / "x", rng.normal(size=(2, 20, 2, 2, 2)), n=2, m=2)
    (tmp_path / "bad").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(DataError, match="magic"):
        read_dump(tmp_path / "bad")
    good = tmp_path / "good"
    write_dump(good, np.zeros((2, 20, 1, 1, 1)), n=1, m=1)
    good.write_bytes(good.read_bytes()[:-4])
    with pytest.raises(DataError):
        read_dump(good)


def test_csv_export(tmp_path, rng):
    feats = rng.normal(size=(2, 20, 1, 1, 1))
    path = tmp_path / "f.csv"
    write_csv(path, feats, n=1, m=1, queries=[7, 9])
    rows = path.read_text().splitlines()
    assert rows[0] == "query,scale,channel,i,j,l,value"
    assert len(rows) == 1 + 2 * 20
    assert rows[1].startswith("7,0,sum_alpha,0,0,0,")
    assert float(rows[1].split(",")[-1]) == feats[0, 0, 0, 0, 0]


# -- symmetry-consistent standardization ---------------------------------------------

def skewed_features(rng, b=6, n=2, m=2):
    scale = rng.uniform(0.1, 3.0, size=(1, n * N_CHANNELS, 1, 1, 1))
    offset = rng.normal(size=(1, n * N_CHANNELS, 1, 1, 1))
    return rng.normal(size=(b, n * N_CHANNELS, m, m, m)) * scale + offset


def test_standardization_matches_fully_augmented_statistics(rng):
    X = skewed_features(rng)
    shift, scale = orbit_standardization(X)
    orbit = np.stack([apply_symmetry(x, p, s) for x in X for p, s in grid_symmetries()])
    assert np.allclose(shift, orbit.mean(axis=(0, 2, 3, 4)), atol=1e-12)
    assert np.allclose(scale, orbit.std(axis=(0, 2, 3, 4)), atol=1e-12)


@given(st.integers(0, 47), st.integers(0, 2**32 - 1))
def test_standardization_commutes_with_symmetries(which, seed):
    rng = np.random.default_rng(seed)
    X = skewed_features(rng, b=3, n=1)
    shift, scale = orbit_standardization(X)
    norm = lambda t: (t - shift[:, None, None, None]) / scale[:, None, None, None]
    perm, signs = grid_symmetries()[which]
    assert np.allclose(norm(apply_symmetry(X[0], perm, signs)), apply_symmetry(norm(X[0]), perm, signs), atol=1e-12)


def test_standardization_edge_cases():
    shift, scale = orbit_standardization(np.zeros((2, N_CHANNELS, 1, 1, 1)))
    assert np.all(shift == 0) and np.all(scale == 1.0)
    # signed mean channels never shift; the max/min pair shifts with opposite signs
    X = np.zeros((2, N_CHANNELS, 1, 1, 1))
    X[:, 1:4] = 5.0
    X[:, 8:11] = 1.0
    X[:, 14:17] = -1.0
    shift, scale = orbit_standardization(X)
    assert np.all(shift[1:4] == 0) and np.all(scale[1:4] == 5.0)
    assert np.all(shift[8:11] == 1.0) and np.all(shift[14:17] == -1.0)
    with pytest.raises(DataError):
        orbit_standardization(np.zeros((0, N_CHANNELS, 2, 2, 2)))
    with pytest.raises(DataError):
        orbit_standardization(np.zeros((2, 7, 2, 2, 2)))
