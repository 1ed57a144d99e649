import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mups.errors import ConfigError, DataError
from mups.gmm import build_grid, soft_assign

from oracles import lattice_centers, soft_assignment


def test_single_gaussian_grid():
    g = build_grid(1)
    assert g.K == 1 and g.sigma == 1.0 and g.weight == 1.0
    np.testing.assert_array_equal(g.centers, [[0.0, 0.0, 0.0]])


def test_m2_grid():
    g = build_grid(2)
    assert g.K == 8 and g.sigma == 0.5 and g.weight == 1 / 8
    assert set(map(tuple, g.centers)) == {
        (x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)
    }


def test_m8_grid():
    g = build_grid(8)
    assert g.K == 512 and g.sigma == 0.125
    np.testing.assert_allclose(g.axis, np.arange(-0.875, 0.876, 0.25), atol=1e-15)
    np.testing.assert_allclose(g.centers, lattice_centers(8), atol=1e-15)
    assert g.weight * g.K == pytest.approx(1.0)


@pytest.mark.parametrize("m", [0, -1, 2.5])
def test_bad_resolution(m):
    with pytest.raises(ConfigError):
        build_grid(m)


def test_single_component_assignment(rng):
    a = soft_assign(build_grid(1), rng.normal(size=(5, 3)))
    np.testing.assert_array_equal(a.gamma, np.ones((5, 1)))


def test_origin_is_equidistant():
    a = soft_assign(build_grid(2), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(a.gamma, np.full((1, 8), 1 / 8), atol=1e-15)


def test_matches_direct_formula(rng):
    pts = rng.uniform(-1, 1, size=(20, 3))
    a = soft_assign(build_grid(2), pts)
    np.testing.assert_allclose(a.gamma, soft_assignment(pts, 2), rtol=0, atol=1e-12)


def test_likelihood_matches_direct_formula(rng):
    from oracles import gaussian_density

    pts = rng.uniform(-1, 1, size=(10, 3))
    g = build_grid(2)
    a = soft_assign(g, pts)
    direct = [sum(g.weight * gaussian_density(p, mu, g.sigma) for mu in g.centers) for p in pts]
    np.testing.assert_allclose(a.per_point_likelihood, direct, rtol=1e-12)


def test_nonfinite_rejected():
    with pytest.raises(DataError, match="non-finite"):
        soft_assign(build_grid(2), [[0.0, np.nan, 0.0]])


def test_chunked_path_matches_single_block(rng):
    pts = rng.uniform(-1, 1, size=(5000, 3))
    g = build_grid(2)
    full = soft_assign(g, pts)
    head = soft_assign(g, pts[:100])
    np.testing.assert_array_equal(full.gamma[:100], head.gamma)


@given(
    st.sampled_from([1, 2, 4, 8, 16]),
    arrays(np.float64, (7, 3), elements=st.floats(-1, 1)),
)
def test_rows_are_stochastic_and_finite(m, pts):
    a = soft_assign(build_grid(m), pts)
    assert np.all(a.gamma >= 0)
    np.testing.assert_allclose(a.gamma.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(np.isfinite(a.log_likelihood))


@given(arrays(np.float64, (6, 3), elements=st.floats(-1, 1)))
def test_far_points_are_guarded(pts):
    a = soft_assign(build_grid(4), pts * 50.0)
    assert np.all(np.isfinite(a.gamma))
    np.testing.assert_allclose(a.gamma.sum(axis=1), 1.0, atol=1e-9)


def _center_permutation(grid, R):
    """Column permutation induced on grid centers by the orthogonal map R."""
    moved = grid.centers @ R.T
    perm = np.empty(grid.K, dtype=int)
    for k, c in enumerate(moved):
        perm[k] = int(np.argmin(np.linalg.norm(grid.centers - c, axis=1)))
    return perm


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_quarter_turn_permutes_columns(rng, axis):
    from scipy.spatial.transform import Rotation

    R = Rotation.from_rotvec(np.eye(3)[axis] * np.pi / 2).as_matrix()
    g = build_grid(2)
    pts = rng.uniform(-1, 1, size=(30, 3))
    base = soft_assign(g, pts).gamma
    turned = soft_assign(g, pts @ R.T).gamma
    perm = _center_permutation(g, R)
    np.testing.assert_allclose(turned[:, perm], base, atol=1e-12)
