import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedaccess.spatial import (MILES_PER_DEG_LAT, SpatialWeightMatrix, diversity_ratio, hospital_distance,
                               inverse_distance_weights, kde_density, knn_weights, morans_i, project_miles)
from scipy import sparse

ORIGIN = (33.0, -84.0)


def _north(miles, base=ORIGIN):
    return (base[0] + miles / MILES_PER_DEG_LAT, base[1])


def test_kde_gaussian_ratio_three_bandwidths():
    h = 2.0
    d = kde_density([ORIGIN], eval_at=[ORIGIN, _north(3 * h)], bandwidth=h).values
    assert d[1] / d[0] == pytest.approx(math.exp(-4.5), rel=1e-9)
    assert d[0] == pytest.approx(1.0 / (2 * math.pi * h * h))


def test_kde_symmetric_pair():
    a, b = ORIGIN, _north(6.0)
    mid = _north(3.0)
    da = kde_density([a], eval_at=[mid], bandwidth=1.5, ref_lat=33.0).values[0]
    db = kde_density([b], eval_at=[mid], bandwidth=1.5, ref_lat=33.0).values[0]
    assert da == pytest.approx(db, rel=1e-12)


def test_kde_mass_matches_total_weight():
    # midpoint-rule quadrature over a padded bounding grid
    rng = np.random.default_rng(5)
    pts = np.column_stack([33.0 + rng.normal(0, 0.1, 100), -84.0 + rng.normal(0, 0.1, 100)])
    w = rng.uniform(1, 50, 100)
    h = 3.0
    ref = float(pts[:, 0].mean())
    pad = 6 * h / MILES_PER_DEG_LAT
    lat = np.linspace(pts[:, 0].min() - pad, pts[:, 0].max() + pad, 160)
    lon = np.linspace(pts[:, 1].min() - 1.3 * pad, pts[:, 1].max() + 1.3 * pad, 160)
    g = np.array([(a, b) for a in lat for b in lon])
    dens = kde_density(pts, w, eval_at=g, bandwidth=h).values
    cell = (lat[1] - lat[0]) * MILES_PER_DEG_LAT * (lon[1] - lon[0]) * MILES_PER_DEG_LAT * math.cos(math.radians(ref))
    assert dens.sum() * cell == pytest.approx(w.sum(), rel=0.02)


def test_kde_rejects_empty_and_bad_bandwidth():
    with pytest.raises(ValueError):
        kde_density(np.empty((0, 2)))
    with pytest.raises(ValueError):
        kde_density([ORIGIN], bandwidth=0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_kde_linearity(seed):
    rng = np.random.default_rng(seed)
    a = np.column_stack([33 + rng.normal(0, 0.05, 7), -84 + rng.normal(0, 0.05, 7)])
    b = np.column_stack([33 + rng.normal(0, 0.05, 5), -84 + rng.normal(0, 0.05, 5)])
    wa, wb = rng.uniform(0, 5, 7), rng.uniform(0, 5, 5)
    at = np.column_stack([33 + rng.normal(0, 0.05, 9), -84 + rng.normal(0, 0.05, 9)])
    kw = dict(eval_at=at, bandwidth=1.7, ref_lat=33.0)
    joint = kde_density(np.vstack([a, b]), np.concatenate([wa, wb]), **kw).values
    parts = kde_density(a, wa, **kw).values + kde_density(b, wb, **kw).values
    assert np.allclose(joint, parts, rtol=1e-12, atol=0)


def test_hospital_distance_cases():
    assert hospital_distance(ORIGIN, [(_north(4.0), 120.0)]) == pytest.approx(4.0, rel=1e-9)
    two = [(_north(2.0), 100.0), (_north(10.0), 300.0)]
    assert hospital_distance(ORIGIN, two) == pytest.approx(8.0, rel=1e-9)
    assert hospital_distance(ORIGIN, [(_north(40.0), 500.0)]) == 25.0
    assert hospital_distance(ORIGIN, []) == 25.0


def test_diversity_identical_composition():
    coords = [ORIGIN, _north(1.0), _north(5.0), _north(30.0)]
    comp = np.tile([30.0, 20.0, 50.0], (4, 1))
    assert np.allclose(diversity_ratio(coords, comp).values, 1.0)


def test_diversity_homogeneous_local_is_zero():
    coords = [ORIGIN, _north(5.0)]
    comp = np.array([[100.0, 0.0], [0.0, 100.0]])
    assert diversity_ratio(coords, comp).values[0] == 0.0


def test_diversity_mixed_local_inside_skewed_region():
    coords = [ORIGIN, _north(5.0)]
    comp = np.array([[50.0, 50.0], [850.0, 50.0]])
    h = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1)) / math.log(2)
    r = diversity_ratio(coords, comp).values[0]
    assert r == pytest.approx(1.0 / h, rel=1e-12)
    assert r == pytest.approx(2.13, abs=0.005)


def test_diversity_radii_validated():
    with pytest.raises(ValueError):
        diversity_ratio([ORIGIN], [[1.0, 1.0]], local_radius=5.0, regional_radius=5.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_diversity_relabel_invariance(seed):
    rng = np.random.default_rng(seed)
    coords = np.column_stack([33 + rng.uniform(0, 0.2, 12), -84 + rng.uniform(0, 0.2, 12)])
    comp = rng.integers(0, 40, (12, 4)).astype(float)
    perm = rng.permutation(4)
    a = diversity_ratio(coords, comp).values
    b = diversity_ratio(coords, comp[:, perm]).values
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def _lattice(side=10, gap=0.0):
    xs, ys = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float), indexing="ij")
    xy = np.column_stack([xs.ravel(), ys.ravel()])
    xy[:, 0] += np.where(xy[:, 0] >= side / 2, gap, 0.0)
    return xy


def test_knn_weights_structure():
    w = knn_weights(_lattice(), k=4, projected=True, row_standardize=False)
    W = w.weights.toarray()
    assert np.all(np.diag(W) == 0)
    assert np.array_equal(W, W.T)
    assert np.all(W.sum(axis=1) >= 1)
    rs = knn_weights(_lattice(), k=4, projected=True).weights
    assert np.allclose(np.asarray(rs.sum(axis=1)).ravel(), 1.0)


def test_moran_expectation():
    rng = np.random.default_rng(1)
    for n in (5, 30, 100):
        xy = rng.uniform(0, 10, (n, 2))
        res = morans_i(rng.normal(size=n), knn_weights(xy, k=3, projected=True))
        assert res.expectation == -1.0 / (n - 1)


def test_moran_clustered_halves():
    # the gap keeps every nearest neighbor inside its own half
    xy = _lattice(gap=100.0)
    values = np.where(xy[:, 0] < 50, 1.0, -1.0)
    res = morans_i(values, knn_weights(xy, k=4, projected=True))
    assert res.I == pytest.approx(1.0, abs=1e-12)
    assert res.z > 5


def test_moran_iid_calibration():
    rng = np.random.default_rng(2024)
    w = knn_weights(_lattice(), k=4, projected=True)
    draws = np.array([morans_i(rng.normal(size=100), w).I for _ in range(500)])
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    assert abs(draws.mean() - (-1.0 / 99)) <= 3 * se


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.floats(-50, 50))
def test_moran_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=25)
    w = knn_weights(rng.uniform(0, 5, (25, 2)), k=5, projected=True)
    r1, r2 = morans_i(x, w), morans_i(a * x + b, w)
    assert r2.I == pytest.approx(r1.I, rel=1e-9, abs=1e-12)
    assert r2.z == pytest.approx(r1.z, rel=1e-7, abs=1e-9)


def test_moran_errors():
    w = knn_weights(_lattice(3), k=2, projected=True)
    with pytest.raises(ValueError):
        morans_i(np.ones(9), w)
    with pytest.raises(ValueError):
        morans_i(np.arange(2.0), w)
    with pytest.raises(ValueError):
        morans_i(np.arange(8.0), w)


def test_inverse_distance_weights_cutoff():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]])
    w = inverse_distance_weights(xy, cutoff=2.0, projected=True, row_standardize=False)
    W = w.weights.toarray()
    assert W[0, 1] == pytest.approx(1.0) and W[0, 2] == 0 and np.all(W[2] == 0)
    assert isinstance(w, SpatialWeightMatrix) and sparse.issparse(w.weights)


def test_projection_scale():
    xy = project_miles([(33.0, -84.0), (34.0, -84.0)], ref_lat=33.0)
    assert xy[1, 1] - xy[0, 1] == pytest.approx(MILES_PER_DEG_LAT)
