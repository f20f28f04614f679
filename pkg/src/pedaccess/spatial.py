"""Spatial covariates and diagnostics: KDE population density, hospital
distance, two-scale diversity ratio, neighbor weights and Moran's I."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse, stats
from scipy.spatial import cKDTree

from .model import EARTH_RADIUS_MILES, haversine_miles

MILES_PER_DEG_LAT = EARTH_RADIUS_MILES * math.pi / 180.0


def project_miles(coords, ref_lat: float | None = None) -> np.ndarray:
    """Equirectangular projection of (lat, lon) degrees onto a plane in miles."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if ref_lat is None:
        ref_lat = float(coords[:, 0].mean()) if len(coords) else 0.0
    x = coords[:, 1] * MILES_PER_DEG_LAT * math.cos(math.radians(ref_lat))
    y = coords[:, 0] * MILES_PER_DEG_LAT
    return np.column_stack([x, y])


@dataclass(frozen=True)
class CovariateSurface:
    name: str
    values: np.ndarray
    mean: float
    sd: float

    @classmethod
    def from_values(cls, name: str, values) -> "CovariateSurface":
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"covariate {name!r} has non-finite values")
        return cls(name, values, float(values.mean()), float(values.std()))

    def standardized(self) -> np.ndarray:
        if self.sd == 0:
            return np.zeros_like(self.values)
        return (self.values - self.mean) / self.sd


def silverman_bandwidth(xy: np.ndarray, weights: np.ndarray) -> float:
    """Silverman's rule for a 2-D Gaussian kernel, in projected miles."""
    w = weights / weights.sum()
    mu = w @ xy
    var = w @ (xy - mu) ** 2
    sigma = math.sqrt(float(var.mean()))
    n_eff = weights.sum() ** 2 / (weights ** 2).sum()
    h = sigma * n_eff ** (-1.0 / 6.0)
    return h if h > 0 else 1.0


def kde_density(points, weights=None, eval_at=None, bandwidth: float | None = None,
                ref_lat: float | None = None, name: str = "density") -> CovariateSurface:
    """Gaussian kernel density of weighted points, in weight per square mile.

    ``points`` and ``eval_at`` are (lat, lon) degrees.  The bandwidth is in
    miles and defaults to Silverman's rule on the projected points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("kde_density needs at least one point")
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    at = pts if eval_at is None else np.asarray(eval_at, dtype=float).reshape(-1, 2)
    if ref_lat is None:
        ref_lat = float(pts[:, 0].mean())
    p = project_miles(pts, ref_lat)
    q = project_miles(at, ref_lat)
    h = silverman_bandwidth(p, w) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    out = np.empty(len(q))
    norm = 1.0 / (2.0 * math.pi * h * h)
    for start in range(0, len(q), 1024):
        d2 = ((q[start:start + 1024, None, :] - p[None, :, :]) ** 2).sum(-1)
        out[start:start + 1024] = norm * (np.exp(-0.5 * d2 / (h * h)) @ w)
    return CovariateSurface.from_values(name, out)


def hospital_distance(location, hospitals: Sequence[tuple[tuple[float, float], float]],
                      radius: float = 25.0) -> float:
    """Bed-weighted mean distance to hospitals within ``radius`` miles.

    Returns ``radius`` itself when no hospital lies inside the radius.
    """
    if not hospitals:
        return float(radius)
    locs = np.array([h[0] for h in hospitals], dtype=float).reshape(-1, 2)
    beds = np.array([h[1] for h in hospitals], dtype=float)
    d = haversine_miles(np.asarray(location, float)[None, :], locs)
    near = d <= radius
    if not near.any() or beds[near].sum() <= 0:
        return float(radius)
    return float((d[near] * beds[near]).sum() / beds[near].sum())


def _normalized_entropy(counts: np.ndarray) -> np.ndarray:
    total = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=1) / math.log(counts.shape[1])


def diversity_ratio(coords, composition, local_radius: float = 2.0,
                    regional_radius: float = 10.0, name: str = "divratio") -> CovariateSurface:
    """Ratio of local to regional group-composition entropy per tract.

    ``composition`` is an (n_tracts, n_groups) array of head counts.  Counts
    are pooled over tracts within each radius (the tract itself always
    included); entropies use natural logs normalized by ln(n_groups).  The
    ratio is 1 where both entropies vanish.
    """
    if not regional_radius > local_radius > 0:
        raise ValueError("need regional_radius > local_radius > 0")
    comp = np.asarray(composition, dtype=float)
    if comp.ndim != 2 or comp.shape[1] < 2:
        raise ValueError("composition must have at least two group columns")
    xy = project_miles(coords)
    tree = cKDTree(xy)
    pooled = []
    for radius in (local_radius, regional_radius):
        pairs = tree.sparse_distance_matrix(tree, radius, output_type="coo_matrix")
        m = sparse.csr_matrix((np.ones(pairs.nnz), (pairs.row, pairs.col)), shape=(len(xy),) * 2)
        m = m + sparse.identity(len(xy), format="csr")
        m.data[:] = 1.0
        pooled.append(np.asarray(m @ comp))
    h_local = _normalized_entropy(pooled[0])
    h_regional = _normalized_entropy(pooled[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(h_regional > 0, h_local / h_regional, np.where(h_local > 0, np.inf, 1.0))
    ratio = np.where(np.isinf(ratio), 1.0, ratio)
    return CovariateSurface.from_values(name, ratio)


@dataclass(frozen=True)
class SpatialWeightMatrix:
    weights: sparse.csr_matrix
    scheme: str
    row_standardized: bool

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def knn_weights(coords, k: int = 8, row_standardize: bool = True,
                projected: bool = False) -> SpatialWeightMatrix:
    """Symmetrized k-nearest-neighbor weights (w = max(w, w^T)) before optional
    row standardization."""
    xy = np.asarray(coords, float) if projected else project_miles(coords)
    n = len(xy)
    k = min(k, n - 1)
    if k < 1:
        raise ValueError("need at least two locations for neighbor weights")
    _, idx = cKDTree(xy).query(xy, k=k + 1)
    rows, cols = [], []
    for i in range(n):
        nb = [j for j in idx[i] if j != i][:k]
        rows.extend([i] * len(nb))
        cols.extend(nb)
    w = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    w = w.maximum(w.T).tocsr()
    return _finish(w, f"knn({k})", row_standardize)


def inverse_distance_weights(coords, cutoff: float, row_standardize: bool = True,
                             projected: bool = False) -> SpatialWeightMatrix:
    xy = np.asarray(coords, float) if projected else project_miles(coords)
    tree = cKDTree(xy)
    pairs = tree.sparse_distance_matrix(tree, cutoff, output_type="coo_matrix")
    keep = (pairs.row != pairs.col) & (pairs.data > 0)
    w = sparse.csr_matrix((1.0 / pairs.data[keep], (pairs.row[keep], pairs.col[keep])),
                          shape=(len(xy),) * 2)
    return _finish(w, f"inverse_distance({cutoff:g})", row_standardize)


def _finish(w: sparse.csr_matrix, scheme: str, row_standardize: bool) -> SpatialWeightMatrix:
    w.setdiag(0)
    w.eliminate_zeros()
    if row_standardize:
        rs = np.asarray(w.sum(axis=1)).ravel()
        inv = np.divide(1.0, rs, out=np.zeros_like(rs), where=rs > 0)
        w = sparse.diags(inv) @ w
    return SpatialWeightMatrix(sparse.csr_matrix(w), scheme, row_standardize)


@dataclass(frozen=True)
class MoranResult:
    I: float
    expectation: float
    variance: float
    z: float
    p: float


def morans_i(values, w: SpatialWeightMatrix) -> MoranResult:
    """Global Moran's I with the randomization-assumption variance."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError("Moran's I needs at least three values")
    if w.n != n:
        raise ValueError("weight matrix does not match the number of values")
    z = x - x.mean()
    m2 = (z @ z) / n
    if m2 <= 1e-300 * max(1.0, float(np.abs(x).max()) ** 2):
        raise ValueError("Moran's I is undefined for zero-variance values")
    W = w.weights
    s0 = W.sum()
    I = (n / s0) * (z @ (W @ z)) / (z @ z)
    sym = W + W.T
    s1 = 0.5 * sym.multiply(sym).sum()
    s2 = float(((np.asarray(W.sum(axis=1)).ravel() + np.asarray(W.sum(axis=0)).ravel()) ** 2).sum())
    b2 = ((z ** 4).sum() / n) / m2 ** 2
    ei = -1.0 / (n - 1)
    num = n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0 ** 2) - b2 * (
        (n * n - n) * s1 - 2 * n * s2 + 6 * s0 ** 2
    )
    ei2 = num / ((n - 1) * (n - 2) * (n - 3) * s0 ** 2) if n > 3 else np.nan
    var = ei2 - ei ** 2
    zscore = (I - ei) / math.sqrt(var) if var > 0 else np.nan
    p = 2 * stats.norm.sf(abs(zscore)) if np.isfinite(zscore) else np.nan
    return MoranResult(float(I), ei, float(var), float(zscore), float(p))
