"""Simultaneous confidence bands and the tests built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .basis import BasisSpec, SpatialBasis, SvcmError
from .fit import INTERCEPT, CoefficientSurface, FitOptions, ModelFit, fit_svcm

MIN_BOOT = 100
MIN_BOOT_TEST = 200
LEVERAGE_POWER = 1.0
# the bias pilot smooths this many times less than the GCV fit
PILOT_FACTOR = 100.0


@dataclass(frozen=True)
class Band:
    name: str
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    critical: float
    alpha: float
    n_boot: int
    bias: np.ndarray | None = None


def _penalty_root(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((P + P.T) / 2)
    return V * np.sqrt(np.maximum(w, 0.0))


def simultaneous_band(fit: ModelFit, r: int | str, alpha: float = 0.05, n_boot: int = 1000,
                      seed: int = 0, rng: np.random.Generator | None = None) -> Band:
    """Simultaneous band for surface ``r`` at the fit's sites.

    Each replicate perturbs the coefficient vector by
    A^-1 (Z'(e*v) + sigma * Lambda^(1/2) xi): a wild bootstrap of the data
    term (Rademacher v, leverage-adjusted residuals e_i / (1 - h_ii)) plus a
    Gaussian draw for the smoothing bias implied by reading the penalty as
    a prior.  On top of that, the surface's own smoothing parameter is
    re-chosen by GCV on the perturbed partial residual and the change in the
    surface is added.  The pointwise se is the root mean square deviation.
    Each deviation is shifted by the smoothing bias estimated by applying
    the fit's smoother to a less smoothed pilot fit (all lambdas divided by
    PILOT_FACTOR); the half-width is the (1 - alpha) quantile of
    max_i |deviation_i + bias_i| / se_i times se.
    """
    if n_boot < MIN_BOOT:
        raise SvcmError(f"n_boot must be at least {MIN_BOOT}")
    if not 0 < alpha < 1:
        raise SvcmError("alpha must lie in (0, 1)")
    idx = fit.names.index(r) if isinstance(r, str) else int(r)
    name = fit.names[idx]
    K = fit.basis.size
    blk = slice(idx * K, (idx + 1) * K)
    B = fit.basis.design(fit.coords)
    Hr = fit.hat_theta()[blk]
    n = fit.n
    lev = np.clip(np.einsum("ij,ji->i", fit.design(), fit.hat_theta()), 0.0, 1.0 - 1e-9)
    e = fit.residuals / (1.0 - lev) ** LEVERAGE_POWER
    root = _penalty_root(fit.basis.penalty)
    Ainv_r = fit.system_inverse()[blk]
    sigma = math.sqrt(fit.sigma2)
    G = np.hstack([Ainv_r[:, q * K:(q + 1) * K] @ (math.sqrt(lam) * root)
                   for q, lam in enumerate(fit.lambdas)]) * sigma
    est = fit.surfaces[name].estimate
    floor = 1e-12 * max(1.0, float(np.abs(est).max()), float(np.abs(fit.y).max()))
    rng = rng or np.random.default_rng(seed)

    # smoothing-parameter variability: re-run this term's GCV choice on each
    # perturbed partial residual and add the resulting change in the surface
    sm = fit._cache.get("smoothers")
    if sm is not None:
        smr = sm[idx]
        lams = 10.0 ** smr.log_grid(fit._cache["log_range"])
        partial = fit.y - fit.fitted + fit.X[:, idx] * est
        k0 = int(np.argmin(smr.gcv_many(partial[:, None], lams)[:, 0]))
        shrink = 1.0 / (1.0 + lams[:, None] * smr.e[None, :])

    dev = np.empty((n, n_boot))
    for start in range(0, n_boot, 250):
        stop = min(start + 250, n_boot)
        v = rng.choice((-1.0, 1.0), size=(n, stop - start))
        xi = rng.standard_normal((G.shape[1], stop - start))
        ev = e[:, None] * v
        d_theta = Hr @ ev + G @ xi
        if sm is not None:
            Ystar = partial[:, None] + ev
            ks = np.argmin(smr.gcv_many(Ystar, lams), axis=0)
            g = smr.Q.T @ Ystar
            d_theta += smr.RinvU @ (g * (shrink[ks].T - shrink[k0][:, None]))
        dev[:, start:stop] = B @ d_theta
    se = np.sqrt(np.mean(dev ** 2, axis=1)) + floor
    bias = B @ _pilot_bias(fit, blk)
    crit = np.max(np.abs(dev + bias[:, None]) / se[:, None], axis=0)
    c = float(np.quantile(crit, 1.0 - alpha))
    half = c * se
    return Band(name, est, se, est - half, est + half, c, alpha, n_boot, bias)


def _pilot_bias(fit: ModelFit, blk: slice) -> np.ndarray:
    """E[theta_hat] - theta under a pilot truth, for one coefficient block."""
    Z = fit.design()
    K = fit.basis.size
    ZtZ = Z.T @ Z
    A = ZtZ.copy()
    for q, lam in enumerate(fit.lambdas):
        b = slice(q * K, (q + 1) * K)
        A[b, b] += lam / PILOT_FACTOR * fit.basis.penalty + fit.ridge * np.trace(ZtZ[b, b]) / K * np.eye(K)
    pilot = np.linalg.solve(A, Z.T @ fit.y)
    return (fit.hat_theta() @ (Z @ pilot))[blk] - pilot[blk]


@dataclass(frozen=True)
class ShapeVerdict:
    shape: str
    significant: bool
    sign: int
    interval: tuple[float, float]


def classify_shape(lower, upper) -> ShapeVerdict:
    """Constant iff a horizontal plane fits inside the band everywhere, that
    is max(lower) <= min(upper).  ``interval`` is the set of such constants
    (empty, lo > hi, when the shape is nonconstant).  The surface is
    significant when the band excludes zero somewhere; for a constant shape
    that is the same as the interval excluding zero."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    lo, hi = float(lower.max()), float(upper.min())
    shape = "constant" if lo <= hi else "nonconstant"
    sign = 1 if lo > 0 else (-1 if hi < 0 else 0)
    if lo > 0 and hi < 0:
        # excluded on both sides at different sites
        sign = 0
    significant = lo > 0 or hi < 0
    return ShapeVerdict(shape, significant, sign, (lo, hi))


@dataclass(frozen=True)
class SignificanceMap:
    names: tuple[str, ...]
    signs: dict
    shapes: dict
    bands: dict
    alpha: float

    def flagged(self, name: str) -> np.ndarray:
        return self.signs[name] != 0

    def any_significant(self, name: str) -> bool:
        return bool(np.any(self.signs[name] != 0))

    def features(self, coords_lonlat: np.ndarray, name: str, ids=None) -> dict:
        """GeoJSON FeatureCollection of sites with estimate, band and sign."""
        band = self.bands[name]
        label = {1: "positive", -1: "negative", 0: "none"}
        feats = []
        for i, (lon, lat) in enumerate(np.asarray(coords_lonlat, dtype=float)):
            feats.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [float(lon), float(lat)]},
                "properties": {
                    "tract_id": str(ids[i]) if ids is not None else str(i),
                    "covariate": name,
                    "estimate": float(band.estimate[i]),
                    "lower": float(band.lower[i]),
                    "upper": float(band.upper[i]),
                    "sign": label[int(self.signs[name][i])],
                },
            })
        return {"type": "FeatureCollection", "features": feats}


def significance_map(fit: ModelFit, alpha: float = 0.05, n_boot: int = 1000, seed: int = 0,
                     terms: Sequence[str] | None = None) -> SignificanceMap:
    rng = np.random.default_rng(seed)
    names = tuple(terms) if terms is not None else fit.names
    signs, shapes, bands = {}, {}, {}
    for name in names:
        band = simultaneous_band(fit, name, alpha, n_boot, rng=rng)
        s = np.zeros(fit.n, dtype=int)
        s[band.lower > 0] = 1
        s[band.upper < 0] = -1
        signs[name] = s
        shapes[name] = classify_shape(band.lower, band.upper)
        bands[name] = band
    return SignificanceMap(names, signs, shapes, bands, alpha)


def _intercept_map(z: np.ndarray, coords, basis, n_boot: int, alpha: float, seed: int,
                   options: FitOptions | None) -> SignificanceMap:
    if n_boot < MIN_BOOT_TEST:
        raise SvcmError(f"n_boot must be at least {MIN_BOOT_TEST}")
    fit = fit_svcm(z, None, coords, basis, options=options, response="z")
    return significance_map(fit, alpha, n_boot, seed, terms=(INTERCEPT,))


def difference_test(m, o, coords, n_boot: int = 1000, alpha: float = 0.05, seed: int = 0,
                    basis: BasisSpec | SpatialBasis | None = None,
                    options: FitOptions | None = None) -> SignificanceMap:
    """Where does the Medicaid measure differ from the other-children one?

    Fits an intercept-only varying surface to m - o and flags sites where
    the simultaneous band excludes zero."""
    m = np.asarray(m, dtype=float)
    o = np.asarray(o, dtype=float)
    if m.shape != o.shape:
        raise SvcmError("the two measures cover different tract sets")
    if np.asarray(coords).shape != (m.size, 2):
        raise SvcmError("coordinates do not match the measures")
    return _intercept_map(m - o, coords, basis, n_boot, alpha, seed, options)


def location_test(y, coords, mu0: float | None = None, weights=None, n_boot: int = 1000,
                  alpha: float = 0.05, seed: int = 0, basis: BasisSpec | SpatialBasis | None = None,
                  options: FitOptions | None = None) -> SignificanceMap:
    """Where does ``y`` sit significantly above (or below) the threshold mu0?

    mu0 defaults to the weighted mean of y (pass tract populations as
    ``weights``; unweighted when omitted)."""
    y = np.asarray(y, dtype=float)
    if mu0 is None:
        w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
        keep = np.isfinite(y) & (w > 0)
        mu0 = float(np.sum(w[keep] * y[keep]) / np.sum(w[keep]))
    if not math.isfinite(mu0):
        raise SvcmError("mu0 must be finite")
    return _intercept_map(y - mu0, coords, basis, n_boot, alpha, seed, options)


@dataclass(frozen=True)
class ModelRow:
    covariates: tuple[str, ...]
    aic: float
    abs_corr: float
    moran_i: float
    moran_z: float
    improves_all: bool
    retained: bool
    fit: ModelFit
    significance: SignificanceMap


@dataclass(frozen=True)
class ModelComparison:
    rows: tuple[ModelRow, ...]
    consistency: dict

    def table(self) -> list[dict]:
        return [{"covariates": list(r.covariates), "aic": r.aic, "abs_corr": r.abs_corr,
                 "moran_i": r.moran_i, "moran_z": r.moran_z, "improves_all": r.improves_all,
                 "retained": r.retained} for r in self.rows]


def evaluate_models(candidates: Sequence[Sequence[str]], y, covariates: Mapping[str, np.ndarray], coords,
                    basis: BasisSpec | SpatialBasis | None = None, alpha: float = 0.05, n_boot: int = 500,
                    seed: int = 0, options: FitOptions | None = None,
                    min_covariates: int = 4) -> ModelComparison:
    """Fit every candidate subset and compare them.

    Reported per model: AIC, |corr(residuals, y)| and the residual Moran's I.
    The first candidate is the reference; a model "improves on all" when it
    is strictly better than the reference on all three criteria, and is
    retained when it is no worse on any of them (the reference is always
    retained).  For each covariate the consistency report collects, over the
    retained models, its shape, significance and constant-coefficient range.
    """
    if not candidates:
        raise SvcmError("need at least one candidate model")
    for c in candidates:
        if len(c) < min_covariates:
            raise SvcmError(f"candidate {list(c)} has fewer than {min_covariates} covariates")
        missing = [n for n in c if n not in covariates]
        if missing:
            raise SvcmError(f"unknown covariates {missing}")
    y = np.asarray(y, dtype=float)
    coords = np.asarray(coords, dtype=float)
    if not isinstance(basis, SpatialBasis):
        basis = SpatialBasis.for_sites(basis or BasisSpec(), coords, seed)
    fits = []
    for k, cand in enumerate(candidates):
        fit = fit_svcm(y, {n: covariates[n] for n in cand}, coords, basis, options=options)
        sig = significance_map(fit, alpha, n_boot, seed + k)
        fits.append((tuple(cand), fit, sig))

    def crit(fit):
        mi = abs(fit.moran.I) if fit.moran is not None else 0.0
        return fit.aic, abs(fit.resid_corr), mi

    ref = crit(fits[0][1])
    rows = []
    for k, (cand, fit, sig) in enumerate(fits):
        c = crit(fit)
        improves = k > 0 and all(a < b for a, b in zip(c, ref))
        retained = k == 0 or all(a <= b for a, b in zip(c, ref))
        rows.append(ModelRow(cand, fit.aic, c[1], fit.moran.I if fit.moran else float("nan"),
                             fit.moran.z if fit.moran else float("nan"), improves, retained, fit, sig))

    consistency = {}
    names = []
    for cand, _, _ in fits:
        names.extend(n for n in cand if n not in names)
    for name in names:
        entries = [r for r in rows if r.retained and name in r.covariates]
        shapes = [r.significance.shapes[name] for r in entries]
        consistency[name] = {
            "models": len(entries),
            "shapes": [s.shape for s in shapes],
            "significant": [s.significant for s in shapes],
            "signs": [s.sign for s in shapes],
            "constant_ranges": [s.interval if s.shape == "constant" else None for s in shapes],
            "consistent_shape": len({s.shape for s in shapes}) <= 1,
            "consistent_significance": len({(s.significant, s.sign) for s in shapes}) <= 1,
        }
    return ModelComparison(tuple(rows), consistency)
