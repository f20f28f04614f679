"""Backfitting estimation of space-varying coefficient models.

The model is ``y_i = sum_r beta_r(s_i) X_{r,i} + e_i`` with every
``beta_r(s) = B(s) theta_r`` expanded in a shared spatial basis.  Each cycle
refits one surface at a time against its partial residual, choosing that
surface's smoothing parameter by generalized cross-validation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from ..spatial import MoranResult, knn_weights, morans_i
from .basis import BasisSpec, SpatialBasis, SvcmError

log = logging.getLogger(__name__)

INTERCEPT = "intercept"


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-6
    max_cycles: int = 200
    # log10 range searched for each smoothing parameter, relative to the
    # ratio of data to penalty scale
    log_lambda_range: tuple[float, float] = (-3.0, 6.0)
    ridge: float = 1e-10
    moran_k: int = 8


class _TermSmoother:
    """Closed-form penalized least squares for one term at any lambda.

    With R the Cholesky factor of Z'Z + ridge*I and R^-T P R^-1 = U diag(e) U',
    the fitted values at lambda are Q diag(1/(1 + lambda e)) Q' y where
    Q = Z R^-1 U, and the trace of the smoother is the sum of 1/(1 + lambda e).
    """

    def __init__(self, Z: np.ndarray, P: np.ndarray, ridge: float):
        ZtZ = Z.T @ Z
        scale = np.trace(ZtZ) / ZtZ.shape[0]
        if not scale > 0:
            raise SvcmError("rank-deficient basis: covariate is zero at every site")
        self.delta = ridge * scale
        R = sla.cholesky(ZtZ + self.delta * np.eye(ZtZ.shape[0]))
        Rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
        M = Rinv.T @ P @ Rinv
        e, U = np.linalg.eigh((M + M.T) / 2)
        self.e = np.maximum(e, 0.0)
        self.RinvU = Rinv @ U
        self.Q = Z @ self.RinvU
        self.G = self.Q.T @ self.Q
        self.lambda_scale = scale / max(np.trace(P) / P.shape[0], 1e-300)

    def theta(self, y: np.ndarray, lam: float) -> np.ndarray:
        return self.RinvU @ ((self.Q.T @ y) / (1.0 + lam * self.e))

    def gcv(self, y: np.ndarray, lam: float, yy: float, g: np.ndarray) -> float:
        w = g / (1.0 + lam * self.e)
        rss = max(yy - 2.0 * g @ w + w @ self.G @ w, 0.0)
        n = self.Q.shape[0]
        tr = float(np.sum(1.0 / (1.0 + lam * self.e)))
        denom = (n - tr) ** 2
        return n * rss / denom if denom > 0 else math.inf

    def log_grid(self, log_range: tuple[float, float]) -> np.ndarray:
        lo, hi = log_range
        return math.log10(self.lambda_scale) + np.linspace(lo, hi, 4 * int(hi - lo) + 1)

    def gcv_many(self, Y: np.ndarray, lams: np.ndarray) -> np.ndarray:
        """GCV scores for every lambda (rows) and every column of Y."""
        g = self.Q.T @ Y
        yy = np.einsum("ib,ib->b", Y, Y)
        S = 1.0 / (1.0 + lams[:, None] * self.e[None, :])
        W = S[:, :, None] * g[None]
        GW = np.matmul(self.G, W)
        rss = yy - 2.0 * np.einsum("akb,kb->ab", W, g) + np.einsum("akb,akb->ab", W, GW)
        n = self.Q.shape[0]
        denom = (n - S.sum(axis=1)) ** 2
        with np.errstate(divide="ignore"):
            return np.where(denom[:, None] > 0, n * np.maximum(rss, 0.0) / denom[:, None], np.inf)

    def choose_lambda(self, y: np.ndarray, log_range: tuple[float, float]) -> float:
        g = self.Q.T @ y
        yy = float(y @ y)
        grid = self.log_grid(log_range)
        scores = np.array([self.gcv(y, 10.0 ** t, yy, g) for t in grid])
        k = int(np.argmin(scores))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        if b > a:
            res = minimize_scalar(lambda t: self.gcv(y, 10.0 ** t, yy, g), bounds=(a, b),
                                  method="bounded", options={"xatol": 1e-4})
            if res.fun <= scores[k]:
                return float(10.0 ** res.x)
        return float(10.0 ** grid[k])


@dataclass(frozen=True)
class CoefficientSurface:
    name: str
    theta: np.ndarray
    basis: SpatialBasis
    lam: float
    estimate: np.ndarray
    se: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    alpha: float | None = None

    def __call__(self, coords) -> np.ndarray:
        return self.basis.design(coords) @ self.theta

    def with_band(self, se, lower, upper, alpha) -> "CoefficientSurface":
        return CoefficientSurface(self.name, self.theta, self.basis, self.lam, self.estimate,
                                  se, lower, upper, alpha)


@dataclass(frozen=True)
class ModelFit:
    response: str
    names: tuple[str, ...]
    surfaces: dict
    fitted: np.ndarray
    residuals: np.ndarray
    y: np.ndarray
    X: np.ndarray
    coords: np.ndarray
    basis: SpatialBasis
    lambdas: np.ndarray
    edf: float
    aic: float
    resid_corr: float
    moran: MoranResult | None
    trace: tuple[float, ...]
    converged: bool
    cycles: int
    dropped: tuple[int, ...] = ()
    ridge: float = 1e-10
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def covariates(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n != INTERCEPT)

    def design(self) -> np.ndarray:
        """Joint design [diag(X_r) B for each term]."""
        if "Z" not in self._cache:
            B = self.basis.design(self.coords)
            self._cache["Z"] = np.hstack([self.X[:, [r]] * B for r in range(self.X.shape[1])])
        return self._cache["Z"]

    def system_inverse(self) -> np.ndarray:
        """Inverse of Z'Z + blockdiag(lambda_r P + ridge I) at the fitted lambdas."""
        if "Ainv" not in self._cache:
            Z = self.design()
            ZtZ = Z.T @ Z
            K = self.basis.size
            P = self.basis.penalty
            A = ZtZ.copy()
            for r, lam in enumerate(self.lambdas):
                blk = slice(r * K, (r + 1) * K)
                A[blk, blk] += lam * P + self.ridge * np.trace(ZtZ[blk, blk]) / K * np.eye(K)
            self._cache["Ainv"] = np.linalg.inv(A)
        return self._cache["Ainv"]

    def hat_theta(self) -> np.ndarray:
        """Matrix mapping y to the stacked coefficients at the fitted lambdas."""
        if "H" not in self._cache:
            self._cache["H"] = self.system_inverse() @ self.design().T
        return self._cache["H"]

    @property
    def sigma2(self) -> float:
        dof = self.n - self.edf
        return float(self.residuals @ self.residuals / dof) if dof > 0 else 0.0

    def summary(self) -> dict:
        return {
            "response": self.response,
            "terms": list(self.names),
            "n": self.n,
            "edf": self.edf,
            "aic": self.aic,
            "resid_corr": self.resid_corr,
            "moran_i": None if self.moran is None else self.moran.I,
            "moran_z": None if self.moran is None else self.moran.z,
            "lambdas": [float(v) for v in self.lambdas],
            "converged": self.converged,
            "cycles": self.cycles,
            "trace": list(self.trace),
            "dropped": list(self.dropped),
        }


def _as_matrix(X, names) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(X, dict):
        names = tuple(X) if names is None else tuple(names)
        cols = [np.asarray(X[n], dtype=float) for n in names]
        return (np.column_stack(cols) if cols else None), names
    if X is None:
        return None, ()
    M = np.asarray(X, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    names = tuple(names) if names is not None else tuple(f"x{r + 1}" for r in range(M.shape[1]))
    if len(names) != M.shape[1]:
        raise SvcmError("covariate names do not match the columns")
    return M, names


def fit_svcm(y, X, coords, basis: BasisSpec | SpatialBasis | None = None, names=None,
             intercept: bool = True, options: FitOptions | None = None, response: str = "y",
             order=None, seed: int = 0) -> ModelFit:
    """Fit varying-coefficient surfaces by backfitting with per-term GCV.

    ``X`` is an (n, R) array or a name-to-values mapping of covariates
    (expected to be standardized).  ``coords`` are planar site coordinates.
    Sites with a missing value anywhere are dropped and listed in
    ``dropped``.  ``order`` optionally permutes the backfitting order.
    """
    opts = options or FitOptions()
    y = np.asarray(y, dtype=float)
    coords = np.asarray(coords, dtype=float)
    M, cov_names = _as_matrix(X, names)
    n0 = y.size
    if coords.shape != (n0, 2) or (M is not None and M.shape[0] != n0):
        raise SvcmError("response, covariates and coordinates must have the same length")
    if INTERCEPT in cov_names:
        raise SvcmError(f"{INTERCEPT!r} is reserved")
    cols, term_names = [], []
    if intercept:
        cols.append(np.ones(n0))
        term_names.append(INTERCEPT)
    if M is not None:
        cols.extend(M.T)
        term_names.extend(cov_names)
    if not cols:
        raise SvcmError("model has no terms")
    Xall = np.column_stack(cols)
    ok = np.isfinite(y) & np.all(np.isfinite(Xall), axis=1) & np.all(np.isfinite(coords), axis=1)
    dropped = tuple(int(i) for i in np.flatnonzero(~ok))
    if dropped:
        log.info("dropping %d sites with missing values", len(dropped))
    y, Xall, coords = y[ok], Xall[ok], coords[ok]
    n, R = Xall.shape
    if n < 3 * R + 2:
        raise SvcmError(f"only {n} complete sites for {R} terms")

    sb = basis if isinstance(basis, SpatialBasis) else SpatialBasis.for_sites(basis or BasisSpec(), coords, seed)
    B = sb.design(coords)
    P = sb.penalty
    smoothers = [_TermSmoother(Xall[:, [r]] * B, P, opts.ridge) for r in range(R)]

    seq = list(range(R)) if order is None else [int(r) for r in order]
    if sorted(seq) != list(range(R)):
        raise SvcmError("order must be a permutation of the terms")
    K = sb.size
    Z = np.hstack([Xall[:, [r]] * B for r in range(R)])
    ZtZ = Z.T @ Z
    Zty = Z.T @ y

    def joint(lams):
        # the backfitting fixed point at fixed smoothing parameters, solved directly
        A = ZtZ.copy()
        for r in range(R):
            blk = slice(r * K, (r + 1) * K)
            A[blk, blk] += lams[r] * P + smoothers[r].delta * np.eye(K)
        return A, np.linalg.solve(A, Zty)

    parts = np.zeros((R, n))
    lams = np.ones(R)
    trace = []
    converged = False
    cycle = 0
    for cycle in range(1, opts.max_cycles + 1):
        before = parts.copy()
        for r in seq:
            partial = y - parts.sum(axis=0) + parts[r]
            lams[r] = smoothers[r].choose_lambda(partial, opts.log_lambda_range)
            parts[r] = smoothers[r].Q @ ((smoothers[r].Q.T @ partial) / (1.0 + lams[r] * smoothers[r].e))
        # one cyclic sweep leaves correlated terms far from their common fixed
        # point; jump to it so the next sweep re-chooses lambdas from exact
        # partial residuals
        _, theta = joint(lams)
        for r in range(R):
            parts[r] = Z[:, r * K:(r + 1) * K] @ theta[r * K:(r + 1) * K]
        total = parts.sum(axis=0)
        change = float(np.abs(parts - before).max())
        rel = change / max(float(np.abs(total).max()), float(np.abs(y).max()), 1e-300)
        trace.append(rel)
        if rel < opts.tol:
            converged = True
            break
    if not converged:
        log.warning("backfitting stopped after %d cycles (last change %.3g)", cycle, trace[-1])

    A, theta = joint(lams)
    Ainv = np.linalg.inv(A)
    H = Ainv @ Z.T
    fitted = Z @ theta
    resid = y - fitted
    edf = float(np.einsum("ij,ji->", Z, H))
    rss = float(resid @ resid)
    aic = n * math.log(max(rss, 1e-300) / n) + 2.0 * edf
    if resid.std() > 0 and y.std() > 0:
        rc = float(np.corrcoef(resid, y)[0, 1])
    else:
        rc = 0.0
    moran = None
    if n >= 3 and resid.std() > 1e-12 * max(1.0, float(np.abs(y).max())):
        w = knn_weights(coords, k=min(opts.moran_k, n - 1), projected=True)
        moran = morans_i(resid, w)

    surfaces = {}
    for r, name in enumerate(term_names):
        th = theta[r * K:(r + 1) * K]
        surfaces[name] = CoefficientSurface(name, th, sb, float(lams[r]), B @ th)
    fit = ModelFit(response, tuple(term_names), surfaces, fitted, resid, y, Xall, coords, sb,
                   lams.copy(), edf, aic, rc, moran, tuple(trace), converged, cycle, dropped, opts.ridge)
    fit._cache["Z"] = Z
    fit._cache["H"] = H
    fit._cache["Ainv"] = Ainv
    fit._cache["smoothers"] = smoothers
    fit._cache["log_range"] = opts.log_lambda_range
    return fit


def refit_shuffled(fit: ModelFit, seed: int = 0, options: FitOptions | None = None) -> float:
    """Refit with a random backfitting order; returns the largest absolute
    change in fitted values (a stability diagnostic for collinear terms)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(fit.names))
    has_int = fit.names[0] == INTERCEPT
    X = fit.X[:, 1:] if has_int else fit.X
    other = fit_svcm(fit.y, X, fit.coords, fit.basis, names=fit.covariates, intercept=has_int,
                     options=options, order=order)
    return float(np.abs(other.fitted - fit.fitted).max())
