"""Sparse linear programs: a bounded-variable revised simplex with duals and
optimality certificates.

Problems have the form ``min c.x  s.t.  A x {<=, >=, ==} b,  lb <= x <= ub``.
Small and medium problems go through the in-house simplex; very large ones are
handed to HiGHS (through scipy) when ``method="auto"``.  Whatever the route, the
certificate is recomputed here from the returned primal and dual vectors.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy import sparse

log = logging.getLogger(__name__)

LE, GE, EQ = "<=", ">=", "=="
_SENSE_ALIASES = {"<=": LE, "<": LE, "L": LE, ">=": GE, ">": GE, "G": GE, "==": EQ, "=": EQ, "E": EQ}

# in-house simplex is used when rows * columns stays under this
AUTO_DENSE_LIMIT = 200_000


class LpError(RuntimeError):
    pass


class LpNumericalError(LpError):
    def __init__(self, message: str, condition: float = math.nan):
        super().__init__(f"{message} (basis condition estimate {condition:.3g})")
        self.condition = condition


class LpIterationLimit(LpError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: sparse.csr_matrix
    senses: tuple[str, ...]
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    var_names: tuple[str, ...] | None = None
    row_names: tuple[str, ...] | None = None

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("objective/bound vectors do not match the column count")
        if self.b.shape != (m,) or len(self.senses) != m:
            raise ValueError("rhs/sense vectors do not match the row count")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.A.data))):
            raise ValueError("coefficients must be finite")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise ValueError("bounds must leave a non-empty finite range")
        bad = [s for s in self.senses if s not in (LE, GE, EQ)]
        if bad:
            raise ValueError(f"unknown row sense {bad[0]!r}")

    @classmethod
    def build(cls, c, A, senses, b, lb=None, ub=None, var_names=None, row_names=None) -> "LinearProgram":
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        A = sparse.csr_matrix(A, dtype=float).reshape((-1, n)) if not sparse.issparse(A) else A.tocsr().astype(float)
        if A.shape[1] != n:
            raise ValueError("constraint matrix column count does not match objective")
        m = A.shape[0]
        if isinstance(senses, str):
            senses = [senses] * m
        senses = tuple(_SENSE_ALIASES[s] for s in senses)
        lb = np.zeros(n) if lb is None else np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
        ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
        return cls(c, A, senses, np.asarray(b, dtype=float).ravel(), lb, ub,
                   tuple(var_names) if var_names is not None else None,
                   tuple(row_names) if row_names is not None else None)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def row_name(self, i: int) -> str:
        return self.row_names[i] if self.row_names else f"r{i}"

    def var_name(self, j: int) -> str:
        return self.var_names[j] if self.var_names else f"x{j}"


@dataclass(frozen=True)
class Certificate:
    primal_residual: float
    dual_residual: float
    gap: float
    scale: float

    def ok(self, tol: float) -> bool:
        return (self.primal_residual <= tol * self.scale
                and self.dual_residual <= tol * self.scale
                and abs(self.gap) <= tol * self.scale)


@dataclass(frozen=True)
class LpSolution:
    status: Status
    primal: np.ndarray | None
    dual: np.ndarray | None
    objective_value: float
    certificate: Certificate | None = None
    iterations: int = 0
    method: str = "simplex"
    infeasible_rows: tuple[int, ...] = ()
    message: str = ""
    reduced_costs: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def row_activity_violation(lp: LinearProgram, x: np.ndarray) -> np.ndarray:
    """Per-row constraint violation (non-negative) at ``x``."""
    ax = lp.A @ x
    senses = np.array(lp.senses)
    v = np.zeros(len(ax))
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    v[le] = np.maximum(0.0, ax[le] - lp.b[le])
    v[ge] = np.maximum(0.0, lp.b[ge] - ax[ge])
    v[eq] = np.abs(ax[eq] - lp.b[eq])
    return v


def certify(lp: LinearProgram, x: np.ndarray, y: np.ndarray) -> Certificate:
    """Primal infeasibility, dual infeasibility and duality gap for (x, y)."""
    senses = np.array(lp.senses)
    primal = row_activity_violation(lp, x)
    bound_v = np.maximum(0.0, np.maximum(lp.lb - x, x - lp.ub))
    primal_res = float(max(primal.max(initial=0.0), bound_v.max(initial=0.0)))

    row_sign_v = np.zeros_like(y)
    row_sign_v[senses == LE] = np.maximum(0.0, y[senses == LE])
    row_sign_v[senses == GE] = np.maximum(0.0, -y[senses == GE])
    d = lp.c - lp.A.T @ y
    dual_v = np.where(np.isinf(lp.lb), np.maximum(0.0, d), 0.0) + np.where(
        np.isinf(lp.ub), np.maximum(0.0, -d), 0.0)
    dual_res = float(max(row_sign_v.max(initial=0.0), dual_v.max(initial=0.0)))

    pos = np.where(np.isfinite(lp.lb), lp.lb, 0.0)
    neg = np.where(np.isfinite(lp.ub), lp.ub, 0.0)
    dual_obj = float(lp.b @ y + np.where(d > 0, d * pos, 0.0).sum() + np.where(d < 0, d * neg, 0.0).sum())
    primal_obj = float(lp.c @ x)
    scale = 1.0 + max(abs(primal_obj), abs(dual_obj))
    return Certificate(primal_res, dual_res, primal_obj - dual_obj, scale)


# ---------------------------------------------------------------------------
# scaling

def _equilibrate(A: sparse.csc_matrix, passes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Geometric-mean row/column scale factors, rounded to powers of two."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    if A.nnz == 0:
        return r, s
    coo = A.tocoo()
    absval = np.abs(coo.data)
    logv = np.log2(absval)
    for _ in range(passes):
        cur = logv + np.log2(r[coo.row]) + np.log2(s[coo.col])
        rmax = np.full(m, -np.inf)
        rmin = np.full(m, np.inf)
        np.maximum.at(rmax, coo.row, cur)
        np.minimum.at(rmin, coo.row, cur)
        has = np.isfinite(rmax)
        r[has] *= 2.0 ** (-np.round((rmax[has] + rmin[has]) / 2))
        cur = logv + np.log2(r[coo.row]) + np.log2(s[coo.col])
        cmax = np.full(n, -np.inf)
        cmin = np.full(n, np.inf)
        np.maximum.at(cmax, coo.col, cur)
        np.minimum.at(cmin, coo.col, cur)
        has = np.isfinite(cmax)
        s[has] *= 2.0 ** (-np.round((cmax[has] + cmin[has]) / 2))
    return r, s


# ---------------------------------------------------------------------------
# revised simplex

_BASIC, _LOWER, _UPPER, _FREE = 0, 1, 2, 3


class _Simplex:
    """Bounded-variable revised simplex on ``A z = b, l <= z <= u``.

    Keeps an explicit dense basis inverse updated by elementary (eta) row
    operations and rebuilt from scratch every ``refactor`` pivots.
    """

    def __init__(self, A: sparse.csc_matrix, b, l, u, tol: float, max_iter: int, refactor: int = 64):
        self.A = A
        self.m, self.n = A.shape
        self.b = b
        self.l = l
        self.u = u
        self.tol = tol
        self.dtol = max(tol, 1e-9)
        self.ptol = 1e-9
        self.max_iter = max_iter
        self.refactor_every = refactor
        self.iterations = 0
        self.x = np.zeros(self.n)
        self.state = np.full(self.n, _LOWER, dtype=np.int8)
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.Binv = np.eye(self.m)
        self._since_refactor = 0
        self.col_ptr = A.indptr
        self.col_idx = A.indices
        self.col_val = A.data

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        col[self.col_idx[lo:hi]] = self.col_val[lo:hi]
        return col

    def refactor(self) -> None:
        B = self.A[:, self.basis].toarray()
        try:
            lu = sla.lu_factor(B, check_finite=False)
        except (ValueError, sla.LinAlgError) as exc:
            raise LpNumericalError(f"basis factorization failed: {exc}") from None
        diag = np.abs(np.diag(lu[0]))
        cond = float(diag.max() / diag.min()) if diag.min() > 0 else math.inf
        if not cond < 1e14:
            raise LpNumericalError("singular basis", cond)
        self.Binv = sla.lu_solve(lu, np.eye(self.m), check_finite=False)
        nonbasic = self.state != _BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs
        self._since_refactor = 0

    def run(self, c: np.ndarray) -> str:
        """Minimize ``c.z`` from the current feasible basis; returns a status."""
        degenerate_run = 0
        bland = False
        A_T = self.A.T.tocsr()
        while True:
            if self.iterations >= self.max_iter:
                raise LpIterationLimit(f"simplex exceeded {self.max_iter} iterations")
            y = self.Binv.T @ c[self.basis]
            d = c - A_T @ y
            st = self.state
            elig = ((st == _LOWER) & (d < -self.dtol)) | ((st == _UPPER) & (d > self.dtol)) | (
                (st == _FREE) & (np.abs(d) > self.dtol))
            elig &= self.u > self.l
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                self.y = y
                self.d = d
                return "optimal"
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.Binv @ self.column(q)
            step = direction * alpha
            xb = self.x[self.basis]
            lb = self.l[self.basis]
            ub = self.u[self.basis]
            theta = self.u[q] - self.l[q]
            leave = -1
            leave_to = _LOWER
            dec = step > self.ptol
            inc = step < -self.ptol
            ratios = np.full(self.m, np.inf)
            with np.errstate(divide="ignore", invalid="ignore"):
                r_dec = np.where(dec & np.isfinite(lb), (xb - lb) / step, np.inf)
                r_inc = np.where(inc & np.isfinite(ub), (ub - xb) / -step, np.inf)
            ratios = np.minimum(r_dec, r_inc)
            ratios = np.maximum(ratios, 0.0)
            best = ratios.min() if self.m else np.inf
            if best < theta:
                ties = np.flatnonzero(ratios <= best + 1e-12)
                if bland:
                    pos = int(ties[np.argmin(self.basis[ties])])
                else:
                    pos = int(ties[np.argmax(np.abs(step[ties]))])
                theta = ratios[pos]
                leave = pos
                leave_to = _LOWER if r_dec[pos] <= r_inc[pos] else _UPPER
            if not np.isfinite(theta):
                self.ray = (q, direction, alpha)
                return "unbounded"
            self.iterations += 1
            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run > 30:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            self.x[q] += direction * theta
            self.x[self.basis] = xb - theta * step
            if leave < 0:
                self.state[q] = _UPPER if direction > 0 else _LOWER
                continue
            p = leave
            out = self.basis[p]
            piv = alpha[p]
            if abs(piv) < 1e-11:
                raise LpNumericalError("pivot element vanished", 1.0 / max(abs(piv), 1e-300))
            self.x[out] = self.l[out] if leave_to == _LOWER else self.u[out]
            self.state[out] = leave_to
            self.state[q] = _BASIC
            self.basis[p] = q
            row = self.Binv[p] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[p] = row
            self._since_refactor += 1
            if self._since_refactor >= self.refactor_every:
                self.refactor()


def _standard_form(lp: LinearProgram):
    """Append one slack per inequality row: ``A x + S s = b``."""
    m, n = lp.A.shape
    senses = np.array(lp.senses)
    ineq = np.flatnonzero(senses != EQ)
    sign = np.where(senses[ineq] == LE, 1.0, -1.0)
    S = sparse.csc_matrix((sign, (ineq, np.arange(ineq.size))), shape=(m, ineq.size))
    A = sparse.hstack([lp.A.tocsc(), S], format="csc")
    l = np.concatenate([lp.lb, np.zeros(ineq.size)])
    u = np.concatenate([lp.ub, np.full(ineq.size, np.inf)])
    return A, l, u, ineq, sign


def _solve_simplex(lp: LinearProgram, tol: float, max_iter: int | None, scale: bool) -> LpSolution:
    m, n = lp.A.shape
    A0 = lp.A.tocsc()
    if scale:
        r, s = _equilibrate(A0)
    else:
        r, s = np.ones(m), np.ones(n)
    scaled = LinearProgram(
        lp.c * s, sparse.diags(r) @ lp.A @ sparse.diags(s), lp.senses, lp.b * r,
        np.where(np.isfinite(lp.lb), lp.lb / s, lp.lb), np.where(np.isfinite(lp.ub), lp.ub / s, lp.ub))
    A, l, u, ineq, sign = _standard_form(scaled)
    n_std = A.shape[1]

    # nonbasic starting point: a finite bound, or zero for free columns
    x0 = np.where(np.isfinite(l), l, np.where(np.isfinite(u), u, 0.0))
    state0 = np.where(np.isfinite(l), _LOWER, np.where(np.isfinite(u), _UPPER, _FREE)).astype(np.int8)
    resid = scaled.b - A[:, :n] @ x0[:n]
    slack_of_row = np.full(m, -1)
    slack_of_row[ineq] = n + np.arange(ineq.size)
    basis = np.empty(m, dtype=np.int64)
    art_rows, art_sign = [], []
    for i in range(m):
        k = slack_of_row[i]
        if k >= 0 and sign[k - n] * resid[i] >= 0:
            basis[i] = k
            x0[k] = sign[k - n] * resid[i]
        else:
            basis[i] = -1
            art_rows.append(i)
            art_sign.append(1.0 if resid[i] >= 0 else -1.0)
    n_art = len(art_rows)
    if n_art:
        Art = sparse.csc_matrix((np.array(art_sign), (art_rows, np.arange(n_art))), shape=(m, n_art))
        A = sparse.hstack([A, Art], format="csc")
        l = np.concatenate([l, np.zeros(n_art)])
        u = np.concatenate([u, np.full(n_art, np.inf)])
        x0 = np.concatenate([x0, np.abs(resid[art_rows])])
        state0 = np.concatenate([state0, np.full(n_art, _LOWER, dtype=np.int8)])
        basis[art_rows] = n_std + np.arange(n_art)
    N = A.shape[1]
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    sx = _Simplex(A, scaled.b, l.copy(), u.copy(), tol, max_iter)
    sx.x = x0.astype(float)
    sx.state = state0
    sx.state[basis] = _BASIC
    sx.basis = basis
    if m:
        sx.refactor()

    if n_art:
        c1 = np.zeros(N)
        c1[n_std:] = 1.0
        sx.run(c1)
        infeas = float(sx.x[n_std:].sum())
        if infeas > tol * (1.0 + np.abs(scaled.b).max(initial=0.0)):
            y1 = sx.y * r
            rows = tuple(int(i) for i in np.flatnonzero(np.abs(y1) > 1e-9))
            names = ", ".join(lp.row_name(i) for i in rows)
            return LpSolution(Status.INFEASIBLE, None, y1, math.nan, None, sx.iterations, "simplex",
                              rows, f"phase-1 infeasibility {infeas:.3g}; conflicting rows: {names}")
        # artificials are pinned at zero; drive basic ones out where possible
        sx.u[n_std:] = 0.0
        sx.x[n_std:] = 0.0
        for p in range(m):
            k = sx.basis[p]
            if k < n_std:
                continue
            row = sx.Binv[p] @ A[:, :n_std]
            row = np.asarray(row).ravel()
            cand = np.flatnonzero((np.abs(row) > 1e-7) & (sx.state[:n_std] != _BASIC))
            if cand.size:
                q = int(cand[0])
                alpha = sx.Binv @ sx.column(q)
                sx.state[k] = _LOWER
                sx.state[q] = _BASIC
                sx.basis[p] = q
                rowp = sx.Binv[p] / alpha[p]
                sx.Binv -= np.outer(alpha, rowp)
                sx.Binv[p] = rowp
        sx.refactor()

    c2 = np.zeros(N)
    c2[:n] = scaled.c
    status = sx.run(c2)
    if status == "unbounded":
        return LpSolution(Status.UNBOUNDED, None, None, -math.inf, None, sx.iterations, "simplex",
                          message="objective unbounded below along an improving ray")
    x = sx.x[:n] * s
    x = np.clip(x, lp.lb, lp.ub)
    y = sx.y * r
    cert = certify(lp, x, y)
    return LpSolution(Status.OPTIMAL, x, y, float(lp.c @ x), cert, sx.iterations, "simplex",
                      reduced_costs=lp.c - lp.A.T @ y)


def _solve_highs(lp: LinearProgram, tol: float, max_iter: int | None) -> LpSolution:
    from scipy.optimize import linprog

    senses = np.array(lp.senses)
    le = np.flatnonzero(senses == LE)
    ge = np.flatnonzero(senses == GE)
    eq = np.flatnonzero(senses == EQ)
    A = lp.A.tocsr()
    ub_rows = np.concatenate([le, ge])
    A_ub = sparse.vstack([A[le], -A[ge]], format="csr") if ub_rows.size else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if ub_rows.size else None
    A_eq = A[eq] if eq.size else None
    b_eq = lp.b[eq] if eq.size else None
    bounds = np.column_stack([np.where(np.isfinite(lp.lb), lp.lb, -np.inf), lp.ub])
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b) for a, b in bounds]
    options = {"primal_feasibility_tolerance": max(tol, 1e-10),
               "dual_feasibility_tolerance": max(tol, 1e-10), "presolve": True}
    if max_iter is not None:
        options["maxiter"] = max_iter
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs-ds", options=options)
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, None, None, math.nan, None, int(res.nit), "highs",
                          message=res.message)
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, None, None, -math.inf, None, int(res.nit), "highs",
                          message=res.message)
    if res.status == 1:
        raise LpIterationLimit(res.message)
    if res.status != 0:
        raise LpNumericalError(res.message)
    y = np.zeros(lp.A.shape[0])
    if ub_rows.size:
        mu = res.ineqlin.marginals
        y[le] = mu[: le.size]
        y[ge] = -mu[le.size:]
    if eq.size:
        y[eq] = res.eqlin.marginals
    x = np.clip(res.x, lp.lb, lp.ub)
    cert = certify(lp, x, y)
    return LpSolution(Status.OPTIMAL, x, y, float(lp.c @ x), cert, int(res.nit), "highs",
                      reduced_costs=lp.c - lp.A.T @ y)


class IncrementalLp:
    """A HiGHS model holding a growing subset of the columns of ``lp``.

    Costs and row bounds can be changed and columns added between solves;
    each solve restarts from the previous basis.  Solutions are reported in
    the column indexing of the full problem, with the certificate taken
    against the restricted problem (pricing the remaining columns is up to
    the caller).
    """

    def __init__(self, lp: LinearProgram, cols, tol: float = 1e-9):
        import highspy

        self._hs = highspy
        self.lp = lp
        self.tol = tol
        self._csc = lp.A.tocsc()
        self.c = lp.c.copy()
        self.cols = np.zeros(0, dtype=np.int64)
        self.active = np.zeros(lp.c.size, dtype=bool)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("primal_feasibility_tolerance", max(tol, 1e-10))
        h.setOptionValue("dual_feasibility_tolerance", max(tol, 1e-10))
        inf = highspy.kHighsInf
        senses = np.array(lp.senses)
        lo = np.where(senses == LE, -inf, lp.b)
        hi = np.where(senses == GE, inf, lp.b)
        m = lp.A.shape[0]
        h.addRows(m, lo, hi, 0, np.zeros(0, np.int32), np.zeros(0, np.int32), np.zeros(0))
        self.h = h
        self.add_columns(cols)

    def add_columns(self, cols) -> None:
        cols = np.asarray(cols, dtype=np.int64)
        cols = cols[~self.active[cols]]
        if cols.size == 0:
            return
        sub = self._csc[:, cols]
        inf = self._hs.kHighsInf
        lb = np.where(np.isfinite(self.lp.lb[cols]), self.lp.lb[cols], -inf)
        ub = np.where(np.isfinite(self.lp.ub[cols]), self.lp.ub[cols], inf)
        self.h.addCols(cols.size, self.c[cols], lb, ub, sub.nnz, sub.indptr[:-1].astype(np.int32),
                       sub.indices.astype(np.int32), sub.data)
        self.cols = np.concatenate([self.cols, cols])
        self.active[cols] = True

    def set_costs(self, c: np.ndarray) -> None:
        self.c = np.asarray(c, dtype=float).copy()
        idx = np.arange(self.cols.size, dtype=np.int32)
        self.h.changeColsCost(idx.size, idx, self.c[self.cols])

    def set_rhs(self, row: int, value: float) -> None:
        inf = self._hs.kHighsInf
        sense = self.lp.senses[row]
        lo = -inf if sense == LE else value
        hi = inf if sense == GE else value
        self.h.changeRowBounds(int(row), lo, hi)
        b = self.lp.b.copy()
        b[row] = value
        self.lp = LinearProgram(self.lp.c, self.lp.A, self.lp.senses, b, self.lp.lb, self.lp.ub,
                                self.lp.var_names, self.lp.row_names)

    def solve(self) -> LpSolution:
        ms = self._hs.HighsModelStatus
        settled = (ms.kOptimal, ms.kInfeasible, ms.kUnbounded)
        self.h.run()
        status = self.h.getModelStatus()
        iters = int(self.h.getInfo().simplex_iteration_count)
        # a warm basis can go singular after cost or bound changes: retry cold,
        # then with the primal simplex
        for strategy in (None, 4):
            if status in settled:
                break
            self.h.clearSolver()
            if strategy is not None:
                self.h.setOptionValue("simplex_strategy", strategy)
            self.h.run()
            status = self.h.getModelStatus()
            iters += int(self.h.getInfo().simplex_iteration_count)
        self.h.setOptionValue("simplex_strategy", 1)
        if status == ms.kInfeasible:
            return LpSolution(Status.INFEASIBLE, None, None, math.nan, None, iters, "highs")
        if status == ms.kUnbounded:
            return LpSolution(Status.UNBOUNDED, None, None, -math.inf, None, iters, "highs")
        if status != ms.kOptimal:
            raise LpNumericalError(f"HiGHS stopped with status {self.h.modelStatusToString(status)}")
        sol = self.h.getSolution()
        x = np.zeros(self.lp.c.size)
        x[self.cols] = np.clip(np.asarray(sol.col_value), self.lp.lb[self.cols], self.lp.ub[self.cols])
        y = np.asarray(sol.row_dual, dtype=float)
        rc = self.c - self.lp.A.T @ y
        return LpSolution(Status.OPTIMAL, x, y, float(self.c @ x), None, iters, "highs",
                          reduced_costs=rc)


def solve_lp(lp: LinearProgram, tol: float = 1e-9, method: str = "auto",
             max_iter: int | None = None, scale: bool = True) -> LpSolution:
    """Solve ``lp``.  ``method`` is ``"simplex"``, ``"highs"`` or ``"auto"``.

    Raises LpNumericalError on a breakdown and LpIterationLimit when the
    iteration budget runs out.  Infeasible and unbounded outcomes are
    reported through ``status``; an infeasible simplex result lists the rows
    carrying non-zero phase-1 multipliers (Farkas evidence).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m, n = lp.A.shape
    if method == "auto":
        method = "simplex" if (m + 1) * (n + m + 1) <= AUTO_DENSE_LIMIT else "highs"
    if method == "simplex":
        sol = _solve_simplex(lp, tol, max_iter, scale)
    elif method == "highs":
        sol = _solve_highs(lp, tol, max_iter)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if sol.optimal and not sol.certificate.ok(max(tol, 1e-9) * 1e3):
        log.warning("LP certificate residuals above tolerance: %s", sol.certificate)
    return sol


# ---------------------------------------------------------------------------
# fixed-format MPS dump

def _mps_line(f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    line = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        line += f"   {f5:<8}  {f6:>12}"
    return line.rstrip()


def _num(v: float) -> str:
    text = f"{v:.12g}"
    if len(text) > 12:
        text = f"{v:.6e}"
    return text


def write_mps(lp: LinearProgram, path: str | Path, name: str = "PEDACC") -> None:
    """Write ``lp`` as fixed-format MPS with generated 8-character names.

    Original row/column labels, when present, are listed in ``*`` comment
    lines so the file stays readable by external solvers.
    """
    m, n = lp.A.shape
    rname = [f"R{i:07d}" for i in range(m)]
    cname = [f"C{j:07d}" for j in range(n)]
    out = [f"* rows={m} cols={n}"]
    if lp.row_names:
        out += [f"* {rname[i]} {lp.row_names[i]}" for i in range(m)]
    if lp.var_names:
        out += [f"* {cname[j]} {lp.var_names[j]}" for j in range(n)]
    out.append(f"NAME          {name}")
    out.append("ROWS")
    out.append(_mps_line("N", "COST"))
    code = {LE: "L", GE: "G", EQ: "E"}
    out += [_mps_line(code[s], rname[i]) for i, s in enumerate(lp.senses)]
    out.append("COLUMNS")
    A = lp.A.tocsc()
    for j in range(n):
        entries = []
        if lp.c[j] != 0:
            entries.append(("COST", lp.c[j]))
        for k in range(A.indptr[j], A.indptr[j + 1]):
            entries.append((rname[A.indices[k]], A.data[k]))
        if not entries:
            entries.append(("COST", 0.0))
        for a in range(0, len(entries), 2):
            pair = entries[a:a + 2]
            if len(pair) == 2:
                out.append(_mps_line("", cname[j], pair[0][0], _num(pair[0][1]), pair[1][0], _num(pair[1][1])))
            else:
                out.append(_mps_line("", cname[j], pair[0][0], _num(pair[0][1])))
    out.append("RHS")
    for i in np.flatnonzero(lp.b):
        out.append(_mps_line("", "RHS", rname[i], _num(lp.b[i])))
    out.append("BOUNDS")
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == hi:
            out.append(_mps_line("FX", "BND", cname[j], _num(lo)))
            continue
        if np.isinf(lo):
            out.append(_mps_line("MI", "BND", cname[j]))
        elif lo != 0:
            out.append(_mps_line("LO", "BND", cname[j], _num(lo)))
        if np.isfinite(hi):
            out.append(_mps_line("UP", "BND", cname[j], _num(hi)))
    out.append("ENDATA")
    Path(path).write_text("\n".join(out) + "\n")


def read_mps(path: str | Path) -> LinearProgram:
    """Parse the subset of fixed-format MPS emitted by :func:`write_mps`."""
    section = None
    rows: dict[str, int] = {}
    senses: list[str] = []
    cols: dict[str, int] = {}
    entries: list[tuple[int, int, float]] = []
    cost: dict[int, float] = {}
    rhs: dict[int, float] = {}
    bounds: list[tuple[str, str, float]] = []
    objective = None
    back = {"L": LE, "G": GE, "E": EQ}
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" "):
            section = raw.split()[0]
            continue
        f = raw.split()
        if section == "ROWS":
            if f[0] == "N":
                objective = f[1]
            else:
                rows[f[1]] = len(senses)
                senses.append(back[f[0]])
        elif section == "COLUMNS":
            j = cols.setdefault(f[0], len(cols))
            for rn, val in zip(f[1::2], f[2::2]):
                if rn == objective:
                    cost[j] = float(val)
                else:
                    entries.append((rows[rn], j, float(val)))
        elif section == "RHS":
            for rn, val in zip(f[1::2], f[2::2]):
                rhs[rows[rn]] = float(val)
        elif section == "BOUNDS":
            bounds.append((f[0], f[2], float(f[3]) if len(f) > 3 else 0.0))
    m, n = len(senses), len(cols)
    c = np.zeros(n)
    for j, v in cost.items():
        c[j] = v
    if entries:
        ri, ci, vv = zip(*entries)
    else:
        ri, ci, vv = (), (), ()
    A = sparse.csr_matrix((vv, (ri, ci)), shape=(m, n))
    b = np.zeros(m)
    for i, v in rhs.items():
        b[i] = v
    lb, ub = np.zeros(n), np.full(n, np.inf)
    for kind, cn, val in bounds:
        j = cols[cn]
        if kind == "FX":
            lb[j] = ub[j] = val
        elif kind == "MI":
            lb[j] = -np.inf
        elif kind == "LO":
            lb[j] = val
        elif kind == "UP":
            ub[j] = val
    return LinearProgram(c, A, tuple(senses), b, lb, ub)
