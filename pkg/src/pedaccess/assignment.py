"""Constrained patient-to-physician assignment.

The scenario is translated into a transportation-style LP over the sparse arc
set, with Medicaid and other children assigned as separate commodities that
share physician capacity.  Solving is lexicographic: first maximize the number
of children assigned (or require a fixed fraction), then minimize child-miles
at that coverage.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy import sparse

from .lp import GE, LE, IncrementalLp, LinearProgram, LpSolution, Status, certify, solve_lp
from .model import ScenarioInstance

log = logging.getLogger(__name__)

# per-unit cost of leaving a physician below the PC*LC floor, as a multiple of
# the longest arc
LC_PENALTY_FACTOR = 1e4
# set PEDACCESS_AUDIT=1 to re-check every returned solution
AUDIT = os.environ.get("PEDACCESS_AUDIT", "") == "1"
# variable names are only generated for LPs up to this many columns
NAMED_COLUMN_LIMIT = 50_000
# above this many flow columns, arcs are priced in on demand
COLUMN_GENERATION_LIMIT = 20_000


class AssignmentInfeasible(RuntimeError):
    def __init__(self, required: float, achievable: float):
        super().__init__(
            f"required coverage {required:.6g} exceeds the maximum achievable coverage {achievable:.6g}")
        self.required = required
        self.achievable = achievable


class AuditError(AssertionError):
    pass


@dataclass(frozen=True)
class LpLayout:
    """Column and row positions of each variable and constraint family."""

    n_arcs: int
    n_phys: int
    arc_order: np.ndarray
    rows: dict

    @property
    def col_medicaid(self) -> slice:
        return slice(0, self.n_arcs)

    @property
    def col_other(self) -> slice:
        return slice(self.n_arcs, 2 * self.n_arcs)

    @property
    def col_slack(self) -> slice:
        return slice(2 * self.n_arcs, 2 * self.n_arcs + self.n_phys)


def _assemble(scenario: ScenarioInstance, coverage_target: float = 0.0,
              arc_order: np.ndarray | None = None,
              names: bool | None = None) -> tuple[LinearProgram, LpLayout]:
    p = scenario.params
    d = scenario.distances
    S, T, A = scenario.n_tracts, scenario.n_physicians, len(d)
    order = np.arange(A) if arc_order is None else np.asarray(arc_order)
    ti, pj, dist = d.tract[order], d.physician[order], d.miles[order]
    arcs = np.arange(A)
    colM, colO = arcs, A + arcs
    colS = 2 * A + np.arange(T)
    n = 2 * A + T
    far = dist >= p.mi_max_limited

    rows, cols, vals = [], [], []
    senses, rhs, row_names = [], [], []
    layout_rows = {}

    def family(name, count, sense, b):
        start = len(senses)
        senses.extend([sense] * count)
        rhs.extend(np.broadcast_to(np.asarray(b, dtype=float), (count,)).tolist())
        layout_rows[name] = slice(start, start + count)
        return start

    def add(r, c, v):
        rows.append(np.asarray(r, dtype=np.int64))
        cols.append(np.asarray(c, dtype=np.int64))
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(r)))

    r0 = family("cap_hi", T, LE, p.pc)
    add(r0 + pj, colM, 1.0)
    add(r0 + pj, colO, 1.0)
    row_names += [f"cap_hi[{j}]" for j in range(T)]

    r0 = family("cap_lo", T, GE, p.pc * p.lc)
    add(r0 + pj, colM, 1.0)
    add(r0 + pj, colO, 1.0)
    add(r0 + np.arange(T), colS, 1.0)
    row_names += [f"cap_lo[{j}]" for j in range(T)]

    md = scenario.md
    congested = np.flatnonzero(md >= 2)
    r0 = family("congestion", congested.size, LE, p.pc * p.cc * md[congested])
    if congested.size:
        cong_row = np.full(S, -1)
        cong_row[congested] = np.arange(congested.size)
        host = cong_row[scenario.physician_tract[pj]]
        on = host >= 0
        add(r0 + host[on], colM[on], 1.0)
        add(r0 + host[on], colO[on], 1.0)
    row_names += [f"congestion[{i}]" for i in congested]

    r0 = family("mob_M", S, LE, scenario.mob_medicaid * scenario.pop_medicaid)
    add(r0 + ti[far], colM[far], 1.0)
    row_names += [f"mob_M[{i}]" for i in range(S)]
    r0 = family("mob_O", S, LE, scenario.mob_other * scenario.pop_other)
    add(r0 + ti[far], colO[far], 1.0)
    row_names += [f"mob_O[{i}]" for i in range(S)]

    r0 = family("medicaid", T, LE, p.pc * scenario.mc * scenario.pam)
    add(r0 + pj, colM, 1.0)
    row_names += [f"medicaid[{j}]" for j in range(T)]

    r0 = family("pop_M", S, LE, scenario.pop_medicaid)
    add(r0 + ti, colM, 1.0)
    row_names += [f"pop_M[{i}]" for i in range(S)]
    r0 = family("pop_O", S, LE, scenario.pop_other)
    add(r0 + ti, colO, 1.0)
    row_names += [f"pop_O[{i}]" for i in range(S)]

    r0 = family("coverage", 1, GE, coverage_target)
    add(np.full(2 * A, r0), np.concatenate([colM, colO]), 1.0)
    row_names.append("coverage")

    m = len(senses)
    A_mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, n))
    penalty = LC_PENALTY_FACTOR * (dist.max() if A else p.mi_max)
    c = np.concatenate([dist, dist, np.full(T, penalty)])
    ub = np.concatenate([np.full(2 * A, np.inf), np.full(T, p.pc * p.lc)])
    if names is None:
        names = n <= NAMED_COLUMN_LIMIT
    var_names = None
    if names:
        var_names = tuple([f"nM[{a},{b}]" for a, b in zip(ti, pj)] + [f"nO[{a},{b}]" for a, b in zip(ti, pj)]
                          + [f"lc_slack[{j}]" for j in range(T)])
    lp = LinearProgram(c, A_mat, tuple(senses), np.asarray(rhs, dtype=float), np.zeros(n), ub,
                       var_names, tuple(row_names))
    return lp, LpLayout(A, T, order, layout_rows)


def build_lp(scenario: ScenarioInstance, coverage_target: float | None = None,
             arc_order=None) -> LinearProgram:
    """The distance-minimizing assignment LP for ``scenario``.

    The coverage row reads ``sum of all flows >= coverage_target``; by default
    the target is ``alpha * total children`` in fixed-fraction mode and 0 (to
    be raised after the coverage-maximizing phase) otherwise.
    """
    if coverage_target is None:
        mode = scenario.params.coverage_mode
        total = float(scenario.pop_medicaid.sum() + scenario.pop_other.sum())
        coverage_target = 0.0 if mode.is_max else mode.alpha * total
    return _assemble(scenario, coverage_target, arc_order)[0]


@dataclass(frozen=True)
class AssignmentSolution:
    flows_medicaid: np.ndarray
    flows_other: np.ndarray
    achieved_coverage_fraction: float
    total_distance: float
    relaxation_report: tuple[tuple[int, float], ...]
    assigned: float
    objective_value: float
    unserved_tracts: tuple[int, ...]
    lp_phase1: LpSolution | None = None
    lp_phase2: LpSolution | None = None
    slack: np.ndarray | None = None

    @property
    def flows_total(self) -> np.ndarray:
        return self.flows_medicaid + self.flows_other

    def as_dict(self, scenario: ScenarioInstance, group: str = "total") -> dict[tuple[int, int], float]:
        flows = {"medicaid": self.flows_medicaid, "other": self.flows_other,
                 "total": self.flows_total}[group]
        d = scenario.distances
        return {(int(i), int(j)): float(f) for i, j, f in zip(d.tract, d.physician, flows) if f > 0}


def _phase1_objective(lp: LinearProgram, layout: LpLayout) -> LinearProgram:
    c = np.zeros_like(lp.c)
    c[: 2 * layout.n_arcs] = -1.0
    return LinearProgram(c, lp.A, lp.senses, lp.b, lp.lb, lp.ub, lp.var_names, lp.row_names)


def _with_coverage(lp: LinearProgram, layout: LpLayout, target: float) -> LinearProgram:
    b = lp.b.copy()
    b[layout.rows["coverage"].start] = target
    return LinearProgram(lp.c, lp.A, lp.senses, b, lp.lb, lp.ub, lp.var_names, lp.row_names)


def _seed_columns(scenario: ScenarioInstance, layout: LpLayout, k: int = 10) -> np.ndarray:
    """Initial column set: each tract's and each physician's k shortest arcs
    (both groups) plus every capacity-floor slack."""
    d = scenario.distances
    A = layout.n_arcs
    ti = d.tract[layout.arc_order]
    pj = d.physician[layout.arc_order]
    miles = d.miles[layout.arc_order]
    keep = np.zeros(A, dtype=bool)
    for owner in (ti, pj):
        order = np.lexsort((miles, owner))
        grp = owner[order]
        first = np.searchsorted(grp, grp, side="left")
        rank = np.arange(A) - first
        keep[order[rank < k]] = True
    active = np.zeros(2 * A + layout.n_phys, dtype=bool)
    active[:A] = keep
    active[A:2 * A] = keep
    active[2 * A:] = True
    return active


class _RestrictedModel:
    """Column subset of an LP re-solved from scratch on each call (used with
    the in-house simplex; HiGHS goes through IncrementalLp instead)."""

    def __init__(self, lp: LinearProgram, cols, tol: float, method: str):
        self.lp, self.tol, self.method = lp, tol, method
        self.c = lp.c.copy()
        self.active = np.zeros(lp.c.size, dtype=bool)
        self.active[np.asarray(cols)] = True

    @property
    def cols(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def add_columns(self, cols) -> None:
        self.active[np.asarray(cols)] = True

    def set_costs(self, c) -> None:
        self.c = np.asarray(c, dtype=float).copy()

    def set_rhs(self, row: int, value: float) -> None:
        b = self.lp.b.copy()
        b[row] = value
        self.lp = LinearProgram(self.lp.c, self.lp.A, self.lp.senses, b, self.lp.lb, self.lp.ub,
                                self.lp.var_names, self.lp.row_names)

    def solve(self) -> LpSolution:
        cols = self.cols
        lp = self.lp
        names = tuple(lp.var_names[j] for j in cols) if lp.var_names else None
        sub = LinearProgram(self.c[cols], lp.A[:, cols].tocsr(), lp.senses, lp.b, lp.lb[cols], lp.ub[cols],
                            names, lp.row_names)
        sol = solve_lp(sub, tol=self.tol, method=self.method)
        if sol.status is not Status.OPTIMAL:
            return sol
        x = np.zeros(self.c.size)
        x[cols] = sol.primal
        return LpSolution(Status.OPTIMAL, x, sol.dual, float(self.c @ x), None, sol.iterations, sol.method)


def _price_and_solve(model, lp: LinearProgram, batch: int) -> LpSolution:
    """Solve ``lp`` by growing the column set of ``model``.

    Each round solves the restricted LP, prices every column of ``lp`` with
    its duals and adds the ``batch`` most attractive ones.  It stops when no
    column has a negative reduced cost; the restricted duals are then dual
    feasible for ``lp``, so the returned certificate is a certificate for
    ``lp`` itself.
    """
    AT = lp.A.T.tocsr()
    price_tol = 1e-9 * (1.0 + np.abs(lp.c))
    rounds = iterations = 0
    while True:
        sol = model.solve()
        iterations += sol.iterations
        rounds += 1
        if sol.status is not Status.OPTIMAL:
            return sol
        rc = lp.c - AT @ sol.dual
        enter = np.flatnonzero(~model.active & (rc < -price_tol))
        if enter.size == 0:
            break
        if enter.size > batch:
            enter = enter[np.argpartition(rc[enter], batch)[:batch]]
        model.add_columns(enter)
    x = sol.primal
    n_cols = int(model.active.sum())
    log.debug("column generation: %d rounds, %d of %d columns", rounds, n_cols, lp.c.size)
    return LpSolution(Status.OPTIMAL, x, sol.dual, float(lp.c @ x), certify(lp, x, sol.dual), iterations,
                      f"{sol.method}+pricing", message=f"{rounds} pricing rounds, {n_cols} columns",
                      reduced_costs=rc)


def solve_assignment(scenario: ScenarioInstance, method: str = "auto", tol: float = 1e-9,
                     arc_order=None, audit: bool | None = None,
                     columns: str = "auto") -> AssignmentSolution:
    """Two-phase solve: maximize children assigned, then minimize child-miles.

    In fixed-fraction mode the first phase still runs so that an infeasible
    target can be reported with the best achievable coverage.

    ``columns="all"`` hands the full LP to the solver; ``"generate"`` starts
    from the shortest arcs and prices the rest in as needed (same optimum);
    ``"auto"`` picks pricing for large arc sets.
    """
    if columns not in ("auto", "all", "generate"):
        raise ValueError(f"unknown column strategy {columns!r}")
    params = scenario.params
    total_pop = float(scenario.pop_medicaid.sum() + scenario.pop_other.sum())
    lp, layout = _assemble(scenario, 0.0, arc_order)
    if columns == "auto":
        columns = "generate" if 2 * layout.n_arcs > COLUMN_GENERATION_LIMIT else "all"
    pricing = columns == "generate"
    batch = max(1000, 2 * (scenario.n_tracts + scenario.n_physicians))
    lp1 = _phase1_objective(lp, layout)
    cov_row = layout.rows["coverage"].start

    if pricing:
        start = np.flatnonzero(_seed_columns(scenario, layout))
        if method == "simplex":
            model = _RestrictedModel(lp1, start, tol, method)
        else:
            model = IncrementalLp(lp1, start, tol)
        ph1 = _price_and_solve(model, lp1, batch)
    else:
        ph1 = solve_lp(lp1, tol=tol, method=method)
    if ph1.status is not Status.OPTIMAL:
        raise RuntimeError(f"coverage phase failed: {ph1.status.value} {ph1.message}")
    max_assigned = float(ph1.primal[: 2 * layout.n_arcs].sum())

    if params.coverage_mode.is_max:
        target = max_assigned
    else:
        target = params.coverage_mode.alpha * total_pop
        if target > max_assigned + 1e-7 * (1.0 + max_assigned):
            raise AssignmentInfeasible(target / total_pop if total_pop else 0.0,
                                       max_assigned / total_pop if total_pop else 0.0)
        target = min(target, max_assigned)
    target = max(target, 0.0)

    def phase2(target):
        lp2 = _with_coverage(lp, layout, target)
        if not pricing:
            return solve_lp(lp2, tol=tol, method=method)
        # same model, warm: new costs and the coverage floor
        model.set_costs(lp2.c)
        model.set_rhs(cov_row, target)
        return _price_and_solve(model, lp2, batch)

    ph2 = phase2(target)
    if ph2.status is Status.INFEASIBLE:
        # round-off in the phase-1 value; back off by a relative hair
        target = max(0.0, target - 1e-9 * (1.0 + target))
        ph2 = phase2(target)
    if ph2.status is not Status.OPTIMAL:
        raise RuntimeError(f"distance phase failed: {ph2.status.value} {ph2.message}")

    A = layout.n_arcs
    x = ph2.primal
    fm = np.zeros(A)
    fo = np.zeros(A)
    fm[layout.arc_order] = np.maximum(x[:A], 0.0)
    fo[layout.arc_order] = np.maximum(x[A:2 * A], 0.0)
    slack = np.maximum(x[2 * A:], 0.0)
    d = scenario.distances
    assigned = float(fm.sum() + fo.sum())
    served = np.zeros(scenario.n_tracts)
    np.add.at(served, d.tract, fm + fo)
    unserved = tuple(int(i) for i in np.flatnonzero(served <= 1e-9))
    relax = tuple((int(j), float(s)) for j, s in enumerate(slack) if s > 1e-6)
    sol = AssignmentSolution(
        flows_medicaid=fm,
        flows_other=fo,
        achieved_coverage_fraction=assigned / total_pop if total_pop > 0 else 0.0,
        total_distance=float(d.miles @ (fm + fo)),
        relaxation_report=relax,
        assigned=assigned,
        objective_value=ph2.objective_value,
        unserved_tracts=unserved,
        lp_phase1=ph1,
        lp_phase2=ph2,
        slack=slack,
    )
    if AUDIT if audit is None else audit:
        violations = audit_solution(scenario, sol)
        worst = max(violations.values())
        if worst > 1e-6:
            raise AuditError(f"assignment violates constraints: {violations}")
    return sol


def audit_solution(scenario: ScenarioInstance, sol: AssignmentSolution) -> dict[str, float]:
    """Recheck every constraint family from raw scenario data.

    Works per tract and per physician with plain loops over the arc list, so
    it shares no code with the LP assembly.  Returns the worst absolute
    violation for each family.
    """
    p = scenario.params
    worst = {"nonnegativity": 0.0, "capacity": 0.0, "capacity_floor": 0.0, "congestion": 0.0,
             "mobility": 0.0, "medicaid_acceptance": 0.0, "population": 0.0}

    def note(key, amount):
        worst[key] = max(worst[key], float(amount))

    load = [0.0] * scenario.n_physicians
    medicaid_load = [0.0] * scenario.n_physicians
    tract_m = [0.0] * scenario.n_tracts
    tract_o = [0.0] * scenario.n_tracts
    far_m = [0.0] * scenario.n_tracts
    far_o = [0.0] * scenario.n_tracts
    d = scenario.distances
    for k in range(len(d)):
        i, j, miles = int(d.tract[k]), int(d.physician[k]), float(d.miles[k])
        nm, no = float(sol.flows_medicaid[k]), float(sol.flows_other[k])
        note("nonnegativity", max(0.0, -nm, -no))
        if miles > p.mi_max:
            note("nonnegativity", nm + no)
        load[j] += nm + no
        medicaid_load[j] += nm
        tract_m[i] += nm
        tract_o[i] += no
        if miles >= p.mi_max_limited:
            far_m[i] += nm
            far_o[i] += no
    slack = sol.slack if sol.slack is not None else np.zeros(scenario.n_physicians)
    for j, phys in enumerate(scenario.physicians):
        note("capacity", load[j] - p.pc)
        note("capacity_floor", p.pc * p.lc - (load[j] + float(slack[j])))
        note("medicaid_acceptance", medicaid_load[j] - p.pc * phys.mc * phys.pam)
    for i, tract in enumerate(scenario.tracts):
        note("population", tract_m[i] - tract.pop_medicaid)
        note("population", tract_o[i] - tract.pop_other)
        note("mobility", far_m[i] - tract.mob_medicaid * tract.pop_medicaid)
        note("mobility", far_o[i] - tract.mob_other * tract.pop_other)
        if tract.md >= 2:
            local = sum(load[j] for j in tract.local_physicians)
            note("congestion", local - p.pc * p.cc * tract.md)
    return worst


@dataclass(frozen=True)
class EquivalenceReport:
    coverage_diff: np.ndarray
    travel_cost_diff: np.ndarray
    congestion_diff: np.ndarray
    total_distance_diff: float
    statistic: float
    p_value: float
    n_permutations: int


def solutions_equivalent(a: AssignmentSolution, b: AssignmentSolution, scenario: ScenarioInstance,
                         n_permutations: int = 9999, seed: int = 0) -> EquivalenceReport:
    """Per-tract measure differences and a paired sign-permutation test on the
    travel-cost differences (two-sided, statistic |mean difference|)."""
    from .metrics import compute_measures

    A = len(scenario.distances)
    for s in (a, b):
        if s.flows_medicaid.shape != (A,) or s.flows_other.shape != (A,):
            raise ValueError("solution does not match the scenario's arc set")
    ma = compute_measures(scenario, a, "overall")
    mb = compute_measures(scenario, b, "overall")
    valid = ma.applicable
    dc = np.where(valid, ma.coverage - mb.coverage, 0.0)
    dt = np.where(valid, ma.travel_cost - mb.travel_cost, 0.0)
    dg = np.where(valid, ma.congestion - mb.congestion, 0.0)
    diffs = dt[valid]
    diffs = diffs[np.abs(diffs) > 1e-12]
    stat = abs(diffs.mean()) if diffs.size else 0.0
    if diffs.size == 0:
        p, used = 1.0, 0
    elif diffs.size <= 16:
        signs = np.array(list(product((1.0, -1.0), repeat=diffs.size)))
        null = np.abs(signs @ diffs) / diffs.size
        p = float(np.mean(null >= stat - 1e-12))
        used = len(signs)
    else:
        rng = np.random.default_rng(seed)
        signs = rng.choice((-1.0, 1.0), size=(n_permutations, diffs.size))
        null = np.abs(signs @ diffs) / diffs.size
        p = float((1 + np.sum(null >= stat - 1e-12)) / (n_permutations + 1))
        used = n_permutations
    return EquivalenceReport(dc, dt, dg, a.total_distance - b.total_distance, float(stat), p, used)


def write_assignment_csv(scenario: ScenarioInstance, sol: AssignmentSolution, path, digits: int = 6) -> None:
    d = scenario.distances
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tract_id", "physician_id", "group", "flow"])
        for k in range(len(d)):
            i, j = int(d.tract[k]), int(d.physician[k])
            t_ext = scenario.tracts[i].ext_id or str(i)
            p_ext = scenario.physicians[j].ext_id or str(j)
            for group, flow in (("medicaid", sol.flows_medicaid[k]), ("other", sol.flows_other[k])):
                if flow > 1e-9:
                    w.writerow([t_ext, p_ext, group, round(float(flow), digits)])


def write_relaxations_csv(scenario: ScenarioInstance, sol: AssignmentSolution, path) -> None:
    p = scenario.params
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["physician_id", "floor", "slack"])
        for j, s in sol.relaxation_report:
            w.writerow([scenario.physicians[j].ext_id or j, p.pc * p.lc, round(s, 6)])
