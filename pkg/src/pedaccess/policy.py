"""Policy interventions as parameter transformations, sweeps over the policy
strength, Bernoulli participation draws and an approximate Pareto filter."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .assignment import solve_assignment
from .metrics import MEASURES, SCOPES, all_scopes
from .model import ScenarioInstance

KINDS = ("mobility_interpolation", "pam_threshold", "mc_threshold", "pam_scale", "mc_scale")
_ALIASES = {"mobility": "mobility_interpolation"}

LAMBDA_RANGE = {
    "mobility_interpolation": (0.0, 1.0),
    "pam_threshold": (0.0, 1.0),
    "mc_threshold": (0.0, 1.0),
    "pam_scale": (0.5, 2.0),
    "mc_scale": (0.5, 2.0),
}

# (scope, measure) pairs compared by the Pareto filter
TRACKED = tuple((scope, m) for scope in ("medicaid", "other") for m in MEASURES)
MAXIMIZED = {"coverage"}


def normalize_kind(kind: str) -> str:
    k = kind.strip().lower().replace("-", "_")
    k = _ALIASES.get(k, k)
    if k not in KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {', '.join(KINDS)}")
    return k


def default_grid(kind: str) -> np.ndarray:
    lo, hi = LAMBDA_RANGE[normalize_kind(kind)]
    steps = int(round((hi - lo) / 0.05))
    return np.round(lo + 0.05 * np.arange(steps + 1), 10)


def parse_grid(text: str) -> np.ndarray:
    """``"start:step:stop"`` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(v) for v in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, step, stop = parts
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return np.round(start + step * np.arange(n), 10)
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise ValueError(f"malformed grid {text!r}; use start:step:stop or a comma list") from None


@dataclass(frozen=True)
class PolicyTransform:
    kind: str
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        lo, hi = LAMBDA_RANGE[self.kind]
        if not (lo - 1e-12 <= self.lam <= hi + 1e-12):
            raise ValueError(f"lambda {self.lam} outside [{lo}, {hi}] for {self.kind}")

    @property
    def label(self) -> str:
        return f"{self.kind}@{self.lam:g}"


def apply_transform(scenario: ScenarioInstance, t: PolicyTransform) -> ScenarioInstance:
    lam = float(t.lam)
    if t.kind == "mobility_interpolation":
        mob = scenario.mob_medicaid + lam * (scenario.mob_other - scenario.mob_medicaid)
        return scenario.replace_mobility(np.clip(mob, 0.0, 1.0))
    if t.kind == "pam_threshold":
        return scenario.replace_physicians(pam=np.minimum(lam, scenario.pam))
    if t.kind == "mc_threshold":
        return scenario.replace_physicians(mc=np.minimum(lam, scenario.mc))
    if t.kind == "pam_scale":
        return scenario.replace_physicians(pam=np.minimum(lam * scenario.pam, 1.0))
    return scenario.replace_physicians(mc=np.minimum(lam * scenario.mc, 1.0))


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    digest: str
    summaries: dict
    status: str
    coverage_fraction: float
    total_distance: float
    relaxations: int
    seconds: float


@dataclass(frozen=True)
class SweepResult:
    kind: str
    base_digest: str
    points: tuple[SweepPoint, ...]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def series(self, scope: str, measure: str) -> np.ndarray:
        return np.array([p.summaries[scope][measure] for p in self.points])


class SweepError(RuntimeError):
    def __init__(self, kind: str, lam: float, cause: Exception):
        super().__init__(f"{kind} at lambda={lam:g}: {cause}")
        self.lam = lam
        self.cause = cause


def _sweep_point(args) -> SweepPoint:
    scenario, kind, lam, method = args
    t0 = time.perf_counter()
    sc = apply_transform(scenario, PolicyTransform(kind, lam))
    try:
        sol = solve_assignment(sc, method=method)
    except Exception as exc:  # annotated and re-raised by the caller
        return exc
    measures = all_scopes(sc, sol)
    summaries = {scope: m.summary() for scope, m in measures.items()}
    return SweepPoint(float(lam), sc.digest(), summaries, "optimal", sol.achieved_coverage_fraction,
                      sol.total_distance, len(sol.relaxation_report), time.perf_counter() - t0)


def run_sweep(scenario: ScenarioInstance, kind: str, grid: Iterable[float] | None = None,
              method: str = "auto", workers: int = 1,
              progress: Callable[[SweepPoint], None] | None = None) -> SweepResult:
    """Solve the scenario under each lambda of ``grid`` (default: the 0.05
    grid for ``kind``).  Points come back in increasing lambda order whatever
    the number of worker processes."""
    kind = normalize_kind(kind)
    lams = default_grid(kind) if grid is None else np.unique(np.asarray(list(grid), dtype=float))
    if lams.size == 0:
        raise ValueError("empty lambda grid")
    for lam in lams:
        PolicyTransform(kind, lam)
    jobs = [(scenario, kind, float(lam), method) for lam in lams]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_sweep_point(job))
            if progress and isinstance(results[-1], SweepPoint):
                progress(results[-1])
    for lam, r in zip(lams, results):
        if isinstance(r, Exception):
            raise SweepError(kind, float(lam), r) from r
    return SweepResult(kind, scenario.digest(), tuple(results))


@dataclass(frozen=True)
class RealizationSummary:
    """Per-tract mean and variance of every measure across Bernoulli draws,
    plus the per-draw state averages."""

    n_draws: int
    seed: int
    tract_mean: dict
    tract_var: dict
    state: dict

    def state_se(self, scope: str, measure: str) -> float:
        v = self.state[scope][measure]
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")


@dataclass(frozen=True)
class RealizationRun:
    draws: tuple[ScenarioInstance, ...]
    summary: RealizationSummary


def sample_pam_realizations(scenario: ScenarioInstance, n_draws: int, seed: int,
                            method: str = "auto", keep_draws: bool = True) -> RealizationRun:
    """Replace each pam_j by an independent Bernoulli(pam_j) outcome, solve
    every draw and summarize the measures.  The MC_j caps stay as they are."""
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    rng = np.random.default_rng(seed)
    base_pam = scenario.pam
    S = scenario.n_tracts
    per_tract = {s: {m: np.full((n_draws, S), np.nan) for m in MEASURES} for s in SCOPES}
    state = {s: {m: np.full(n_draws, np.nan) for m in MEASURES} for s in SCOPES}
    kept = []
    for k in range(n_draws):
        pam = (rng.random(base_pam.size) < base_pam).astype(float)
        sc = scenario.replace_physicians(pam=pam)
        sol = solve_assignment(sc, method=method)
        for scope, m in all_scopes(sc, sol).items():
            for name in MEASURES:
                per_tract[scope][name][k] = m.measure(name)
                state[scope][name][k] = m.state_average(name)
        if keep_draws:
            kept.append(sc)
    mean, var = {}, {}
    for scope in SCOPES:
        mean[scope], var[scope] = {}, {}
        for name in MEASURES:
            block = per_tract[scope][name]
            if np.all(np.isnan(block)):
                continue
            with np.errstate(invalid="ignore"):
                mean[scope][name] = block.mean(axis=0)
                var[scope][name] = block.var(axis=0, ddof=1) if n_draws > 1 else np.zeros(S)
    state = {s: v for s, v in state.items() if not np.all(np.isnan(v["coverage"]))}
    return RealizationRun(tuple(kept), RealizationSummary(n_draws, seed, mean, var, state))


def write_realizations_csv(scenario: ScenarioInstance, summary: RealizationSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tract_id", "scope", "measure", "mean", "variance"])
        for scope in summary.tract_mean:
            for name in MEASURES:
                if name not in summary.tract_mean[scope]:
                    continue
                mu, v = summary.tract_mean[scope][name], summary.tract_var[scope][name]
                for i, tract in enumerate(scenario.tracts):
                    if np.isfinite(mu[i]):
                        w.writerow([tract.ext_id or i, scope, name, repr(float(mu[i])), repr(float(v[i]))])


def _dominates(a: dict, b: dict, eps: float, tracked) -> bool:
    """True when ``a`` beats ``b`` by more than ``eps`` (relative) somewhere
    and is not worse by more than ``eps`` anywhere."""
    better = False
    for scope, m in tracked:
        x, y = a[scope][m], b[scope][m]
        scale = max(abs(x), abs(y), 1e-12)
        gain = (x - y) / scale if m in MAXIMIZED else (y - x) / scale
        if gain < -eps:
            return False
        if gain > eps:
            better = True
    return better


def pareto_filter(candidates: Sequence[tuple[object, dict]], eps: float = 0.005,
                  tracked: Sequence[tuple[str, str]] = TRACKED) -> list[tuple[object, dict]]:
    """Keep the candidates no other candidate epsilon-dominates.  Each
    candidate is ``(policy, {scope: {measure: value}})``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    keep = []
    for i, (pol, summ) in enumerate(candidates):
        if not any(_dominates(other, summ, eps, tracked)
                   for k, (_, other) in enumerate(candidates) if k != i):
            keep.append((pol, summ))
    return keep


def sweep_candidates(results: Iterable[SweepResult]) -> list[tuple[PolicyTransform, dict]]:
    return [(PolicyTransform(r.kind, p.lam), p.summaries) for r in results for p in r.points]


def write_sweep_csv(results: Iterable[SweepResult], path, digits: int = 9) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "lambda", "scope", "coverage", "travel_cost", "congestion", "solve_status"])
        for r in results:
            for p in r.points:
                for scope in SCOPES:
                    if scope not in p.summaries:
                        continue
                    s = p.summaries[scope]
                    w.writerow([r.kind, f"{p.lam:g}", scope] + [round(s[m], digits) for m in MEASURES]
                               + [p.status])


def write_pareto_csv(kept: Sequence[tuple[PolicyTransform, dict]], path, digits: int = 9) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "lambda"] + [f"{m}_{s}" for s, m in TRACKED])
        for pol, summ in kept:
            w.writerow([pol.kind, f"{pol.lam:g}"] + [round(summ[s][m], digits) for s, m in TRACKED])
