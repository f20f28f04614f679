"""Per-tract accessibility measures derived from an assignment."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentSolution
from .model import ScenarioInstance

SCOPES = ("overall", "medicaid", "other")
MEASURES = ("coverage", "travel_cost", "congestion")


@dataclass(frozen=True)
class AccessibilityMeasures:
    scope: str
    coverage: np.ndarray
    travel_cost: np.ndarray
    congestion: np.ndarray
    population: np.ndarray
    assigned: np.ndarray

    @property
    def applicable(self) -> np.ndarray:
        return self.population > 0

    def measure(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def state_average(self, name: str) -> float:
        w = np.where(self.applicable, self.population, 0.0)
        return float(np.nansum(w * np.nan_to_num(self.measure(name))) / w.sum())

    def summary(self) -> dict[str, float]:
        return {m: self.state_average(m) for m in MEASURES}


def compute_measures(scenario: ScenarioInstance, solution: AssignmentSolution,
                     scope: str = "overall") -> AccessibilityMeasures:
    """Coverage, travel cost and congestion per tract for one population scope.

    Unserved children count as travelling ``mi_max`` and facing full
    congestion.  Physician load always includes both groups.  Tracts with no
    children in the scope get NaN measures.
    """
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    d = scenario.distances
    p = scenario.params
    if scope == "overall":
        flows = solution.flows_medicaid + solution.flows_other
        pop = scenario.pop_medicaid + scenario.pop_other
    elif scope == "medicaid":
        flows, pop = solution.flows_medicaid, np.asarray(scenario.pop_medicaid)
    else:
        flows, pop = solution.flows_other, np.asarray(scenario.pop_other)
    if not np.any(pop > 0):
        raise ValueError(f"scope {scope!r} has zero population everywhere")

    S = scenario.n_tracts
    load = np.zeros(scenario.n_physicians)
    np.add.at(load, d.physician, solution.flows_medicaid + solution.flows_other)
    assigned = np.zeros(S)
    miles = np.zeros(S)
    crowd = np.zeros(S)
    np.add.at(assigned, d.tract, flows)
    np.add.at(miles, d.tract, flows * d.miles)
    np.add.at(crowd, d.tract, flows * load[d.physician] / p.pc)

    ok = pop > 0
    safe = np.where(ok, pop, 1.0)
    cov = np.where(ok, np.clip(assigned / safe, 0.0, 1.0), np.nan)
    unserved = 1.0 - cov
    tc = np.where(ok, miles / safe + p.mi_max * unserved, np.nan)
    cg = np.where(ok, np.clip(crowd / safe + unserved, 0.0, 1.0), np.nan)
    # exact values for unserved tracts
    none = ok & (assigned <= 0)
    cov[none] = 0.0
    tc[none] = p.mi_max
    cg[none] = 1.0
    return AccessibilityMeasures(scope, cov, tc, cg, np.where(ok, pop, 0.0), assigned)


def all_scopes(scenario: ScenarioInstance, solution: AssignmentSolution) -> dict[str, AccessibilityMeasures]:
    out = {}
    for scope in SCOPES:
        try:
            out[scope] = compute_measures(scenario, solution, scope)
        except ValueError:
            continue
    return out


def aggregate(measures: AccessibilityMeasures, weights=None,
              quantiles=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict[str, dict[str, float]]:
    """Weighted means and quantiles of each measure.

    ``weights`` defaults to the scope population; tracts with zero weight or
    a NaN measure are left out.
    """
    w = measures.population if weights is None else np.asarray(weights, dtype=float)
    if w.shape != measures.coverage.shape:
        raise ValueError("weights do not match the tracts")
    out = {}
    for name in MEASURES:
        v = measures.measure(name)
        keep = (w > 0) & np.isfinite(v)
        vv, ww = v[keep], w[keep]
        entry = {"mean": float(vv @ ww / ww.sum()) if ww.sum() > 0 else float("nan")}
        if vv.size:
            order = np.argsort(vv, kind="stable")
            cw = np.cumsum(ww[order]) / ww.sum()
            for q in quantiles:
                entry[f"q{int(round(q * 100)):02d}"] = float(vv[order][np.searchsorted(cw, q - 1e-12)])
        out[name] = entry
    return out


def coverage_travel_correlation(measures: AccessibilityMeasures) -> float:
    """Correlation between coverage and travel cost over applicable tracts."""
    keep = measures.applicable
    c, t = measures.coverage[keep], measures.travel_cost[keep]
    if c.size < 2 or c.std() == 0 or t.std() == 0:
        return float("nan")
    return float(np.corrcoef(c, t)[0, 1])


def write_measures_csv(scenario: ScenarioInstance, measures: dict[str, AccessibilityMeasures], path,
                       digits: int = 9) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tract_id", "scope", "coverage", "travel_cost", "congestion"])
        for i, tract in enumerate(scenario.tracts):
            for scope, m in measures.items():
                if not m.applicable[i]:
                    w.writerow([tract.ext_id or i, scope, "", "", ""])
                    continue
                w.writerow([tract.ext_id or i, scope, round(float(m.coverage[i]), digits),
                            round(float(m.travel_cost[i]), digits), round(float(m.congestion[i]), digits)])


def measures_geojson(scenario: ScenarioInstance, measures: dict[str, AccessibilityMeasures]) -> dict:
    """FeatureCollection of tract centroids carrying every measure as properties."""
    features = []
    for i, tract in enumerate(scenario.tracts):
        props = {"tract_id": tract.ext_id or str(i)}
        for scope, m in measures.items():
            for name in MEASURES:
                v = float(m.measure(name)[i])
                props[f"{name}_{scope}"] = v if np.isfinite(v) else None
        lat, lon = tract.centroid
        features.append({"type": "Feature", "geometry": {"type": "Point", "coordinates": [lon, lat]},
                         "properties": props})
    return {"type": "FeatureCollection", "features": features}


def write_geojson(collection: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(collection, fh, indent=1)
