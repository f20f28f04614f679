"""Domain types, parameter defaults, file ingestion and synthetic instances.

Tracts and physicians are kept as immutable records; vectorized array views
used by the solver and the statistics code are derived lazily from them.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

EARTH_RADIUS_MILES = 3958.8

COVARIATE_NAMES = ("income", "edu", "unemp", "nonwhite", "density", "hospdist", "divratio")


class ScenarioError(ValueError):
    """Raised when input data violate the scenario schema or invariants."""


class PracticeSetting(str, enum.Enum):
    PUBLIC_HOSPITAL = "public_hospital"
    COMMUNITY_CLINIC = "community_clinic"
    OTHER = "other"


# Maximum Medicaid caseload fraction by practice setting (American Academy of
# Pediatrics figures used for the Georgia pilot).
DEFAULT_MC = {
    PracticeSetting.PUBLIC_HOSPITAL: 0.74,
    PracticeSetting.COMMUNITY_CLINIC: 0.64,
    PracticeSetting.OTHER: 0.32,
}


@dataclass(frozen=True)
class CoverageMode:
    """Either maximize coverage (``alpha is None``) or require a fixed fraction."""

    alpha: float | None = None

    def __post_init__(self):
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ScenarioError(f"coverage fraction {self.alpha} outside [0, 1]")

    @property
    def is_max(self) -> bool:
        return self.alpha is None

    @classmethod
    def parse(cls, text: str) -> "CoverageMode":
        text = text.strip().lower().replace("-", "_")
        if text in ("max", "max_coverage"):
            return cls()
        for prefix in ("fixed:", "fixed_fraction:", "fixed_fraction(", "fixed("):
            if text.startswith(prefix):
                return cls(float(text[len(prefix):].rstrip(")")))
        raise ScenarioError(f"unrecognized coverage mode {text!r}")

    def __str__(self) -> str:
        return "max_coverage" if self.is_max else f"fixed:{self.alpha:g}"


MAX_COVERAGE = CoverageMode()


@dataclass(frozen=True)
class SystemParameters:
    mi_max: float = 25.0
    mi_max_limited: float = 10.0
    pc: float = 2500.0
    lc: float = 0.25
    cc: float = 0.70
    coverage_mode: CoverageMode = MAX_COVERAGE

    def __post_init__(self):
        if not 0.0 <= self.lc <= self.cc <= 1.0:
            raise ScenarioError(f"need 0 <= lc <= cc <= 1, got lc={self.lc}, cc={self.cc}")
        if not 0.0 < self.mi_max_limited <= self.mi_max:
            raise ScenarioError("need 0 < mi_max_limited <= mi_max")
        if not self.pc > 0:
            raise ScenarioError("pc must be positive")

    def to_dict(self) -> dict:
        return {
            "mi_max": self.mi_max,
            "mi_max_limited": self.mi_max_limited,
            "pc": self.pc,
            "lc": self.lc,
            "cc": self.cc,
            "coverage_mode": str(self.coverage_mode),
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "SystemParameters":
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().lower()
            if key == "coverage_mode" or key == "coverage":
                kwargs["coverage_mode"] = (
                    raw if isinstance(raw, CoverageMode) else CoverageMode.parse(str(raw))
                )
            elif key in ("mi_max", "mi_max_limited", "pc", "lc", "cc"):
                kwargs[key] = float(raw)
            else:
                raise ScenarioError(f"unknown parameter {key!r}")
        return cls(**kwargs)


def load_parameters(path: str | Path) -> SystemParameters:
    """Read ``key = value`` lines (an optional ``[parameters]`` header is allowed)."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[parameters]\n" + text
    parser = configparser.ConfigParser()
    parser.read_string(text)
    section = parser["parameters"] if parser.has_section("parameters") else parser.defaults()
    return SystemParameters.from_mapping(dict(section))


def write_parameters(params: SystemParameters, path: str | Path) -> None:
    lines = ["[parameters]"] + [f"{k} = {v}" for k, v in params.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class CensusTract:
    id: int
    centroid: tuple[float, float]
    pop_medicaid: float
    pop_other: float
    mob_medicaid: float
    mob_other: float
    local_physicians: tuple[int, ...] = ()
    covariates: Mapping[str, float] = field(default_factory=dict)
    ext_id: str = ""

    @property
    def md(self) -> int:
        return len(self.local_physicians)

    @property
    def population(self) -> float:
        return self.pop_medicaid + self.pop_other


@dataclass(frozen=True)
class Physician:
    id: int
    location: tuple[float, float]
    tract_id: int
    pam: float
    mc: float
    practice_setting: PracticeSetting = PracticeSetting.OTHER
    ext_id: str = ""


@dataclass(frozen=True)
class DistanceMatrix:
    """Sparse tract-physician arcs, sorted by (tract, physician)."""

    tract: np.ndarray
    physician: np.ndarray
    miles: np.ndarray

    @classmethod
    def from_arcs(cls, tract, physician, miles, mi_max: float | None = None) -> "DistanceMatrix":
        tract = np.asarray(tract, dtype=np.int64)
        physician = np.asarray(physician, dtype=np.int64)
        miles = np.asarray(miles, dtype=float)
        if not (tract.shape == physician.shape == miles.shape):
            raise ScenarioError("arc arrays must have equal length")
        if np.any(~np.isfinite(miles)) or np.any(miles < 0):
            raise ScenarioError("distances must be finite and non-negative")
        if mi_max is not None:
            keep = miles <= mi_max
            tract, physician, miles = tract[keep], physician[keep], miles[keep]
        order = np.lexsort((physician, tract))
        tract, physician, miles = tract[order], physician[order], miles[order]
        if tract.size > 1:
            dup = (np.diff(tract) == 0) & (np.diff(physician) == 0)
            if dup.any():
                k = int(np.argmax(dup))
                raise ScenarioError(f"duplicate arc for tract {tract[k]}, physician {physician[k]}")
        for arr in (tract, physician, miles):
            arr.setflags(write=False)
        return cls(tract, physician, miles)

    def __len__(self) -> int:
        return int(self.miles.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return (
            np.array_equal(self.tract, other.tract)
            and np.array_equal(self.physician, other.physician)
            and np.array_equal(self.miles, other.miles)
        )

    __hash__ = None

    def for_tract(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = np.searchsorted(self.tract, [i, i + 1])
        return self.physician[lo:hi], self.miles[lo:hi]

    def for_physician(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.flatnonzero(self.physician == j)
        return self.tract[idx], self.miles[idx]

    def get(self, i: int, j: int) -> float | None:
        phys, miles = self.for_tract(i)
        k = np.searchsorted(phys, j)
        if k < phys.size and phys[k] == j:
            return float(miles[k])
        return None


@dataclass(frozen=True)
class ScenarioInstance:
    tracts: tuple[CensusTract, ...]
    physicians: tuple[Physician, ...]
    distances: DistanceMatrix
    params: SystemParameters = field(default_factory=SystemParameters)

    def __post_init__(self):
        validate_scenario(self)

    @property
    def n_tracts(self) -> int:
        return len(self.tracts)

    @property
    def n_physicians(self) -> int:
        return len(self.physicians)

    @cached_property
    def pop_medicaid(self) -> np.ndarray:
        return _frozen([t.pop_medicaid for t in self.tracts])

    @cached_property
    def pop_other(self) -> np.ndarray:
        return _frozen([t.pop_other for t in self.tracts])

    @cached_property
    def mob_medicaid(self) -> np.ndarray:
        return _frozen([t.mob_medicaid for t in self.tracts])

    @cached_property
    def mob_other(self) -> np.ndarray:
        return _frozen([t.mob_other for t in self.tracts])

    @cached_property
    def tract_coords(self) -> np.ndarray:
        return _frozen([t.centroid for t in self.tracts]).reshape(-1, 2)

    @cached_property
    def physician_coords(self) -> np.ndarray:
        return _frozen([p.location for p in self.physicians]).reshape(-1, 2)

    @cached_property
    def pam(self) -> np.ndarray:
        return _frozen([p.pam for p in self.physicians])

    @cached_property
    def mc(self) -> np.ndarray:
        return _frozen([p.mc for p in self.physicians])

    @cached_property
    def physician_tract(self) -> np.ndarray:
        return _frozen([p.tract_id for p in self.physicians], dtype=np.int64)

    @cached_property
    def md(self) -> np.ndarray:
        return _frozen([t.md for t in self.tracts], dtype=np.int64)

    @cached_property
    def covariate_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for t in self.tracts:
            for k in t.covariates:
                if k not in names:
                    names.append(k)
        return tuple(names)

    def covariate(self, name: str) -> np.ndarray:
        return np.array([t.covariates.get(name, np.nan) for t in self.tracts], dtype=float)

    def replace_physicians(self, pam=None, mc=None) -> "ScenarioInstance":
        """Return a copy with physician participation parameters overwritten."""
        pam = self.pam if pam is None else np.asarray(pam, dtype=float)
        mc = self.mc if mc is None else np.asarray(mc, dtype=float)
        phys = tuple(
            dataclasses.replace(p, pam=float(a), mc=float(b))
            for p, a, b in zip(self.physicians, pam, mc)
        )
        return dataclasses.replace(self, physicians=phys)

    def replace_mobility(self, mob_medicaid) -> "ScenarioInstance":
        tracts = tuple(
            dataclasses.replace(t, mob_medicaid=float(m)) for t, m in zip(self.tracts, mob_medicaid)
        )
        return dataclasses.replace(self, tracts=tracts)

    def digest(self) -> str:
        """SHA-256 over every field that can affect a solve or a fit."""
        h = hashlib.sha256()
        h.update(json.dumps(self.params.to_dict(), sort_keys=True).encode())
        for t in self.tracts:
            h.update(repr((t.id, t.centroid, t.pop_medicaid, t.pop_other, t.mob_medicaid, t.mob_other,
                           t.local_physicians, sorted(t.covariates.items()), t.ext_id)).encode())
        for ph in self.physicians:
            h.update(repr((ph.id, ph.location, ph.tract_id, ph.pam, ph.mc, ph.practice_setting.value,
                           ph.ext_id)).encode())
        d = self.distances
        for arr in (d.tract, d.physician, d.miles):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def with_params(self, **changes) -> "ScenarioInstance":
        return dataclasses.replace(self, params=dataclasses.replace(self.params, **changes))


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_fraction(value: float, what: str, where: str) -> None:
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ScenarioError(f"{what} fraction out of range ({value}) at {where}")


def validate_scenario(sc: ScenarioInstance) -> None:
    for k, t in enumerate(sc.tracts):
        where = f"tract {t.ext_id or k}"
        if t.id != k:
            raise ScenarioError(f"tract ids must be dense 0-based indices ({where} has id {t.id})")
        for pop in (t.pop_medicaid, t.pop_other):
            if not math.isfinite(pop) or pop < 0:
                raise ScenarioError(f"negative or non-finite population at {where}")
        _check_fraction(t.mob_medicaid, "mobility", where)
        _check_fraction(t.mob_other, "mobility", where)
    local: dict[int, list[int]] = {}
    for k, p in enumerate(sc.physicians):
        where = f"physician {p.ext_id or k}"
        if p.id != k:
            raise ScenarioError(f"physician ids must be dense 0-based indices ({where} has id {p.id})")
        if not 0 <= p.tract_id < len(sc.tracts):
            raise ScenarioError(f"{where} references unknown tract {p.tract_id}")
        _check_fraction(p.pam, "pam", where)
        _check_fraction(p.mc, "mc", where)
        local.setdefault(p.tract_id, []).append(k)
    for t in sc.tracts:
        if sorted(t.local_physicians) != local.get(t.id, []):
            raise ScenarioError(f"tract {t.ext_id or t.id}: local physician list inconsistent with records")
    d = sc.distances
    if d.tract.size:
        if d.tract.min() < 0 or d.tract.max() >= len(sc.tracts):
            raise ScenarioError("distance arc references unknown tract")
        if d.physician.min() < 0 or d.physician.max() >= len(sc.physicians):
            raise ScenarioError("distance arc references unknown physician")
        if d.miles.max() > sc.params.mi_max:
            raise ScenarioError("distance arc exceeds mi_max")


def great_circle_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in statute miles between two (lat, lon) points in degrees."""
    return float(haversine_miles(np.asarray(a, float), np.asarray(b, float)))


def haversine_miles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized haversine; ``a`` and ``b`` broadcast over leading axes of (..., 2)."""
    lat1, lon1 = np.radians(a[..., 0]), np.radians(a[..., 1])
    lat2, lon2 = np.radians(b[..., 0]), np.radians(b[..., 1])
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def great_circle_arcs(tract_coords, physician_coords, mi_max: float, chunk: int = 256) -> DistanceMatrix:
    """All tract-physician pairs within ``mi_max`` great-circle miles."""
    tract_coords = np.asarray(tract_coords, float).reshape(-1, 2)
    physician_coords = np.asarray(physician_coords, float).reshape(-1, 2)
    ti, pj, dd = [], [], []
    for start in range(0, len(tract_coords), chunk):
        block = tract_coords[start:start + chunk]
        d = haversine_miles(block[:, None, :], physician_coords[None, :, :])
        r, c = np.nonzero(d <= mi_max)
        ti.append(r + start)
        pj.append(c)
        dd.append(d[r, c])
    if not ti:
        return DistanceMatrix.from_arcs([], [], [])
    return DistanceMatrix.from_arcs(np.concatenate(ti), np.concatenate(pj), np.concatenate(dd))


def build_scenario(
    tract_rows: Sequence[Mapping],
    physician_rows: Sequence[Mapping],
    params: SystemParameters,
    distances: DistanceMatrix | Iterable[tuple[int, int, float]] | None = None,
) -> ScenarioInstance:
    """Assemble a validated scenario from already-parsed records.

    Tract records carry ``lat, lon, pop_medicaid, pop_other, mob_medicaid,
    mob_other`` and optional ``covariates``; physician records carry ``lat,
    lon, tract`` (internal tract index), ``pam``, optional ``mc`` and
    ``setting``.  Missing distances are generated by great-circle distance.
    """
    local: dict[int, list[int]] = {}
    physicians = []
    for j, row in enumerate(physician_rows):
        setting = PracticeSetting(row.get("setting") or PracticeSetting.OTHER)
        mc = row.get("mc")
        mc = DEFAULT_MC[setting] if mc is None or (isinstance(mc, float) and math.isnan(mc)) else float(mc)
        tract = int(row["tract"])
        physicians.append(
            Physician(
                id=j,
                location=(float(row["lat"]), float(row["lon"])),
                tract_id=tract,
                pam=float(row["pam"]),
                mc=mc,
                practice_setting=setting,
                ext_id=str(row.get("ext_id", j)),
            )
        )
        local.setdefault(tract, []).append(j)
    tracts = []
    for i, row in enumerate(tract_rows):
        tracts.append(
            CensusTract(
                id=i,
                centroid=(float(row["lat"]), float(row["lon"])),
                pop_medicaid=float(row["pop_medicaid"]),
                pop_other=float(row["pop_other"]),
                mob_medicaid=float(row["mob_medicaid"]),
                mob_other=float(row["mob_other"]),
                local_physicians=tuple(local.get(i, ())),
                covariates=dict(row.get("covariates", {})),
                ext_id=str(row.get("ext_id", i)),
            )
        )
    if distances is None:
        distances = great_circle_arcs(
            [t.centroid for t in tracts], [p.location for p in physicians], params.mi_max
        )
    elif not isinstance(distances, DistanceMatrix):
        arcs = list(distances)
        if arcs:
            ti, pj, dd = zip(*arcs)
        else:
            ti, pj, dd = (), (), ()
        distances = DistanceMatrix.from_arcs(ti, pj, dd, mi_max=params.mi_max)
    return ScenarioInstance(tuple(tracts), tuple(physicians), distances, params)


# ---------------------------------------------------------------------------
# CSV ingestion

TRACT_COLUMNS = ("id", "lat", "lon", "pop_medicaid", "pop_other", "mob_medicaid", "mob_other")
PHYSICIAN_COLUMNS = ("id", "lat", "lon", "tract_id", "pam", "mc", "setting")
DISTANCE_COLUMNS = ("tract_id", "physician_id", "miles")


def _read_csv(path: Path, required: Sequence[str]) -> list[dict]:
    if not path.exists():
        raise ScenarioError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ScenarioError(f"{path}: missing column(s) {', '.join(missing)}")
        return [dict(row, _line=n + 2) for n, row in enumerate(reader)]


def _num(row: dict, col: str, path: Path, optional: bool = False) -> float | None:
    raw = (row.get(col) or "").strip()
    if raw == "":
        if optional:
            return None
        raise ScenarioError(f"{path}:{row['_line']}: empty value in column {col!r}")
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"{path}:{row['_line']}: column {col!r} is not numeric ({raw!r})") from None


def load_scenario(
    tract_file: str | Path,
    physician_file: str | Path,
    distance_file: str | Path | None = None,
    params: SystemParameters | None = None,
) -> ScenarioInstance:
    params = params or SystemParameters()
    tract_file, physician_file = Path(tract_file), Path(physician_file)
    trows = _read_csv(tract_file, TRACT_COLUMNS)
    prows = _read_csv(physician_file, ("id", "lat", "lon", "tract_id", "pam"))

    tract_index: dict[str, int] = {}
    tract_records = []
    for row in trows:
        ext = row["id"].strip()
        if ext in tract_index:
            raise ScenarioError(f"{tract_file}:{row['_line']}: duplicate tract id {ext!r}")
        tract_index[ext] = len(tract_records)
        rec = {"ext_id": ext}
        for col in TRACT_COLUMNS[1:]:
            rec[col] = _num(row, col, tract_file)
        where = f"{tract_file}:{row['_line']}"
        for col in ("pop_medicaid", "pop_other"):
            if rec[col] < 0:
                raise ScenarioError(f"{where}: negative population in column {col!r}")
        for col in ("mob_medicaid", "mob_other"):
            if not 0.0 <= rec[col] <= 1.0:
                raise ScenarioError(f"{where}: mobility fraction out of range in column {col!r}")
        covs = {}
        for col, raw in row.items():
            if col.startswith("cov_") and raw is not None and raw.strip() != "":
                covs[col[4:]] = _num(row, col, tract_file)
        rec["covariates"] = covs
        tract_records.append(rec)

    phys_index: dict[str, int] = {}
    phys_records = []
    for row in prows:
        ext = row["id"].strip()
        where = f"{physician_file}:{row['_line']}"
        if ext in phys_index:
            raise ScenarioError(f"{where}: duplicate physician id {ext!r}")
        tract_ext = row["tract_id"].strip()
        if tract_ext not in tract_index:
            raise ScenarioError(f"{where}: physician references unknown tract {tract_ext!r}")
        phys_index[ext] = len(phys_records)
        pam = _num(row, "pam", physician_file)
        mc = _num(row, "mc", physician_file, optional=True)
        if not 0.0 <= pam <= 1.0:
            raise ScenarioError(f"{where}: pam fraction out of range")
        if mc is not None and not 0.0 <= mc <= 1.0:
            raise ScenarioError(f"{where}: mc fraction out of range")
        setting = (row.get("setting") or "other").strip() or "other"
        try:
            PracticeSetting(setting)
        except ValueError:
            raise ScenarioError(f"{where}: unknown practice setting {setting!r}") from None
        phys_records.append(
            {
                "ext_id": ext,
                "lat": _num(row, "lat", physician_file),
                "lon": _num(row, "lon", physician_file),
                "tract": tract_index[tract_ext],
                "pam": pam,
                "mc": mc,
                "setting": setting,
            }
        )

    distances = None
    if distance_file is not None:
        distance_file = Path(distance_file)
        arcs = []
        for row in _read_csv(distance_file, DISTANCE_COLUMNS):
            where = f"{distance_file}:{row['_line']}"
            t, p = row["tract_id"].strip(), row["physician_id"].strip()
            if t not in tract_index:
                raise ScenarioError(f"{where}: unknown tract {t!r}")
            if p not in phys_index:
                raise ScenarioError(f"{where}: unknown physician {p!r}")
            miles = _num(row, "miles", distance_file)
            if miles < 0:
                raise ScenarioError(f"{where}: negative distance")
            arcs.append((tract_index[t], phys_index[p], miles))
        distances = arcs
    return build_scenario(tract_records, phys_records, params, distances)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_scenario(
    scenario: ScenarioInstance,
    tract_file: str | Path,
    physician_file: str | Path,
    distance_file: str | Path | None = None,
) -> None:
    covs = scenario.covariate_names
    with open(tract_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(TRACT_COLUMNS) + [f"cov_{c}" for c in covs])
        for t in scenario.tracts:
            w.writerow(
                [t.ext_id or t.id, _fmt(t.centroid[0]), _fmt(t.centroid[1]),
                 _fmt(t.pop_medicaid), _fmt(t.pop_other),
                 _fmt(t.mob_medicaid), _fmt(t.mob_other)]
                + [_fmt(t.covariates[c]) if c in t.covariates else "" for c in covs]
            )
    tract_ext = [t.ext_id or str(t.id) for t in scenario.tracts]
    with open(physician_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PHYSICIAN_COLUMNS)
        for p in scenario.physicians:
            w.writerow(
                [p.ext_id or p.id, _fmt(p.location[0]), _fmt(p.location[1]),
                 tract_ext[p.tract_id], _fmt(p.pam), _fmt(p.mc), p.practice_setting.value]
            )
    if distance_file is not None:
        phys_ext = [p.ext_id or str(p.id) for p in scenario.physicians]
        d = scenario.distances
        with open(distance_file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DISTANCE_COLUMNS)
            for i, j, m in zip(d.tract, d.physician, d.miles):
                w.writerow([tract_ext[i], phys_ext[j], _fmt(m)])


# ---------------------------------------------------------------------------
# Synthetic instances

# (lat, lon, weight, spread in miles); rough stand-ins for Georgia's metros.
_GEORGIA_CENTERS = (
    (33.75, -84.39, 0.55, 14.0),
    (33.47, -81.97, 0.10, 7.0),
    (32.08, -81.09, 0.10, 7.0),
    (32.84, -83.63, 0.08, 6.0),
    (32.46, -84.99, 0.08, 6.0),
    (31.58, -84.16, 0.05, 5.0),
    (34.26, -85.16, 0.04, 5.0),
)
_GEORGIA_BOX = ((30.6, 34.9), (-85.4, -81.0))


def _offset(center, dx_miles, dy_miles):
    lat = center[0] + dy_miles / 69.05
    lon = center[1] + dx_miles / (69.17 * math.cos(math.radians(center[0])))
    return lat, lon


def generate_synthetic_state(
    seed: int,
    n_tracts: int,
    n_physicians: int,
    profile: str = "georgia_like",
    params: SystemParameters | None = None,
) -> ScenarioInstance:
    """Seeded synthetic state for desk-scale experiments.

    ``uniform`` scatters tracts and physicians over a 30-mile square.
    ``georgia_like`` clusters physicians around a handful of metros, leaves a
    rural fringe more than 25 miles from any physician, varies Medicaid
    acceptance by county block and attaches the seven tract covariates.
    """
    if n_tracts < 1 or n_physicians < 1:
        raise ScenarioError("need at least one tract and one physician")
    params = params or SystemParameters()
    profile = profile.replace("-", "_")
    rng = np.random.default_rng(seed)
    if profile == "uniform":
        return _synthetic_uniform(rng, n_tracts, n_physicians, params)
    if profile == "georgia_like":
        return _synthetic_georgia(rng, n_tracts, n_physicians, params)
    raise ScenarioError(f"unknown synthetic profile {profile!r}")


def _nearest(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    out = np.empty(len(points), dtype=np.int64)
    for start in range(0, len(points), 512):
        d = haversine_miles(points[start:start + 512, None, :], targets[None, :, :])
        out[start:start + 512] = np.argmin(d, axis=1)
    return out


def _synthetic_uniform(rng, n_tracts, n_physicians, params):
    origin = (33.0, -84.0)
    tc = np.array([_offset(origin, *xy) for xy in rng.uniform(0, 30, size=(n_tracts, 2))])
    pc = np.array([_offset(origin, *xy) for xy in rng.uniform(0, 30, size=(n_physicians, 2))])
    pop = rng.uniform(200, 1200, n_tracts)
    share = rng.uniform(0.3, 0.6, n_tracts)
    mob_o = rng.uniform(0.85, 1.0, n_tracts)
    mob_m = mob_o * rng.uniform(0.6, 0.95, n_tracts)
    host = _nearest(pc, tc)
    settings = rng.choice([s.value for s in PracticeSetting], size=n_physicians, p=[0.1, 0.15, 0.75])
    tract_rows = [
        {"lat": tc[i, 0], "lon": tc[i, 1], "pop_medicaid": round(pop[i] * share[i]),
         "pop_other": round(pop[i] * (1 - share[i])), "mob_medicaid": mob_m[i], "mob_other": mob_o[i]}
        for i in range(n_tracts)
    ]
    phys_rows = [
        {"lat": pc[j, 0], "lon": pc[j, 1], "tract": host[j], "pam": float(rng.uniform(0.3, 1.0)),
         "setting": PracticeSetting(settings[j]).value}
        for j in range(n_physicians)
    ]
    return build_scenario(tract_rows, phys_rows, params)


def _synthetic_georgia(rng, n_tracts, n_physicians, params):
    from . import spatial

    centers = np.array([c[:2] for c in _GEORGIA_CENTERS])
    weights = np.array([c[2] for c in _GEORGIA_CENTERS])
    spreads = np.array([c[3] for c in _GEORGIA_CENTERS])
    (lat0, lat1), (lon0, lon1) = _GEORGIA_BOX

    def rural_points(n):
        # rejection sampling keeps rural tracts well outside every metro
        pts = []
        while len(pts) < n:
            cand = np.column_stack([rng.uniform(lat0, lat1, 4 * n), rng.uniform(lon0, lon1, 4 * n)])
            d = haversine_miles(cand[:, None, :], centers[None, :, :])
            ok = np.all(d > 3.2 * spreads + 28.0, axis=1)
            pts.extend(cand[ok][: n - len(pts)])
        return np.array(pts).reshape(-1, 2)

    def clustered(n, spread_scale):
        which = rng.choice(len(centers), size=n, p=weights / weights.sum())
        r = np.abs(rng.normal(0, 1, n)) * spreads[which] * spread_scale
        theta = rng.uniform(0, 2 * np.pi, n)
        return np.array([_offset(centers[k], ri * np.cos(t), ri * np.sin(t))
                         for k, ri, t in zip(which, r, theta)]).reshape(-1, 2), which

    n_rural = max(1, int(round(0.22 * n_tracts))) if n_tracts >= 5 else 0
    n_town = int(round(0.10 * n_tracts)) if n_tracts >= 10 else 0
    urban, _ = clustered(n_tracts - n_rural - n_town, 1.0)
    towns = rural_points(max(1, n_town // 3)) if n_town else np.empty((0, 2))
    town_tracts = np.array([
        _offset(towns[k % len(towns)], *rng.normal(0, 3.0, 2)) for k in range(n_town)
    ]).reshape(-1, 2)
    tc = np.vstack([urban, town_tracts, rural_points(n_rural) if n_rural else np.empty((0, 2))])
    kind = np.array(["urban"] * len(urban) + ["town"] * n_town + ["rural"] * n_rural)
    perm = rng.permutation(n_tracts)
    tc, kind = tc[perm], kind[perm]

    n_town_phys = min(n_physicians, max(len(towns), int(round(0.04 * n_physicians)))) if n_town else 0
    pc_urban, _ = clustered(n_physicians - n_town_phys, 0.8)
    pc_town = np.array([
        _offset(towns[k % len(towns)], *rng.normal(0, 2.0, 2)) for k in range(n_town_phys)
    ]).reshape(-1, 2)
    pc = np.vstack([pc_urban, pc_town])
    pc = pc[rng.permutation(n_physicians)]

    # county blocks (~0.4 degree cells) carry the Medicaid acceptance rate
    county = (np.floor((pc[:, 0] - lat0) / 0.4) * 100 + np.floor((pc[:, 1] - lon0) / 0.4)).astype(int)
    county_rate = {c: float(np.clip(rng.beta(4.0, 1.6), 0.05, 1.0)) for c in np.unique(county)}
    pam = np.array([county_rate[c] for c in county])

    # child population tuned so total demand is ~75% of total physician capacity
    base = rng.lognormal(mean=0.0, sigma=0.35, size=n_tracts)
    base[kind == "rural"] *= 0.6
    scale = 0.75 * params.pc * n_physicians / base.sum()
    pop = base * scale
    share = np.clip(np.where(kind == "urban", 0.40, 0.52) + rng.normal(0, 0.08, n_tracts), 0.1, 0.85)
    mob_o = np.clip(rng.normal(0.95, 0.03, n_tracts), 0.7, 1.0)
    mob_m = np.clip(mob_o - np.abs(rng.normal(0.18, 0.08, n_tracts)), 0.2, 1.0)

    host = _nearest(pc, tc)
    settings = rng.choice([s.value for s in PracticeSetting], size=n_physicians, p=[0.1, 0.15, 0.75])

    urban_score = np.array([1.0 if k == "urban" else (0.5 if k == "town" else 0.0) for k in kind])
    income = 38000 + 30000 * urban_score + rng.normal(0, 9000, n_tracts)
    edu = np.clip(0.18 + 0.22 * urban_score + rng.normal(0, 0.06, n_tracts), 0.02, 0.9)
    unemp = np.clip(0.09 - 0.03 * urban_score + rng.normal(0, 0.02, n_tracts), 0.01, 0.3)
    nonwhite = np.clip(rng.beta(2.0, 2.5, n_tracts) * (0.6 + 0.5 * urban_score), 0.0, 1.0)

    hosp_idx = rng.choice(n_physicians, size=max(1, n_physicians // 25), replace=False)
    hospitals = [(tuple(pc[k]), float(rng.integers(50, 600))) for k in hosp_idx]
    hospdist = np.array([spatial.hospital_distance(tuple(c), hospitals) for c in tc])
    density = spatial.kde_density(tc, pop, eval_at=tc).values
    comp = np.column_stack([pop * (1 - nonwhite), pop * nonwhite])
    divratio = spatial.diversity_ratio(tc, comp).values

    tract_rows = []
    for i in range(n_tracts):
        tract_rows.append({
            "lat": tc[i, 0], "lon": tc[i, 1],
            "pop_medicaid": float(round(pop[i] * share[i])),
            "pop_other": float(round(pop[i] * (1 - share[i]))),
            "mob_medicaid": float(mob_m[i]), "mob_other": float(mob_o[i]),
            "covariates": {
                "income": float(income[i]), "edu": float(edu[i]), "unemp": float(unemp[i]),
                "nonwhite": float(nonwhite[i]), "density": float(density[i]),
                "hospdist": float(hospdist[i]), "divratio": float(divratio[i]),
            },
        })
    phys_rows = [
        {"lat": pc[j, 0], "lon": pc[j, 1], "tract": int(host[j]), "pam": float(pam[j]),
         "setting": str(settings[j])}
        for j in range(n_physicians)
    ]
    return build_scenario(tract_rows, phys_rows, params)
