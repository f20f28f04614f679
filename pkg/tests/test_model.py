import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedaccess.model import (COVARIATE_NAMES, DEFAULT_MC, CoverageMode, DistanceMatrix, PracticeSetting,
                             ScenarioError, SystemParameters, build_scenario, generate_synthetic_state,
                             great_circle_distance, load_parameters, load_scenario, write_parameters,
                             write_scenario)

TRACT_HEADER = "id,lat,lon,pop_medicaid,pop_other,mob_medicaid,mob_other\n"
PHYS_HEADER = "id,lat,lon,tract_id,pam,mc,setting\n"


def _write(path, text):
    path.write_text(text)
    return path


def test_great_circle_identity_and_one_degree():
    assert great_circle_distance((33.0, -84.0), (33.0, -84.0)) == 0.0
    # haversine with R = 3958.8: R * pi / 180
    assert great_circle_distance((0.0, 0.0), (0.0, 1.0)) == pytest.approx(69.09, abs=0.005)


def test_great_circle_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = (rng.uniform(-80, 80), rng.uniform(-180, 180))
        b = (rng.uniform(-80, 80), rng.uniform(-180, 180))
        assert great_circle_distance(a, b) == great_circle_distance(b, a)
        assert great_circle_distance(a, b) >= 0.0


def test_mobility_out_of_range_is_rejected(tmp_path):
    t = _write(tmp_path / "t.csv", TRACT_HEADER + "a,33,-84,10,10,1.2,0.9\n")
    p = _write(tmp_path / "p.csv", PHYS_HEADER + "x,33,-84,a,0.5,,other\n")
    with pytest.raises(ScenarioError, match="mobility fraction out of range"):
        load_scenario(t, p)


def test_error_names_file_and_line(tmp_path):
    t = _write(tmp_path / "t.csv", TRACT_HEADER + "a,33,-84,10,10,0.5,0.9\nb,33,-84,-1,10,0.5,0.9\n")
    p = _write(tmp_path / "p.csv", PHYS_HEADER + "x,33,-84,a,0.5,,other\n")
    with pytest.raises(ScenarioError, match=r"t\.csv:3"):
        load_scenario(t, p)


def test_dangling_tract_reference(tmp_path):
    t = _write(tmp_path / "t.csv", TRACT_HEADER + "a,33,-84,10,10,0.5,0.9\n")
    p = _write(tmp_path / "p.csv", PHYS_HEADER + "x,33,-84,zz,0.5,,other\n")
    with pytest.raises(ScenarioError, match="unknown tract"):
        load_scenario(t, p)


def test_complete_bipartite_under_cutoff(tmp_path):
    t = _write(tmp_path / "t.csv", TRACT_HEADER + "a,33.00,-84.00,10,10,0.5,0.9\nb,33.05,-84.00,10,10,0.5,0.9\n")
    p = _write(tmp_path / "p.csv", PHYS_HEADER + "x,33.01,-84.0,a,0.5,,other\ny,33.04,-84.0,b,0.5,,other\n")
    sc = load_scenario(t, p)
    assert len(sc.distances) == 4


def test_remote_tract_kept_without_arcs(tmp_path):
    t = _write(tmp_path / "t.csv", TRACT_HEADER + "a,33.0,-84.0,10,10,0.5,0.9\nfar,35.0,-84.0,10,10,0.5,0.9\n")
    p = _write(tmp_path / "p.csv", PHYS_HEADER + "x,33.0,-84.0,a,0.5,,other\n")
    sc = load_scenario(t, p)
    assert sc.n_tracts == 2
    assert sc.distances.for_tract(1)[0].size == 0


def test_default_caseload_by_setting(tmp_path):
    t = _write(tmp_path / "t.csv", TRACT_HEADER + "a,33,-84,10,10,0.5,0.9\n")
    p = _write(tmp_path / "p.csv", PHYS_HEADER + "h,33,-84,a,1,,public_hospital\nc,33,-84,a,1,,community_clinic\n"
               "o,33,-84,a,1,,other\nx,33,-84,a,1,0.5,other\n")
    sc = load_scenario(t, p)
    assert list(sc.mc) == [0.74, 0.64, 0.32, 0.5]
    assert DEFAULT_MC[PracticeSetting.OTHER] == 0.32
    assert sc.tracts[0].md == 4


def test_distance_file_overrides_and_prunes(tmp_path):
    t = _write(tmp_path / "t.csv", TRACT_HEADER + "a,33,-84,10,10,0.5,0.9\nb,33.1,-84,10,10,0.5,0.9\n")
    p = _write(tmp_path / "p.csv", PHYS_HEADER + "x,33,-84,a,0.5,,other\n")
    d = _write(tmp_path / "d.csv", "tract_id,physician_id,miles\na,x,4.5\nb,x,30\n")
    sc = load_scenario(t, p, d)
    assert len(sc.distances) == 1
    assert sc.distances.get(0, 0) == 4.5
    assert sc.distances.get(1, 0) is None


def test_duplicate_arc_rejected():
    with pytest.raises(ScenarioError):
        DistanceMatrix.from_arcs([0, 0], [0, 0], [1.0, 2.0])


def test_parameter_invariants():
    with pytest.raises(ScenarioError):
        SystemParameters(lc=0.8, cc=0.7)
    with pytest.raises(ScenarioError):
        SystemParameters(mi_max_limited=30.0)
    with pytest.raises(ScenarioError):
        SystemParameters(pc=0.0)


def test_coverage_mode_parse():
    assert CoverageMode.parse("max").is_max
    m = CoverageMode.parse("fixed:0.99")
    assert not m.is_max and m.alpha == 0.99
    with pytest.raises(ScenarioError):
        CoverageMode.parse("fixed:1.5")
    with pytest.raises(ScenarioError):
        CoverageMode.parse("most")


def test_parameter_file_round_trip(tmp_path):
    params = SystemParameters(mi_max=30.0, lc=0.1, coverage_mode=CoverageMode.parse("fixed:0.9"))
    write_parameters(params, tmp_path / "p.ini")
    assert load_parameters(tmp_path / "p.ini") == params
    (tmp_path / "q.ini").write_text("pc = 2000\ncc = 0.8\n")
    assert load_parameters(tmp_path / "q.ini") == SystemParameters(pc=2000.0, cc=0.8)


def test_synthetic_determinism(tmp_path):
    a = generate_synthetic_state(7, 120, 150, "georgia_like")
    b = generate_synthetic_state(7, 120, 150, "georgia_like")
    assert a.digest() == b.digest()
    write_scenario(a, tmp_path / "a_t.csv", tmp_path / "a_p.csv", tmp_path / "a_d.csv")
    write_scenario(b, tmp_path / "b_t.csv", tmp_path / "b_p.csv", tmp_path / "b_d.csv")
    for x, y in (("a_t", "b_t"), ("a_p", "b_p"), ("a_d", "b_d")):
        assert (tmp_path / f"{x}.csv").read_bytes() == (tmp_path / f"{y}.csv").read_bytes()
    assert generate_synthetic_state(8, 120, 150, "georgia_like").digest() != a.digest()


def test_georgia_like_has_remote_tracts():
    # at least 10% of tracts with no physician in range, on several seeds
    for seed in (0, 1, 2):
        sc = generate_synthetic_state(seed, 200, 248, "georgia_like")
        counts = np.bincount(sc.distances.tract, minlength=sc.n_tracts)
        assert (counts == 0).mean() >= 0.10


def test_georgia_like_covariates_present():
    sc = generate_synthetic_state(1, 60, 70, "georgia_like")
    assert set(COVARIATE_NAMES) <= set(sc.covariate_names)
    for name in COVARIATE_NAMES:
        assert np.all(np.isfinite(sc.covariate(name)))


def test_uniform_minimal_instance():
    sc = generate_synthetic_state(0, 1, 1, "uniform")
    assert sc.n_tracts == 1 and sc.n_physicians == 1
    assert len(sc.distances) == 1


def test_round_trip_files(tmp_path):
    sc = generate_synthetic_state(4, 40, 50, "georgia_like")
    files = [tmp_path / n for n in ("t.csv", "p.csv", "d.csv")]
    write_scenario(sc, *files)
    back = load_scenario(*files, params=sc.params)
    assert back.digest() == sc.digest()
    write_scenario(back, *(tmp_path / f"2{n}" for n in ("t.csv", "p.csv", "d.csv")))
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "2t.csv").read_bytes()
    with open(files[0]) as fh:
        header = next(csv.reader(fh))
    assert header[:7] == ["id", "lat", "lon", "pop_medicaid", "pop_other", "mob_medicaid", "mob_other"]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 40), st.integers(1, 40), st.sampled_from(["uniform", "georgia_like"]))
def test_arcs_never_exceed_cutoff(seed, n_t, n_p, profile):
    sc = generate_synthetic_state(seed, n_t, n_p, profile)
    d = sc.distances
    assert np.all(d.miles <= sc.params.mi_max)
    assert np.all(d.miles >= 0)
    pairs = set(zip(d.tract.tolist(), d.physician.tolist()))
    assert len(pairs) == len(d)
    for t in sc.tracts:
        assert t.md == len(t.local_physicians)
        assert all(sc.physicians[j].tract_id == t.id for j in t.local_physicians)


def test_build_scenario_great_circle_default():
    params = SystemParameters()
    tracts = [dict(lat=33.0, lon=-84.0, pop_medicaid=1, pop_other=1, mob_medicaid=1, mob_other=1)]
    phys = [dict(lat=33.0, lon=-84.1, tract=0, pam=1.0)]
    sc = build_scenario(tracts, phys, params)
    expected = 3958.8 * 2 * math.asin(math.sqrt(math.cos(math.radians(33.0)) ** 2 * math.sin(math.radians(0.05)) ** 2))
    assert sc.distances.get(0, 0) == pytest.approx(expected, rel=1e-12)
