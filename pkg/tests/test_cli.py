import csv
import json
import logging

import pytest

from fixtures import single_arc, two_by_two
from pedaccess.cli import build_parser, main, substream_seed
from pedaccess.model import write_scenario


def _digests(path):
    return json.loads((path / "manifest.json").read_text())["outputs"]


@pytest.fixture
def t1_files(tmp_path):
    files = [tmp_path / n for n in ("tracts.csv", "physicians.csv", "distances.csv")]
    write_scenario(two_by_two(), *files)
    return ["--tracts", str(files[0]), "--physicians", str(files[1]), "--distances", str(files[2]),
            "--pc", "300", "--lc", "0", "--cc", "1"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--seed", "7", "--profile", "georgia-like", "--tracts", "120", "--out", str(out)]) == 0
    return out


def _scenario_args(d):
    return ["--tracts", str(d / "tracts.csv"), "--physicians", str(d / "physicians.csv"), "--params",
            str(d / "params.ini")]


def test_synth_is_deterministic(tmp_path, synth_dir):
    again = tmp_path / "again"
    assert main(["synth", "--seed", "7", "--profile", "georgia-like", "--tracts", "120", "--out", str(again)]) == 0
    assert _digests(again) == _digests(synth_dir)
    other = tmp_path / "other"
    main(["synth", "--seed", "8", "--profile", "georgia-like", "--tracts", "120", "--out", str(other)])
    assert _digests(other)["tracts.csv"] != _digests(synth_dir)["tracts.csv"]


def test_solve_t1_measures(tmp_path, t1_files):
    out = tmp_path / "run"
    assert main(["solve", *t1_files, "--out", str(out)]) == 0
    with open(out / "measures.csv", newline="") as fh:
        rows = {(r["tract_id"], r["scope"]): r for r in csv.DictReader(fh)}
    assert float(rows[("A", "overall")]["travel_cost"]) == pytest.approx(2.0, abs=1e-9)
    assert float(rows[("B", "overall")]["travel_cost"]) == pytest.approx(3.0, abs=1e-9)
    for name in ("assignment.csv", "relaxations.csv", "measures.geojson", "manifest.json"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["solve"]["total_distance"] == pytest.approx(700.0)
    assert set(manifest["inputs"]) == {t1_files[1], t1_files[3], t1_files[5]}


def test_missing_file_is_input_error(tmp_path, t1_files, capsys):
    args = list(t1_files)
    args[3] = str(tmp_path / "nope.csv")
    assert main(["solve", *args, "--out", str(tmp_path / "x")]) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_bad_row_is_input_error(tmp_path, t1_files, capsys):
    bad = tmp_path / "bad.csv"
    text = (tmp_path / "tracts.csv").read_text().splitlines()
    cells = text[1].split(",")
    cells[5] = "1.2"
    bad.write_text("\n".join([text[0], ",".join(cells), *text[2:]]) + "\n")
    args = list(t1_files)
    args[1] = str(bad)
    assert main(["solve", *args, "--out", str(tmp_path / "x")]) == 1
    assert "bad.csv:2" in capsys.readouterr().err


def test_infeasible_fixed_fraction(tmp_path, capsys):
    files = [tmp_path / n for n in ("t.csv", "p.csv", "d.csv")]
    write_scenario(single_arc(100.0, 0.0, 0.5, 15.0), *files)
    rc = main(["solve", "--tracts", str(files[0]), "--physicians", str(files[1]), "--distances", str(files[2]),
               "--coverage", "fixed:0.99", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "0.500000" in capsys.readouterr().err


def test_unknown_flag_and_bad_grid(tmp_path, synth_dir):
    assert main(["solve", "--frobnicate"]) == 1
    rc = main(["sweep", *_scenario_args(synth_dir), "--kind", "mc-scale", "--grid", "0.5:x",
               "--out", str(tmp_path / "s")])
    assert rc == 1


def test_sweep_rows(tmp_path, synth_dir):
    out = tmp_path / "sweep"
    assert main(["sweep", *_scenario_args(synth_dir), "--kind", "mc-scale", "--grid", "0.5:0.05:1.0",
                 "--out", str(out)]) == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for scope in ("medicaid", "other", "overall"):
        assert sum(r["scope"] == scope for r in rows) == 11
    assert (out / "pareto.csv").read_text().startswith("kind,lambda,")


def test_montecarlo_reproducible(tmp_path, synth_dir):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["montecarlo", *_scenario_args(synth_dir), "--draws", "4", "--seed", "3"]
    assert main([*base, "--out", str(a)]) == 0
    assert main([*base, "--out", str(b)]) == 0
    assert _digests(a) == _digests(b)
    summary = json.loads((a / "draws_summary.json").read_text())
    assert summary["n_draws"] == 4 and summary["seed"] == substream_seed(3, "montecarlo")


def test_infer_five_surfaces(tmp_path, synth_dir):
    out = tmp_path / "infer"
    rc = main(["infer", *_scenario_args(synth_dir), "--response", "tc_medicaid",
               "--covariates", "density,edu,divratio,hospdist", "--n-boot", "200", "--out", str(out)])
    assert rc == 0
    with open(out / "coefficients.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["covariate"] for r in rows} == {"intercept", "density", "edu", "divratio", "hospdist"}
    assert all(float(r["lower"]) <= float(r["estimate"]) <= float(r["upper"]) for r in rows)
    fit = json.loads((out / "fit.json").read_text())
    assert set(fit["shapes"]) == {"intercept", "density", "edu", "divratio", "hospdist"}
    gj = json.loads((out / "significance.geojson").read_text())
    assert len(gj["features"]) == len(rows)


def test_infer_rejects_unknown_covariate(tmp_path, synth_dir):
    rc = main(["infer", *_scenario_args(synth_dir), "--response", "tc_medicaid", "--covariates", "shoe_size",
               "--out", str(tmp_path / "i")])
    assert rc == 1


def test_config_file_and_explicit_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[synth]\nseed = 7\ntracts = 40\nprofile = uniform\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(cfg), "synth", "--out", str(a)]) == 0
    assert main(["synth", "--seed", "7", "--tracts", "40", "--profile", "uniform", "--out", str(b)]) == 0
    assert _digests(a) == _digests(b)
    c = tmp_path / "c"
    assert main(["--config", str(cfg), "synth", "--tracts", "30", "--out", str(c)]) == 0
    assert len((c / "tracts.csv").read_text().splitlines()) == 31
    cfg.write_text("[synth]\nflavour = mint\n")
    assert main(["--config", str(cfg), "synth", "--out", str(tmp_path / "d")]) == 1


def test_manifest_regenerates_outputs(tmp_path, t1_files):
    out = tmp_path / "first"
    assert main(["solve", *t1_files, "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    argv = list(manifest["argv"])
    argv[argv.index("--out") + 1] = str(tmp_path / "second")
    assert main(argv) == 0
    # measures and assignments are byte-identical; only the timing field differs
    assert _digests(tmp_path / "second") == manifest["outputs"]


def test_seed_collision_warning(tmp_path, caplog):
    out = tmp_path / "same"
    main(["synth", "--seed", "5", "--tracts", "20", "--out", str(out)])
    with caplog.at_level(logging.WARNING, logger="pedaccess"):
        main(["synth", "--seed", "5", "--tracts", "20", "--out", str(out)])
        assert "seed collision" not in caplog.text
        main(["synth", "--seed", "5", "--tracts", "25", "--out", str(out)])
    assert "seed collision" in caplog.text


def test_report_verifies_digests(tmp_path, t1_files, capsys):
    out = tmp_path / "run"
    main(["solve", *t1_files, "--out", str(out)])
    capsys.readouterr()
    assert main(["report", "--run", str(out)]) == 0
    text = capsys.readouterr().out
    assert "measures.csv" in text and "MODIFIED" not in text
    (out / "measures.csv").write_text("tampered\n")
    main(["report", "--run", str(out)])
    assert "MODIFIED OR MISSING" in capsys.readouterr().out
    assert main(["report", "--run", str(tmp_path / "empty")]) == 1


def test_help_lists_every_subcommand(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    text = capsys.readouterr().out
    assert main(["--version"]) == 0
    for cmd in ("synth", "solve", "sweep", "montecarlo", "infer", "report"):
        assert cmd in text


def test_substreams_differ():
    assert substream_seed(1, "bootstrap") != substream_seed(1, "montecarlo")
    assert substream_seed(1, "bootstrap") == substream_seed(1, "bootstrap")
