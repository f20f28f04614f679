"""Command-line front end.

Every run writes its artifacts plus a ``manifest.json`` recording the full
argument vector, the seeds and SHA-256 digests of inputs and outputs.
Exit codes: 0 success, 1 input error, 2 model infeasible, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
import time
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .assignment import (AssignmentInfeasible, solve_assignment, write_assignment_csv,
                         write_relaxations_csv)
from .lp import LpError
from .metrics import MEASURES, all_scopes, measures_geojson, write_geojson, write_measures_csv
from .model import (COVARIATE_NAMES, CoverageMode, ScenarioError, SystemParameters,
                    generate_synthetic_state, load_parameters, load_scenario, write_parameters,
                    write_scenario)
from .policy import (KINDS, SweepError, default_grid, normalize_kind, pareto_filter, parse_grid,
                     run_sweep, sample_pam_realizations, sweep_candidates, write_pareto_csv,
                     write_realizations_csv, write_sweep_csv)
from .spatial import project_miles

log = logging.getLogger("pedaccess")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

_MEASURE_ALIASES = {"coverage": "coverage", "c": "coverage", "tc": "travel_cost",
                    "travel_cost": "travel_cost", "cg": "congestion", "congestion": "congestion"}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for infeasibility here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def substream_seed(root: int, label: str) -> int:
    """Independent seed for a named stage derived from the root seed."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out: Path, args: argparse.Namespace, inputs: list, outputs: list, extra=None) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ("func", "argv")}
    manifest = {
        "tool": "pedaccess",
        "version": __version__,
        "command": args.command,
        "argv": getattr(args, "argv", None),
        "config": config,
        "inputs": {str(p): _digest(Path(p)) for p in inputs if p is not None},
        "outputs": {Path(p).name: _digest(Path(p)) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    _warn_seed_collision(out / "manifest.json", manifest)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _seeds(manifest: dict) -> dict:
    seeds = {k: v for k, v in manifest.items() if k.endswith("seed")}
    if "seed" in manifest.get("config", {}):
        seeds["root_seed"] = manifest["config"]["seed"]
    return seeds


def _settings(manifest: dict) -> dict:
    return {k: v for k, v in manifest.get("config", {}).items() if k != "out"}


def _warn_seed_collision(path: Path, manifest: dict) -> None:
    """Warn when a run overwrites one that drew from the same seeds with a
    different configuration: the two sets of artifacts would share random
    streams while describing different experiments."""
    mine = _seeds(manifest)
    if not mine or not path.is_file():
        return
    try:
        old = json.loads(path.read_text())
    except (OSError, ValueError):
        return
    shared = {k for k, v in _seeds(old).items() if mine.get(k) == v}
    if shared and (old.get("command") != manifest["command"] or _settings(old) != _settings(manifest)
                   or old.get("inputs") != manifest["inputs"]):
        log.warning("seed collision: %s previously held a different run with the same %s",
                    path.parent, ", ".join(sorted(shared)))


def _params(args) -> SystemParameters:
    base = load_parameters(args.params) if getattr(args, "params", None) else SystemParameters()
    changes = {}
    for key in ("mi_max", "mi_max_limited", "pc", "lc", "cc"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    if getattr(args, "coverage", None):
        changes["coverage_mode"] = CoverageMode.parse(args.coverage)
    if not changes:
        return base
    merged = base.to_dict()
    merged.update({k: (str(v) if k == "coverage_mode" else v) for k, v in changes.items()})
    return SystemParameters.from_mapping(merged)


def _scenario(args):
    for attr in ("tracts", "physicians", "distances"):
        p = getattr(args, attr, None)
        if p is not None and not Path(p).is_file():
            raise InputError(f"file not found: {p} ({attr})")
    return load_scenario(args.tracts, args.physicians, args.distances, _params(args))


def _inputs(args) -> list:
    return [getattr(args, a, None) for a in ("tracts", "physicians", "distances", "params", "config")]


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    out = _outdir(args)
    params = _params(args)
    sc = generate_synthetic_state(args.seed, args.tracts_n, args.physicians_n or max(1, round(args.tracts_n * 1.24)),
                                  args.profile, params)
    files = [out / "tracts.csv", out / "physicians.csv", out / "params.ini"]
    write_scenario(sc, files[0], files[1], out / "distances.csv" if args.with_distances else None)
    write_parameters(params, files[2])
    if args.with_distances:
        files.append(out / "distances.csv")
    _write_manifest(out, args, [args.params, args.config], files, {"scenario_digest": sc.digest()})
    print(f"wrote {sc.n_tracts} tracts, {sc.n_physicians} physicians, {len(sc.distances)} arcs to {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    out = _outdir(args)
    sc = _scenario(args)
    t0 = time.perf_counter()
    sol = solve_assignment(sc, method=args.method)
    seconds = time.perf_counter() - t0
    measures = all_scopes(sc, sol)
    files = [out / "assignment.csv", out / "measures.csv", out / "relaxations.csv", out / "measures.geojson"]
    write_assignment_csv(sc, sol, files[0])
    write_measures_csv(sc, measures, files[1])
    write_relaxations_csv(sc, sol, files[2])
    write_geojson(measures_geojson(sc, measures), files[3])
    summary = {scope: m.summary() for scope, m in measures.items()}
    _write_manifest(out, args, _inputs(args), files, {
        "scenario_digest": sc.digest(),
        "solve": {"coverage_fraction": sol.achieved_coverage_fraction, "total_distance": sol.total_distance,
                  "relaxations": len(sol.relaxation_report), "seconds": seconds,
                  "method": sol.lp_phase2.method if sol.lp_phase2 else None},
        "summary": summary,
    })
    print(f"coverage {sol.achieved_coverage_fraction:.4f}, child-miles {sol.total_distance:.1f}, "
          f"{len(sol.relaxation_report)} floor relaxations, {seconds:.1f}s")
    for scope, s in summary.items():
        print(f"  {scope:8s} " + "  ".join(f"{k}={v:.4f}" for k, v in s.items()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _outdir(args)
    sc = _scenario(args)
    kinds = [normalize_kind(k) for k in (args.kind or ["mc_scale"])]
    results = []
    for kind in kinds:
        grid = parse_grid(args.grid) if args.grid else default_grid(kind)

        def progress(p, kind=kind):
            log.info("%s lambda=%g done in %.1fs", kind, p.lam, p.seconds)
        results.append(run_sweep(sc, kind, grid, method=args.method, workers=args.workers, progress=progress))
    files = [out / "sweep.csv", out / "pareto.csv"]
    write_sweep_csv(results, files[0])
    kept = pareto_filter(sweep_candidates(results), eps=args.eps)
    write_pareto_csv(kept, files[1])
    _write_manifest(out, args, _inputs(args), files, {"scenario_digest": sc.digest()})
    n = sum(len(r.points) for r in results)
    print(f"{n} sweep points, {len(kept)} approximately Pareto-optimal")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    out = _outdir(args)
    sc = _scenario(args)
    seed = substream_seed(args.seed, "montecarlo")
    run = sample_pam_realizations(sc, args.draws, seed, method=args.method, keep_draws=False)
    s = run.summary
    files = [out / "realizations.csv", out / "draws_summary.json"]
    write_realizations_csv(sc, s, files[0])
    state = {scope: {m: {"mean": float(np.mean(v[m])), "se": s.state_se(scope, m),
                         "draws": [float(x) for x in v[m]]} for m in MEASURES}
             for scope, v in s.state.items()}
    files[1].write_text(json.dumps({"n_draws": s.n_draws, "seed": seed, "state": state}, indent=2,
                                   sort_keys=True) + "\n")
    _write_manifest(out, args, _inputs(args), files, {"scenario_digest": sc.digest(), "draw_seed": seed})
    med = state.get("medicaid", {}).get("coverage")
    if med:
        print(f"{s.n_draws} draws; Medicaid coverage {med['mean']:.4f} (se {med['se']:.4f})")
    return EXIT_OK


def _response(sc, args):
    name = args.response.strip().lower()
    if "_" not in name:
        raise InputError(f"response {args.response!r} should look like tc_medicaid or coverage_overall")
    head, scope = name.rsplit("_", 1)
    if head not in _MEASURE_ALIASES:
        raise InputError(f"unknown measure in response {args.response!r}")
    if args.measures:
        by_tract = {}
        with open(args.measures, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["scope"] == scope:
                    v = row[_MEASURE_ALIASES[head]]
                    by_tract[row["tract_id"]] = float(v) if v != "" else np.nan
        ids = [t.ext_id or str(i) for i, t in enumerate(sc.tracts)]
        missing = [i for i in ids if i not in by_tract]
        if missing:
            raise InputError(f"{args.measures}: no {scope} row for tract {missing[0]!r}")
        return np.array([by_tract[i] for i in ids])
    sol = solve_assignment(sc, method=args.method)
    measures = all_scopes(sc, sol)
    if scope not in measures:
        raise InputError(f"scope {scope!r} has no population")
    return measures[scope].measure(_MEASURE_ALIASES[head])


def cmd_infer(args) -> int:
    from .svcm import BasisSpec, FitOptions, evaluate_models, fit_svcm, significance_map

    out = _outdir(args)
    sc = _scenario(args)
    y = _response(sc, args)
    names = [c.strip() for c in args.covariates.split(",") if c.strip()]
    available = sc.covariate_names
    for n in names:
        if n not in available:
            raise InputError(f"covariate {n!r} not in the tract file (have: {', '.join(available)})")
    cov = {}
    for n in names:
        v = sc.covariate(n)
        sd = np.nanstd(v)
        cov[n] = (v - np.nanmean(v)) / sd if sd > 0 else v - np.nanmean(v)
    coords = project_miles(sc.tract_coords)
    basis = BasisSpec(kind=args.basis, n_knots=args.knots)
    opts = FitOptions(max_cycles=args.max_cycles)
    boot_seed = substream_seed(args.seed, "bootstrap")
    fit = fit_svcm(y, cov, coords, basis, options=opts, response=args.response)
    sig = significance_map(fit, args.alpha, args.n_boot, boot_seed)
    files = [out / "fit.json", out / "coefficients.csv", out / "significance.geojson"]
    keep = np.setdiff1d(np.arange(sc.n_tracts), fit.dropped)
    ids = [sc.tracts[i].ext_id or str(i) for i in keep]
    label = {1: "positive", -1: "negative", 0: "none"}
    with open(files[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tract_id", "covariate", "estimate", "lower", "upper", "sign"])
        for name in fit.names:
            b = sig.bands[name]
            for k, tid in enumerate(ids):
                w.writerow([tid, name, repr(float(b.estimate[k])), repr(float(b.lower[k])),
                            repr(float(b.upper[k])), label[int(sig.signs[name][k])]])
    lonlat = sc.tract_coords[keep][:, ::-1]
    collection = {"type": "FeatureCollection", "features": []}
    for name in fit.names:
        collection["features"].extend(sig.features(lonlat, name, ids)["features"])
    write_geojson(collection, files[2])
    report = {"fit": fit.summary(), "alpha": args.alpha, "n_boot": args.n_boot, "bootstrap_seed": boot_seed,
              "shapes": {n: {"shape": v.shape, "significant": v.significant, "sign": v.sign,
                             "constant_interval": list(v.interval) if v.shape == "constant" else None}
                         for n, v in sig.shapes.items()}}
    if args.candidates:
        cands = [[c.strip() for c in block.split(",") if c.strip()] for block in args.candidates.split(";")]
        for c in cands:
            for n in c:
                if n not in available:
                    raise InputError(f"covariate {n!r} not in the tract file")
        allcov = {n: (sc.covariate(n) - np.nanmean(sc.covariate(n))) / (np.nanstd(sc.covariate(n)) or 1.0)
                  for c in cands for n in c}
        comparison = evaluate_models(cands, y, allcov, coords, basis, args.alpha, args.n_boot, boot_seed, opts)
        report["models"] = comparison.table()
        report["consistency"] = comparison.consistency
    files[0].write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    _write_manifest(out, args, _inputs(args) + [args.measures], files,
                    {"scenario_digest": sc.digest(), "bootstrap_seed": boot_seed})
    print(f"fit {args.response}: edf {fit.edf:.1f}, AIC {fit.aic:.1f}, "
          f"{'converged' if fit.converged else 'NOT converged'} in {fit.cycles} cycles")
    for n, v in sig.shapes.items():
        print(f"  {n:12s} {v.shape:11s} {'significant' if v.significant else 'n.s.'}")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run)
    mf = run / "manifest.json"
    if not mf.is_file():
        raise InputError(f"file not found: {mf}")
    manifest = json.loads(mf.read_text())
    print(f"run: {manifest['command']} (pedaccess {manifest.get('version')})")
    for name, digest in manifest.get("outputs", {}).items():
        path = run / name
        state = "ok" if path.is_file() and _digest(path) == digest else "MODIFIED OR MISSING"
        print(f"  {name:24s} {state}")
    if "summary" in manifest:
        for scope, s in manifest["summary"].items():
            print(f"  {scope:8s} " + "  ".join(f"{k}={v:.4f}" for k, v in s.items()))
    sweep = run / "sweep.csv"
    if sweep.is_file():
        with open(sweep, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["scope"] == "medicaid"]
        print("  kind            lambda  coverage  travel_cost  congestion  (medicaid)")
        for r in rows:
            print(f"  {r['kind']:15s} {float(r['lambda']):6.2f}  {float(r['coverage']):8.4f}  "
                  f"{float(r['travel_cost']):11.3f}  {float(r['congestion']):10.4f}")
    fitj = run / "fit.json"
    if fitj.is_file():
        rep = json.loads(fitj.read_text())
        f = rep["fit"]
        print(f"  fit {f['response']}: AIC {f['aic']:.2f}, edf {f['edf']:.2f}, moran I {f['moran_i']}")
        for n, v in rep["shapes"].items():
            print(f"    {n:12s} {v['shape']:11s} {'significant' if v['significant'] else 'n.s.'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _scenario_flags(p):
    p.add_argument("--tracts", type=Path, required=True, help="tracts.csv")
    p.add_argument("--physicians", type=Path, required=True, help="physicians.csv")
    p.add_argument("--distances", type=Path, help="optional distances.csv (default: great-circle)")
    _param_flags(p)
    p.add_argument("--method", choices=("auto", "simplex", "highs"), default="auto", help="LP route")


def _param_flags(p):
    p.add_argument("--params", type=Path, help="key = value parameter file")
    p.add_argument("--mi-max", type=float, help="maximum travel distance (miles)")
    p.add_argument("--mi-max-limited", type=float, help="distance limit for families without a car")
    p.add_argument("--pc", type=float, help="patients per physician")
    p.add_argument("--lc", type=float, help="minimum caseload fraction")
    p.add_argument("--cc", type=float, help="tract congestion fraction")
    p.add_argument("--coverage", help="'max' or 'fixed:<fraction>'")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="pedaccess", description="Spatial access to pediatric primary care.")
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top.add_argument("--config", type=Path, help="INI file; [<command>] sections mirror the flags")
    top.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a seeded synthetic scenario")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--profile", default="georgia_like", choices=("uniform", "georgia_like", "georgia-like"))
    p.add_argument("--tracts", dest="tracts_n", type=int, default=300, help="number of tracts")
    p.add_argument("--physicians", dest="physicians_n", type=int, help="number of physicians (default 1.24x tracts)")
    p.add_argument("--with-distances", action="store_true", help="also write distances.csv")
    p.add_argument("--out", default="synth_out", help="output directory")
    _param_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("solve", help="solve the assignment and compute the access measures")
    _scenario_flags(p)
    p.add_argument("--out", default="solve_out", help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="re-solve under a grid of policy strengths")
    _scenario_flags(p)
    p.add_argument("--kind", action="append", help=f"policy kind (repeatable): {', '.join(KINDS)}")
    p.add_argument("--grid", help="start:step:stop or comma list (default: the 0.05 grid for the kind)")
    p.add_argument("--eps", type=float, default=0.005, help="relative tolerance of the Pareto filter")
    p.add_argument("--workers", type=int, default=1, help="parallel solver processes")
    p.add_argument("--out", default="sweep_out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("montecarlo", help="Bernoulli draws of Medicaid acceptance")
    _scenario_flags(p)
    p.add_argument("--draws", type=int, default=20, help="number of draws")
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--out", default="montecarlo_out", help="output directory")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("infer", help="fit varying-coefficient surfaces with simultaneous bands")
    _scenario_flags(p)
    p.add_argument("--response", required=True, help="e.g. tc_medicaid, coverage_overall, cg_other")
    p.add_argument("--covariates", required=True, help="comma-separated covariate names")
    p.add_argument("--candidates", help="semicolon-separated covariate sets to compare")
    p.add_argument("--measures", type=Path, help="take the response from an existing measures.csv")
    p.add_argument("--alpha", type=float, default=0.05, help="band level")
    p.add_argument("--n-boot", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--knots", type=int, default=8, help="knots per axis (or radial centers)")
    p.add_argument("--basis", default="tensor_b_spline", choices=("tensor_b_spline", "thin_plate_radial"))
    p.add_argument("--max-cycles", type=int, default=200, help="backfitting cycle limit")
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--out", default="infer_out", help="output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("report", help="summarize a run directory and verify its outputs")
    p.add_argument("--run", required=True, help="run directory containing manifest.json")
    p.set_defaults(func=cmd_report)
    return top


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    args = parser.parse_args(argv)
    if known.config is None:
        return args
    if not known.config.is_file():
        raise InputError(f"file not found: {known.config}")
    cp = configparser.ConfigParser()
    cp.read(known.config)
    if not cp.has_section(args.command):
        return args
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, raw in cp[args.command].items():
        flag = dest = key.replace("-", "_")
        if dest in ("tracts", "physicians") and args.command == "synth":
            dest += "_n"
        if not hasattr(args, dest):
            raise InputError(f"{known.config}: unknown option {key!r} for {args.command}")
        if flag in explicit:
            continue
        current = getattr(args, dest)
        if isinstance(current, bool):
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        elif dest in ("tracts", "physicians", "distances", "params", "measures"):
            value = Path(raw)
        elif dest == "kind":
            value = [k.strip() for k in raw.split(",")]
        else:
            value = raw
        setattr(args, dest, value)
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AssignmentInfeasible as exc:
        print(f"infeasible: {exc}; maximum achievable coverage {exc.achievable:.6f}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SweepError as exc:
        if isinstance(exc.cause, AssignmentInfeasible):
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LpError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
